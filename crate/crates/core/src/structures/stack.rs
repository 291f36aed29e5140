//! LIFO stacks: [`CaStack`] guards its top pointer with a tagged read and a
//! conditional write, [`TreiberStack`] uses CAS.

use crate::error::Result;
use crate::heap::BlockKind;
use crate::simcore::{mix, Machine, ThreadCtx};
use crate::smr::SmrThread;

pub const KEY: u64 = 0;
pub const NEXT: u64 = 8;
pub const NODE_WORDS: usize = 2;

fn create_top(m: &mut Machine) -> Result<u64> {
    m.setup_alloc(BlockKind::Meta)
}

/// Keys from top to bottom.
fn contents(m: &Machine, top: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = m.peek(top);
    while n != 0 {
        out.push(m.peek(n + KEY));
        n = m.peek(n + NEXT);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaStack {
    top: u64,
}

impl CaStack {
    pub fn create(m: &mut Machine) -> Result<Self> {
        Ok(CaStack { top: create_top(m)? })
    }

    pub fn top(&self) -> u64 {
        self.top
    }

    pub fn contents(&self, m: &Machine) -> Vec<u64> {
        contents(m, self.top)
    }

    pub async fn push(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) {
        let node = smr.alloc(ctx, NODE_WORDS).await;
        ctx.store(node + KEY, key).await;
        loop {
            ctx.checkpoint(node);
            let Some(t) = ctx.cread(self.top).await else {
                ctx.untag_all().await;
                continue;
            };
            ctx.store(node + NEXT, t).await;
            if ctx.cwrite(self.top, node).await {
                ctx.untag_all().await;
                return;
            }
            ctx.untag_all().await;
        }
    }

    pub async fn pop(&self, ctx: &ThreadCtx, smr: &mut SmrThread) -> Option<u64> {
        loop {
            ctx.checkpoint(0);
            let Some(t) = ctx.cread(self.top).await else {
                ctx.untag_all().await;
                continue;
            };
            if t == 0 {
                ctx.untag_all().await;
                return None;
            }
            let Some(next) = ctx.cread(t + NEXT).await else {
                ctx.untag_all().await;
                continue;
            };
            let Some(key) = ctx.cread(t + KEY).await else {
                ctx.untag_all().await;
                continue;
            };
            if !ctx.cwrite(self.top, next).await {
                ctx.untag_all().await;
                continue;
            }
            ctx.untag_all().await;
            smr.retire(ctx, &[t]).await;
            return Some(key);
        }
    }

    pub async fn peek(&self, ctx: &ThreadCtx) -> Option<u64> {
        loop {
            ctx.checkpoint(0);
            let Some(t) = ctx.cread(self.top).await else {
                ctx.untag_all().await;
                continue;
            };
            if t == 0 {
                ctx.untag_all().await;
                return None;
            }
            let key = ctx.cread(t + KEY).await;
            ctx.untag_all().await;
            if key.is_some() {
                return key;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreiberStack {
    top: u64,
}

impl TreiberStack {
    pub fn create(m: &mut Machine) -> Result<Self> {
        Ok(TreiberStack { top: create_top(m)? })
    }

    pub fn top(&self) -> u64 {
        self.top
    }

    pub fn contents(&self, m: &Machine) -> Vec<u64> {
        contents(m, self.top)
    }

    pub async fn push(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) {
        let node = smr.alloc(ctx, NODE_WORDS).await;
        ctx.store(node + KEY, key).await;
        loop {
            ctx.checkpoint(mix(node, smr.digest()));
            let t = ctx.load(self.top).await;
            ctx.store(node + NEXT, t).await;
            if ctx.cas(self.top, t, node).await {
                return;
            }
        }
    }

    pub async fn pop(&self, ctx: &ThreadCtx, smr: &mut SmrThread) -> Option<u64> {
        loop {
            ctx.checkpoint(smr.digest());
            let t = ctx.load(self.top).await;
            if t == 0 {
                return None;
            }
            if !smr.protect(ctx, 0, t, self.top).await {
                continue;
            }
            let next = ctx.load(t + NEXT).await;
            let key = ctx.load(t + KEY).await;
            if ctx.cas(self.top, t, next).await {
                smr.retire(ctx, &[t]).await;
                return Some(key);
            }
        }
    }

    pub async fn peek(&self, ctx: &ThreadCtx, smr: &mut SmrThread) -> Option<u64> {
        loop {
            ctx.checkpoint(smr.digest());
            let t = ctx.load(self.top).await;
            if t == 0 {
                return None;
            }
            if !smr.protect(ctx, 0, t, self.top).await {
                continue;
            }
            return Some(ctx.load(t + KEY).await);
        }
    }
}
