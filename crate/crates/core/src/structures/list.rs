//! Sorted linked-list sets with per-node locks and logical deletion.
//!
//! [`CaList`] traverses with hand-over-hand conditional reads and locks by
//! tagging; [`LazyList`] is the classic lazy list with plain loads, CAS
//! locks and validation, protected by whichever reclamation scheme it runs
//! with.

use crate::error::Result;
use crate::heap::BlockKind;
use crate::simcore::{Machine, ThreadCtx};
use crate::smr::{SmrKind, SmrThread, HP_SLOTS};

pub const KEY: u64 = 0;
pub const LOCK: u64 = 8;
pub const MARK: u64 = 16;
pub const NEXT: u64 = 24;
pub const NODE_WORDS: usize = 4;

/// Key of the tail sentinel; user keys must be smaller.
pub const TAIL_KEY: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Sentinels {
    head: u64,
    tail: u64,
}

impl Sentinels {
    fn create(m: &mut Machine) -> Result<Self> {
        let head = m.setup_alloc(BlockKind::Meta)?;
        let tail = m.setup_alloc(BlockKind::Meta)?;
        m.setup_store(tail + KEY, TAIL_KEY);
        m.setup_store(head + NEXT, tail);
        Ok(Sentinels { head, tail })
    }

    fn keys(&self, m: &Machine) -> Vec<u64> {
        let mut out = Vec::new();
        let mut n = m.peek(self.head + NEXT);
        while n != self.tail && n != 0 {
            out.push(m.peek(n + KEY));
            n = m.peek(n + NEXT);
        }
        out
    }

    fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        if m.peek(self.head + MARK) != 0 || m.peek(self.tail + MARK) != 0 {
            return Err("sentinel marked".into());
        }
        let mut n = m.peek(self.head + NEXT);
        let mut prev = None;
        while n != self.tail {
            if n == 0 {
                return Err("list does not reach tail".into());
            }
            let k = m.peek(n + KEY);
            if prev.is_some_and(|p| p >= k) {
                return Err(format!("keys out of order at {k}"));
            }
            if m.peek(n + MARK) != 0 {
                return Err(format!("marked node {k} still linked"));
            }
            if m.peek(n + LOCK) != 0 {
                return Err(format!("node {k} left locked"));
            }
            prev = Some(k);
            n = m.peek(n + NEXT);
        }
        Ok(())
    }
}

/// Lock a node whose line is already tagged. Fails if access was revoked,
/// the lock is held, or the node changed since it was tagged.
pub async fn try_lock(ctx: &ThreadCtx, lock: u64) -> bool {
    match ctx.cread(lock).await {
        None | Some(1) => false,
        Some(_) => ctx.cwrite(lock, 1).await,
    }
}

pub async fn unlock(ctx: &ThreadCtx, lock: u64) {
    ctx.store(lock, 0).await;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaList {
    s: Sentinels,
    line_shift: u32,
}

/// Result of a traversal: both nodes tagged, `pred.key < key <= currkey`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Located {
    pub pred: u64,
    pub curr: u64,
    pub currkey: u64,
}

impl CaList {
    pub fn create(m: &mut Machine) -> Result<Self> {
        Ok(CaList { s: Sentinels::create(m)?, line_shift: m.mem().config().line_shift() })
    }

    pub fn head(&self) -> u64 {
        self.s.head
    }

    pub fn keys(&self, m: &Machine) -> Vec<u64> {
        self.s.keys(m)
    }

    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        self.s.check(m)
    }

    fn same_line(&self, a: u64, b: u64) -> bool {
        a >> self.line_shift == b >> self.line_shift
    }

    pub async fn locate(&self, ctx: &ThreadCtx, key: u64) -> Located {
        'retry: loop {
            ctx.checkpoint(0);
            let mut pred = self.s.head;
            let Some(mut curr) = ctx.cread(pred + NEXT).await else {
                ctx.untag_all().await;
                continue 'retry;
            };
            let Some(mut currkey) = ctx.cread(curr + KEY).await else {
                ctx.untag_all().await;
                continue 'retry;
            };
            while currkey < key {
                if !self.same_line(pred, curr) {
                    ctx.untag_one(pred).await;
                }
                pred = curr;
                let Some(c) = ctx.cread(pred + NEXT).await else {
                    ctx.untag_all().await;
                    continue 'retry;
                };
                curr = c;
                let Some(k) = ctx.cread(curr + KEY).await else {
                    ctx.untag_all().await;
                    continue 'retry;
                };
                currkey = k;
            }
            return Located { pred, curr, currkey };
        }
    }

    pub async fn contains(&self, ctx: &ThreadCtx, key: u64) -> bool {
        let at = self.locate(ctx, key).await;
        ctx.untag_all().await;
        at.currkey == key
    }

    pub async fn insert(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let Located { pred, curr, currkey } = self.locate(ctx, key).await;
            if currkey == key {
                ctx.untag_all().await;
                return false;
            }
            if !try_lock(ctx, pred + LOCK).await {
                ctx.untag_all().await;
                continue;
            }
            if !try_lock(ctx, curr + LOCK).await {
                unlock(ctx, pred + LOCK).await;
                ctx.untag_all().await;
                continue;
            }
            let node = smr.alloc(ctx, NODE_WORDS).await;
            ctx.store(node + KEY, key).await;
            ctx.store(node + NEXT, curr).await;
            ctx.store(pred + NEXT, node).await;
            unlock(ctx, pred + LOCK).await;
            unlock(ctx, curr + LOCK).await;
            ctx.untag_all().await;
            return true;
        }
    }

    pub async fn delete(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let Located { pred, curr, currkey } = self.locate(ctx, key).await;
            if currkey != key {
                ctx.untag_all().await;
                return false;
            }
            if !try_lock(ctx, pred + LOCK).await {
                ctx.untag_all().await;
                continue;
            }
            if !try_lock(ctx, curr + LOCK).await {
                unlock(ctx, pred + LOCK).await;
                ctx.untag_all().await;
                continue;
            }
            ctx.store(curr + MARK, 1).await;
            let next = ctx.load(curr + NEXT).await;
            ctx.store(pred + NEXT, next).await;
            unlock(ctx, pred + LOCK).await;
            unlock(ctx, curr + LOCK).await;
            ctx.untag_all().await;
            smr.retire(ctx, &[curr]).await;
            return true;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LazyList {
    s: Sentinels,
}

impl LazyList {
    pub fn create(m: &mut Machine) -> Result<Self> {
        Ok(LazyList { s: Sentinels::create(m)? })
    }

    pub fn keys(&self, m: &Machine) -> Vec<u64> {
        self.s.keys(m)
    }

    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        self.s.check(m)
    }

    /// Traverse to the first node with key `>= key`. Under hazard pointers
    /// each step publishes the next node and re-validates the link and the
    /// predecessor's mark before dereferencing.
    pub async fn locate(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> Located {
        let hp = smr.kind() == SmrKind::Hp;
        'retry: loop {
            ctx.checkpoint(smr.digest());
            let (mut ps, mut cs) = (0, 1);
            let mut pred = self.s.head;
            let mut curr = ctx.load(pred + NEXT).await;
            if !smr.protect(ctx, cs, curr, pred + NEXT).await {
                continue 'retry;
            }
            let mut currkey = ctx.load(curr + KEY).await;
            while currkey < key {
                let ns = HP_SLOTS - ps - cs;
                pred = curr;
                (ps, cs) = (cs, ns);
                curr = ctx.load(pred + NEXT).await;
                if !smr.protect(ctx, cs, curr, pred + NEXT).await {
                    continue 'retry;
                }
                if hp && ctx.load(pred + MARK).await != 0 {
                    continue 'retry;
                }
                currkey = ctx.load(curr + KEY).await;
            }
            return Located { pred, curr, currkey };
        }
    }

    pub async fn contains(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        let at = self.locate(ctx, smr, key).await;
        at.currkey == key && ctx.load(at.curr + MARK).await == 0
    }

    /// Lock `pred` and `curr` and check they are still adjacent and live.
    async fn lock_pair(&self, ctx: &ThreadCtx, pred: u64, curr: u64) -> bool {
        if !ctx.cas(pred + LOCK, 0, 1).await {
            return false;
        }
        if !ctx.cas(curr + LOCK, 0, 1).await {
            unlock(ctx, pred + LOCK).await;
            return false;
        }
        let valid =
            ctx.load(pred + MARK).await == 0 && ctx.load(curr + MARK).await == 0 && ctx.load(pred + NEXT).await == curr;
        if !valid {
            unlock(ctx, pred + LOCK).await;
            unlock(ctx, curr + LOCK).await;
        }
        valid
    }

    pub async fn insert(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let Located { pred, curr, currkey } = self.locate(ctx, smr, key).await;
            if !self.lock_pair(ctx, pred, curr).await {
                continue;
            }
            if currkey == key {
                unlock(ctx, pred + LOCK).await;
                unlock(ctx, curr + LOCK).await;
                return false;
            }
            let node = smr.alloc(ctx, NODE_WORDS).await;
            ctx.store(node + KEY, key).await;
            ctx.store(node + NEXT, curr).await;
            ctx.store(pred + NEXT, node).await;
            unlock(ctx, pred + LOCK).await;
            unlock(ctx, curr + LOCK).await;
            return true;
        }
    }

    pub async fn delete(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let Located { pred, curr, currkey } = self.locate(ctx, smr, key).await;
            if !self.lock_pair(ctx, pred, curr).await {
                continue;
            }
            if currkey != key {
                unlock(ctx, pred + LOCK).await;
                unlock(ctx, curr + LOCK).await;
                return false;
            }
            ctx.store(curr + MARK, 1).await;
            let next = ctx.load(curr + NEXT).await;
            ctx.store(pred + NEXT, next).await;
            unlock(ctx, pred + LOCK).await;
            unlock(ctx, curr + LOCK).await;
            smr.retire(ctx, &[curr]).await;
            return true;
        }
    }
}
