//! External (leaf-oriented) binary search trees with per-node locks.
//!
//! Keys live in leaves. An internal node routes keys smaller than its own
//! key to the left. The root is an internal sentinel with key [`INF2`] whose
//! children are sentinel leaves [`INF1`] and [`INF2`], so every real leaf has
//! a parent and every leaf that can be deleted has a grandparent.

use crate::error::Result;
use crate::heap::BlockKind;
use crate::simcore::{Machine, ThreadCtx};
use crate::smr::{SmrKind, SmrThread};

use super::list::{try_lock, unlock};

pub const KEY: u64 = 0;
pub const LOCK: u64 = 8;
pub const MARK: u64 = 16;
pub const LEFT: u64 = 24;
pub const RIGHT: u64 = 32;
pub const LEAF: u64 = 40;
pub const NODE_WORDS: usize = 6;

pub const INF1: u64 = u64::MAX - 1;
pub const INF2: u64 = u64::MAX;

fn side(key: u64, node_key: u64) -> u64 {
    if key < node_key {
        LEFT
    } else {
        RIGHT
    }
}

/// A search window: leaf `l`, its parent `p` and grandparent `gp`
/// (0 when `p` is the root).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub gp: u64,
    pub gpkey: u64,
    pub p: u64,
    pub pkey: u64,
    pub l: u64,
    pub lkey: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Root {
    root: u64,
    sentinels: [u64; 2],
}

impl Root {
    fn create(m: &mut Machine) -> Result<Self> {
        let root = m.setup_alloc(BlockKind::Meta)?;
        let l1 = m.setup_alloc(BlockKind::Meta)?;
        let l2 = m.setup_alloc(BlockKind::Meta)?;
        m.setup_store(root + KEY, INF2);
        m.setup_store(root + LEFT, l1);
        m.setup_store(root + RIGHT, l2);
        m.setup_store(l1 + KEY, INF1);
        m.setup_store(l1 + LEAF, 1);
        m.setup_store(l2 + KEY, INF2);
        m.setup_store(l2 + LEAF, 1);
        Ok(Root { root, sentinels: [l1, l2] })
    }

    fn keys(&self, m: &Machine) -> Vec<u64> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            if m.peek(n + LEAF) != 0 {
                let k = m.peek(n + KEY);
                if k < INF1 {
                    out.push(k);
                }
            } else {
                stack.push(m.peek(n + RIGHT));
                stack.push(m.peek(n + LEFT));
            }
        }
        out
    }

    /// Structural check: routing bounds, no marked reachable node, no held
    /// locks.
    fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        let mut stack = vec![(self.root, 0u64, u64::MAX, true)];
        while let Some((n, lo, hi, hi_inclusive)) = stack.pop() {
            if n == 0 {
                return Err("null child".into());
            }
            let k = m.peek(n + KEY);
            if m.peek(n + MARK) != 0 {
                return Err(format!("marked node {k:#x} reachable"));
            }
            if m.peek(n + LOCK) != 0 {
                return Err(format!("node {k:#x} left locked"));
            }
            let in_range = k >= lo && (k < hi || (hi_inclusive && k == hi));
            if !in_range {
                return Err(format!("key {k:#x} outside [{lo:#x}, {hi:#x}]"));
            }
            if m.peek(n + LEAF) == 0 {
                stack.push((m.peek(n + LEFT), lo, k, false));
                stack.push((m.peek(n + RIGHT), k, hi, hi_inclusive));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaBst {
    r: Root,
    line_shift: u32,
}

impl CaBst {
    pub fn create(m: &mut Machine) -> Result<Self> {
        Ok(CaBst { r: Root::create(m)?, line_shift: m.mem().config().line_shift() })
    }

    pub fn root(&self) -> u64 {
        self.r.root
    }

    pub fn keys(&self, m: &Machine) -> Vec<u64> {
        self.r.keys(m)
    }

    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        self.r.check(m)
    }

    fn line(&self, a: u64) -> u64 {
        a >> self.line_shift
    }

    /// Descend keeping exactly the window `gp, p, l` tagged.
    pub async fn locate(&self, ctx: &ThreadCtx, key: u64) -> Window {
        'retry: loop {
            ctx.checkpoint(0);
            let (mut gp, mut gpkey) = (0, 0);
            let (mut p, mut pkey) = (self.r.root, INF2);
            let Some(mut l) = ctx.cread(p + LEFT).await else {
                ctx.untag_all().await;
                continue 'retry;
            };
            loop {
                let Some(leaf) = ctx.cread(l + LEAF).await else {
                    ctx.untag_all().await;
                    continue 'retry;
                };
                let Some(lkey) = ctx.cread(l + KEY).await else {
                    ctx.untag_all().await;
                    continue 'retry;
                };
                if leaf != 0 {
                    return Window { gp, gpkey, p, pkey, l, lkey };
                }
                if gp != 0 && self.line(gp) != self.line(p) && self.line(gp) != self.line(l) {
                    ctx.untag_one(gp).await;
                }
                (gp, gpkey) = (p, pkey);
                (p, pkey) = (l, lkey);
                let Some(c) = ctx.cread(p + side(key, pkey)).await else {
                    ctx.untag_all().await;
                    continue 'retry;
                };
                l = c;
            }
        }
    }

    pub async fn contains(&self, ctx: &ThreadCtx, key: u64) -> bool {
        let w = self.locate(ctx, key).await;
        ctx.untag_all().await;
        w.lkey == key
    }

    pub async fn insert(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let w = self.locate(ctx, key).await;
            if w.lkey == key {
                ctx.untag_all().await;
                return false;
            }
            if !try_lock(ctx, w.p + LOCK).await {
                ctx.untag_all().await;
                continue;
            }
            let leaf = smr.alloc(ctx, NODE_WORDS).await;
            ctx.store(leaf + KEY, key).await;
            ctx.store(leaf + LEAF, 1).await;
            let inner = smr.alloc(ctx, NODE_WORDS).await;
            let (small, large) = if key < w.lkey { (leaf, w.l) } else { (w.l, leaf) };
            ctx.store(inner + KEY, key.max(w.lkey)).await;
            ctx.store(inner + LEFT, small).await;
            ctx.store(inner + RIGHT, large).await;
            ctx.store(w.p + side(key, w.pkey), inner).await;
            unlock(ctx, w.p + LOCK).await;
            ctx.untag_all().await;
            return true;
        }
    }

    pub async fn delete(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let w = self.locate(ctx, key).await;
            if w.lkey != key {
                ctx.untag_all().await;
                return false;
            }
            if !try_lock(ctx, w.gp + LOCK).await {
                ctx.untag_all().await;
                continue;
            }
            if !try_lock(ctx, w.p + LOCK).await {
                unlock(ctx, w.gp + LOCK).await;
                ctx.untag_all().await;
                continue;
            }
            let sibling_side = if side(key, w.pkey) == LEFT { RIGHT } else { LEFT };
            let sibling = ctx.load(w.p + sibling_side).await;
            ctx.store(w.gp + side(key, w.gpkey), sibling).await;
            // Writing both nodes after the unlink revokes every tag taken
            // while they were still reachable.
            ctx.store(w.p + MARK, 1).await;
            ctx.store(w.l + MARK, 1).await;
            unlock(ctx, w.gp + LOCK).await;
            ctx.untag_all().await;
            smr.retire(ctx, &[w.l, w.p]).await;
            return true;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LockBst {
    r: Root,
}

impl LockBst {
    pub fn create(m: &mut Machine) -> Result<Self> {
        Ok(LockBst { r: Root::create(m)? })
    }

    pub fn keys(&self, m: &Machine) -> Vec<u64> {
        self.r.keys(m)
    }

    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        self.r.check(m)
    }

    pub async fn locate(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> Window {
        let hp = smr.kind() == SmrKind::Hp;
        'retry: loop {
            ctx.checkpoint(smr.digest());
            let (mut gs, mut ps, mut ls) = (2, 1, 0);
            let (mut gp, mut gpkey) = (0, 0);
            let (mut p, mut pkey) = (self.r.root, INF2);
            let mut l = ctx.load(p + LEFT).await;
            if !smr.protect(ctx, ls, l, p + LEFT).await {
                continue 'retry;
            }
            loop {
                let leaf = ctx.load(l + LEAF).await;
                let lkey = ctx.load(l + KEY).await;
                if leaf != 0 {
                    return Window { gp, gpkey, p, pkey, l, lkey };
                }
                (gp, gpkey) = (p, pkey);
                (p, pkey) = (l, lkey);
                (gs, ps, ls) = (ps, ls, gs);
                let src = p + side(key, pkey);
                l = ctx.load(src).await;
                if !smr.protect(ctx, ls, l, src).await {
                    continue 'retry;
                }
                if hp && ctx.load(p + MARK).await != 0 {
                    continue 'retry;
                }
            }
        }
    }

    pub async fn contains(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        let w = self.locate(ctx, smr, key).await;
        w.lkey == key && ctx.load(w.l + MARK).await == 0
    }

    /// Lock `n` and check it is live and still points at `child`.
    async fn lock_edge(&self, ctx: &ThreadCtx, n: u64, child_side: u64, child: u64) -> bool {
        if !ctx.cas(n + LOCK, 0, 1).await {
            return false;
        }
        let valid = ctx.load(n + MARK).await == 0 && ctx.load(n + child_side).await == child;
        if !valid {
            unlock(ctx, n + LOCK).await;
        }
        valid
    }

    pub async fn insert(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let w = self.locate(ctx, smr, key).await;
            let pside = side(key, w.pkey);
            if !self.lock_edge(ctx, w.p, pside, w.l).await {
                continue;
            }
            if w.lkey == key {
                unlock(ctx, w.p + LOCK).await;
                return false;
            }
            let leaf = smr.alloc(ctx, NODE_WORDS).await;
            ctx.store(leaf + KEY, key).await;
            ctx.store(leaf + LEAF, 1).await;
            let inner = smr.alloc(ctx, NODE_WORDS).await;
            let (small, large) = if key < w.lkey { (leaf, w.l) } else { (w.l, leaf) };
            ctx.store(inner + KEY, key.max(w.lkey)).await;
            ctx.store(inner + LEFT, small).await;
            ctx.store(inner + RIGHT, large).await;
            ctx.store(w.p + pside, inner).await;
            unlock(ctx, w.p + LOCK).await;
            return true;
        }
    }

    pub async fn delete(&self, ctx: &ThreadCtx, smr: &mut SmrThread, key: u64) -> bool {
        loop {
            let w = self.locate(ctx, smr, key).await;
            let pside = side(key, w.pkey);
            if w.lkey != key {
                if !self.lock_edge(ctx, w.p, pside, w.l).await {
                    continue;
                }
                unlock(ctx, w.p + LOCK).await;
                return false;
            }
            if !self.lock_edge(ctx, w.gp, side(key, w.gpkey), w.p).await {
                continue;
            }
            if !self.lock_edge(ctx, w.p, pside, w.l).await {
                unlock(ctx, w.gp + LOCK).await;
                continue;
            }
            let sibling_side = if pside == LEFT { RIGHT } else { LEFT };
            let sibling = ctx.load(w.p + sibling_side).await;
            ctx.store(w.p + MARK, 1).await;
            ctx.store(w.l + MARK, 1).await;
            ctx.store(w.gp + side(key, w.gpkey), sibling).await;
            unlock(ctx, w.gp + LOCK).await;
            smr.retire(ctx, &[w.l, w.p]).await;
            return true;
        }
    }
}
