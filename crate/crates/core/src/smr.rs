//! Safe memory reclamation schemes behind one per-thread interface.
//!
//! All shared scheme state (the global epoch, announced epochs, hazard
//! slots) lives in simulated memory and is touched only through actions, so
//! reclamation races are scheduled like any other access. Retired lists are
//! thread-private.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::heap::BlockKind;
use crate::simcore::{Machine, ThreadCtx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SmrKind {
    /// Never free.
    None,
    /// Free at retire; safe only with conditional-access structures.
    Ca,
    Qsbr,
    Hp,
}

impl SmrKind {
    pub const ALL: [SmrKind; 4] = [SmrKind::None, SmrKind::Ca, SmrKind::Qsbr, SmrKind::Hp];

    pub fn name(self) -> &'static str {
        match self {
            SmrKind::None => "none",
            SmrKind::Ca => "ca",
            SmrKind::Qsbr => "qsbr",
            SmrKind::Hp => "hp",
        }
    }
}

impl fmt::Display for SmrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SmrKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SmrKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmrConfig {
    pub kind: SmrKind,
    /// Successful removes between reclamation attempts.
    pub reclaim_freq: u64,
    /// Allocations per thread between epoch advance attempts.
    pub epoch_freq: u64,
    /// With `kind = none`, free at retire anyway. A deliberately unsafe
    /// configuration used as a negative control.
    pub immediate_free: bool,
}

impl Default for SmrConfig {
    fn default() -> Self {
        SmrConfig { kind: SmrKind::Ca, reclaim_freq: 30, epoch_freq: 150, immediate_free: false }
    }
}

impl SmrConfig {
    pub fn of(kind: SmrKind) -> Self {
        SmrConfig { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reclaim_freq == 0 || self.epoch_freq == 0 {
            return Err(SimError::Config("reclamation and epoch frequencies must be positive".into()));
        }
        if self.immediate_free && self.kind != SmrKind::None {
            return Err(SimError::Config("immediate free applies only to the leaky scheme".into()));
        }
        Ok(())
    }
}

pub const HP_SLOTS: usize = 3;
const QUIESCENT_FOREVER: u64 = u64::MAX;

/// Addresses of the scheme's shared words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmrLayout {
    pub epoch: u64,
    pub announce: Vec<u64>,
    pub hazards: Vec<u64>,
}

impl SmrLayout {
    pub fn create(machine: &mut Machine, threads: usize) -> Result<Self> {
        let epoch = machine.setup_alloc(BlockKind::Meta)?;
        let mut announce = Vec::with_capacity(threads);
        let mut hazards = Vec::with_capacity(threads);
        for _ in 0..threads {
            let a = machine.setup_alloc(BlockKind::Meta)?;
            machine.setup_store(a, QUIESCENT_FOREVER);
            announce.push(a);
            hazards.push(machine.setup_alloc(BlockKind::Meta)?);
        }
        Ok(SmrLayout { epoch, announce, hazards })
    }

    pub fn slot(&self, tid: usize, slot: usize) -> u64 {
        self.hazards[tid] + 8 * slot as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SmrStats {
    pub retired: u64,
    pub freed: u64,
    pub passes: u64,
    pub epoch_advances: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Retired {
    addr: u64,
    epoch: u64,
}

pub struct SmrThread {
    cfg: SmrConfig,
    tid: usize,
    layout: Rc<SmrLayout>,
    retired: Vec<Retired>,
    removes: u64,
    allocs: u64,
    hazard_set: [bool; HP_SLOTS],
    stats: SmrStats,
}

impl SmrThread {
    pub fn new(cfg: SmrConfig, tid: usize, layout: Rc<SmrLayout>) -> Self {
        SmrThread {
            cfg,
            tid,
            layout,
            retired: Vec::new(),
            removes: 0,
            allocs: 0,
            hazard_set: [false; HP_SLOTS],
            stats: SmrStats::default(),
        }
    }

    pub fn kind(&self) -> SmrKind {
        self.cfg.kind
    }

    pub fn stats(&self) -> SmrStats {
        self.stats
    }

    /// Nodes retired but not yet freed.
    pub fn pending(&self) -> usize {
        self.retired.len()
    }

    /// Hash of the private state that can influence future actions.
    pub fn digest(&self) -> u64 {
        if matches!(self.cfg.kind, SmrKind::Ca | SmrKind::None) {
            return 0;
        }
        let mut h = DefaultHasher::new();
        (&self.retired, self.removes, self.allocs, self.hazard_set).hash(&mut h);
        h.finish()
    }

    /// Start of a data-structure operation; a quiescent point for QSBR.
    pub async fn begin_op(&mut self, ctx: &ThreadCtx) {
        if self.cfg.kind == SmrKind::Qsbr {
            let e = ctx.load(self.layout.epoch).await;
            ctx.store(self.layout.announce[self.tid], e).await;
        }
    }

    /// End of an operation: drop every hazard.
    pub async fn end_op(&mut self, ctx: &ThreadCtx) {
        if self.cfg.kind == SmrKind::Hp {
            for s in 0..HP_SLOTS {
                if self.hazard_set[s] {
                    ctx.store(self.layout.slot(self.tid, s), 0).await;
                    self.hazard_set[s] = false;
                }
            }
        }
    }

    /// The thread holds no references until its next `begin_op`.
    pub async fn offline(&mut self, ctx: &ThreadCtx) {
        if self.cfg.kind == SmrKind::Qsbr {
            ctx.store(self.layout.announce[self.tid], QUIESCENT_FOREVER).await;
        }
    }

    pub async fn alloc(&mut self, ctx: &ThreadCtx, words: usize) -> u64 {
        let a = ctx.alloc(words).await;
        self.allocs += 1;
        if self.cfg.kind == SmrKind::Qsbr && self.allocs.is_multiple_of(self.cfg.epoch_freq) {
            let e = ctx.load(self.layout.epoch).await;
            if ctx.cas(self.layout.epoch, e, e + 1).await {
                self.stats.epoch_advances += 1;
            }
        }
        a
    }

    /// Publish `node` in hazard slot `slot`, then check that `src` still
    /// points to it. Schemes without hazards always succeed.
    pub async fn protect(&mut self, ctx: &ThreadCtx, slot: usize, node: u64, src: u64) -> bool {
        if self.cfg.kind != SmrKind::Hp {
            return true;
        }
        ctx.store(self.layout.slot(self.tid, slot), node).await;
        self.hazard_set[slot] = node != 0;
        ctx.load(src).await == node
    }

    /// Hand over the nodes unlinked by one successful remove.
    pub async fn retire(&mut self, ctx: &ThreadCtx, nodes: &[u64]) {
        self.stats.retired += nodes.len() as u64;
        match self.cfg.kind {
            SmrKind::Ca => self.free_now(ctx, nodes).await,
            SmrKind::None if self.cfg.immediate_free => self.free_now(ctx, nodes).await,
            SmrKind::None => {}
            SmrKind::Qsbr => {
                let epoch = ctx.load(self.layout.epoch).await;
                self.retired.extend(nodes.iter().map(|&addr| Retired { addr, epoch }));
                self.removes += 1;
                if self.removes.is_multiple_of(self.cfg.reclaim_freq) {
                    self.qsbr_pass(ctx).await;
                }
            }
            SmrKind::Hp => {
                self.retired.extend(nodes.iter().map(|&addr| Retired { addr, epoch: 0 }));
                self.removes += 1;
                if self.removes.is_multiple_of(self.cfg.reclaim_freq) {
                    self.hp_pass(ctx).await;
                }
            }
        }
    }

    async fn free_now(&mut self, ctx: &ThreadCtx, nodes: &[u64]) {
        for &n in nodes {
            ctx.free(n).await;
            self.stats.freed += 1;
        }
    }

    /// Free every node retired at least two epochs before the oldest
    /// announced epoch.
    pub async fn qsbr_pass(&mut self, ctx: &ThreadCtx) {
        self.stats.passes += 1;
        let mut min = QUIESCENT_FOREVER;
        for t in 0..self.layout.announce.len() {
            min = min.min(ctx.load(self.layout.announce[t]).await);
        }
        let mut keep = Vec::with_capacity(self.retired.len());
        for r in std::mem::take(&mut self.retired) {
            if r.epoch.saturating_add(2) <= min {
                ctx.free(r.addr).await;
                self.stats.freed += 1;
            } else {
                keep.push(r);
            }
        }
        self.retired = keep;
    }

    /// Free every retired node not named by any hazard slot.
    pub async fn hp_pass(&mut self, ctx: &ThreadCtx) {
        self.stats.passes += 1;
        let mut hazards = Vec::with_capacity(self.layout.hazards.len() * HP_SLOTS);
        for t in 0..self.layout.hazards.len() {
            for s in 0..HP_SLOTS {
                let h = ctx.load(self.layout.slot(t, s)).await;
                if h != 0 {
                    hazards.push(h);
                }
            }
        }
        let mut keep = Vec::with_capacity(self.retired.len());
        for r in std::mem::take(&mut self.retired) {
            if hazards.contains(&r.addr) {
                keep.push(r);
            } else {
                ctx.free(r.addr).await;
                self.stats.freed += 1;
            }
        }
        self.retired = keep;
    }
}
