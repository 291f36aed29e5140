//! Block allocator over simulated memory and the shadow state that turns
//! every access into a use-after-free verdict.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BlockKind {
    /// A data-structure node; counted in the footprint.
    Node,
    /// Sentinels and reclamation bookkeeping; never freed.
    Meta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BlockState {
    NeverAllocated,
    Live { kind: BlockKind, alloc_id: u64 },
    Freed { step: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeapConfig {
    /// Words per block; `None` means one cache line.
    pub block_words: Option<usize>,
    pub cap_blocks: usize,
    /// Flag frees by a core that has not written the block since it was allocated.
    pub strict_reclaimer: bool,
    /// Overwrite freed blocks through coherent stores.
    pub poison_on_free: bool,
}

impl Default for HeapConfig {
    fn default() -> Self {
        HeapConfig { block_words: None, cap_blocks: 1 << 20, strict_reclaimer: false, poison_on_free: false }
    }
}

pub const POISON: u64 = 0xdead_beef_dead_beef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    /// A successful `cread`/`cwrite` touched freed memory.
    FatalConditionalAccess,
    PlainUseAfterFree,
    WildAccess,
    ReclaimerRule,
}

impl ViolationKind {
    pub fn is_fatal(self) -> bool {
        self == ViolationKind::FatalConditionalAccess
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Violation {
    pub step: u64,
    pub tid: usize,
    pub kind: ViolationKind,
    pub addr: u64,
    pub freed_at: Option<u64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} by thread {} at step {} on {:#x}", self.kind, self.tid, self.step, self.addr)?;
        if let Some(s) = self.freed_at {
            write!(f, " (freed at step {s})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AllocStats {
    pub allocated_total: u64,
    pub freed_total: u64,
    pub live_now: u64,
}

/// Result of classifying an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Ok,
    Freed { step: u64 },
    Wild,
}

pub struct ShadowHeap {
    cfg: HeapConfig,
    base: u64,
    block_bytes: u64,
    blocks: Vec<BlockState>,
    writers: Vec<u64>,
    free_list: Vec<usize>,
    next_id: u64,
    stats: AllocStats,
}

impl ShadowHeap {
    pub fn new(cfg: HeapConfig, line_bytes: u64) -> Result<Self> {
        let line_words = (line_bytes / 8) as usize;
        let words = cfg.block_words.unwrap_or(line_words);
        if words == 0 || words > line_words || !words.is_power_of_two() {
            return Err(SimError::Config(format!("block_words {words} must be a power of two within a line")));
        }
        Ok(ShadowHeap {
            cfg,
            base: line_bytes,
            block_bytes: words as u64 * 8,
            blocks: Vec::new(),
            writers: Vec::new(),
            free_list: Vec::new(),
            next_id: 0,
            stats: AllocStats::default(),
        })
    }

    pub fn config(&self) -> &HeapConfig {
        &self.cfg
    }

    pub fn block_bytes(&self) -> u64 {
        self.block_bytes
    }

    pub fn block_words(&self) -> usize {
        (self.block_bytes / 8) as usize
    }

    pub fn stats(&self) -> AllocStats {
        self.stats
    }

    fn index(&self, addr: u64) -> Option<usize> {
        addr.checked_sub(self.base).map(|o| (o / self.block_bytes) as usize)
    }

    fn addr_of(&self, idx: usize) -> u64 {
        self.base + idx as u64 * self.block_bytes
    }

    pub fn state(&self, addr: u64) -> BlockState {
        self.index(addr).and_then(|i| self.blocks.get(i).copied()).unwrap_or(BlockState::NeverAllocated)
    }

    pub fn alloc(&mut self, kind: BlockKind, words: usize) -> Result<u64> {
        if words > self.block_words() {
            return Err(SimError::AllocTooLarge { words, block_words: self.block_words() });
        }
        let idx = match self.free_list.pop() {
            Some(i) => i,
            None => {
                if self.blocks.len() >= self.cfg.cap_blocks {
                    return Err(SimError::OutOfMemory(self.cfg.cap_blocks));
                }
                self.blocks.push(BlockState::NeverAllocated);
                self.writers.push(0);
                self.blocks.len() - 1
            }
        };
        self.blocks[idx] = BlockState::Live { kind, alloc_id: self.next_id };
        self.writers[idx] = 0;
        self.next_id += 1;
        if kind == BlockKind::Node {
            self.stats.allocated_total += 1;
            self.stats.live_now += 1;
        }
        Ok(self.addr_of(idx))
    }

    /// Free the block at `addr`. Returns whether the freeing core obeyed the
    /// reclaimer rule (always true outside strict mode).
    pub fn free(&mut self, addr: u64, core: usize, step: u64) -> Result<bool> {
        let idx = match self.index(addr) {
            Some(i) if i < self.blocks.len() && self.addr_of(i) == addr => i,
            _ => return Err(SimError::InvalidFree { addr, step }),
        };
        let kind = match self.blocks[idx] {
            BlockState::Live { kind, .. } => kind,
            BlockState::Freed { .. } => return Err(SimError::DoubleFree { addr, step }),
            BlockState::NeverAllocated => return Err(SimError::InvalidFree { addr, step }),
        };
        let obeyed = !self.cfg.strict_reclaimer || self.writers[idx] & (1u64 << core) != 0;
        self.blocks[idx] = BlockState::Freed { step };
        self.free_list.push(idx);
        if kind == BlockKind::Node {
            self.stats.freed_total += 1;
            self.stats.live_now -= 1;
        }
        Ok(obeyed)
    }

    pub fn classify(&self, addr: u64) -> Access {
        match self.state(addr) {
            BlockState::Live { .. } => Access::Ok,
            BlockState::Freed { step } => Access::Freed { step },
            BlockState::NeverAllocated => Access::Wild,
        }
    }

    pub fn note_write(&mut self, addr: u64, core: usize) {
        if let Some(w) = self.index(addr).and_then(|i| self.writers.get_mut(i)) {
            *w |= 1u64 << core;
        }
    }

    /// Forget writes made while initializing a fresh block.
    pub fn clear_writers(&mut self, addr: u64) {
        if let Some(w) = self.index(addr).and_then(|i| self.writers.get_mut(i)) {
            *w = 0;
        }
    }

    pub fn live_blocks(&self) -> impl Iterator<Item = (u64, BlockKind)> + '_ {
        self.blocks.iter().enumerate().filter_map(|(i, s)| match s {
            BlockState::Live { kind, .. } => Some((self.addr_of(i), *kind)),
            _ => None,
        })
    }

    pub fn digest<H: Hasher>(&self, h: &mut H) {
        for b in &self.blocks {
            match b {
                BlockState::Live { kind, .. } => (1u8, *kind).hash(h),
                BlockState::Freed { .. } => 2u8.hash(h),
                BlockState::NeverAllocated => 0u8.hash(h),
            }
        }
        self.free_list.hash(h);
    }
}
