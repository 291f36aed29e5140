use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use super::action::{Action, Outcome};
use crate::ca::{CaCounters, CaUnit};
use crate::error::{Result, SimError};
use crate::heap::{Access, AllocStats, BlockKind, HeapConfig, ShadowHeap, Violation, ViolationKind, POISON};
use crate::memsys::{CoreCounters, MemConfig, MemSystem};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub mem: MemConfig,
    pub heap: HeapConfig,
}

/// Memory hierarchy, conditional-access unit and shadow heap, advanced one
/// [`Action`] at a time.
pub struct Machine {
    mem: MemSystem,
    ca: CaUnit,
    heap: ShadowHeap,
    violations: Vec<Violation>,
    step: u64,
}

impl Machine {
    pub fn new(cfg: MachineConfig) -> Result<Self> {
        let mem = MemSystem::new(cfg.mem)?;
        let heap = ShadowHeap::new(cfg.heap, mem.config().line_bytes)?;
        Ok(Machine { ca: CaUnit::new(mem.config().cores), mem, heap, violations: Vec::new(), step: 0 })
    }

    pub fn with_cores(cores: usize) -> Self {
        Self::new(MachineConfig { mem: MemConfig::with_cores(cores), ..Default::default() })
            .expect("default configuration is valid")
    }

    pub fn cores(&self) -> usize {
        self.mem.config().cores
    }

    pub fn mem(&self) -> &MemSystem {
        &self.mem
    }

    pub fn mem_mut(&mut self) -> &mut MemSystem {
        &mut self.mem
    }

    pub fn ca(&self) -> &CaUnit {
        &self.ca
    }

    pub fn heap(&self) -> &ShadowHeap {
        &self.heap
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn has_fatal(&self) -> bool {
        self.violations.iter().any(|v| v.kind.is_fatal())
    }

    /// Global index of the next action.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn alloc_stats(&self) -> AllocStats {
        self.heap.stats()
    }

    pub fn mem_counters(&self) -> CoreCounters {
        self.mem.total_counters()
    }

    pub fn ca_counters(&self) -> CaCounters {
        self.ca.total_counters()
    }

    pub fn reset_counters(&mut self) {
        self.mem.reset_counters();
        self.ca.reset_counters();
    }

    pub fn peek(&self, addr: u64) -> u64 {
        self.mem.peek(addr)
    }

    /// Allocate and zero a block outside of any thread, for sentinels and
    /// other fixed structure.
    pub fn setup_alloc(&mut self, kind: BlockKind) -> Result<u64> {
        let addr = self.heap.alloc(kind, 1)?;
        for w in 0..self.heap.block_words() as u64 {
            self.mem.store(0, addr + 8 * w, 0);
        }
        self.heap.clear_writers(addr);
        self.mem.clear_msgs();
        Ok(addr)
    }

    pub fn setup_store(&mut self, addr: u64, value: u64) {
        self.mem.store(0, addr, value);
        self.mem.clear_msgs();
    }

    fn check(&mut self, tid: usize, addr: u64, conditional: bool) {
        let (kind, freed_at) = match self.heap.classify(addr) {
            Access::Ok => return,
            Access::Freed { step } if conditional => (ViolationKind::FatalConditionalAccess, Some(step)),
            Access::Freed { step } => (ViolationKind::PlainUseAfterFree, Some(step)),
            Access::Wild => (ViolationKind::WildAccess, None),
        };
        self.violations.push(Violation { step: self.step, tid, kind, addr, freed_at });
    }

    /// Execute `action` for thread `tid` on `core`. Coherence messages stay
    /// pending in the memory system for the caller to drain.
    pub fn apply(&mut self, tid: usize, core: usize, action: Action) -> Result<Outcome> {
        if core >= self.cores() {
            return Err(SimError::BadCore(core));
        }
        if let Some(addr) = action.addr() {
            if addr % 8 != 0 {
                return Err(SimError::Unaligned(addr));
            }
        }
        let out = match action {
            Action::Load { addr } => {
                let v = self.mem.load(core, addr);
                self.check(tid, addr, false);
                Outcome::Value(v)
            }
            Action::Store { addr, value } => {
                self.mem.store(core, addr, value);
                self.check(tid, addr, false);
                self.heap.note_write(addr, core);
                Outcome::Done
            }
            Action::Cas { addr, expect, new } => {
                let ok = self.mem.cas(core, addr, expect, new);
                self.check(tid, addr, false);
                if ok {
                    self.heap.note_write(addr, core);
                }
                Outcome::Flag(ok)
            }
            Action::CRead { addr } => {
                let r = self.ca.cread(&mut self.mem, core, addr);
                if r.succeeded {
                    self.check(tid, addr, true);
                    Outcome::Cond(Some(r.value))
                } else {
                    Outcome::Cond(None)
                }
            }
            Action::CWrite { addr, value } => {
                let r = self.ca.cwrite(&mut self.mem, core, addr, value);
                if r.succeeded {
                    self.check(tid, addr, true);
                    self.heap.note_write(addr, core);
                }
                Outcome::Flag(r.succeeded)
            }
            Action::UntagOne { addr } => {
                self.ca.untag_one(&mut self.mem, core, addr);
                self.mem.charge(core, self.mem.config().costs.l1_hit);
                Outcome::Done
            }
            Action::UntagAll => {
                self.ca.untag_all(&mut self.mem, core);
                self.mem.charge(core, self.mem.config().costs.l1_hit);
                Outcome::Done
            }
            Action::Alloc { words } => {
                let addr = self.heap.alloc(BlockKind::Node, words)?;
                for w in 0..self.heap.block_words() as u64 {
                    self.mem.store(core, addr + 8 * w, 0);
                }
                self.heap.clear_writers(addr);
                Outcome::Addr(addr)
            }
            Action::Free { addr } => {
                if !self.heap.free(addr, core, self.step)? {
                    self.violations.push(Violation {
                        step: self.step,
                        tid,
                        kind: ViolationKind::ReclaimerRule,
                        addr,
                        freed_at: None,
                    });
                }
                if self.heap.config().poison_on_free {
                    for w in 0..self.heap.block_words() as u64 {
                        self.mem.store(core, addr + 8 * w, POISON);
                    }
                }
                self.mem.charge(core, self.mem.config().costs.l1_hit);
                Outcome::Done
            }
            Action::Snapshot => Outcome::Done,
        };
        self.ca.absorb(&mut self.mem);
        self.mem.attribute_msgs(core);
        if self.mem.config().check_invariants {
            self.check_invariants()?;
        }
        self.step += 1;
        Ok(out)
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.mem
            .check_invariants()
            .and_then(|()| self.ca.check_invariants(&self.mem))
            .map_err(|message| SimError::Invariant { step: self.step, message })
    }

    pub fn digest<H: Hasher>(&self, h: &mut H) {
        use std::hash::Hash;
        self.mem.digest(h);
        for c in 0..self.cores() {
            self.ca.state(c).hash(h);
        }
        self.heap.digest(h);
        self.violations.len().hash(h);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::BlockState;

    #[test]
    fn successful_cread_of_freed_block_is_fatal() {
        let mut m = Machine::with_cores(2);
        let a = m.setup_alloc(BlockKind::Node).unwrap();
        m.apply(0, 0, Action::Free { addr: a }).unwrap();
        assert!(matches!(m.heap().state(a), BlockState::Freed { .. }));
        let out = m.apply(1, 1, Action::CRead { addr: a }).unwrap();
        assert_eq!(out, Outcome::Cond(Some(0)));
        assert_eq!(m.violations()[0].kind, ViolationKind::FatalConditionalAccess);
        assert!(m.has_fatal());
    }

    #[test]
    fn plain_load_of_freed_block_is_recorded() {
        let mut m = Machine::with_cores(1);
        let a = m.setup_alloc(BlockKind::Node).unwrap();
        m.apply(0, 0, Action::Free { addr: a }).unwrap();
        m.apply(0, 0, Action::Load { addr: a + 8 }).unwrap();
        assert_eq!(m.violations()[0].kind, ViolationKind::PlainUseAfterFree);
        assert_eq!(m.violations()[0].freed_at, Some(0));
    }

    #[test]
    fn failed_cread_is_not_an_access() {
        let mut m = Machine::with_cores(2);
        let a = m.setup_alloc(BlockKind::Node).unwrap();
        let b = m.setup_alloc(BlockKind::Node).unwrap();
        m.apply(0, 0, Action::CRead { addr: a }).unwrap();
        m.apply(1, 1, Action::Store { addr: a, value: 1 }).unwrap();
        m.apply(1, 1, Action::Free { addr: b }).unwrap();
        assert_eq!(m.apply(0, 0, Action::CRead { addr: b }).unwrap(), Outcome::Cond(None));
        assert!(m.violations().is_empty());
    }

    #[test]
    fn wild_access_recorded() {
        let mut m = Machine::with_cores(1);
        m.apply(0, 0, Action::Load { addr: 0 }).unwrap();
        assert_eq!(m.violations()[0].kind, ViolationKind::WildAccess);
    }

    #[test]
    fn alloc_zeroes_reused_block() {
        let mut m = Machine::with_cores(1);
        let a = m.apply(0, 0, Action::Alloc { words: 4 }).unwrap().value();
        m.apply(0, 0, Action::Store { addr: a, value: 9 }).unwrap();
        m.apply(0, 0, Action::Free { addr: a }).unwrap();
        let b = m.apply(0, 0, Action::Alloc { words: 4 }).unwrap().value();
        assert_eq!(a, b);
        assert_eq!(m.peek(a), 0);
    }

    #[test]
    fn double_free_is_error() {
        let mut m = Machine::with_cores(1);
        let a = m.apply(0, 0, Action::Alloc { words: 4 }).unwrap().value();
        m.apply(0, 0, Action::Free { addr: a }).unwrap();
        assert!(matches!(m.apply(0, 0, Action::Free { addr: a }), Err(SimError::DoubleFree { .. })));
    }

    #[test]
    fn strict_mode_flags_free_without_write() {
        let cfg = MachineConfig {
            mem: MemConfig::with_cores(1),
            heap: HeapConfig { strict_reclaimer: true, ..HeapConfig::default() },
        };
        let mut m = Machine::new(cfg).unwrap();
        let a = m.apply(0, 0, Action::Alloc { words: 4 }).unwrap().value();
        let b = m.apply(0, 0, Action::Alloc { words: 4 }).unwrap().value();
        m.apply(0, 0, Action::Store { addr: b + 16, value: 1 }).unwrap();
        m.apply(0, 0, Action::Free { addr: a }).unwrap();
        m.apply(0, 0, Action::Free { addr: b }).unwrap();
        let kinds: Vec<_> = m.violations().iter().map(|v| (v.kind, v.addr)).collect();
        assert_eq!(kinds, vec![(ViolationKind::ReclaimerRule, a)]);
    }

    #[test]
    fn unaligned_rejected() {
        let mut m = Machine::with_cores(1);
        assert_eq!(m.apply(0, 0, Action::Load { addr: 3 }), Err(SimError::Unaligned(3)));
    }
}
