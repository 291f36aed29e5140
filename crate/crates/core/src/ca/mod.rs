//! Conditional access: per-core tag sets, the access-revoked bit, and the
//! four instructions `cread`, `cwrite`, `untag_one` and `untag_all`.

pub mod audit;

use serde::Serialize;
use smallvec::SmallVec;

use crate::memsys::{CapacityFailure, LineId, MemEvent, MemSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FailCause {
    /// A remote write invalidated a tagged line.
    Conflict,
    /// Replacement evicted a tagged line.
    Eviction,
    /// No untagged way was available to hold the line.
    Capacity,
    /// `cwrite` to a line that was never tagged.
    Untagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum Status {
    #[default]
    Success,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaOutcome {
    pub succeeded: bool,
    /// Meaningful only for a successful `cread`.
    pub value: u64,
    pub cause: Option<FailCause>,
}

impl CaOutcome {
    fn ok(value: u64) -> Self {
        CaOutcome { succeeded: true, value, cause: None }
    }

    fn fail(cause: FailCause) -> Self {
        CaOutcome { succeeded: false, value: 0, cause: Some(cause) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CoreCaState {
    pub tag_set: SmallVec<[LineId; 8]>,
    pub access_revoked: bool,
    pub revoke_cause: Option<FailCause>,
    pub last_status: Status,
}

impl CoreCaState {
    pub fn is_tagged(&self, line: LineId) -> bool {
        self.tag_set.contains(&line)
    }

    fn revoke(&mut self, cause: FailCause) {
        if !self.access_revoked {
            self.access_revoked = true;
            self.revoke_cause = Some(cause);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CaCounters {
    pub creads: u64,
    pub cwrites: u64,
    pub failed_creads: u64,
    pub failed_cwrites: u64,
    pub fail_conflict: u64,
    pub fail_eviction: u64,
    pub fail_capacity: u64,
    pub fail_untagged: u64,
    pub untag_ones: u64,
    pub untag_alls: u64,
    pub revocations: u64,
    /// Coherence messages emitted by failed conditional accesses.
    pub failed_msgs: u64,
    pub max_tagset: u64,
}

impl CaCounters {
    pub fn add(&mut self, o: &CaCounters) {
        self.creads += o.creads;
        self.cwrites += o.cwrites;
        self.failed_creads += o.failed_creads;
        self.failed_cwrites += o.failed_cwrites;
        self.fail_conflict += o.fail_conflict;
        self.fail_eviction += o.fail_eviction;
        self.fail_capacity += o.fail_capacity;
        self.fail_untagged += o.fail_untagged;
        self.untag_ones += o.untag_ones;
        self.untag_alls += o.untag_alls;
        self.revocations += o.revocations;
        self.failed_msgs += o.failed_msgs;
        self.max_tagset = self.max_tagset.max(o.max_tagset);
    }

    fn count_failure(&mut self, cause: FailCause) {
        match cause {
            FailCause::Conflict => self.fail_conflict += 1,
            FailCause::Eviction => self.fail_eviction += 1,
            FailCause::Capacity => self.fail_capacity += 1,
            FailCause::Untagged => self.fail_untagged += 1,
        }
    }
}

pub struct CaUnit {
    cores: Vec<CoreCaState>,
    counters: Vec<CaCounters>,
}

impl CaUnit {
    pub fn new(cores: usize) -> Self {
        CaUnit { cores: vec![CoreCaState::default(); cores], counters: vec![CaCounters::default(); cores] }
    }

    pub fn state(&self, core: usize) -> &CoreCaState {
        &self.cores[core]
    }

    pub fn counters(&self, core: usize) -> &CaCounters {
        &self.counters[core]
    }

    pub fn total_counters(&self) -> CaCounters {
        let mut t = CaCounters::default();
        for c in &self.counters {
            t.add(c);
        }
        t
    }

    pub fn reset_counters(&mut self) {
        self.counters.iter_mut().for_each(|c| *c = CaCounters::default());
    }

    /// Apply pending memory-system notifications.
    pub fn absorb(&mut self, mem: &mut MemSystem) {
        let events: SmallVec<[MemEvent; 4]> = mem.take_events().collect();
        for e in events {
            match e {
                MemEvent::Invalidated { core, line } => self.on_remote_invalidation(core, line),
                MemEvent::TaggedEvicted { core, line } => self.on_tagged_eviction(core, line),
            }
        }
    }

    /// A remote write invalidated `core`'s copy of `line`.
    pub fn on_remote_invalidation(&mut self, core: usize, line: LineId) {
        self.revoke_if_tagged(core, line, FailCause::Conflict);
    }

    pub fn on_tagged_eviction(&mut self, core: usize, line: LineId) {
        self.revoke_if_tagged(core, line, FailCause::Eviction);
    }

    fn revoke_if_tagged(&mut self, core: usize, line: LineId, cause: FailCause) {
        let st = &mut self.cores[core];
        if st.is_tagged(line) {
            if !st.access_revoked {
                self.counters[core].revocations += 1;
            }
            st.revoke(cause);
        }
    }

    fn failed(&mut self, core: usize, cause: FailCause, msgs: usize) -> CaOutcome {
        self.cores[core].last_status = Status::Failed;
        let c = &mut self.counters[core];
        c.count_failure(cause);
        c.failed_msgs += msgs as u64;
        CaOutcome::fail(cause)
    }

    pub fn cread(&mut self, mem: &mut MemSystem, core: usize, addr: u64) -> CaOutcome {
        self.counters[core].creads += 1;
        let before = mem.pending_msgs().len();
        if self.cores[core].access_revoked {
            self.counters[core].failed_creads += 1;
            let cause = self.cores[core].revoke_cause.unwrap_or(FailCause::Conflict);
            return self.failed(core, cause, mem.pending_msgs().len() - before);
        }
        let line = mem.line_of(addr);
        match mem.load_and_tag(core, addr) {
            Ok(v) => {
                self.absorb(mem);
                let st = &mut self.cores[core];
                if !st.is_tagged(line) {
                    st.tag_set.push(line);
                }
                st.last_status = Status::Success;
                let n = st.tag_set.len() as u64;
                let c = &mut self.counters[core];
                c.max_tagset = c.max_tagset.max(n);
                CaOutcome::ok(v)
            }
            Err(CapacityFailure) => {
                self.counters[core].failed_creads += 1;
                self.failed(core, FailCause::Capacity, mem.pending_msgs().len() - before)
            }
        }
    }

    pub fn cwrite(&mut self, mem: &mut MemSystem, core: usize, addr: u64, v: u64) -> CaOutcome {
        self.counters[core].cwrites += 1;
        let line = mem.line_of(addr);
        let st = &self.cores[core];
        let cause = if st.access_revoked {
            Some(st.revoke_cause.unwrap_or(FailCause::Conflict))
        } else if !st.is_tagged(line) {
            Some(FailCause::Untagged)
        } else {
            None
        };
        if let Some(cause) = cause {
            self.counters[core].failed_cwrites += 1;
            return self.failed(core, cause, 0);
        }
        mem.store(core, addr, v);
        self.absorb(mem);
        self.cores[core].last_status = Status::Success;
        CaOutcome::ok(v)
    }

    pub fn untag_one(&mut self, mem: &mut MemSystem, core: usize, addr: u64) {
        self.counters[core].untag_ones += 1;
        let line = mem.line_of(addr);
        let st = &mut self.cores[core];
        if let Some(i) = st.tag_set.iter().position(|&l| l == line) {
            st.tag_set.swap_remove(i);
            mem.clear_tag(core, line);
        }
    }

    pub fn untag_all(&mut self, mem: &mut MemSystem, core: usize) {
        self.counters[core].untag_alls += 1;
        let st = &mut self.cores[core];
        for &line in &st.tag_set {
            mem.clear_tag(core, line);
        }
        *st = CoreCaState::default();
    }

    /// The abstract tag set and the physical tag bits agree.
    pub fn check_invariants(&self, mem: &MemSystem) -> Result<(), String> {
        for (core, st) in self.cores.iter().enumerate() {
            let mut phys = mem.tagged_lines(core);
            phys.sort_unstable();
            let mut abs: Vec<LineId> = st.tag_set.to_vec();
            abs.sort_unstable();
            if st.access_revoked {
                if let Some(l) = phys.iter().find(|l| !abs.contains(l)) {
                    return Err(format!("core {core}: line {l:#x} tagged but not in tag set"));
                }
            } else if phys != abs {
                return Err(format!("core {core}: tag set {abs:?} but tag bits {phys:?}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memsys::{MemConfig, MsgKind, TaggedLinePolicy};

    fn setup(cores: usize) -> (MemSystem, CaUnit) {
        let cfg = MemConfig { check_invariants: true, ..MemConfig::with_cores(cores) };
        (MemSystem::new(cfg).unwrap(), CaUnit::new(cores))
    }

    const A: u64 = 0x40;
    const B: u64 = 0x80;

    #[test]
    fn cread_on_fresh_core_tags() {
        let (mut m, mut ca) = setup(1);
        m.store(0, A, 7);
        let r = ca.cread(&mut m, 0, A);
        assert_eq!((r.succeeded, r.value), (true, 7));
        assert_eq!(ca.state(0).tag_set.as_slice(), &[1]);
        assert!(m.is_tagged(0, 1));
        ca.check_invariants(&m).unwrap();
    }

    #[test]
    fn revoked_cread_sends_nothing() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        m.store(1, A, 1);
        ca.absorb(&mut m);
        m.clear_msgs();
        let r = ca.cread(&mut m, 0, B);
        assert!(!r.succeeded);
        assert!(m.pending_msgs().is_empty());
        assert_eq!(ca.counters(0).failed_msgs, 0);
        assert!(!ca.state(0).is_tagged(2));
    }

    #[test]
    fn remote_write_fails_other_line() {
        let (mut m, mut ca) = setup(2);
        assert!(ca.cread(&mut m, 0, A).succeeded);
        m.store(1, A, 5);
        ca.absorb(&mut m);
        let r = ca.cread(&mut m, 0, B);
        assert_eq!(r.cause, Some(FailCause::Conflict));
        assert_eq!(ca.state(0).last_status, Status::Failed);
    }

    #[test]
    fn cwrite_requires_tag() {
        let (mut m, mut ca) = setup(1);
        let r = ca.cwrite(&mut m, 0, A, 9);
        assert_eq!(r.cause, Some(FailCause::Untagged));
        assert_eq!(m.peek(A), 0);
    }

    #[test]
    fn cread_then_cwrite_succeeds() {
        let (mut m, mut ca) = setup(1);
        ca.cread(&mut m, 0, A);
        assert!(ca.cwrite(&mut m, 0, A, 9).succeeded);
        assert_eq!(m.peek(A), 9);
        assert_eq!(ca.state(0).tag_set.len(), 1);
    }

    #[test]
    fn cwrite_after_remote_store_fails() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        m.store(1, A, 3);
        ca.absorb(&mut m);
        assert!(!ca.cwrite(&mut m, 0, A, 9).succeeded);
        assert_eq!(m.peek(A), 3);
    }

    #[test]
    fn cwrite_revokes_remote_tags_not_own() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        ca.cread(&mut m, 1, A);
        assert!(ca.cwrite(&mut m, 0, A, 1).succeeded);
        assert!(!ca.state(0).access_revoked);
        assert!(ca.state(1).access_revoked);
    }

    #[test]
    fn untag_one_stops_monitoring() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        ca.untag_one(&mut m, 0, A);
        m.store(1, A, 1);
        ca.absorb(&mut m);
        assert!(!ca.state(0).access_revoked);
        assert!(ca.cread(&mut m, 0, A).succeeded);
    }

    #[test]
    fn untag_one_of_untagged_is_noop() {
        let (mut m, mut ca) = setup(1);
        ca.cread(&mut m, 0, A);
        let before = ca.state(0).clone();
        ca.untag_one(&mut m, 0, B);
        assert_eq!(ca.state(0), &before);
    }

    #[test]
    fn untag_one_keeps_other_lines_monitored() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        ca.cread(&mut m, 0, B);
        ca.untag_one(&mut m, 0, A);
        m.store(1, B, 1);
        ca.absorb(&mut m);
        assert!(ca.state(0).access_revoked);
    }

    #[test]
    fn untag_one_never_clears_bit() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        m.store(1, A, 1);
        ca.absorb(&mut m);
        ca.untag_one(&mut m, 0, A);
        assert!(ca.state(0).access_revoked);
        assert!(!ca.cread(&mut m, 0, B).succeeded);
    }

    #[test]
    fn untag_all_resets_state() {
        let (mut m, mut ca) = setup(2);
        for a in [A, B, 0xc0] {
            ca.cread(&mut m, 0, a);
        }
        assert_eq!(m.tagged_lines(0).len(), 3);
        ca.untag_all(&mut m, 0);
        assert!(m.tagged_lines(0).is_empty());
        assert_eq!(ca.state(0), &CoreCaState::default());
        m.store(1, A, 1);
        ca.absorb(&mut m);
        assert!(!ca.state(0).access_revoked);
    }

    #[test]
    fn untag_all_after_failure_is_fresh() {
        let (mut m, mut ca) = setup(2);
        ca.cread(&mut m, 0, A);
        m.store(1, A, 1);
        ca.absorb(&mut m);
        ca.cread(&mut m, 0, A);
        ca.untag_all(&mut m, 0);
        assert_eq!(ca.state(0), &CoreCaState::default());
    }

    #[test]
    fn invalidating_untagged_line_leaves_bit() {
        let (mut m, mut ca) = setup(2);
        m.load(0, A);
        ca.cread(&mut m, 0, B);
        m.store(1, A, 1);
        ca.absorb(&mut m);
        assert!(!ca.state(0).access_revoked);
    }

    #[test]
    fn eviction_of_tagged_line_revokes() {
        let cfg = MemConfig::with_cores(1).tiny_l1(2, 4);
        let mut m = MemSystem::new(cfg).unwrap();
        let mut ca = CaUnit::new(1);
        ca.cread(&mut m, 0, 0);
        m.load(0, 256);
        m.load(0, 512);
        ca.absorb(&mut m);
        assert!(ca.state(0).access_revoked);
        assert_eq!(ca.cread(&mut m, 0, 64).cause, Some(FailCause::Eviction));
    }

    #[test]
    fn pin_capacity_failure_adds_no_tag() {
        let cfg = MemConfig { tagged_lines: TaggedLinePolicy::Pin, ..MemConfig::with_cores(1).tiny_l1(2, 4) };
        let mut m = MemSystem::new(cfg).unwrap();
        let mut ca = CaUnit::new(1);
        ca.cread(&mut m, 0, 0);
        ca.cread(&mut m, 0, 256);
        m.clear_msgs();
        let r = ca.cread(&mut m, 0, 512);
        assert_eq!(r.cause, Some(FailCause::Capacity));
        assert!(m.pending_msgs().is_empty());
        assert_eq!(ca.state(0).tag_set.len(), 2);
        ca.check_invariants(&m).unwrap();
    }

    #[test]
    fn aba_value_restore_still_fails() {
        let (mut m, mut ca) = setup(2);
        m.store(1, A, 1);
        assert_eq!(ca.cread(&mut m, 0, A).value, 1);
        m.store(1, A, 2);
        m.store(1, A, 1);
        ca.absorb(&mut m);
        assert!(!ca.cwrite(&mut m, 0, A, 5).succeeded);
        assert_eq!(m.peek(A), 1);
    }

    #[test]
    fn successful_cwrite_invalidates_remote_copies() {
        let (mut m, mut ca) = setup(3);
        m.load(1, A);
        m.load(2, A);
        ca.cread(&mut m, 0, A);
        m.clear_msgs();
        ca.cwrite(&mut m, 0, A, 1);
        let invs = m.take_msgs().filter(|x| x.kind == MsgKind::Inv).count();
        assert_eq!(invs, 2);
    }
}
