//! Scripted ABA interleavings on a two-element stack, run against the
//! CAS-based stack with immediate reuse and against the conditional-access
//! stack.

use super::linearizability::{check_stack, DEFAULT_CAP};
use crate::error::Result;
use crate::heap::Violation;
use crate::history::Op;
use crate::simcore::{Action, EventLog, LogMode, MachineConfig, Outcome, Schedule, Segment};
use crate::smr::{SmrConfig, SmrKind};
use crate::structures::{DsKind, Setup, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// The popper stalls just before its compare; meanwhile both nodes are
    /// popped and their blocks come back through two pushes, so the top
    /// pointer holds its old value again.
    StaleCompare,
    /// The popper stalls right after reading the top pointer; the node is
    /// popped and freed before the popper dereferences it.
    StaleDereference,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::StaleCompare, Scenario::StaleDereference];

    fn popper_steps(self) -> u64 {
        match self {
            Scenario::StaleCompare => 3,
            Scenario::StaleDereference => 1,
        }
    }

    fn other_ops(self) -> Vec<Op> {
        match self {
            Scenario::StaleCompare => vec![Op::Pop, Op::Pop, Op::Push(3), Op::Push(4)],
            Scenario::StaleDereference => vec![Op::Pop, Op::Pop, Op::Push(3)],
        }
    }
}

#[derive(Debug)]
pub struct AbaOutcome {
    pub scenario: Scenario,
    pub variant: Variant,
    /// Result of the popper's first compare-and-swap or conditional write,
    /// if it got that far.
    pub first_commit: Option<bool>,
    pub violations: Vec<Violation>,
    pub linearizable: bool,
    pub log: EventLog,
}

impl AbaOutcome {
    /// Some oracle objected.
    pub fn flagged(&self) -> bool {
        !self.violations.is_empty() || !self.linearizable
    }
}

/// Stack holding 2 on top of 1; thread 0 pops, thread 1 runs the
/// scenario's operations in the gap. The baseline frees at once.
pub fn run_scenario(scenario: Scenario, variant: Variant) -> Result<AbaOutcome> {
    let smr = match variant {
        Variant::Ca => SmrConfig::of(SmrKind::Ca),
        Variant::Baseline => SmrConfig { immediate_free: true, ..SmrConfig::of(SmrKind::None) },
    };
    let setup = Setup::new(MachineConfig::default(), DsKind::Stack, smr, 2)?.prefill(vec![Op::Push(1), Op::Push(2)])?;
    let (mut sim, _) = setup.into_sim(vec![vec![Op::Pop], scenario.other_ops()], LogMode::Full)?;
    let schedule = Schedule::explicit(vec![
        Segment::Steps { tid: 0, n: scenario.popper_steps() },
        Segment::UntilDone { tid: 1 },
        Segment::UntilDone { tid: 0 },
    ]);
    sim.run_checked(&schedule)?;
    let ops = sim.history().operations();
    let linearizable = check_stack(&ops, &[1, 2], DEFAULT_CAP)?;
    let violations = sim.machine().violations().to_vec();
    let log = sim.take_log();
    let first_commit = log
        .records
        .iter()
        .find(|r| r.tid == 0 && matches!(r.action, Action::Cas { .. } | Action::CWrite { .. }))
        .and_then(|r| match r.outcome {
            Outcome::Flag(b) => Some(b),
            _ => None,
        });
    Ok(AbaOutcome { scenario, variant, first_commit, violations, linearizable, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::ViolationKind;

    #[test]
    fn cas_stack_is_fooled_and_ca_stack_is_not() {
        let cas = run_scenario(Scenario::StaleCompare, Variant::Baseline).unwrap();
        assert_eq!(cas.first_commit, Some(true));
        assert!(!cas.linearizable);
        let ca = run_scenario(Scenario::StaleCompare, Variant::Ca).unwrap();
        assert_eq!(ca.first_commit, Some(false));
        assert!(!ca.flagged());
    }

    #[test]
    fn stale_dereference_is_a_use_after_free_only_for_cas() {
        let cas = run_scenario(Scenario::StaleDereference, Variant::Baseline).unwrap();
        assert_eq!(cas.violations.first().map(|v| v.kind), Some(ViolationKind::PlainUseAfterFree));
        let ca = run_scenario(Scenario::StaleDereference, Variant::Ca).unwrap();
        assert!(!ca.flagged());
        let failed_read = ca.log.records.iter().any(|r| r.tid == 0 && r.outcome == Outcome::Cond(None));
        assert!(failed_read);
    }
}
