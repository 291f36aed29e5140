//! Exhaustive exploration of tiny concurrent programs, checking every
//! reachable final state.

use std::collections::HashSet;

use super::linearizability::{check_linearizable, Spec, DEFAULT_CAP};
use super::safety::conserves;
use crate::error::Result;
use crate::history::Op;
use crate::simcore::{explore_states, LogMode, MachineConfig};
use crate::smr::SmrConfig;
use crate::structures::{DsKind, Setup};

/// A tiny program: initial contents and one operation list per thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub initial: Vec<u64>,
    pub threads: Vec<Vec<Op>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExploreReport {
    pub states: u64,
    pub leaves: u64,
    pub distinct_histories: u64,
    pub non_linearizable: u64,
    pub violating_leaves: u64,
    /// Operation results of the first failing leaf, for diagnostics.
    pub first_failure: Option<String>,
}

impl ExploreReport {
    pub fn is_clean(&self) -> bool {
        self.non_linearizable == 0 && self.violating_leaves == 0 && self.leaves > 0
    }

    pub fn merge(&mut self, o: &ExploreReport) {
        self.states += o.states;
        self.leaves += o.leaves;
        self.distinct_histories += o.distinct_histories;
        self.non_linearizable += o.non_linearizable;
        self.violating_leaves += o.violating_leaves;
        if self.first_failure.is_none() {
            self.first_failure.clone_from(&o.first_failure);
        }
    }
}

/// The fixed two-thread, two-operation programs over keys {1, 2, 3}.
pub fn tiny_set_programs() -> Vec<Program> {
    use Op::*;
    let p = |initial: &[u64], t0: [Op; 2], t1: [Op; 2]| Program {
        initial: initial.to_vec(),
        threads: vec![t0.to_vec(), t1.to_vec()],
    };
    vec![
        p(&[], [Insert(1), Insert(2)], [Insert(2), Delete(1)]),
        p(&[2], [Delete(2), Contains(3)], [Insert(3), Delete(2)]),
        p(&[3], [Insert(1), Delete(3)], [Delete(1), Insert(3)]),
        p(&[2], [Contains(2), Insert(2)], [Delete(2), Contains(2)]),
        p(&[1, 3], [Delete(1), Insert(2)], [Delete(3), Contains(2)]),
        p(&[1, 2, 3], [Delete(2), Delete(1)], [Delete(2), Insert(1)]),
    ]
}

/// Two-thread stack programs: concurrent pushes, pops and peeks.
pub fn tiny_stack_programs() -> Vec<Program> {
    use Op::*;
    let p = |initial: &[u64], t0: &[Op], t1: &[Op]| Program {
        initial: initial.to_vec(),
        threads: vec![t0.to_vec(), t1.to_vec()],
    };
    vec![
        p(&[], &[Push(1), Pop], &[Push(2), Pop]),
        p(&[1, 2], &[Pop, Pop], &[Pop, Push(3)]),
        p(&[1], &[Push(2), Peek], &[Pop, Pop]),
    ]
}

/// The fixed programs for `ds`.
pub fn tiny_programs(ds: DsKind) -> Vec<Program> {
    if ds.is_set() {
        tiny_set_programs()
    } else {
        tiny_stack_programs()
    }
}

/// Explore every schedule of `prog` on `ds`, merging identical states.
pub fn explore_program(
    ds: DsKind,
    smr: SmrConfig,
    machine: &MachineConfig,
    prog: &Program,
    max_steps: u64,
) -> Result<ExploreReport> {
    let prefill: Vec<Op> =
        prog.initial.iter().map(|&k| if ds.is_set() { Op::Insert(k) } else { Op::Push(k) }).collect();
    let spec = if ds.is_set() { Spec::Set } else { Spec::Stack };
    let structure = Setup::new(machine.clone(), ds, smr, prog.threads.len())?.structure;
    let mut rep = ExploreReport::default();
    let mut histories = HashSet::new();
    let stats = explore_states(
        || {
            let s = Setup::new(machine.clone(), ds, smr, prog.threads.len())?.prefill(prefill.clone())?;
            Ok(s.into_sim(prog.threads.clone(), LogMode::Off)?.0)
        },
        max_steps,
        |sim| {
            let ops = sim.history().operations();
            let m = sim.machine();
            let results: Vec<_> = ops.iter().map(|o| (o.tid, o.op, o.result, o.invoke, o.respond)).collect();
            histories.insert(format!("{results:?}"));
            let violating = !m.violations().is_empty();
            let ok = !violating
                && check_linearizable(spec, &ops, &prog.initial, DEFAULT_CAP)?
                && conserves(&ops, &prog.initial, &structure.contents(m))
                && structure.check(m).is_ok();
            rep.violating_leaves += u64::from(violating);
            if !ok {
                rep.non_linearizable += u64::from(!violating);
                if rep.first_failure.is_none() {
                    let shown: Vec<String> =
                        ops.iter().map(|o| format!("t{} {} -> {:?}", o.tid, o.op, o.result)).collect();
                    rep.first_failure = Some(shown.join("; "));
                }
            }
            Ok(())
        },
    )?;
    rep.states = stats.states;
    rep.leaves = stats.leaves;
    rep.distinct_histories = histories.len() as u64;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smr::SmrKind;

    #[test]
    fn first_tiny_program_on_ca_list() {
        let prog = &tiny_set_programs()[0];
        let rep =
            explore_program(DsKind::List, SmrConfig::of(SmrKind::Ca), &MachineConfig::default(), prog, 10_000).unwrap();
        assert!(rep.is_clean(), "{rep:?}");
        assert!(rep.distinct_histories > 1);
    }

    #[test]
    fn stack_programs_explore_clean() {
        for prog in tiny_programs(DsKind::Stack) {
            let rep =
                explore_program(DsKind::Stack, SmrConfig::of(SmrKind::Ca), &MachineConfig::default(), &prog, 10_000)
                    .unwrap();
            assert!(rep.is_clean(), "{rep:?}");
        }
    }
}
