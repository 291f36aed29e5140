//! Systematic schedule exploration by replay.
//!
//! Futures cannot be cloned, so every branch is reached by rebuilding the
//! scenario and replaying a prefix of scheduling choices. A choice is an
//! index into the sorted list of runnable threads.

use std::collections::HashSet;

use super::{EventLog, Sim};
use crate::error::{Result, SimError};

fn replay(sim: &mut Sim, prefix: &[usize]) -> Result<()> {
    for &c in prefix {
        let r = sim.runnable();
        sim.step_thread(r[c])?;
    }
    Ok(())
}

/// Every maximal interleaving of a scenario, as finished simulations.
pub struct Schedules<F> {
    factory: F,
    stack: Vec<Vec<usize>>,
    max_steps: u64,
    cap: u64,
    yielded: u64,
}

impl<F: FnMut() -> Result<Sim>> Schedules<F> {
    pub fn new(factory: F, max_steps: u64, cap: u64) -> Self {
        Schedules { factory, stack: vec![Vec::new()], max_steps, cap, yielded: 0 }
    }

    fn run_one(&mut self, prefix: Vec<usize>) -> Result<Sim> {
        let mut sim = (self.factory)()?;
        replay(&mut sim, &prefix)?;
        let mut choices = prefix;
        loop {
            let runnable = sim.runnable();
            if runnable.is_empty() {
                return Ok(sim);
            }
            if choices.len() as u64 >= self.max_steps {
                return Err(SimError::StepBudgetExhausted(self.max_steps));
            }
            for j in (1..runnable.len()).rev() {
                let mut p = choices.clone();
                p.push(j);
                self.stack.push(p);
            }
            choices.push(0);
            sim.step_thread(runnable[0])?;
        }
    }
}

impl<F: FnMut() -> Result<Sim>> Iterator for Schedules<F> {
    type Item = Result<Sim>;

    fn next(&mut self) -> Option<Result<Sim>> {
        let prefix = self.stack.pop()?;
        if self.yielded >= self.cap {
            self.stack.clear();
            return Some(Err(SimError::EnumerationCapExceeded(self.cap)));
        }
        self.yielded += 1;
        let r = self.run_one(prefix);
        if r.is_err() {
            self.stack.clear();
        }
        Some(r)
    }
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// The event log of every maximal interleaving, each exactly once.
pub fn enumerate_schedules<F: FnMut() -> Result<Sim>>(
    factory: F,
    max_steps: u64,
    cap: u64,
) -> impl Iterator<Item = Result<EventLog>> {
    Schedules::new(factory, max_steps, cap).map(|r| r.map(|mut s| s.take_log()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExploreStats {
    /// Distinct states expanded.
    pub states: u64,
    /// Terminal states reached: all threads finished or a violation recorded.
    pub leaves: u64,
    /// Scenario rebuilds.
    pub replays: u64,
    /// Arrivals at an already expanded state.
    pub merged: u64,
}

/// Depth-first search over all interleavings, merging paths that reach the
/// same [`Sim::state_digest`]. `on_leaf` sees every distinct terminal state,
/// including any state in which the machine recorded a violation.
pub fn explore_states<F, L>(mut factory: F, max_steps: u64, mut on_leaf: L) -> Result<ExploreStats>
where
    F: FnMut() -> Result<Sim>,
    L: FnMut(&Sim) -> Result<()>,
{
    let mut stats = ExploreStats::default();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let mut sim = factory()?;
        stats.replays += 1;
        replay(&mut sim, &prefix)?;
        let mut choices = prefix;
        loop {
            if !visited.insert(sim.state_digest()) {
                stats.merged += 1;
                break;
            }
            stats.states += 1;
            let runnable = sim.runnable();
            if runnable.is_empty() || !sim.machine().violations().is_empty() {
                stats.leaves += 1;
                on_leaf(&sim)?;
                break;
            }
            if choices.len() as u64 >= max_steps {
                return Err(SimError::StepBudgetExhausted(max_steps));
            }
            for j in (1..runnable.len()).rev() {
                let mut p = choices.clone();
                p.push(j);
                stack.push(p);
            }
            choices.push(0);
            sim.step_thread(runnable[0])?;
        }
    }
    Ok(stats)
}
