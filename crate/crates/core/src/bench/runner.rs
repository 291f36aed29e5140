//! One benchmark run: prefill, a measured concurrent phase, samples.

use serde::{Deserialize, Serialize};

use super::metrics::{MetricsLog, Sample, Snapshot};
use super::workload::Workload;
use crate::error::{Result, SimError};
use crate::heap::Violation;
use crate::simcore::{chooser_for, EventLog, LogMode, MachineConfig, SchedulePolicy};
use crate::smr::SmrConfig;
use crate::structures::Setup;

pub const DEFAULT_SAMPLE_EVERY: u64 = 1000;
pub const DEFAULT_BENCH_STEPS: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub machine: MachineConfig,
    pub smr: SmrConfig,
    pub workload: Workload,
    /// Record a sample each time this many more operations have completed.
    pub sample_every: u64,
    pub max_steps: u64,
    /// Keep the full event log of the measured phase.
    pub keep_log: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            machine: MachineConfig::default(),
            smr: SmrConfig::default(),
            workload: Workload::default(),
            sample_every: DEFAULT_SAMPLE_EVERY,
            max_steps: DEFAULT_BENCH_STEPS,
            keep_log: false,
        }
    }
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub metrics: MetricsLog,
    /// Oracle findings; the run stops at the first one.
    pub violations: Vec<Violation>,
    pub log: EventLog,
}

impl BenchOutcome {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Run `cfg` under a random schedule seeded by the workload seed.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutcome> {
    let w = &cfg.workload;
    if cfg.sample_every == 0 {
        return Err(SimError::Config("sample interval must be positive".into()));
    }
    let gen = w.generate()?;
    let setup = Setup::new(cfg.machine.clone(), w.ds, cfg.smr, w.threads)?.prefill(gen.prefill)?;
    let structure = setup.structure.clone();
    let mode = if cfg.keep_log { LogMode::Full } else { LogMode::Off };
    let (mut sim, _) = setup.into_sim(gen.threads, mode)?;
    sim.machine_mut().reset_counters();
    let before = sim.machine().alloc_stats();

    let mut chooser = chooser_for(&SchedulePolicy::Random { seed: w.seed });
    let mut samples = Vec::new();
    let mut next = cfg.sample_every;
    let mut steps = 0;
    let mut runnable = Vec::with_capacity(w.threads);
    loop {
        runnable.clear();
        runnable.extend((0..sim.thread_count()).filter(|&t| sim.pending(t).is_some()));
        if runnable.is_empty() {
            break;
        }
        if steps == cfg.max_steps {
            return Err(SimError::StepBudgetExhausted(steps));
        }
        let tid = chooser.choose(&runnable);
        let r = sim.step_thread(tid);
        steps += 1;
        if !sim.machine().violations().is_empty() {
            break;
        }
        r?;
        if sim.completed_ops() >= next {
            samples.push(Sample { sample_ops: next, at: Snapshot::take(&sim, &structure) });
            next += cfg.sample_every;
        }
    }

    let end = Snapshot::take(&sim, &structure);
    let restarts = sim.checkpoints().saturating_sub(end.ops_done);
    let m = sim.machine();
    let after = m.alloc_stats();
    let metrics = MetricsLog {
        scheme: cfg.smr.kind,
        structure: w.ds,
        threads: w.threads,
        update_percent: w.update_percent,
        seed: w.seed,
        samples,
        end,
        restarts,
        steps,
        mem: m.mem_counters(),
        ca: m.ca_counters(),
        allocated: after.allocated_total - before.allocated_total,
        freed: after.freed_total - before.freed_total,
    };
    let violations = m.violations().to_vec();
    Ok(BenchOutcome { metrics, violations, log: sim.take_log() })
}
