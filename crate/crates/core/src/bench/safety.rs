//! Many short seeded runs under random schedules, each checked by the
//! shadow heap, the log audit, a conservation check and (for sets) the
//! linearizability checker.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::linearizability::{check_set, DEFAULT_CAP};
use super::workload::Workload;
use crate::ca::audit::{audit, AuditConfig, AuditReport};
use crate::ca::CaCounters;
use crate::error::{Result, SimError};
use crate::heap::{Violation, ViolationKind};
use crate::history::{Op, OpResult, Operation};
use crate::simcore::{EventLog, LogMode, MachineConfig, RunStatus, Schedule};
use crate::smr::SmrConfig;
use crate::structures::{DsKind, Setup};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub machine: MachineConfig,
    pub smr: SmrConfig,
    pub structures: Vec<DsKind>,
    pub threads: usize,
    pub key_range: u64,
    pub ops_per_thread: usize,
    pub update_percent: u32,
    pub prefill_percent: u32,
    pub runs: u64,
    pub first_seed: u64,
    pub max_steps: u64,
    /// Treat an exhausted step budget as an ordinary (truncated) run
    /// instead of an error. Needed when capacity evictions can starve
    /// progress.
    pub allow_truncation: bool,
    pub check_linearizability: bool,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            machine: MachineConfig::default(),
            smr: SmrConfig::default(),
            structures: DsKind::ALL.to_vec(),
            threads: 3,
            key_range: 16,
            ops_per_thread: 30,
            update_percent: 50,
            prefill_percent: 50,
            runs: 10_000,
            first_seed: 0,
            max_steps: 200_000,
            allow_truncation: false,
            check_linearizability: true,
        }
    }
}

impl SafetyConfig {
    pub fn workload(&self, ds: DsKind, seed: u64) -> Workload {
        Workload {
            ds,
            threads: self.threads,
            ops_per_thread: self.ops_per_thread,
            update_percent: self.update_percent,
            key_range: Some(self.key_range),
            prefill_percent: self.prefill_percent,
            seed,
        }
    }
}

/// Everything one run produced.
#[derive(Debug)]
pub struct SafetyRun {
    pub ds: DsKind,
    pub seed: u64,
    pub status: RunStatus,
    pub log: EventLog,
    pub violations: Vec<Violation>,
    pub audit: AuditReport,
    pub ca: CaCounters,
    pub tagged_evictions: u64,
    /// `Some(false)` if the history is not linearizable or the final state
    /// does not account for the successful updates.
    pub consistent: Option<bool>,
    /// The sequential prefill ran out of steps; nothing else was run.
    pub prefill_truncated: bool,
}

impl SafetyRun {
    fn stuck_in_prefill(ds: DsKind, seed: u64) -> Self {
        SafetyRun {
            ds,
            seed,
            status: RunStatus::BudgetExhausted,
            log: EventLog::default(),
            violations: Vec::new(),
            audit: AuditReport::default(),
            ca: CaCounters::default(),
            tagged_evictions: 0,
            consistent: None,
            prefill_truncated: true,
        }
    }

    pub fn fatal(&self) -> usize {
        self.violations.iter().filter(|v| v.kind == ViolationKind::FatalConditionalAccess).count()
    }
}

pub fn run_one(cfg: &SafetyConfig, ds: DsKind, seed: u64) -> Result<SafetyRun> {
    let gen = cfg.workload(ds, seed).generate()?;
    let initial: Vec<u64> = gen.prefill.iter().filter_map(|o| o.key()).collect();
    let setup =
        match Setup::new(cfg.machine.clone(), ds, cfg.smr, cfg.threads)?.prefill_within(gen.prefill, cfg.max_steps) {
            Err(SimError::StepBudgetExhausted(_)) if cfg.allow_truncation => {
                return Ok(SafetyRun::stuck_in_prefill(ds, seed))
            }
            r => r?,
        };
    let structure = setup.structure.clone();
    let (mut sim, _) = setup.into_sim(gen.threads, LogMode::Full)?;
    let status = sim.run_checked(&Schedule::random(seed).with_max_steps(cfg.max_steps))?;
    if status == RunStatus::BudgetExhausted && !cfg.allow_truncation {
        return Err(SimError::StepBudgetExhausted(cfg.max_steps));
    }
    let ops = sim.history().operations();
    let m = sim.machine();
    let audit_cfg = AuditConfig {
        line_bytes: m.mem().config().line_bytes,
        block_bytes: m.heap().block_bytes(),
        poison_on_free: m.heap().config().poison_on_free,
    };
    let violations = m.violations().to_vec();
    let consistent = if status == RunStatus::Completed && violations.is_empty() {
        let contents = structure.contents(m);
        let mut ok = conserves(&ops, &initial, &contents);
        if ok && ds.is_set() && cfg.check_linearizability {
            ok = match check_set(&ops, &initial, DEFAULT_CAP) {
                Ok(b) => b,
                Err(SimError::HistoryTooLong(_)) => true,
                Err(e) => return Err(e),
            };
        }
        Some(ok && structure.check(m).is_ok())
    } else {
        None
    };
    let ca = m.ca_counters();
    let tagged_evictions = m.mem_counters().tagged_evictions;
    let log = sim.take_log();
    let audit = audit(&log, &audit_cfg);
    Ok(SafetyRun {
        ds,
        seed,
        status,
        log,
        violations,
        audit,
        ca,
        tagged_evictions,
        consistent,
        prefill_truncated: false,
    })
}

/// Successful inserts and pushes minus successful deletes and pops must
/// equal what is left, key by key.
pub fn conserves(ops: &[Operation], initial: &[u64], contents: &[u64]) -> bool {
    let mut net: HashMap<u64, i64> = HashMap::new();
    for &k in initial {
        *net.entry(k).or_default() += 1;
    }
    for o in ops {
        match (o.op, o.result) {
            (Op::Insert(k), Some(OpResult::Bool(true))) | (Op::Push(k), Some(_)) => *net.entry(k).or_default() += 1,
            (Op::Delete(k), Some(OpResult::Bool(true))) | (Op::Pop, Some(OpResult::Key(Some(k)))) => {
                *net.entry(k).or_default() -= 1
            }
            _ => {}
        }
    }
    for &k in contents {
        *net.entry(k).or_default() -= 1;
    }
    net.values().all(|&v| v == 0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SafetySummary {
    pub runs: u64,
    pub truncated: u64,
    /// Truncated runs that never got past the prefill.
    pub truncated_in_prefill: u64,
    pub fatal: u64,
    pub other_violations: u64,
    pub inconsistent: u64,
    pub successes: u64,
    pub failures: u64,
    pub witnessed_failures: u64,
    pub spurious_successes: u64,
    pub orphan_failures: u64,
    pub noisy_failures: u64,
    pub untagged_writes: u64,
    pub failed_msgs: u64,
    pub tagged_evictions: u64,
    pub eviction_failures: u64,
    /// First run with an oracle violation, as (structure, seed).
    pub first_violation: Option<(DsKind, u64)>,
    pub first_inconsistent: Option<(DsKind, u64)>,
}

impl SafetySummary {
    pub fn add(&mut self, r: &SafetyRun) {
        self.runs += 1;
        self.truncated += u64::from(r.status == RunStatus::BudgetExhausted);
        self.truncated_in_prefill += u64::from(r.prefill_truncated);
        let fatal = r.fatal() as u64;
        self.fatal += fatal;
        self.other_violations += r.violations.len() as u64 - fatal;
        if !r.violations.is_empty() && self.first_violation.is_none() {
            self.first_violation = Some((r.ds, r.seed));
        }
        if r.consistent == Some(false) {
            self.inconsistent += 1;
            self.first_inconsistent.get_or_insert((r.ds, r.seed));
        }
        let a = &r.audit;
        self.successes += a.successes;
        self.failures += a.failures;
        self.witnessed_failures += a.witnessed_failures;
        self.spurious_successes += a.spurious_successes.len() as u64;
        self.orphan_failures += a.orphan_failures.len() as u64;
        self.noisy_failures += a.noisy_failures.len() as u64;
        self.untagged_writes += a.untagged_writes.len() as u64;
        self.failed_msgs += r.ca.failed_msgs;
        self.tagged_evictions += r.tagged_evictions;
        self.eviction_failures += r.ca.fail_eviction;
    }

    /// Fold in the summary of a later batch of runs.
    pub fn merge(&mut self, o: &SafetySummary) {
        self.runs += o.runs;
        self.truncated += o.truncated;
        self.truncated_in_prefill += o.truncated_in_prefill;
        self.fatal += o.fatal;
        self.other_violations += o.other_violations;
        self.inconsistent += o.inconsistent;
        self.successes += o.successes;
        self.failures += o.failures;
        self.witnessed_failures += o.witnessed_failures;
        self.spurious_successes += o.spurious_successes;
        self.orphan_failures += o.orphan_failures;
        self.noisy_failures += o.noisy_failures;
        self.untagged_writes += o.untagged_writes;
        self.failed_msgs += o.failed_msgs;
        self.tagged_evictions += o.tagged_evictions;
        self.eviction_failures += o.eviction_failures;
        self.first_violation = self.first_violation.or(o.first_violation);
        self.first_inconsistent = self.first_inconsistent.or(o.first_inconsistent);
    }

    /// No oracle found anything wrong.
    pub fn is_clean(&self) -> bool {
        self.fatal == 0
            && self.other_violations == 0
            && self.inconsistent == 0
            && self.spurious_successes == 0
            && self.untagged_writes == 0
    }

    pub fn describe(&self) -> String {
        format!(
            "{} runs ({} truncated, {} of them in the prefill): {} fatal and {} other violations, {} inconsistent; \
             {} conditional successes, {} failures ({} witnessed, {} by eviction), {} spurious successes, \
             {} orphan failures, {} failures with messages, {} messages from failed accesses, \
             {} tagged evictions",
            self.runs,
            self.truncated,
            self.truncated_in_prefill,
            self.fatal,
            self.other_violations,
            self.inconsistent,
            self.successes,
            self.failures,
            self.witnessed_failures,
            self.eviction_failures,
            self.spurious_successes,
            self.orphan_failures,
            self.noisy_failures,
            self.failed_msgs,
            self.tagged_evictions
        )
    }
}

/// Run every configured structure for `cfg.runs` seeds.
pub fn run_suite(cfg: &SafetyConfig) -> Result<SafetySummary> {
    run_suite_with(cfg, |_| {})
}

/// Like [`run_suite`], handing each run to `inspect` before it is dropped.
pub fn run_suite_with(cfg: &SafetyConfig, mut inspect: impl FnMut(&SafetyRun)) -> Result<SafetySummary> {
    let mut sum = SafetySummary::default();
    for &ds in &cfg.structures {
        for seed in cfg.first_seed..cfg.first_seed + cfg.runs {
            let r = run_one(cfg, ds, seed)?;
            inspect(&r);
            sum.add(&r);
        }
    }
    Ok(sum)
}

/// [`run_suite`] spread over `jobs` OS threads. Each simulation stays
/// single-threaded and the merged summary does not depend on `jobs`.
pub fn run_suite_parallel(cfg: &SafetyConfig, jobs: usize) -> Result<SafetySummary> {
    let jobs = jobs.max(1) as u64;
    let mut sum = SafetySummary::default();
    for &ds in &cfg.structures {
        let per = cfg.runs.div_ceil(jobs);
        let parts: Vec<Result<SafetySummary>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let lo = cfg.first_seed + (j * per).min(cfg.runs);
                    let hi = cfg.first_seed + ((j + 1) * per).min(cfg.runs);
                    s.spawn(move || {
                        let mut part = SafetySummary::default();
                        for seed in lo..hi {
                            part.add(&run_one(cfg, ds, seed)?);
                        }
                        Ok(part)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("suite worker panicked")).collect()
        });
        for p in parts {
            sum.merge(&p?);
        }
    }
    Ok(sum)
}

/// Worker threads to use when none are requested.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
