//! Acceptance gate: one PASS/FAIL line per criterion.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use casim::bench::aba::{run_scenario, Scenario};
use casim::bench::conformance::msi_stress;
use casim::bench::explore::{explore_program, tiny_set_programs, ExploreReport};
use casim::bench::footprint::{footprint_experiment, preset, WARMUP_OPS};
use casim::bench::safety::{default_jobs, run_one, run_suite_parallel, run_suite_with};
use casim::bench::{check_footprint, MetricsLog, SafetyConfig, SafetySummary};
use casim::memsys::{MemConfig, TaggedLinePolicy};
use casim::simcore::MachineConfig;
use casim::smr::{SmrConfig, SmrKind};
use casim::structures::{DsKind, Variant};

#[derive(Default)]
struct Gate {
    failed: u32,
    lines: Vec<(u32, String)>,
}

impl Gate {
    fn report(&mut self, n: u32, title: &str, ok: bool, detail: String, took: Duration) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        self.failed += u32::from(!ok);
        eprintln!("criterion {n} done in {:.1}s", took.as_secs_f64());
        self.lines.push((n, format!("{verdict} criterion {n:>2} {title}: {detail} [{:.1}s]", took.as_secs_f64())));
    }
}

fn suite(cfg: &SafetyConfig) -> SafetySummary {
    run_suite_parallel(cfg, default_jobs()).unwrap_or_else(|e| panic!("suite failed to run: {e}"))
}

fn main() -> ExitCode {
    let mut g = Gate::default();

    // 1, 5, 6, 7 share the runs of the safety suite.
    let t = Instant::now();
    let base = SafetyConfig::default();
    let mut per_ds = Vec::new();
    let mut all = SafetySummary::default();
    for ds in DsKind::ALL {
        let s = suite(&SafetyConfig { structures: vec![ds], ..base.clone() });
        all.merge(&s);
        per_ds.push(format!("{ds} {}", s.fatal));
    }
    let took = t.elapsed();
    g.report(
        1,
        "safety theorem",
        all.fatal == 0 && all.runs == 40_000,
        format!(
            "{} runs of 3 threads x 30 ops over keys 0..16, fatal conditional accesses per structure: {}",
            all.runs,
            per_ds.join(", ")
        ),
        took,
    );
    g.report(
        5,
        "failed-access locality",
        all.failed_msgs == 0 && all.noisy_failures == 0 && all.failures > 0,
        format!(
            "{} failed conditional accesses, {} messages counted against them, {} with messages in the log",
            all.failures, all.failed_msgs, all.noisy_failures
        ),
        Duration::ZERO,
    );
    g.report(
        6,
        "no spurious success",
        all.spurious_successes == 0 && all.untagged_writes == 0 && all.successes > 0,
        format!(
            "{} successful conditional accesses audited, {} spurious, {} cwrites to untagged lines",
            all.successes, all.spurious_successes, all.untagged_writes
        ),
        Duration::ZERO,
    );

    let t = Instant::now();
    let unbounded = SafetyConfig {
        machine: MachineConfig {
            mem: MemConfig { tagged_lines: TaggedLinePolicy::Unbounded, ..MemConfig::default() },
            ..Default::default()
        },
        ..base.clone()
    };
    let ub = suite(&unbounded);
    g.report(
        7,
        "progress witness",
        all.orphan_failures == 0 && all.eviction_failures == 0 && ub.orphan_failures == 0 && ub.fatal == 0,
        format!(
            "suite runs: {} of {} failures unwitnessed ({} from evictions); same seeds with tagged lines never evicted: {} of {}",
            all.orphan_failures, all.failures, all.eviction_failures, ub.orphan_failures, ub.failures
        ),
        t.elapsed(),
    );

    let t = Instant::now();
    let cas = run_scenario(Scenario::StaleCompare, Variant::Baseline).expect("aba baseline");
    let ca = run_scenario(Scenario::StaleCompare, Variant::Ca).expect("aba ca");
    let cas_uaf = run_scenario(Scenario::StaleDereference, Variant::Baseline).expect("uaf baseline");
    let ca_uaf = run_scenario(Scenario::StaleDereference, Variant::Ca).expect("uaf ca");
    let took = t.elapsed();
    g.report(
        2,
        "ABA negative control",
        cas.flagged()
            && cas_uaf.flagged()
            && ca.first_commit == Some(false)
            && !ca.flagged()
            && !ca_uaf.flagged()
            && took < Duration::from_secs(1),
        format!(
            "CAS stack: compare {:?}, linearizable {}, use-after-free {}; CA stack: cwrite {:?}, clean {}",
            cas.first_commit,
            cas.linearizable,
            !cas_uaf.violations.is_empty(),
            ca.first_commit,
            !ca.flagged() && !ca_uaf.flagged()
        ),
        took,
    );

    let t = Instant::now();
    let mut ex = ExploreReport::default();
    let ca_smr = SmrConfig::of(SmrKind::Ca);
    for p in tiny_set_programs() {
        ex.merge(&explore_program(DsKind::List, ca_smr, &MachineConfig::default(), &p, 100_000).expect("exploration"));
    }
    let took = t.elapsed();
    g.report(
        3,
        "exhaustive tiny list",
        ex.is_clean() && took < Duration::from_secs(60),
        format!(
            "{} programs, {} states, {} complete schedules, {} distinct histories, {} non-linearizable, {} with violations",
            tiny_set_programs().len(),
            ex.states,
            ex.leaves,
            ex.distinct_histories,
            ex.non_linearizable,
            ex.violating_leaves
        ),
        took,
    );

    let t = Instant::now();
    let outs = footprint_experiment(&preset(1)).expect("footprint experiment");
    let logs: Vec<MetricsLog> = outs.iter().map(|o| o.metrics.clone()).collect();
    let fc = check_footprint(&logs, WARMUP_OPS);
    let clean = outs.iter().all(|o| o.is_clean());
    let ends: Vec<String> = logs.iter().map(|l| format!("{} {}", l.scheme, l.end.live_now)).collect();
    g.report(
        4,
        "footprint",
        fc.all_ok() && clean,
        format!("final live nodes: {}; {fc:?}", ends.join(", ")),
        t.elapsed(),
    );

    let t = Instant::now();
    let tiny = SafetyConfig {
        machine: MachineConfig { mem: MemConfig::default().tiny_l1(2, 4), ..Default::default() },
        allow_truncation: true,
        max_steps: 20_000,
        ..base.clone()
    };
    let ts = suite(&tiny);
    g.report(
        8,
        "spurious-failure mode",
        ts.fatal == 0 && ts.spurious_successes == 0 && ts.tagged_evictions > 0 && ts.eviction_failures > 0,
        format!(
            "2-way x 4-set L1: {} runs ({} cut off by the step budget), {} tagged evictions, {} failures from evictions, {} fatal, {} spurious successes",
            ts.runs, ts.truncated, ts.tagged_evictions, ts.eviction_failures, ts.fatal, ts.spurious_successes
        ),
        t.elapsed(),
    );

    let t = Instant::now();
    let tiny_l1 = msi_stress(MemConfig::with_cores(3).tiny_l1(2, 1), 4, 100_000, 9).expect("stress");
    let roomy = msi_stress(MemConfig::with_cores(3), 4, 100_000, 10).expect("stress");
    g.report(
        9,
        "MSI conformance",
        tiny_l1.is_clean() && roomy.is_clean() && tiny_l1.evictions > 0,
        format!(
            "{} actions, {} value mismatches, {} invariant failures, {} evictions, {} invalidations{}",
            tiny_l1.actions + roomy.actions,
            tiny_l1.value_mismatches + roomy.value_mismatches,
            tiny_l1.invariant_failures + roomy.invariant_failures,
            tiny_l1.evictions + roomy.evictions,
            tiny_l1.invalidations + roomy.invalidations,
            tiny_l1.first_problem.or(roomy.first_problem).map(|p| format!("; first: {p}")).unwrap_or_default()
        ),
        t.elapsed(),
    );

    let t = Instant::now();
    let (ok, detail) = determinism();
    g.report(10, "determinism", ok, detail, t.elapsed());

    g.lines.sort();
    for (_, line) in &g.lines {
        println!("{line}");
    }
    if g.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", g.failed);
        ExitCode::FAILURE
    }
}

/// Every violation of the unsafe baseline replays to the identical log,
/// through the library and through the command line.
fn determinism() -> (bool, String) {
    let cfg = SafetyConfig {
        smr: SmrConfig { immediate_free: true, ..SmrConfig::of(SmrKind::None) },
        runs: 100,
        ..SafetyConfig::default()
    };
    let mut violating = Vec::new();
    let sum = run_suite_with(&cfg, |r| {
        if !r.violations.is_empty() {
            violating.push((r.ds, r.seed, r.log.to_text(), r.violations.clone()));
        }
    })
    .expect("baseline suite");
    let mut mismatches = 0;
    for (ds, seed, text, v) in &violating {
        let again = run_one(&cfg, *ds, *seed).expect("replay");
        mismatches += usize::from(again.log.to_text() != *text || again.violations != *v);
    }

    let bin = env!("CARGO_BIN_EXE_casim");
    let out = Command::new(bin)
        .args(["safety-suite", "--runs", "20", "--smr", "none", "--immediate-free", "--ds", "list"])
        .output()
        .expect("run casim");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let cli = stderr.lines().find_map(|l| l.strip_prefix("replay: casim ")).map(|cmd| {
        let args: Vec<&str> = cmd.split_whitespace().collect();
        let a = Command::new(bin).args(&args).output().expect("replay");
        let b = Command::new(bin).args(&args).output().expect("replay");
        let seed: u64 = args[1].parse().expect("seed");
        let lib =
            run_one(&SafetyConfig { structures: vec![DsKind::List], runs: 20, ..cfg.clone() }, DsKind::List, seed)
                .expect("library replay");
        a.status.code() == Some(1) && a.stdout == b.stdout && a.stdout == lib.log.tail_text(20).into_bytes()
    });
    let ok = out.status.code() == Some(1) && !violating.is_empty() && mismatches == 0 && cli == Some(true);
    (
        ok,
        format!(
            "{} violating runs of {} replayed, {} differ; command-line suite exit {:?}, printed replay reproduces the log tail: {}",
            violating.len(),
            sum.runs,
            mismatches,
            out.status.code(),
            cli.unwrap_or(false)
        ),
    )
}
