//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when an oracle reports a violation, 2 for
//! usage, configuration or run errors.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::bench::explore::{explore_program, tiny_programs, ExploreReport};
use crate::bench::footprint::{self, WARMUP_OPS};
use crate::bench::safety::{default_jobs, run_one, run_suite_parallel};
use crate::bench::{check_footprint, run_benchmark, write_csv, BenchConfig, MetricsLog, SafetyConfig, Workload};
use crate::error::SimError;
use crate::memsys::TaggedLinePolicy;
use crate::simcore::MachineConfig;
use crate::smr::{SmrConfig, SmrKind};
use crate::structures::DsKind;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

const LARGE_LOG_THREADS: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "casim", version, about = "Cache-coherence simulator with conditional access")]
pub struct Cli {
    #[command(flatten)]
    pub opts: Opts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One benchmark run; CSV of samples to stdout or --out.
    Bench,
    /// The memory footprint experiment for every reclamation scheme.
    Footprint,
    /// Many short random runs checked by every oracle.
    SafetySuite {
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Count runs that exhaust the step budget instead of failing.
        #[arg(long)]
        allow_truncation: bool,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rerun one seed with the event log kept and print its tail.
    Replay {
        seed: u64,
        /// Replay a bench run instead of a safety-suite run.
        #[arg(long)]
        bench: bool,
        #[arg(long, default_value_t = 20)]
        tail: usize,
        /// Allow keeping the full event log of a bench run with more than
        /// 16 threads.
        #[arg(long)]
        large_log: bool,
    },
    /// Explore every schedule of small two-thread programs.
    Explore {
        /// All fixed programs instead of only the first.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
    },
}

/// Knobs shared by every subcommand. Unset flags fall back to the config
/// file and then to the subcommand's defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// TOML file with `machine`, `smr` and `workload` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ds: Option<DsKind>,
    #[arg(long, global = true)]
    pub smr: Option<SmrKind>,
    /// Successful removes between reclamation attempts.
    #[arg(long, global = true)]
    pub recl_freq: Option<u64>,
    /// Allocations between epoch advance attempts.
    #[arg(long, global = true)]
    pub epoch_freq: Option<u64>,
    /// With --smr none, free retired nodes at once (unsafe on purpose).
    #[arg(long, global = true)]
    pub immediate_free: bool,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Operations per thread.
    #[arg(long, global = true)]
    pub ops: Option<usize>,
    /// Percentage of updates.
    #[arg(long, global = true)]
    pub updates: Option<u32>,
    #[arg(long, global = true)]
    pub key_range: Option<u64>,
    #[arg(long, global = true)]
    pub prefill: Option<u32>,
    #[arg(long, global = true, env = "CASIM_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub sample_every: Option<u64>,
    #[arg(long, global = true)]
    pub max_steps: Option<u64>,
    /// How tagged lines are treated when their L1 set is full.
    #[arg(long, global = true)]
    pub tagged_lines: Option<TaggedLinePolicy>,
    #[arg(long, global = true)]
    pub l1_assoc: Option<usize>,
    #[arg(long, global = true)]
    pub l1_sets: Option<u64>,
}

const FILE_KEYS: [&str; 5] = ["machine", "smr", "workload", "sample_every", "max_steps"];

/// Lay the tables of the TOML file at `path` over `base`, key by key.
fn overlay(base: BenchConfig, path: &Path) -> Result<BenchConfig, SimError> {
    let err = |e: &dyn std::fmt::Display| SimError::Config(format!("{}: {e}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| err(&e))?;
    let file: toml::Table = toml::from_str(&text).map_err(|e| err(&e))?;
    if let Some(k) = file.keys().find(|k| !FILE_KEYS.contains(&k.as_str())) {
        return Err(err(&format!("unknown key '{k}'")));
    }
    let mut merged = toml::Table::try_from(&base).map_err(|e| err(&e))?;
    merge_tables(&mut merged, file);
    toml::Value::Table(merged).try_into().map_err(|e| err(&e))
}

fn merge_tables(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge_tables(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

impl Opts {
    fn machine(&self, base: MachineConfig) -> MachineConfig {
        let mut m = base;
        if let Some(p) = self.tagged_lines {
            m.mem.tagged_lines = p;
        }
        if let Some(a) = self.l1_assoc {
            let sets = m.mem.l1_sets();
            m.mem = m.mem.tiny_l1(a, sets);
        }
        if let Some(s) = self.l1_sets {
            let a = m.mem.l1_assoc;
            m.mem = m.mem.tiny_l1(a, s);
        }
        m
    }

    fn smr(&self, base: SmrConfig) -> SmrConfig {
        SmrConfig {
            kind: self.smr.unwrap_or(base.kind),
            reclaim_freq: self.recl_freq.unwrap_or(base.reclaim_freq),
            epoch_freq: self.epoch_freq.unwrap_or(base.epoch_freq),
            immediate_free: self.immediate_free || base.immediate_free,
        }
    }

    fn workload(&self, base: Workload) -> Workload {
        Workload {
            ds: self.ds.unwrap_or(base.ds),
            threads: self.threads.unwrap_or(base.threads),
            ops_per_thread: self.ops.unwrap_or(base.ops_per_thread),
            update_percent: self.updates.unwrap_or(base.update_percent),
            key_range: self.key_range.or(base.key_range),
            prefill_percent: self.prefill.unwrap_or(base.prefill_percent),
            seed: self.seed.unwrap_or(base.seed),
        }
    }

    /// Benchmark configuration: `base`, then the config file, then flags.
    fn bench(&self, base: BenchConfig) -> Result<BenchConfig, SimError> {
        let base = match &self.config {
            Some(p) => overlay(base, p)?,
            None => base,
        };
        Ok(BenchConfig {
            machine: self.machine(base.machine),
            smr: self.smr(base.smr),
            workload: self.workload(base.workload),
            sample_every: self.sample_every.unwrap_or(base.sample_every),
            max_steps: self.max_steps.unwrap_or(base.max_steps),
            keep_log: base.keep_log,
        })
    }

    fn safety(&self) -> Result<SafetyConfig, SimError> {
        let base = SafetyConfig::default();
        let b = self.bench(BenchConfig {
            machine: base.machine.clone(),
            smr: base.smr,
            workload: base.workload(DsKind::List, 0),
            max_steps: base.max_steps,
            ..BenchConfig::default()
        })?;
        let w = b.workload;
        Ok(SafetyConfig {
            machine: b.machine,
            smr: b.smr,
            structures: self.ds.map_or(base.structures.clone(), |d| vec![d]),
            threads: w.threads,
            key_range: w.key_range.unwrap_or(base.key_range),
            ops_per_thread: w.ops_per_thread,
            update_percent: w.update_percent,
            prefill_percent: w.prefill_percent,
            max_steps: b.max_steps,
            ..base
        })
    }
}

fn metadata(command: &str, cfg: &BenchConfig) -> Vec<(String, String)> {
    let w = &cfg.workload;
    let mem = &cfg.machine.mem;
    [
        ("command", command.to_string()),
        ("ds", w.ds.to_string()),
        ("smr", cfg.smr.kind.to_string()),
        ("recl_freq", cfg.smr.reclaim_freq.to_string()),
        ("epoch_freq", cfg.smr.epoch_freq.to_string()),
        ("immediate_free", cfg.smr.immediate_free.to_string()),
        ("threads", w.threads.to_string()),
        ("ops", w.ops_per_thread.to_string()),
        ("updates", w.update_percent.to_string()),
        ("key_range", w.key_range().to_string()),
        ("prefill", w.prefill_percent.to_string()),
        ("seed", w.seed.to_string()),
        ("sample_every", cfg.sample_every.to_string()),
        ("tagged_lines", policy_name(mem.tagged_lines)),
        ("l1_assoc", mem.l1_assoc.to_string()),
        ("l1_sets", mem.l1_sets().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn policy_name(p: TaggedLinePolicy) -> String {
    p.to_possible_value().expect("no skipped variants").get_name().to_string()
}

/// Flags that reproduce a single run of `cfg`.
fn replay_flags(ds: DsKind, smr: &SmrConfig, machine: &MachineConfig, w: &Workload) -> String {
    let mut s = format!(
        "--ds {ds} --smr {} --recl-freq {} --epoch-freq {} --threads {} --ops {} --updates {} --key-range {} --prefill {} \
         --tagged-lines {} --l1-assoc {} --l1-sets {}",
        smr.kind,
        smr.reclaim_freq,
        smr.epoch_freq,
        w.threads,
        w.ops_per_thread,
        w.update_percent,
        w.key_range(),
        w.prefill_percent,
        policy_name(machine.mem.tagged_lines),
        machine.mem.l1_assoc,
        machine.mem.l1_sets()
    );
    if smr.immediate_free {
        s.push_str(" --immediate-free");
    }
    s
}

fn emit_csv(opts: &Opts, meta: &[(String, String)], logs: &[MetricsLog]) -> io::Result<()> {
    match &opts.out {
        Some(p) => write_csv(io::BufWriter::new(fs::File::create(p)?), meta, logs),
        None => write_csv(io::stdout().lock(), meta, logs),
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprint!("{msg}");
            if !msg.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return EXIT_ERROR;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Bench => {
            let cfg = opts.bench(BenchConfig::default())?;
            let out = run_benchmark(&cfg)?;
            emit_csv(opts, &metadata("bench", &cfg), std::slice::from_ref(&out.metrics))?;
            eprintln!("{}", out.metrics.summary());
            if !out.is_clean() {
                report_violations(&out.violations);
                let w = &cfg.workload;
                eprintln!("violation with seed {}", w.seed);
                eprintln!("replay: casim replay {} --bench {}", w.seed, replay_flags(w.ds, &cfg.smr, &cfg.machine, w));
                return Ok(EXIT_VIOLATION);
            }
            Ok(EXIT_OK)
        }
        Command::Footprint => {
            let cfg = opts.bench(footprint::preset(1))?;
            let outs = footprint::footprint_experiment(&cfg)?;
            let logs: Vec<MetricsLog> = outs.iter().map(|o| o.metrics.clone()).collect();
            emit_csv(opts, &metadata("footprint", &cfg), &logs)?;
            for l in &logs {
                eprintln!("{}", l.summary());
            }
            let check = check_footprint(&logs, WARMUP_OPS);
            eprintln!("footprint bounds: {check:?}");
            let mut code = EXIT_OK;
            for o in outs.iter().filter(|o| !o.is_clean()) {
                report_violations(&o.violations);
                let w = &cfg.workload;
                let smr = SmrConfig { kind: o.metrics.scheme, ..cfg.smr };
                eprintln!("violation with seed {}", w.seed);
                eprintln!("replay: casim replay {} --bench {}", w.seed, replay_flags(w.ds, &smr, &cfg.machine, w));
                code = EXIT_VIOLATION;
            }
            Ok(code)
        }
        Command::SafetySuite { runs, first_seed, allow_truncation, jobs } => {
            let cfg = SafetyConfig {
                runs: *runs,
                first_seed: *first_seed,
                allow_truncation: *allow_truncation,
                ..opts.safety()?
            };
            let sum = run_suite_parallel(&cfg, jobs.unwrap_or_else(default_jobs))?;
            eprintln!("{}", sum.describe());
            if sum.is_clean() {
                return Ok(EXIT_OK);
            }
            if let Some((ds, seed)) = sum.first_violation.or(sum.first_inconsistent) {
                let w = cfg.workload(ds, seed);
                eprintln!("first failing run: {ds} with seed {seed}");
                eprintln!("replay: casim replay {seed} {}", replay_flags(ds, &cfg.smr, &cfg.machine, &w));
            }
            Ok(EXIT_VIOLATION)
        }
        Command::Replay { seed, bench, tail, large_log } => {
            if *bench {
                let mut cfg = opts.bench(BenchConfig { keep_log: true, ..BenchConfig::default() })?;
                cfg.workload.seed = *seed;
                if cfg.workload.threads > LARGE_LOG_THREADS && !large_log {
                    let msg =
                        format!("logging every action of more than {LARGE_LOG_THREADS} threads needs --large-log");
                    return Err(SimError::Config(msg).into());
                }
                let out = run_benchmark(&cfg)?;
                print!("{}", out.log.tail_text(*tail));
                eprintln!("{}", out.metrics.summary());
                report_violations(&out.violations);
                return Ok(if out.is_clean() { EXIT_OK } else { EXIT_VIOLATION });
            }
            let cfg = SafetyConfig { allow_truncation: true, ..opts.safety()? };
            let ds = opts.ds.unwrap_or(DsKind::List);
            let r = run_one(&cfg, ds, *seed)?;
            print!("{}", r.log.tail_text(*tail));
            eprintln!("{ds} seed {seed}: {:?} after {} log records", r.status, r.log.records.len());
            report_violations(&r.violations);
            let clean = r.violations.is_empty() && r.consistent != Some(false) && r.audit.spurious_successes.is_empty();
            Ok(if clean { EXIT_OK } else { EXIT_VIOLATION })
        }
        Command::Explore { exhaustive, max_steps } => {
            let cfg = opts.bench(BenchConfig::default())?;
            let ds = cfg.workload.ds;
            let programs = tiny_programs(ds);
            let n = if *exhaustive { programs.len() } else { 1 };
            let mut total = ExploreReport::default();
            for (i, p) in programs.iter().take(n).enumerate() {
                let rep = explore_program(ds, cfg.smr, &cfg.machine, p, *max_steps)?;
                eprintln!(
                    "program {i}: {} states, {} leaves, {} distinct histories, {} non-linearizable, {} with violations",
                    rep.states, rep.leaves, rep.distinct_histories, rep.non_linearizable, rep.violating_leaves
                );
                total.merge(&rep);
            }
            if let Some(f) = &total.first_failure {
                eprintln!("first failing history: {f}");
            }
            Ok(if total.is_clean() { EXIT_OK } else { EXIT_VIOLATION })
        }
    }
}

fn report_violations(v: &[crate::heap::Violation]) {
    for x in v.iter().take(5) {
        eprintln!("violation: {x:?}");
    }
    if v.len() > 5 {
        eprintln!("... and {} more", v.len() - 5);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("casim").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli =
            parse(&["bench", "--smr", "hp", "--threads", "8", "--recl-freq", "5", "--l1-assoc", "2", "--l1-sets", "4"]);
        let cfg = cli.opts.bench(BenchConfig::default()).unwrap();
        assert_eq!(cfg.smr.kind, SmrKind::Hp);
        assert_eq!(cfg.smr.reclaim_freq, 5);
        assert_eq!(cfg.smr.epoch_freq, 150);
        assert_eq!(cfg.workload.threads, 8);
        assert_eq!((cfg.machine.mem.l1_assoc, cfg.machine.mem.l1_sets()), (2, 4));
    }

    #[test]
    fn flags_win_over_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[smr]\nkind = \"qsbr\"\nepoch_freq = 7\n[workload]\nthreads = 6\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["bench", "--config", p, "--threads", "2"]).opts.bench(BenchConfig::default()).unwrap();
        assert_eq!((cfg.smr.kind, cfg.smr.epoch_freq, cfg.workload.threads), (SmrKind::Qsbr, 7, 2));
        let fp = parse(&["footprint", "--config", p]).opts.bench(footprint::preset(1)).unwrap();
        assert_eq!((fp.workload.threads, fp.workload.ops_per_thread, fp.smr.reclaim_freq), (6, 5000, 30));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        for bad in ["[smr]\nfrequency = 3\n", "threads = 3\n", "[machine.mem]\nways = 2\n"] {
            fs::write(&path, bad).unwrap();
            let opts = Opts { config: Some(path.clone()), ..Opts::default() };
            assert!(matches!(opts.bench(BenchConfig::default()), Err(SimError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert_eq!(run(["casim", "bench", "--smr", "bogus"]), EXIT_ERROR);
        assert_eq!(run(["casim", "bench", "--no-such-flag"]), EXIT_ERROR);
        assert_eq!(run(["casim", "--help"]), EXIT_OK);
    }

    #[test]
    fn big_logged_replays_need_a_flag() {
        assert_eq!(run(["casim", "replay", "1", "--bench", "--threads", "17", "--ops", "10"]), EXIT_ERROR);
        assert_eq!(run(["casim", "replay", "1", "--bench", "--threads", "17", "--ops", "10", "--large-log"]), EXIT_OK);
    }

    #[test]
    fn safety_defaults() {
        let cfg = parse(&["safety-suite"]).opts.safety().unwrap();
        assert_eq!((cfg.threads, cfg.key_range, cfg.ops_per_thread), (3, 16, 30));
        assert_eq!(cfg.structures, DsKind::ALL.to_vec());
        let one = parse(&["safety-suite", "--ds", "stack", "--key-range", "8"]).opts.safety().unwrap();
        assert_eq!((one.structures, one.key_range), (vec![DsKind::Stack], 8));
    }
}
