//! Memory footprint over time for each reclamation scheme on one workload.

use super::metrics::MetricsLog;
use super::runner::{run_benchmark, BenchConfig, BenchOutcome};
use super::workload::Workload;
use crate::error::Result;
use crate::smr::{SmrConfig, SmrKind};
use crate::structures::DsKind;

/// Samples taken before this many completed operations are warmup.
pub const WARMUP_OPS: u64 = 2000;

/// The preset: a list over keys `0..1000` prefilled to half, 16 threads of
/// 5000 updates each, half inserts and half deletes.
pub fn preset(seed: u64) -> BenchConfig {
    BenchConfig {
        workload: Workload {
            ds: DsKind::List,
            threads: 16,
            ops_per_thread: 5000,
            update_percent: 100,
            key_range: Some(1000),
            prefill_percent: 50,
            seed,
        },
        ..BenchConfig::default()
    }
}

/// Run `base` once per scheme, keeping its frequencies.
pub fn footprint_experiment(base: &BenchConfig) -> Result<Vec<BenchOutcome>> {
    SmrKind::ALL
        .into_iter()
        .map(|kind| {
            let immediate_free = base.smr.immediate_free && kind == SmrKind::None;
            let cfg = BenchConfig { smr: SmrConfig { kind, immediate_free, ..base.smr }, ..base.clone() };
            run_benchmark(&cfg)
        })
        .collect()
}

/// Verdicts on the series of a footprint experiment. Each field is `Ok` or
/// the first offending sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintCheck {
    pub ca_tracks_reachable: Result<(), String>,
    pub qsbr_exceeds_ca: Result<(), String>,
    pub hp_exceeds_ca: Result<(), String>,
    pub none_non_decreasing: Result<(), String>,
}

impl FootprintCheck {
    pub fn all_ok(&self) -> bool {
        self.ca_tracks_reachable.is_ok()
            && self.qsbr_exceeds_ca.is_ok()
            && self.hp_exceeds_ca.is_ok()
            && self.none_non_decreasing.is_ok()
    }
}

fn series(logs: &[MetricsLog], kind: SmrKind) -> Result<&MetricsLog, String> {
    logs.iter().find(|l| l.scheme == kind).ok_or_else(|| format!("no {kind} series"))
}

fn exceeds(logs: &[MetricsLog], kind: SmrKind, warmup: u64) -> Result<(), String> {
    let ca = series(logs, SmrKind::Ca)?;
    let other = series(logs, kind)?;
    let mut compared = 0;
    for (a, b) in ca.samples.iter().zip(&other.samples) {
        if a.sample_ops < warmup {
            continue;
        }
        compared += 1;
        if b.at.live_now <= a.at.live_now {
            return Err(format!("at {} ops {kind} has {} live, ca has {}", a.sample_ops, b.at.live_now, a.at.live_now));
        }
    }
    if compared == 0 {
        return Err("no post-warmup samples".into());
    }
    Ok(())
}

pub fn check_footprint(logs: &[MetricsLog], warmup: u64) -> FootprintCheck {
    let ca_tracks_reachable = series(logs, SmrKind::Ca).and_then(|ca| {
        let slack = ca.threads as u64;
        for s in &ca.samples {
            let (live, reach) = (s.at.live_now, s.at.reachable);
            if live < reach || live > reach + slack {
                return Err(format!("at {} ops live {live} outside [{reach}, {}]", s.sample_ops, reach + slack));
            }
        }
        if ca.samples.is_empty() {
            return Err("no samples".into());
        }
        Ok(())
    });
    let none_non_decreasing = series(logs, SmrKind::None).and_then(|n| {
        for w in n.samples.windows(2) {
            if w[1].at.live_now < w[0].at.live_now {
                return Err(format!(
                    "drops from {} to {} at {} ops",
                    w[0].at.live_now, w[1].at.live_now, w[1].sample_ops
                ));
            }
        }
        Ok(())
    });
    FootprintCheck {
        ca_tracks_reachable,
        qsbr_exceeds_ca: exceeds(logs, SmrKind::Qsbr, warmup),
        hp_exceeds_ca: exceeds(logs, SmrKind::Hp, warmup),
        none_non_decreasing,
    }
}
