//! Per-run counters, the sampled footprint series and their CSV form.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::ca::CaCounters;
use crate::memsys::CoreCounters;
use crate::simcore::Sim;
use crate::smr::SmrKind;
use crate::structures::{DsKind, Structure};

pub const CSV_HEADER: &str =
    "scheme,structure,threads,updates,sample_ops,live_now,ops_done,failed_cread,failed_cwrite,invalidations,l1_miss,cycles_proxy";

/// Counters since the end of the prefill, as of one moment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    pub ops_done: u64,
    pub live_now: u64,
    /// Nodes reachable from the structure's roots.
    pub reachable: u64,
    pub failed_cread: u64,
    pub failed_cwrite: u64,
    pub invalidations: u64,
    pub l1_miss: u64,
    pub cycles_proxy: u64,
}

impl Snapshot {
    pub fn take(sim: &Sim, structure: &Structure) -> Self {
        let m = sim.machine();
        let mem = m.mem_counters();
        let ca = m.ca_counters();
        Snapshot {
            ops_done: sim.completed_ops(),
            live_now: m.alloc_stats().live_now,
            reachable: structure.reachable_nodes(m) as u64,
            failed_cread: ca.failed_creads,
            failed_cwrite: ca.failed_cwrites,
            invalidations: mem.inv_received,
            l1_miss: mem.l1_misses,
            cycles_proxy: mem.cycles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub sample_ops: u64,
    pub at: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricsLog {
    pub scheme: SmrKind,
    pub structure: DsKind,
    pub threads: usize,
    pub update_percent: u32,
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub end: Snapshot,
    /// Attempts beyond the first, summed over operations.
    pub restarts: u64,
    pub steps: u64,
    pub mem: CoreCounters,
    pub ca: CaCounters,
    pub allocated: u64,
    pub freed: u64,
}

impl MetricsLog {
    /// Completed operations per million cycles of the cost model.
    pub fn throughput(&self) -> f64 {
        if self.end.cycles_proxy == 0 {
            return 0.0;
        }
        self.end.ops_done as f64 * 1e6 / self.end.cycles_proxy as f64
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.samples
            .iter()
            .map(|s| CsvRow {
                scheme: self.scheme.to_string(),
                structure: self.structure.to_string(),
                threads: self.threads,
                updates: self.update_percent,
                sample_ops: s.sample_ops,
                live_now: s.at.live_now,
                ops_done: s.at.ops_done,
                failed_cread: s.at.failed_cread,
                failed_cwrite: s.at.failed_cwrite,
                invalidations: s.at.invalidations,
                l1_miss: s.at.l1_miss,
                cycles_proxy: s.at.cycles_proxy,
            })
            .collect()
    }

    /// Human-readable one-paragraph summary.
    pub fn summary(&self) -> String {
        format!(
            "{} on {} ({} threads, {}% updates, seed {}): {} ops in {} steps, throughput {:.1} ops/Mcycle, \
             live {} (reachable {}), allocated {}, freed {}, failed cread {}, failed cwrite {}, restarts {}, \
             L1 hits {}, misses {}, invalidations {}",
            self.scheme,
            self.structure,
            self.threads,
            self.update_percent,
            self.seed,
            self.end.ops_done,
            self.steps,
            self.throughput(),
            self.end.live_now,
            self.end.reachable,
            self.allocated,
            self.freed,
            self.end.failed_cread,
            self.end.failed_cwrite,
            self.restarts,
            self.mem.l1_hits,
            self.mem.l1_misses,
            self.end.invalidations
        )
    }
}

/// One data row of the CSV, fields in column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheme: String,
    pub structure: String,
    pub threads: usize,
    pub updates: u32,
    pub sample_ops: u64,
    pub live_now: u64,
    pub ops_done: u64,
    pub failed_cread: u64,
    pub failed_cwrite: u64,
    pub invalidations: u64,
    pub l1_miss: u64,
    pub cycles_proxy: u64,
}

/// Write `# key=value` metadata lines, the header and every log's rows.
pub fn write_csv<W: Write>(mut w: W, meta: &[(String, String)], logs: &[MetricsLog]) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    cw.write_record(CSV_HEADER.split(','))?;
    for l in logs {
        for row in l.csv_rows() {
            cw.serialize(row)?;
        }
    }
    cw.flush()
}

/// Parse CSV produced by [`write_csv`], skipping the metadata lines.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if header.join(",") != CSV_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    r.deserialize().collect::<Result<_, _>>().map_err(|e| e.to_string())
}
