//! Post-hoc checks of conditional-access behavior, reconstructed from an
//! event log alone.
//!
//! For each core the audit replays tags (successful `cread`s) and untags, and
//! records the first write by another core to a tagged line since the last
//! `untag_all`. A conditional access that succeeds after such a write is a
//! spurious success; one that fails without such a write is an orphan
//! failure.

use smallvec::SmallVec;

use crate::memsys::LineId;
use crate::simcore::{Action, EventLog, LogRecord, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditConfig {
    pub line_bytes: u64,
    pub block_bytes: u64,
    pub poison_on_free: bool,
}

/// A remote write that revoked access, as seen by the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Revocation {
    pub step: u64,
    pub writer_core: usize,
    pub line: LineId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Finding {
    pub step: u64,
    pub core: usize,
    pub revocation: Option<Revocation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub successes: u64,
    pub failures: u64,
    /// Failures explained by a remote write inside the tag window.
    pub witnessed_failures: u64,
    pub spurious_successes: Vec<Finding>,
    pub orphan_failures: Vec<Finding>,
    /// Failed conditional accesses whose record carries coherence messages.
    pub noisy_failures: Vec<u64>,
    /// Successful `cwrite`s to a line not tagged at that moment.
    pub untagged_writes: Vec<u64>,
}

impl AuditReport {
    pub fn merge(&mut self, o: &AuditReport) {
        self.successes += o.successes;
        self.failures += o.failures;
        self.witnessed_failures += o.witnessed_failures;
        self.spurious_successes.extend_from_slice(&o.spurious_successes);
        self.orphan_failures.extend_from_slice(&o.orphan_failures);
        self.noisy_failures.extend_from_slice(&o.noisy_failures);
        self.untagged_writes.extend_from_slice(&o.untagged_writes);
    }
}

#[derive(Default, Clone)]
struct CoreView {
    tags: SmallVec<[LineId; 8]>,
    revoked: Option<Revocation>,
}

fn written_lines(r: &LogRecord, cfg: &AuditConfig) -> SmallVec<[LineId; 2]> {
    let line = |a: u64| a / cfg.line_bytes;
    let block = |a: u64| (line(a)..=line(a + cfg.block_bytes - 1)).collect();
    match (r.action, r.outcome) {
        (Action::Store { addr, .. }, _) => smallvec::smallvec![line(addr)],
        (Action::Cas { addr, .. }, Outcome::Flag(true)) => smallvec::smallvec![line(addr)],
        (Action::CWrite { addr, .. }, Outcome::Flag(true)) => smallvec::smallvec![line(addr)],
        (Action::Alloc { .. }, Outcome::Addr(a)) => block(a),
        (Action::Free { addr }, _) if cfg.poison_on_free => block(addr),
        _ => SmallVec::new(),
    }
}

pub fn audit(log: &EventLog, cfg: &AuditConfig) -> AuditReport {
    let mut rep = AuditReport::default();
    let mut cores: Vec<CoreView> = Vec::new();
    for r in &log.records {
        if cores.len() <= r.core {
            cores.resize(r.core + 1, CoreView::default());
        }
        match (r.action, r.outcome) {
            (Action::CRead { addr }, Outcome::Cond(v)) => {
                let line = addr / cfg.line_bytes;
                let view = &mut cores[r.core];
                if v.is_some() {
                    rep.successes += 1;
                    if let Some(rv) = view.revoked {
                        rep.spurious_successes.push(Finding { step: r.step, core: r.core, revocation: Some(rv) });
                    }
                    if !view.tags.contains(&line) {
                        view.tags.push(line);
                    }
                } else {
                    record_failure(&mut rep, view, r);
                }
            }
            (Action::CWrite { addr, .. }, Outcome::Flag(ok)) => {
                let line = addr / cfg.line_bytes;
                let view = &mut cores[r.core];
                if ok {
                    rep.successes += 1;
                    if let Some(rv) = view.revoked {
                        rep.spurious_successes.push(Finding { step: r.step, core: r.core, revocation: Some(rv) });
                    }
                    if !view.tags.contains(&line) {
                        rep.untagged_writes.push(r.step);
                    }
                } else {
                    record_failure(&mut rep, view, r);
                }
            }
            (Action::UntagOne { addr }, _) => {
                let line = addr / cfg.line_bytes;
                cores[r.core].tags.retain(|l| *l != line);
            }
            (Action::UntagAll, _) => {
                cores[r.core] = CoreView::default();
            }
            _ => {}
        }
        for line in written_lines(r, cfg) {
            for (c, view) in cores.iter_mut().enumerate() {
                if c != r.core && view.revoked.is_none() && view.tags.contains(&line) {
                    view.revoked = Some(Revocation { step: r.step, writer_core: r.core, line });
                }
            }
        }
    }
    rep
}

fn record_failure(rep: &mut AuditReport, view: &CoreView, r: &LogRecord) {
    rep.failures += 1;
    if !r.msgs.is_empty() {
        rep.noisy_failures.push(r.step);
    }
    match view.revoked {
        Some(_) => rep.witnessed_failures += 1,
        None => rep.orphan_failures.push(Finding { step: r.step, core: r.core, revocation: None }),
    }
}
