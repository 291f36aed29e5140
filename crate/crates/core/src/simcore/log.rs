use std::fmt::Write as _;

use smallvec::SmallVec;

use super::action::{Action, Outcome};
use crate::memsys::Msg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogMode {
    #[default]
    Full,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub step: u64,
    pub tid: usize,
    pub core: usize,
    pub action: Action,
    pub outcome: Outcome,
    pub msgs: SmallVec<[Msg; 2]>,
}

impl LogRecord {
    pub fn write_line(&self, out: &mut String) {
        let _ = write!(out, "{},{},{},", self.step, self.tid, self.action.kind());
        match self.action {
            Action::Alloc { .. } => {
                let _ = write!(out, "{:#x}", self.outcome.value());
            }
            a => match a.addr() {
                Some(addr) => {
                    let _ = write!(out, "{addr:#x}");
                }
                None => out.push('-'),
            },
        }
        let _ = write!(out, ",{},", self.outcome);
        for (i, m) in self.msgs.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{m}");
        }
        out.push('\n');
    }
}

pub const LOG_HEADER: &str = "step,tid,kind,addr,outcome,msgs";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Line-oriented text form, one record per line after a header.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            r.write_line(&mut s);
        }
        s
    }

    /// The last `n` records as text, without header.
    pub fn tail_text(&self, n: usize) -> String {
        let mut s = String::new();
        for r in &self.records[self.records.len().saturating_sub(n)..] {
            r.write_line(&mut s);
        }
        s
    }

    /// Steps increase by exactly one from record to record.
    pub fn is_dense(&self) -> bool {
        self.records.windows(2).all(|w| w[1].step == w[0].step + 1)
    }
}
