use std::fmt;

use serde::Serialize;

/// One shared-memory step of a simulated thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Action {
    Load { addr: u64 },
    Store { addr: u64, value: u64 },
    Cas { addr: u64, expect: u64, new: u64 },
    CRead { addr: u64 },
    CWrite { addr: u64, value: u64 },
    UntagOne { addr: u64 },
    UntagAll,
    Alloc { words: usize },
    Free { addr: u64 },
    Snapshot,
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Load { .. } => "load",
            Action::Store { .. } => "store",
            Action::Cas { .. } => "cas",
            Action::CRead { .. } => "cread",
            Action::CWrite { .. } => "cwrite",
            Action::UntagOne { .. } => "untag_one",
            Action::UntagAll => "untag_all",
            Action::Alloc { .. } => "alloc",
            Action::Free { .. } => "free",
            Action::Snapshot => "snapshot",
        }
    }

    pub fn addr(&self) -> Option<u64> {
        match *self {
            Action::Load { addr }
            | Action::Store { addr, .. }
            | Action::Cas { addr, .. }
            | Action::CRead { addr }
            | Action::CWrite { addr, .. }
            | Action::UntagOne { addr }
            | Action::Free { addr } => Some(addr),
            Action::UntagAll | Action::Alloc { .. } | Action::Snapshot => None,
        }
    }

    pub fn is_conditional(&self) -> bool {
        matches!(self, Action::CRead { .. } | Action::CWrite { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Done,
    Value(u64),
    /// Result of `cas` and `cwrite`.
    Flag(bool),
    /// Result of `cread`; `None` is the failure value.
    Cond(Option<u64>),
    Addr(u64),
}

impl Outcome {
    pub fn value(self) -> u64 {
        match self {
            Outcome::Value(v) | Outcome::Addr(v) | Outcome::Cond(Some(v)) => v,
            _ => 0,
        }
    }

    pub fn flag(self) -> bool {
        matches!(self, Outcome::Flag(true))
    }

    /// Whether a conditional access failed.
    pub fn ca_failed(self) -> bool {
        matches!(self, Outcome::Cond(None) | Outcome::Flag(false))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Done => f.write_str("-"),
            Outcome::Value(v) => write!(f, "={v}"),
            Outcome::Flag(true) => f.write_str("ok"),
            Outcome::Flag(false) => f.write_str("fail"),
            Outcome::Cond(Some(v)) => write!(f, "ok={v}"),
            Outcome::Cond(None) => f.write_str("fail"),
            Outcome::Addr(a) => write!(f, "@{a:#x}"),
        }
    }
}
