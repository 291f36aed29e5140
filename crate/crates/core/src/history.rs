//! Operation invocation/response records collected while simulated threads run.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Op {
    Insert(u64),
    Delete(u64),
    Contains(u64),
    Push(u64),
    Pop,
    Peek,
}

impl Op {
    pub fn key(self) -> Option<u64> {
        match self {
            Op::Insert(k) | Op::Delete(k) | Op::Contains(k) | Op::Push(k) => Some(k),
            Op::Pop | Op::Peek => None,
        }
    }

    pub fn is_update(self) -> bool {
        !matches!(self, Op::Contains(_) | Op::Peek)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Insert(k) => write!(f, "insert({k})"),
            Op::Delete(k) => write!(f, "delete({k})"),
            Op::Contains(k) => write!(f, "contains({k})"),
            Op::Push(k) => write!(f, "push({k})"),
            Op::Pop => f.write_str("pop()"),
            Op::Peek => f.write_str("peek()"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum OpResult {
    Bool(bool),
    Key(Option<u64>),
    Unit,
}

impl fmt::Display for OpResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpResult::Bool(b) => write!(f, "{b}"),
            OpResult::Key(Some(k)) => write!(f, "{k}"),
            OpResult::Key(None) => f.write_str("empty"),
            OpResult::Unit => f.write_str("()"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum HistEvent {
    Invoke { tid: usize, op: Op, step: u64 },
    Respond { tid: usize, result: OpResult, step: u64 },
}

/// One operation with the positions of its invocation and response in the
/// event sequence. Pending operations have `respond == usize::MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operation {
    pub tid: usize,
    pub op: Op,
    pub result: Option<OpResult>,
    pub invoke: usize,
    pub respond: usize,
}

impl Operation {
    pub fn is_complete(&self) -> bool {
        self.result.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    events: Vec<HistEvent>,
    completed: u64,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invoke(&mut self, tid: usize, op: Op, step: u64) {
        self.events.push(HistEvent::Invoke { tid, op, step });
    }

    pub fn respond(&mut self, tid: usize, result: OpResult, step: u64) {
        self.events.push(HistEvent::Respond { tid, result, step });
        self.completed += 1;
    }

    pub fn events(&self) -> &[HistEvent] {
        &self.events
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn operations(&self) -> Vec<Operation> {
        let mut ops: Vec<Operation> = Vec::new();
        let mut open: Vec<Option<usize>> = Vec::new();
        for (i, e) in self.events.iter().enumerate() {
            match *e {
                HistEvent::Invoke { tid, op, .. } => {
                    if open.len() <= tid {
                        open.resize(tid + 1, None);
                    }
                    open[tid] = Some(ops.len());
                    ops.push(Operation { tid, op, result: None, invoke: i, respond: usize::MAX });
                }
                HistEvent::Respond { tid, result, .. } => {
                    if let Some(j) = open.get_mut(tid).and_then(Option::take) {
                        ops[j].result = Some(result);
                        ops[j].respond = i;
                    }
                }
            }
        }
        ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_invocations_with_responses() {
        let mut h = History::new();
        h.invoke(0, Op::Insert(1), 0);
        h.invoke(1, Op::Contains(1), 1);
        h.respond(0, OpResult::Bool(true), 2);
        h.invoke(0, Op::Delete(1), 3);
        h.respond(1, OpResult::Bool(false), 4);
        let ops = h.operations();
        assert_eq!(ops.len(), 3);
        assert_eq!((ops[0].invoke, ops[0].respond), (0, 2));
        assert_eq!((ops[1].invoke, ops[1].respond), (1, 4));
        assert!(!ops[2].is_complete());
        assert_eq!(h.completed(), 2);
    }
}
