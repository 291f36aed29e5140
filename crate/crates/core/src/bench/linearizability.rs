//! Linearizability checking of small histories by search over
//! real-time-consistent orders, memoized on (linearized set, model state).
//!
//! Set histories are split per key and each key is checked on its own, which
//! is sound and complete because a set is a product of independent
//! per-key registers.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Result, SimError};
use crate::history::{Op, OpResult, Operation};

pub const DEFAULT_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spec {
    Set,
    Stack,
}

/// Whether `ops` is linearizable for a set starting with `initial`. Each
/// per-key subhistory must have at most `cap` operations.
pub fn check_set(ops: &[Operation], initial: &[u64], cap: usize) -> Result<bool> {
    let keys: BTreeSet<u64> = ops.iter().filter_map(|o| o.op.key()).collect();
    for k in keys {
        let sub: Vec<Operation> = ops.iter().filter(|o| o.op.key() == Some(k)).cloned().collect();
        if sub.len() > cap {
            return Err(SimError::HistoryTooLong(sub.len()));
        }
        if !search(&sub, Model::Present(initial.contains(&k))) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `ops` is linearizable for a stack holding `initial` (bottom
/// first).
pub fn check_stack(ops: &[Operation], initial: &[u64], cap: usize) -> Result<bool> {
    if ops.len() > cap {
        return Err(SimError::HistoryTooLong(ops.len()));
    }
    Ok(search(ops, Model::Stack(initial.to_vec())))
}

pub fn check_linearizable(spec: Spec, ops: &[Operation], initial: &[u64], cap: usize) -> Result<bool> {
    match spec {
        Spec::Set => check_set(ops, initial, cap),
        Spec::Stack => check_stack(ops, initial, cap),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Model {
    Present(bool),
    Stack(Vec<u64>),
}

impl Model {
    fn apply(&self, op: Op) -> (Model, OpResult) {
        match (self, op) {
            (Model::Present(p), Op::Insert(_)) => (Model::Present(true), OpResult::Bool(!p)),
            (Model::Present(p), Op::Delete(_)) => (Model::Present(false), OpResult::Bool(*p)),
            (Model::Present(p), Op::Contains(_)) => (self.clone(), OpResult::Bool(*p)),
            (Model::Stack(s), Op::Push(k)) => {
                let mut s = s.clone();
                s.push(k);
                (Model::Stack(s), OpResult::Unit)
            }
            (Model::Stack(s), Op::Pop) => {
                let mut s = s.clone();
                let top = s.pop();
                (Model::Stack(s), OpResult::Key(top))
            }
            (Model::Stack(s), Op::Peek) => (self.clone(), OpResult::Key(s.last().copied())),
            (m, op) => panic!("{op:?} does not apply to {m:?}"),
        }
    }
}

/// Depth-first search for a legal order. Pending operations may take effect
/// at any point after their invocation or not at all.
fn search(ops: &[Operation], init: Model) -> bool {
    let n = ops.len();
    let complete: u64 = ops.iter().enumerate().filter(|(_, o)| o.result.is_some()).fold(0, |m, (i, _)| m | 1 << i);
    let mut seen: HashSet<(u64, Model)> = HashSet::new();
    let mut stack = vec![(0u64, init)];
    while let Some((done, model)) = stack.pop() {
        if done & complete == complete {
            return true;
        }
        if !seen.insert((done, model.clone())) {
            continue;
        }
        // An operation can go next only if no other remaining operation
        // responded before it was invoked.
        let horizon = (0..n)
            .filter(|&i| done & (1 << i) == 0 && ops[i].result.is_some())
            .map(|i| ops[i].respond)
            .min()
            .unwrap_or(usize::MAX);
        for (i, o) in ops.iter().enumerate() {
            if done & (1 << i) != 0 || o.invoke > horizon {
                continue;
            }
            let (next, r) = model.apply(o.op);
            if o.result.is_none_or(|want| want == r) {
                stack.push((done | 1 << i, next));
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(tid: usize, op: Op, result: OpResult, invoke: usize, respond: usize) -> Operation {
        Operation { tid, op, result: Some(result), invoke, respond }
    }

    #[test]
    fn sequential_history_is_linearizable() {
        let h = vec![
            op(0, Op::Insert(1), OpResult::Bool(true), 0, 1),
            op(0, Op::Contains(1), OpResult::Bool(true), 2, 3),
            op(0, Op::Delete(1), OpResult::Bool(true), 4, 5),
            op(0, Op::Delete(1), OpResult::Bool(false), 6, 7),
        ];
        assert!(check_set(&h, &[], DEFAULT_CAP).unwrap());
    }

    #[test]
    fn contains_without_insert_is_not() {
        let h = vec![op(0, Op::Contains(3), OpResult::Bool(true), 0, 1)];
        assert!(!check_set(&h, &[], DEFAULT_CAP).unwrap());
        assert!(check_set(&h, &[3], DEFAULT_CAP).unwrap());
    }

    #[test]
    fn overlap_allows_either_order_but_real_time_binds() {
        let overlapping =
            vec![op(0, Op::Insert(1), OpResult::Bool(true), 0, 3), op(1, Op::Contains(1), OpResult::Bool(false), 1, 2)];
        assert!(check_set(&overlapping, &[], DEFAULT_CAP).unwrap());
        let ordered =
            vec![op(0, Op::Insert(1), OpResult::Bool(true), 0, 1), op(1, Op::Contains(1), OpResult::Bool(false), 2, 3)];
        assert!(!check_set(&ordered, &[], DEFAULT_CAP).unwrap());
    }

    #[test]
    fn duplicate_pop_is_caught() {
        let h = vec![
            op(0, Op::Pop, OpResult::Key(Some(2)), 0, 9),
            op(1, Op::Pop, OpResult::Key(Some(2)), 1, 2),
            op(1, Op::Pop, OpResult::Key(Some(1)), 3, 4),
        ];
        assert!(!check_stack(&h, &[1, 2], DEFAULT_CAP).unwrap());
        let fine = vec![op(0, Op::Pop, OpResult::Key(Some(2)), 0, 1), op(1, Op::Pop, OpResult::Key(Some(1)), 0, 2)];
        assert!(check_stack(&fine, &[1, 2], DEFAULT_CAP).unwrap());
    }

    #[test]
    fn pending_operation_is_optional() {
        let mut h = vec![
            Operation { tid: 0, op: Op::Insert(4), result: None, invoke: 0, respond: usize::MAX },
            op(1, Op::Contains(4), OpResult::Bool(true), 1, 2),
        ];
        assert!(check_set(&h, &[], DEFAULT_CAP).unwrap());
        h[1].result = Some(OpResult::Bool(false));
        assert!(check_set(&h, &[], DEFAULT_CAP).unwrap());
    }

    #[test]
    fn cap_is_enforced_per_key() {
        let h: Vec<_> = (0..21)
            .map(|i| op(0, Op::Contains(i % 2), OpResult::Bool(false), 2 * i as usize, 2 * i as usize + 1))
            .collect();
        assert!(check_set(&h, &[], DEFAULT_CAP).unwrap());
        let same: Vec<_> = (0..21).map(|i| op(0, Op::Contains(0), OpResult::Bool(false), 2 * i, 2 * i + 1)).collect();
        assert_eq!(check_set(&same, &[], DEFAULT_CAP), Err(SimError::HistoryTooLong(21)));
    }
}
