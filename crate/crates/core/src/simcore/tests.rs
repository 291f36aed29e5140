use std::cell::Cell;
use std::collections::HashSet;

use super::*;
use crate::heap::BlockKind;

fn machine(cores: usize) -> (Machine, u64) {
    let mut m = Machine::with_cores(cores);
    let a = m.setup_alloc(BlockKind::Meta).unwrap();
    (m, a)
}

/// `n` threads each storing `k` times to its own word.
fn writers(n: usize, k: usize) -> impl FnMut() -> Result<Sim> {
    move || {
        let (m, a) = machine(n);
        let progs = (0..n)
            .map(|t| {
                thread(move |ctx| async move {
                    for i in 0..k {
                        ctx.store(a + 8 * t as u64, i as u64).await;
                    }
                })
            })
            .collect();
        Sim::new(m, progs, LogMode::Full)
    }
}

#[test]
fn single_thread_store_then_load() {
    let (m, a) = machine(1);
    let seen = Rc::new(Cell::new(0));
    let s = seen.clone();
    let progs = vec![thread(move |ctx| async move {
        ctx.store(a, 1).await;
        s.set(ctx.load(a).await);
    })];
    let rep = run(m, progs, &Schedule::round_robin(), LogMode::Full).unwrap();
    assert_eq!(rep.status, RunStatus::Completed);
    assert_eq!(rep.log.len(), 2);
    assert_eq!(seen.get(), 1);
    assert_eq!(rep.log.records[1].outcome, Outcome::Value(1));
}

#[test]
fn same_seed_same_log() {
    let text = |seed| {
        let mut f = writers(3, 5);
        let mut sim = f().unwrap();
        sim.run(&Schedule::random(seed)).unwrap();
        sim.log().to_text()
    };
    assert_eq!(text(42), text(42));
    assert_ne!(text(42), text(43));
}

fn interleavings(n: usize, k: usize) -> Vec<Vec<usize>> {
    enumerate_schedules(writers(n, k), 1000, 1_000_000)
        .map(|l| l.unwrap().records.iter().map(|r| r.tid).collect())
        .collect()
}

/// Count interleavings of `n` threads with `k` steps each by brute force
/// over all thread-id sequences.
fn brute_force(n: usize, k: usize) -> usize {
    let len = n * k;
    (0..n.pow(len as u32))
        .filter(|&mut_code| {
            let mut code = mut_code;
            let mut counts = vec![0; n];
            for _ in 0..len {
                counts[code % n] += 1;
                code /= n;
            }
            counts.iter().all(|&c| c == k)
        })
        .count()
}

#[test]
fn exhaustive_counts() {
    for (n, k, expect) in [(2, 1, 2), (2, 2, 6), (3, 1, 6), (2, 3, 20)] {
        let seqs = interleavings(n, k);
        assert_eq!(seqs.len(), expect, "{n} threads x {k}");
        assert_eq!(seqs.len(), brute_force(n, k));
        let distinct: HashSet<_> = seqs.iter().collect();
        assert_eq!(distinct.len(), seqs.len());
    }
}

#[test]
fn enumeration_cap() {
    let r: Result<Vec<_>> = enumerate_schedules(writers(2, 3), 1000, 5).collect();
    assert_eq!(r.unwrap_err(), SimError::EnumerationCapExceeded(5));
}

#[test]
fn racing_cas_exactly_one_wins() {
    let factory = || {
        let (m, a) = machine(2);
        let progs = (0..2)
            .map(|_| {
                thread(move |ctx| async move {
                    ctx.cas(a, 0, 1).await;
                })
            })
            .collect();
        Sim::new(m, progs, LogMode::Full)
    };
    let mut n = 0;
    for log in enumerate_schedules(factory, 100, 100) {
        let wins = log.unwrap().records.iter().filter(|r| r.outcome == Outcome::Flag(true)).count();
        assert_eq!(wins, 1);
        n += 1;
    }
    assert_eq!(n, 2);
}

#[test]
fn random_policy_is_fair() {
    let mut first = [0u32; 2];
    for seed in 0..10_000 {
        let mut f = writers(2, 1);
        let mut sim = f().unwrap();
        sim.run(&Schedule::random(seed)).unwrap();
        first[sim.log().records[0].tid] += 1;
    }
    for c in first {
        let frac = c as f64 / 10_000.0;
        assert!((0.45..=0.55).contains(&frac), "{first:?}");
    }
}

#[test]
fn round_robin_alternates() {
    let mut f = writers(3, 2);
    let mut sim = f().unwrap();
    sim.run(&Schedule::round_robin()).unwrap();
    let tids: Vec<_> = sim.log().records.iter().map(|r| r.tid).collect();
    assert_eq!(tids, vec![0, 1, 2, 0, 1, 2]);
}

#[test]
fn explicit_segments_then_round_robin() {
    let mut f = writers(2, 3);
    let mut sim = f().unwrap();
    let s = Schedule::explicit(vec![Segment::Steps { tid: 1, n: 2 }, Segment::Steps { tid: 0, n: 1 }]);
    sim.run(&s).unwrap();
    let tids: Vec<_> = sim.log().records.iter().map(|r| r.tid).collect();
    assert_eq!(tids, vec![1, 1, 0, 1, 0, 0]);
}

#[test]
fn budget_exhaustion_reported() {
    let (m, a) = machine(1);
    let progs = vec![thread(move |ctx| async move {
        loop {
            ctx.load(a).await;
        }
    })];
    let rep = run(m, progs, &Schedule::round_robin().with_max_steps(50), LogMode::Off).unwrap();
    assert_eq!(rep.status, RunStatus::BudgetExhausted);
    assert!(matches!(rep.completed(), Err(SimError::StepBudgetExhausted(50))));
}

#[test]
fn panic_carries_step() {
    let (m, a) = machine(1);
    let progs = vec![thread(move |ctx| async move {
        ctx.load(a).await;
        ctx.load(a).await;
        panic!("boom");
    })];
    match run(m, progs, &Schedule::round_robin(), LogMode::Off) {
        Err(SimError::ThreadPanic { tid: 0, step: 2, message }) => assert_eq!(message, "boom"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("panic was swallowed"),
    }
}

#[test]
fn log_is_dense_and_renders() {
    let mut f = writers(2, 2);
    let mut sim = f().unwrap();
    sim.run(&Schedule::random(1)).unwrap();
    assert!(sim.log().is_dense());
    let text = sim.log().to_text();
    assert!(text.starts_with(LOG_HEADER));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn markers_record_history() {
    let (m, a) = machine(1);
    let progs = vec![thread(move |ctx| async move {
        ctx.begin_op(Op::Insert(3));
        ctx.store(a, 3).await;
        ctx.end_op(OpResult::Bool(true));
    })];
    let rep = run(m, progs, &Schedule::round_robin(), LogMode::Off).unwrap();
    let ops = rep.history.operations();
    assert_eq!(ops.len(), 1);
    assert_eq!(ops[0].result, Some(OpResult::Bool(true)));
}

#[test]
fn state_exploration_merges_commuting_writes() {
    let mut finals = HashSet::new();
    let stats = explore_states(writers(2, 3), 1000, |sim| {
        finals.insert((sim.machine().peek(64), sim.machine().peek(72)));
        Ok(())
    })
    .unwrap();
    assert_eq!(finals, HashSet::from([(2, 2)]));
    assert!(stats.states < 20 * 6, "{stats:?}");
    assert!(stats.merged > 0);
}
