use super::*;

fn sys(cores: usize) -> MemSystem {
    let cfg = MemConfig { check_invariants: true, ..MemConfig::with_cores(cores) };
    MemSystem::new(cfg).unwrap()
}

fn inv_count(m: &mut MemSystem) -> usize {
    m.take_msgs().filter(|x| x.kind == MsgKind::Inv).count()
}

#[test]
fn fresh_load_is_zero_and_misses() {
    let mut m = sys(2);
    assert_eq!(m.load(0, 0x100), 0);
    assert_eq!(m.counters(0).l1_misses, 1);
    assert_eq!(m.counters(0).mem_fetches, 1);
}

#[test]
fn store_then_load_hits() {
    let mut m = sys(2);
    m.store(0, 0x100, 5);
    assert_eq!(m.load(0, 0x100), 5);
    assert_eq!(m.counters(0).l1_hits, 1);
}

#[test]
fn remote_load_downgrades_owner() {
    let mut m = sys(2);
    m.store(0, 0x100, 5);
    let line = m.line_of(0x100);
    assert_eq!(m.state(0, line), Some(Msi::Modified));
    assert_eq!(m.load(1, 0x100), 5);
    assert_eq!(m.state(0, line), Some(Msi::Shared));
    assert_eq!(m.state(1, line), Some(Msi::Shared));
    assert_eq!(m.sharers(line), 0b11);
    assert_eq!(m.owner(line), None);
}

#[test]
fn sole_sharer_upgrade_sends_no_invalidation() {
    let mut m = sys(2);
    m.load(0, 0x40);
    m.clear_msgs();
    m.store(0, 0x40, 1);
    assert_eq!(inv_count(&mut m), 0);
    assert_eq!(m.counters(0).upgrades, 1);
    assert_eq!(m.state(0, 1), Some(Msi::Modified));
}

#[test]
fn store_invalidates_every_other_sharer() {
    let mut m = sys(3);
    for c in 0..3 {
        m.load(c, 0x40);
    }
    m.clear_msgs();
    m.store(0, 0x40, 9);
    assert_eq!(inv_count(&mut m), 2);
    assert_eq!(m.state(1, 1), None);
    assert_eq!(m.state(2, 1), None);
    assert_eq!(m.sharers(1), 0b001);
}

#[test]
fn modified_shared_modified_cycle_reinvalidates() {
    let mut m = sys(2);
    m.store(0, 0x40, 1);
    m.clear_msgs();
    m.load(1, 0x40);
    m.clear_msgs();
    m.store(0, 0x40, 2);
    assert_eq!(inv_count(&mut m), 1);
    assert_eq!(m.load(1, 0x40), 2);
}

#[test]
fn cas_semantics() {
    let mut m = sys(1);
    m.store(0, 8, 3);
    assert!(m.cas(0, 8, 3, 7));
    assert_eq!(m.peek(8), 7);
    assert!(!m.cas(0, 8, 4, 9));
    assert_eq!(m.peek(8), 7);
}

#[test]
fn failed_cas_does_not_invalidate() {
    let mut m = sys(2);
    m.load(1, 8);
    m.clear_msgs();
    assert!(!m.cas(0, 8, 1, 2));
    assert_eq!(inv_count(&mut m), 0);
    assert_eq!(m.state(1, 0), Some(Msi::Shared));
}

/// Reference MSI transition table: per-core state after `op` by `core`.
fn reference(states: [Option<Msi>; 3], core: usize, write: bool) -> [Option<Msi>; 3] {
    let mut out = states;
    if write {
        for (c, s) in out.iter_mut().enumerate() {
            *s = if c == core { Some(Msi::Modified) } else { None };
        }
    } else if states[core].is_none() {
        for s in out.iter_mut() {
            if *s == Some(Msi::Modified) {
                *s = Some(Msi::Shared);
            }
        }
        out[core] = Some(Msi::Shared);
    }
    out
}

/// Every legal 3-core configuration of one line.
fn configurations() -> Vec<[Option<Msi>; 3]> {
    let mut v = Vec::new();
    for mask in 0u8..8 {
        let cfg: [Option<Msi>; 3] = std::array::from_fn(|c| (mask & (1 << c) != 0).then_some(Msi::Shared));
        v.push(cfg);
    }
    for owner in 0..3 {
        v.push(std::array::from_fn(|c| (c == owner).then_some(Msi::Modified)));
    }
    v
}

fn build(cfg: [Option<Msi>; 3]) -> MemSystem {
    let mut m = sys(3);
    if let Some(o) = (0..3).find(|&c| cfg[c] == Some(Msi::Modified)) {
        m.store(o, 0x40, 11);
        return m;
    }
    m.store(0, 0x40, 11);
    let stride = m.config().line_bytes * m.config().l1_sets();
    for k in 1..=4 {
        m.load(0, 0x40 + k * stride);
    }
    for c in (0..3).filter(|&c| cfg[c].is_some()) {
        m.load(c, 0x40);
    }
    m
}

fn observed(m: &MemSystem) -> [Option<Msi>; 3] {
    std::array::from_fn(|c| m.state(c, 1))
}

#[test]
fn matches_reference_msi_table() {
    let mut checked = 0;
    for cfg in configurations() {
        for core in 0..3 {
            for write in [false, true] {
                let mut m = build(cfg);
                assert_eq!(observed(&m), cfg, "setup for {cfg:?}");
                let expect = reference(cfg, core, write);
                if write {
                    m.store(core, 0x40, 99);
                } else {
                    assert_eq!(m.load(core, 0x40), 11);
                }
                assert_eq!(observed(&m), expect, "{cfg:?} core {core} write {write}");
                m.check_invariants().unwrap();
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 11 * 6);
}

#[test]
fn lru_evicts_oldest_untagged() {
    let cfg = MemConfig::with_cores(1).tiny_l1(2, 4);
    let mut m = MemSystem::new(cfg).unwrap();
    let stride = 64 * 4;
    let (a, b, c) = (0, stride, 2 * stride);
    m.load(0, a);
    m.load(0, b);
    m.load(0, c);
    assert_eq!(m.set_lines(0, 0), vec![c / 64, b / 64]);
}

#[test]
fn pin_mode_skips_tagged_then_refuses() {
    let cfg = MemConfig { tagged_lines: TaggedLinePolicy::Pin, ..MemConfig::with_cores(1).tiny_l1(2, 4) };
    let mut m = MemSystem::new(cfg).unwrap();
    let stride = 64 * 4;
    let (a, b, c, d) = (0, stride, 2 * stride, 3 * stride);
    m.load_and_tag(0, a).unwrap();
    m.load(0, b);
    // A is LRU but tagged, so B goes.
    assert_eq!(m.victim(0, 0), Some(b / 64));
    m.load_and_tag(0, c).unwrap();
    assert_eq!(m.set_lines(0, 0), vec![c / 64, a / 64]);
    m.clear_msgs();
    assert_eq!(m.victim(0, 0), None);
    assert_eq!(m.load_and_tag(0, d), Err(CapacityFailure));
    assert!(m.pending_msgs().is_empty());
    // Plain accesses bypass.
    m.store(0, d, 4);
    assert_eq!(m.load(0, d), 4);
    assert_eq!(m.counters(0).bypasses, 2);
    m.check_invariants().unwrap();
}

#[test]
fn evict_mode_reports_tagged_eviction() {
    let cfg = MemConfig::with_cores(1).tiny_l1(2, 4);
    let mut m = MemSystem::new(cfg).unwrap();
    let stride = 64 * 4;
    m.load_and_tag(0, 0).unwrap();
    m.load(0, stride);
    assert_eq!(m.victim(0, 0), Some(0));
    m.load(0, 2 * stride);
    let ev: Vec<_> = m.take_events().collect();
    assert_eq!(ev, vec![MemEvent::TaggedEvicted { core: 0, line: 0 }]);
}

#[test]
fn evict_victim_returns_lru_line() {
    let cfg = MemConfig::with_cores(1).tiny_l1(2, 4);
    let mut m = MemSystem::new(cfg).unwrap();
    m.load(0, 0);
    assert_eq!(m.evict_victim(0, 0), None);
    m.load(0, 256);
    assert_eq!(m.evict_victim(0, 0), Some(0));
    assert_eq!(m.set_lines(0, 0), vec![4]);
}

#[test]
fn unbounded_mode_grows_set() {
    let cfg = MemConfig { tagged_lines: TaggedLinePolicy::Unbounded, ..MemConfig::with_cores(1).tiny_l1(2, 4) };
    let mut m = MemSystem::new(cfg).unwrap();
    for k in 0..3 {
        m.load_and_tag(0, k * 256).unwrap();
    }
    assert_eq!(m.set_lines(0, 0).len(), 3);
    assert_eq!(m.take_events().count(), 0);
    m.check_invariants().unwrap();
}

#[test]
fn remote_write_reports_tagged_invalidation() {
    let mut m = sys(2);
    m.load_and_tag(0, 0x40).unwrap();
    m.load(0, 0x80);
    m.store(1, 0x40, 1);
    m.store(1, 0x80, 1);
    let ev: Vec<_> = m.take_events().collect();
    assert_eq!(ev, vec![MemEvent::Invalidated { core: 0, line: 1 }]);
}

#[test]
fn back_invalidation_keeps_inclusion() {
    let cfg = MemConfig {
        l2_back_invalidation: true,
        l2_bytes: 64 * 8 * 2,
        l1_bytes: 64 * 2 * 2,
        l1_assoc: 2,
        l2_assoc: 8,
        check_invariants: true,
        ..MemConfig::with_cores(2)
    };
    let mut m = MemSystem::new(cfg).unwrap();
    for k in 0..40u64 {
        m.store((k % 2) as usize, k * 64, k);
    }
    for k in 0..40u64 {
        assert_eq!(m.load(0, k * 64), k);
    }
    assert!(m.total_counters().back_invalidations > 0);
}

#[test]
fn invalidation_counters_balance() {
    let mut m = sys(4);
    for i in 0..200u64 {
        let core = (i * 7 % 4) as usize;
        let addr = (i * 13 % 5) * 64;
        if i % 3 == 0 {
            m.store(core, addr, i);
        } else {
            m.load(core, addr);
        }
    }
    let t = m.total_counters();
    assert_eq!(t.inv_sent, t.inv_received);
    assert!(t.inv_sent > 0);
}
