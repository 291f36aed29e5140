//! Randomized stress of the coherence protocol against a flat map of
//! memory.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::memsys::{MemConfig, MemSystem};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StressReport {
    pub actions: u64,
    pub value_mismatches: u64,
    pub invariant_failures: u64,
    pub evictions: u64,
    pub invalidations: u64,
    pub first_problem: Option<String>,
}

impl StressReport {
    pub fn is_clean(&self) -> bool {
        self.value_mismatches == 0 && self.invariant_failures == 0
    }
}

/// `actions` random loads, stores and CASes by `cfg.cores` cores over
/// `lines` lines, two words per line. Every returned value is compared with
/// the map and the global invariants are checked after every action.
pub fn msi_stress(cfg: MemConfig, lines: u64, actions: u64, seed: u64) -> Result<StressReport> {
    let cores = cfg.cores;
    let line_bytes = cfg.line_bytes;
    let mut mem = MemSystem::new(cfg)?;
    let mut oracle: HashMap<u64, u64> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = StressReport::default();
    let problem = |rep: &mut StressReport, msg: String| {
        if rep.first_problem.is_none() {
            rep.first_problem = Some(msg);
        }
    };
    for i in 0..actions {
        let core = rng.gen_range(0..cores);
        let addr = line_bytes * (1 + rng.gen_range(0..lines)) + 8 * rng.gen_range(0..2);
        let want = oracle.get(&addr).copied().unwrap_or(0);
        match rng.gen_range(0..3) {
            0 => {
                let got = mem.load(core, addr);
                if got != want {
                    rep.value_mismatches += 1;
                    problem(&mut rep, format!("action {i}: core {core} loaded {got} from {addr:#x}, expected {want}"));
                }
            }
            1 => {
                let v = rng.gen_range(0..1000);
                mem.store(core, addr, v);
                oracle.insert(addr, v);
            }
            _ => {
                let expect = if rng.gen_bool(0.5) { want } else { rng.gen_range(0..1000) };
                let new = rng.gen_range(0..1000);
                let ok = mem.cas(core, addr, expect, new);
                if ok != (want == expect) {
                    rep.value_mismatches += 1;
                    problem(
                        &mut rep,
                        format!("action {i}: cas on {addr:#x} returned {ok} with memory {want}, expected {expect}"),
                    );
                }
                if want == expect {
                    oracle.insert(addr, new);
                }
            }
        }
        mem.clear_msgs();
        if let Err(e) = mem.check_invariants() {
            rep.invariant_failures += 1;
            problem(&mut rep, format!("action {i}: {e}"));
        }
        rep.actions += 1;
    }
    let t = mem.total_counters();
    rep.evictions = t.evictions;
    rep.invalidations = t.inv_received;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_stress_agrees_with_map() {
        let cfg = MemConfig::with_cores(3).tiny_l1(2, 1);
        let rep = msi_stress(cfg, 4, 5000, 1).unwrap();
        assert!(rep.is_clean(), "{rep:?}");
        assert!(rep.evictions > 0 && rep.invalidations > 0);
    }
}
