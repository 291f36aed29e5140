//! Seeded operation mixes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::history::Op;
use crate::structures::{DsKind, MAX_KEY};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub ds: DsKind,
    pub threads: usize,
    pub ops_per_thread: usize,
    /// Percentage of operations that are updates, split evenly between
    /// insert and delete (push and pop for stacks).
    pub update_percent: u32,
    /// Keys are drawn uniformly from `0..key_range`. `None` picks the
    /// structure's default.
    pub key_range: Option<u64>,
    /// Fill to this percentage of the key range before measuring.
    pub prefill_percent: u32,
    pub seed: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            ds: DsKind::List,
            threads: 4,
            ops_per_thread: 3000,
            update_percent: 10,
            key_range: None,
            prefill_percent: 50,
            seed: 1,
        }
    }
}

/// Operations for one run: a sequential prefill and one list per thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub prefill: Vec<Op>,
    pub threads: Vec<Vec<Op>>,
}

pub fn default_key_range(ds: DsKind) -> u64 {
    match ds {
        DsKind::Extbst => 10_000,
        _ => 1000,
    }
}

impl Workload {
    pub fn key_range(&self) -> u64 {
        self.key_range.unwrap_or_else(|| default_key_range(self.ds))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.threads == 0 {
            return bad("threads must be positive".into());
        }
        if self.update_percent > 100 || self.prefill_percent > 100 {
            return bad("percentages must be at most 100".into());
        }
        let range = self.key_range();
        if range == 0 || range - 1 > MAX_KEY {
            return bad(format!("key range {range} out of bounds"));
        }
        Ok(())
    }

    /// Expand the workload. Each thread's operations come from its own
    /// stream derived from the seed, so changing the thread count does not
    /// perturb the other threads.
    pub fn generate(&self) -> Result<Generated> {
        self.validate()?;
        let range = self.key_range();
        let target = (range * u64::from(self.prefill_percent) / 100) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let prefill = if self.ds.is_set() {
            let mut keys: Vec<u64> = (0..range).collect();
            let (chosen, _) = keys.partial_shuffle(&mut rng, target);
            chosen.iter().map(|&k| Op::Insert(k)).collect()
        } else {
            (0..target).map(|_| Op::Push(rng.gen_range(0..range))).collect()
        };
        let threads = (0..self.threads)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(t as u64 + 1);
                (0..self.ops_per_thread).map(|_| self.draw(&mut rng, range)).collect()
            })
            .collect();
        Ok(Generated { prefill, threads })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, range: u64) -> Op {
        let k = rng.gen_range(0..range);
        let update = rng.gen_range(0..100) < self.update_percent;
        let first_half = rng.gen_bool(0.5);
        match (self.ds.is_set(), update, first_half) {
            (true, true, true) => Op::Insert(k),
            (true, true, false) => Op::Delete(k),
            (true, false, _) => Op::Contains(k),
            (false, true, true) => Op::Push(k),
            (false, true, false) => Op::Pop,
            (false, false, _) => Op::Peek,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefill_is_half_the_range_without_duplicates() {
        let w = Workload { key_range: Some(1000), ..Workload::default() };
        let g = w.generate().unwrap();
        assert_eq!(g.prefill.len(), 500);
        let mut keys: Vec<_> = g.prefill.iter().map(|o| o.key().unwrap()).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 500);
        assert!(keys.iter().all(|&k| k < 1000));
    }

    #[test]
    fn update_mix_is_balanced() {
        let w = Workload { update_percent: 100, ops_per_thread: 20_000, threads: 1, ..Workload::default() };
        let g = w.generate().unwrap();
        let ins = g.threads[0].iter().filter(|o| matches!(o, Op::Insert(_))).count() as f64;
        assert!((ins / 20_000.0 - 0.5).abs() < 0.02);
        assert!(g.threads[0].iter().all(|o| o.is_update()));

        let ro = Workload { update_percent: 0, ..w };
        assert!(ro.generate().unwrap().threads[0].iter().all(|o| matches!(o, Op::Contains(_))));
    }

    #[test]
    fn deterministic_and_per_thread_independent() {
        let w = Workload { threads: 2, ops_per_thread: 50, ..Workload::default() };
        assert_eq!(w.generate().unwrap(), w.generate().unwrap());
        let w3 = Workload { threads: 3, ..w.clone() };
        assert_eq!(w3.generate().unwrap().threads[..2], w.generate().unwrap().threads[..]);
        let other = Workload { seed: 2, ..w.clone() };
        assert_ne!(other.generate().unwrap().threads, w.generate().unwrap().threads);
    }

    #[test]
    fn default_ranges() {
        assert_eq!(Workload { ds: DsKind::Extbst, ..Workload::default() }.key_range(), 10_000);
        assert_eq!(Workload::default().key_range(), 1000);
        assert!(Workload { threads: 0, ..Workload::default() }.validate().is_err());
    }
}
