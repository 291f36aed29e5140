use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// What happens to a tagged line when its L1 set needs a victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaggedLinePolicy {
    /// Tagged lines are ordinary LRU candidates; evicting one revokes access.
    #[default]
    Evict,
    /// Tagged lines are never victims; a fill with no untagged way fails.
    Pin,
    /// Tagged lines are never victims and the set grows instead.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub l1_hit: u64,
    pub l2_hit: u64,
    pub memory: u64,
    pub invalidation: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { l1_hit: 1, l2_hit: 10, memory: 100, invalidation: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemConfig {
    pub line_bytes: u64,
    pub l1_bytes: u64,
    pub l1_assoc: usize,
    pub l2_bytes: u64,
    pub l2_assoc: usize,
    pub cores: usize,
    pub tagged_lines: TaggedLinePolicy,
    /// Bound L2 capacity and back-invalidate L1 copies of L2 victims.
    pub l2_back_invalidation: bool,
    /// Run the global invariant scan after every access.
    pub check_invariants: bool,
    pub costs: CostModel,
}

impl Default for MemConfig {
    fn default() -> Self {
        MemConfig {
            line_bytes: 64,
            l1_bytes: 32 * 1024,
            l1_assoc: 4,
            l2_bytes: 256 * 1024,
            l2_assoc: 8,
            cores: 4,
            tagged_lines: TaggedLinePolicy::Evict,
            l2_back_invalidation: false,
            check_invariants: false,
            costs: CostModel::default(),
        }
    }
}

impl MemConfig {
    pub fn with_cores(cores: usize) -> Self {
        MemConfig { cores, ..Self::default() }
    }

    /// An L1 of `sets` sets with `assoc` ways each.
    pub fn tiny_l1(mut self, assoc: usize, sets: u64) -> Self {
        self.l1_assoc = assoc;
        self.l1_bytes = self.line_bytes * assoc as u64 * sets;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !self.line_bytes.is_power_of_two() || self.line_bytes < 8 {
            return bad("line_bytes must be a power of two and at least 8");
        }
        if self.cores == 0 || self.cores > 64 {
            return bad("cores must be between 1 and 64");
        }
        if self.l1_assoc == 0 || self.l2_assoc == 0 {
            return bad("associativity must be positive");
        }
        if self.l1_sets() == 0 || !self.l1_sets().is_power_of_two() {
            return bad("l1 set count must be a nonzero power of two");
        }
        if !self.l1_bytes.is_multiple_of(self.line_bytes * self.l1_assoc as u64) {
            return bad("l1_bytes must be a multiple of line_bytes * l1_assoc");
        }
        if self.l2_sets() == 0 || !self.l2_sets().is_power_of_two() {
            return bad("l2 set count must be a nonzero power of two");
        }
        if self.l2_bytes < self.l1_bytes {
            return bad("inclusive l2 must not be smaller than l1");
        }
        Ok(())
    }

    pub fn line_shift(&self) -> u32 {
        self.line_bytes.trailing_zeros()
    }

    pub fn words_per_line(&self) -> usize {
        (self.line_bytes / 8) as usize
    }

    pub fn l1_sets(&self) -> u64 {
        self.l1_bytes / (self.line_bytes * self.l1_assoc as u64)
    }

    pub fn l2_sets(&self) -> u64 {
        self.l2_bytes / (self.line_bytes * self.l2_assoc as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_have_128_l1_sets() {
        let c = MemConfig::default();
        c.validate().unwrap();
        assert_eq!(c.l1_sets(), 128);
        assert_eq!(c.words_per_line(), 8);
        assert_eq!(c.line_shift(), 6);
    }

    #[test]
    fn rejects_bad_geometry() {
        let c = MemConfig { line_bytes: 48, ..MemConfig::default() };
        assert!(c.validate().is_err());
        let c = MemConfig { l1_bytes: 64, ..MemConfig::default() };
        assert!(c.validate().is_err());
        let c = MemConfig { cores: 0, ..MemConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn tiny_l1_geometry() {
        let c = MemConfig::default().tiny_l1(2, 4);
        c.validate().unwrap();
        assert_eq!(c.l1_sets(), 4);
        assert_eq!(c.l1_bytes, 512);
    }
}
