use serde::{Deserialize, Serialize};

use super::SpmuError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderingMode {
    /// Any reordering allowed.
    Unordered,
    /// Same-address accesses stay in program order.
    AddressOrdered,
    /// Every access completes in program order.
    FullyOrdered,
    /// Baseline: one vector at a time, bank conflicts serialized.
    Arbitrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BankHashing {
    /// XOR of the four low address nibbles (16 banks only).
    Hashed,
    /// `address mod banks`.
    Linear,
}

/// Allocator input ports per lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Crossbar {
    /// `l x b`: one bid port per lane.
    Single,
    /// `2l x b`: each lane bids from its even and its odd slots separately.
    Double,
}

impl Crossbar {
    pub fn ports_per_lane(self) -> usize {
        match self {
            Crossbar::Single => 1,
            Crossbar::Double => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpmuConfig {
    pub lanes: usize,
    pub banks: usize,
    /// Issue-queue depth in vectors.
    pub depth: usize,
    pub crossbar: Crossbar,
    pub iterations: usize,
    pub priorities: usize,
    pub mode: OrderingMode,
    /// Words per bank.
    pub bank_words: usize,
    pub bloom_bits: usize,
    pub bloom_hashes: usize,
    pub hashing: BankHashing,
    /// Squash duplicate reads within a vector at enqueue.
    pub elide_reads: bool,
}

impl Default for SpmuConfig {
    fn default() -> Self {
        Self {
            lanes: 16,
            banks: 16,
            depth: 16,
            crossbar: Crossbar::Single,
            iterations: 3,
            priorities: 3,
            mode: OrderingMode::Unordered,
            bank_words: 4096,
            bloom_bits: 128,
            bloom_hashes: 2,
            hashing: BankHashing::Hashed,
            elide_reads: true,
        }
    }
}

impl SpmuConfig {
    pub fn validate(&self) -> Result<(), SpmuError> {
        let bad = |m: &str| Err(SpmuError::Config(m.to_string()));
        if self.lanes == 0 || self.lanes > 32 {
            return bad("lanes must be in 1..=32");
        }
        if self.banks == 0 || self.banks > 32 || !self.banks.is_power_of_two() {
            return bad("banks must be a power of two no larger than 32");
        }
        if self.hashing == BankHashing::Hashed && self.banks != 16 {
            return bad("nibble hashing requires exactly 16 banks");
        }
        if self.depth == 0 {
            return bad("queue depth must be positive");
        }
        if self.iterations == 0 || self.priorities == 0 || self.priorities > self.iterations {
            return bad("need 1 <= priorities <= iterations");
        }
        if self.priorities > 3 {
            return bad("at most three priority windows are supported");
        }
        if self.lanes * self.crossbar.ports_per_lane() > 64 {
            return bad("too many allocator ports");
        }
        if !self.bloom_bits.is_power_of_two() || self.bloom_hashes == 0 {
            return bad("bloom filter needs a power-of-two size and at least one hash");
        }
        Ok(())
    }

    /// Capacity in 32-bit words.
    pub fn capacity_words(&self) -> usize {
        self.banks * self.bank_words
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_words() * 4
    }

    /// Number of oldest queue slots allowed to bid in each allocator
    /// iteration.
    ///
    /// Three priority levels at depth 16 give windows of 5, 10 and 16 slots;
    /// other depths scale proportionally. With fewer priority levels, the
    /// trailing iterations bid from the whole queue.
    pub fn priority_windows(&self) -> Vec<usize> {
        let d = self.depth;
        let levels: Vec<usize> = match (self.priorities, d) {
            (3, 16) => vec![5, 10, 16],
            (p, _) => (1..=p).map(|i| (i * d).div_ceil(p)).collect(),
        };
        (0..self.iterations)
            .map(|i| levels.get(i).copied().unwrap_or(d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_capacity_is_256_kib() {
        let c = SpmuConfig::default();
        assert_eq!(c.capacity_bytes(), 256 * 1024);
        c.validate().unwrap();
    }

    #[test]
    fn windows_per_depth() {
        let mut c = SpmuConfig::default();
        assert_eq!(c.priority_windows(), vec![5, 10, 16]);
        c.priorities = 1;
        assert_eq!(c.priority_windows(), vec![16, 16, 16]);
        c.depth = 8;
        c.priorities = 3;
        assert_eq!(c.priority_windows(), vec![3, 6, 8]);
        c.depth = 32;
        assert_eq!(c.priority_windows(), vec![11, 22, 32]);
    }

    #[test]
    fn invalid_configs() {
        let c = SpmuConfig { priorities: 4, iterations: 3, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SpmuConfig { banks: 8, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SpmuConfig { banks: 8, hashing: BankHashing::Linear, ..Default::default() };
        assert!(c.validate().is_ok());
    }
}
