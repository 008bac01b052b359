//! Simulation statistics shared by the SpMU, kernels and harness.

use serde::{Deserialize, Serialize};

/// Where a lane-cycle went.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StallCategory {
    Active,
    Scan,
    LoadStore,
    VectorLength,
    Imbalance,
    Network,
    Sram,
    Dram,
}

impl StallCategory {
    pub const ALL: [StallCategory; 8] = [
        StallCategory::Active,
        StallCategory::Scan,
        StallCategory::LoadStore,
        StallCategory::VectorLength,
        StallCategory::Imbalance,
        StallCategory::Network,
        StallCategory::Sram,
        StallCategory::Dram,
    ];
}

/// Lane-cycle tallies per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallTally {
    pub active: u64,
    pub scan: u64,
    pub load_store: u64,
    pub vector_length: u64,
    pub imbalance: u64,
    pub network: u64,
    pub sram: u64,
    pub dram: u64,
}

impl StallTally {
    pub fn get(&self, c: StallCategory) -> u64 {
        match c {
            StallCategory::Active => self.active,
            StallCategory::Scan => self.scan,
            StallCategory::LoadStore => self.load_store,
            StallCategory::VectorLength => self.vector_length,
            StallCategory::Imbalance => self.imbalance,
            StallCategory::Network => self.network,
            StallCategory::Sram => self.sram,
            StallCategory::Dram => self.dram,
        }
    }

    pub fn add(&mut self, c: StallCategory, n: u64) {
        let slot = match c {
            StallCategory::Active => &mut self.active,
            StallCategory::Scan => &mut self.scan,
            StallCategory::LoadStore => &mut self.load_store,
            StallCategory::VectorLength => &mut self.vector_length,
            StallCategory::Imbalance => &mut self.imbalance,
            StallCategory::Network => &mut self.network,
            StallCategory::Sram => &mut self.sram,
            StallCategory::Dram => &mut self.dram,
        };
        *slot += n;
    }

    pub fn total(&self) -> u64 {
        StallCategory::ALL.iter().map(|&c| self.get(c)).sum()
    }

    pub fn merge(&mut self, other: &StallTally) {
        for c in StallCategory::ALL {
            self.add(c, other.get(c));
        }
    }
}

/// One per-cycle record of SpMU activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub grants: u32,
    pub banks_active: u32,
    pub queue_occupancy: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub cycles: u64,
    pub grants: u64,
    pub banks: usize,
    /// `banks_active[k]` counts cycles in which exactly `k` banks were busy.
    pub banks_active: Vec<u64>,
    pub stalls: StallTally,
}

impl SimStats {
    pub fn new(banks: usize) -> Self {
        Self {
            banks,
            banks_active: vec![0; banks + 1],
            ..Default::default()
        }
    }

    /// Fraction of bank-cycles that served a request, in [0, 1].
    pub fn utilization(&self) -> f64 {
        if self.cycles == 0 || self.banks == 0 {
            0.0
        } else {
            self.grants as f64 / (self.cycles as f64 * self.banks as f64)
        }
    }

    pub fn record_cycle(&mut self, grants: usize) {
        self.cycles += 1;
        self.grants += grants as u64;
        if self.banks_active.len() <= grants {
            self.banks_active.resize(grants + 1, 0);
        }
        self.banks_active[grants] += 1;
    }

    /// Difference `self - earlier` for counters accumulated since a snapshot.
    pub fn since(&self, earlier: &SimStats) -> SimStats {
        let mut d = self.clone();
        d.cycles -= earlier.cycles;
        d.grants -= earlier.grants;
        for (a, b) in d.banks_active.iter_mut().zip(&earlier.banks_active) {
            *a -= b;
        }
        d.stalls = StallTally::default();
        for c in StallCategory::ALL {
            d.stalls.add(c, self.stalls.get(c) - earlier.stalls.get(c));
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utilization_counts_bank_cycles() {
        let mut s = SimStats::new(16);
        s.record_cycle(16);
        s.record_cycle(0);
        assert_eq!(s.utilization(), 0.5);
        assert_eq!(s.banks_active[16], 1);
        assert_eq!(s.banks_active[0], 1);
    }

    #[test]
    fn since_subtracts() {
        let mut s = SimStats::new(4);
        s.record_cycle(2);
        s.stalls.add(StallCategory::Sram, 5);
        let snap = s.clone();
        s.record_cycle(4);
        s.stalls.add(StallCategory::Sram, 3);
        let d = s.since(&snap);
        assert_eq!(d.cycles, 1);
        assert_eq!(d.grants, 4);
        assert_eq!(d.banks_active[2], 0);
        assert_eq!(d.stalls.sram, 3);
    }
}
