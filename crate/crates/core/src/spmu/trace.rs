//! Uniform-random request traces for throughput measurement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SpmuConfig;
use super::request::{MemoryRequest, ReplySelect, RequestVector, RmwKind};
use super::unit::Spmu;
use super::SpmuError;
use crate::stats::SimStats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceParams {
    /// Addresses are drawn uniformly from `0..address_space` words.
    pub address_space: u32,
    pub warmup_cycles: u64,
    pub measure_cycles: u64,
    pub seed: u64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            address_space: 1 << 16,
            warmup_cycles: 1_000,
            measure_cycles: 100_000,
            seed: 0xCAFE,
        }
    }
}

/// Endless stream of fully populated random vectors.
pub struct RandomTrace {
    rng: ChaCha8Rng,
    lanes: usize,
    space: u32,
}

impl RandomTrace {
    pub fn new(lanes: usize, space: u32, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lanes,
            space,
        }
    }

    pub fn next_vector(&mut self) -> RequestVector {
        let lanes = (0..self.lanes)
            .map(|_| {
                let a = self.rng.gen_range(0..self.space);
                Some(MemoryRequest::rmw(a, RmwKind::AddInt, 1, ReplySelect::OldValue))
            })
            .collect();
        RequestVector::new(lanes)
    }
}

/// Steady-state statistics for one configuration: the input stream never
/// runs dry, and counters cover only the cycles after warm-up.
pub fn measure_utilization(cfg: &SpmuConfig, params: &TraceParams) -> Result<SimStats, SpmuError> {
    let space = params.address_space.min(cfg.capacity_words() as u32);
    let mut unit = Spmu::new(cfg.clone())?;
    let mut trace = RandomTrace::new(cfg.lanes, space, params.seed);
    let mut tag = 0u64;
    let mut snapshot = None;
    for cycle in 0..params.warmup_cycles + params.measure_cycles {
        if cycle == params.warmup_cycles {
            snapshot = Some(unit.stats().clone());
        }
        if unit.inbox_len() == 0 {
            unit.submit(tag, trace.next_vector())?;
            tag += 1;
        }
        unit.step();
    }
    let end = unit.stats().clone();
    Ok(match snapshot {
        Some(s) => end.since(&s),
        None => end,
    })
}
