//! Sparse applications written against the simulated primitives.
//!
//! A [`Machine`] holds one SpMU per partition behind a shuffle network.
//! Arrays are tiled round-robin: element `i` of an interleaved array lives
//! in partition `i % P`. A global word address is `partition << 16 | local`.
//! Each kernel runs as a sequence of phases; every phase ends at a barrier
//! and charges each partition's 16 lanes to one of the stall categories.

mod graph;
pub mod oracle;
mod sparse;
mod spmv;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dram::DramConfig;
use crate::formats::{CsMatrix, FormatError, MatrixFormat, SparseMatrix};
use crate::scanner::{ScanError, ScanOutput, ScannerConfig};
use crate::shuffle::{MergeFlex, ShuffleConfig, ShuffleError, ShuffleNetwork};
use crate::spmu::{MemoryRequest, RequestVector, RmwKind, Spmu, SpmuConfig, SpmuError};
use crate::stats::{SimStats, StallTally};

pub use graph::{run_bfs, run_pagerank, run_sssp, BfsOutput, PageRankVariant, SsspOutput, DAMPING};
pub use sparse::{run_mat_add, run_spmspm};
pub use spmv::{run_coo_spmv, run_csc_spmv, run_csr_spmv};

pub const LANES: usize = 16;
pub const PARTITION_SHIFT: u32 = 16;
pub(crate) const WORD: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelName {
    CsrSpmv,
    CooSpmv,
    CscSpmv,
    PrPull,
    PrEdge,
    Bfs,
    Sssp,
    MatAdd,
    SpMSpM,
}

impl KernelName {
    pub const ALL: [KernelName; 9] = [
        KernelName::CsrSpmv,
        KernelName::CooSpmv,
        KernelName::CscSpmv,
        KernelName::PrPull,
        KernelName::PrEdge,
        KernelName::Bfs,
        KernelName::Sssp,
        KernelName::MatAdd,
        KernelName::SpMSpM,
    ];
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{needed} words per partition exceed the {available}-word scratchpad")]
    Capacity { needed: usize, available: usize },
    #[error(transparent)]
    Spmu(#[from] SpmuError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub partitions: usize,
    pub spmu: SpmuConfig,
    pub merge: MergeFlex,
    pub scanner: ScannerConfig,
    pub dram: DramConfig,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            partitions: 4,
            spmu: SpmuConfig::default(),
            merge: MergeFlex::Mrg1,
            scanner: ScannerConfig::default(),
            dram: DramConfig::default(),
        }
    }
}

impl MachineConfig {
    pub fn shuffle(&self) -> ShuffleConfig {
        ShuffleConfig {
            endpoints: self.partitions,
            lanes: LANES,
            partition_shift: PARTITION_SHIFT,
            merge: self.merge,
            ..Default::default()
        }
    }
}

/// Output tensor plus timing of one kernel run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResult<T> {
    pub output: T,
    pub cycles: u64,
    pub stats: SimStats,
}

/// Element type carried in 32-bit words.
pub trait Scalar: Copy + PartialEq + Debug + Send + Sync + 'static {
    const ADD: RmwKind;
    fn from_bits(bits: u32) -> Self;
    fn to_bits(self) -> u32;
    fn add(self, other: Self) -> Self;
    fn mul(self, other: Self) -> Self;
    fn zero() -> Self {
        Self::from_bits(0)
    }
}

impl Scalar for i32 {
    const ADD: RmwKind = RmwKind::AddInt;
    fn from_bits(bits: u32) -> Self {
        bits as i32
    }
    fn to_bits(self) -> u32 {
        self as u32
    }
    fn add(self, other: Self) -> Self {
        self.wrapping_add(other)
    }
    fn mul(self, other: Self) -> Self {
        self.wrapping_mul(other)
    }
}

impl Scalar for f32 {
    const ADD: RmwKind = RmwKind::AddFloat;
    fn from_bits(bits: u32) -> Self {
        f32::from_bits(bits)
    }
    fn to_bits(self) -> u32 {
        f32::to_bits(self)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn mul(self, other: Self) -> Self {
        self * other
    }
}

/// An array placed in SpMU memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Array {
    base: usize,
    len: usize,
    interleaved: bool,
}

/// Per-partition cost of one phase.
#[derive(Debug, Clone)]
pub(crate) struct Phase {
    busy: Vec<u64>,
    tally: StallTally,
}

impl Phase {
    pub(crate) fn new(partitions: usize) -> Self {
        Self {
            busy: vec![0; partitions],
            tally: StallTally::default(),
        }
    }

    /// A scanner pass whose element groups feed the lanes.
    pub(crate) fn scan(&mut self, p: usize, out: &ScanOutput, cfg: &ScannerConfig) {
        let groups = out.count.div_ceil(cfg.vectorization) as u64;
        self.busy[p] += out.cycles;
        self.tally.active += out.count as u64;
        self.tally.vector_length += LANES as u64 * groups - out.count as u64;
        self.tally.scan += LANES as u64 * (out.cycles - groups);
    }

    /// Cycles spent only scanning or combining masks.
    pub(crate) fn scan_only(&mut self, p: usize, cycles: u64) {
        self.busy[p] += cycles;
        self.tally.scan += LANES as u64 * cycles;
    }

    /// Streaming `bytes` to or from DRAM at this partition's bandwidth share.
    pub(crate) fn transfer(&mut self, p: usize, bytes: u64, dram: &DramConfig) {
        if bytes == 0 {
            return;
        }
        let share = dram.bytes_per_cycle() / self.busy.len() as f64;
        let moving = (bytes as f64 / share).ceil() as u64;
        self.busy[p] += dram.latency + moving;
        self.tally.load_store += LANES as u64 * dram.latency;
        self.tally.dram += LANES as u64 * moving;
    }

    fn exec(&mut self, p: usize, e: &ExecCost) {
        self.busy[p] += e.finish;
        self.tally.active += e.requests;
        self.tally.vector_length += LANES as u64 * e.vectors - e.requests;
        self.tally.network += LANES as u64 * e.network;
        self.tally.sram += LANES as u64 * (e.finish - e.vectors - e.network);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ExecCost {
    vectors: u64,
    requests: u64,
    finish: u64,
    network: u64,
}

struct Pending {
    seq: u64,
    remaining: usize,
    replies: Vec<Option<u32>>,
}

/// Partitioned SpMUs behind a shuffle network.
pub(crate) struct Machine {
    cfg: MachineConfig,
    spmus: Vec<Spmu>,
    net: ShuffleNetwork,
    next_local: usize,
    cycles: u64,
    stats: SimStats,
}

impl Machine {
    pub(crate) fn new(cfg: &MachineConfig) -> Result<Self, KernelError> {
        let p = cfg.partitions;
        if !p.is_power_of_two() {
            return Err(KernelError::Input(format!("partition count {p} is not a power of two")));
        }
        if cfg.spmu.lanes != LANES {
            return Err(KernelError::Input(format!("kernels need {LANES}-lane SpMUs")));
        }
        if cfg.spmu.capacity_words() > 1 << PARTITION_SHIFT {
            return Err(KernelError::Input("SpMU larger than a partition's address space".into()));
        }
        cfg.scanner.validate()?;
        let spmus = (0..p)
            .map(|_| Spmu::new(cfg.spmu.clone()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            net: ShuffleNetwork::new(cfg.shuffle())?,
            spmus,
            next_local: 0,
            cycles: 0,
            stats: SimStats {
                banks: cfg.spmu.banks * p,
                ..Default::default()
            },
            cfg: cfg.clone(),
        })
    }

    pub(crate) fn partitions(&self) -> usize {
        self.cfg.partitions
    }

    pub(crate) fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    fn reserve(&mut self, words: usize) -> Result<usize, KernelError> {
        let base = self.next_local;
        let available = self.cfg.spmu.capacity_words();
        if base + words > available {
            return Err(KernelError::Capacity {
                needed: base + words,
                available,
            });
        }
        self.next_local += words;
        Ok(base)
    }

    /// An array of `len` words spread round-robin over partitions.
    pub(crate) fn alloc(&mut self, len: usize) -> Result<Array, KernelError> {
        let base = self.reserve(len.div_ceil(self.partitions()))?;
        Ok(Array {
            base,
            len,
            interleaved: true,
        })
    }

    /// `len` private words in every partition.
    pub(crate) fn alloc_local(&mut self, len: usize) -> Result<Array, KernelError> {
        let base = self.reserve(len)?;
        Ok(Array {
            base,
            len,
            interleaved: false,
        })
    }

    /// An interleaved array initialised from `values`.
    pub(crate) fn place(&mut self, values: impl ExactSizeIterator<Item = u32>) -> Result<Array, KernelError> {
        let a = self.alloc(values.len())?;
        for (i, v) in values.enumerate() {
            let addr = self.addr(a, i);
            self.store(addr, v);
        }
        Ok(a)
    }

    /// Global address of element `i` of an interleaved array.
    pub(crate) fn addr(&self, a: Array, i: usize) -> u32 {
        debug_assert!(a.interleaved && i < a.len);
        let p = i % self.partitions();
        ((p as u32) << PARTITION_SHIFT) | (a.base + i / self.partitions()) as u32
    }

    /// Global address of word `i` of partition `p`'s private array.
    pub(crate) fn local_addr(&self, a: Array, p: usize, i: usize) -> u32 {
        debug_assert!(!a.interleaved && i < a.len);
        ((p as u32) << PARTITION_SHIFT) | (a.base + i) as u32
    }

    fn split(addr: u32) -> (usize, usize) {
        ((addr >> PARTITION_SHIFT) as usize, (addr & 0xFFFF) as usize)
    }

    /// Direct write, used to place inputs that a load phase pays for.
    pub(crate) fn store(&mut self, addr: u32, value: u32) {
        let (p, l) = Self::split(addr);
        self.spmus[p].memory_mut()[l] = value;
    }

    pub(crate) fn load(&self, addr: u32) -> u32 {
        let (p, l) = Self::split(addr);
        self.spmus[p].memory()[l]
    }

    /// Ends a phase at a barrier: the slowest partition sets its length
    /// and everyone else idles.
    pub(crate) fn commit(&mut self, mut phase: Phase) {
        let t = phase.busy.iter().copied().max().unwrap_or(0);
        phase.tally.imbalance += phase.busy.iter().map(|&b| LANES as u64 * (t - b)).sum::<u64>();
        debug_assert_eq!(phase.tally.total(), LANES as u64 * t * self.partitions() as u64);
        self.cycles += t;
        self.stats.cycles = self.cycles;
        self.stats.stalls.merge(&phase.tally);
    }

    /// Runs one request stream per partition to completion, routing each
    /// request to the partition that owns its address. Returns every
    /// vector's replies and charges the time to `phase`.
    pub(crate) fn exec(
        &mut self,
        streams: &[Vec<RequestVector>],
        phase: &mut Phase,
    ) -> Result<Vec<Vec<Vec<Option<u32>>>>, KernelError> {
        let n = self.partitions();
        assert_eq!(streams.len(), n);
        let mut replies: Vec<Vec<Vec<Option<u32>>>> =
            streams.iter().map(|s| vec![Vec::new(); s.len()]).collect();
        let mut next = vec![0usize; n];
        let mut received = vec![0usize; n];
        let mut cost = vec![ExecCost::default(); n];
        let mut pending: Vec<std::collections::VecDeque<Pending>> = (0..n).map(|_| Default::default()).collect();
        let mut open = streams.iter().filter(|s| !s.is_empty()).count();
        let mut t = 0u64;
        let grants_before: u64 = self.spmus.iter().map(|s| s.stats().grants).sum();
        while open > 0 {
            for p in 0..n {
                if let Some(v) = streams[p].get(next[p]) {
                    if self.net.try_inject(p, next[p] as u64, v.clone())? {
                        cost[p].vectors += 1;
                        cost[p].requests += v.valid_count() as u64;
                        next[p] += 1;
                    } else {
                        cost[p].network += 1;
                    }
                }
            }
            self.net.step();
            for e in 0..n {
                for d in self.net.drain_deliveries(e) {
                    let lanes = d
                        .vector
                        .lanes
                        .iter()
                        .map(|l| {
                            l.map(|r| MemoryRequest {
                                address: r.address & 0xFFFF,
                                ..r
                            })
                        })
                        .collect();
                    pending[e].push_back(Pending {
                        seq: d.seq,
                        remaining: d.vector.valid_count(),
                        replies: vec![None; LANES],
                    });
                    self.spmus[e].submit(d.seq, RequestVector::new(lanes))?;
                }
                for done in self.spmus[e].step().completed {
                    let slot = pending[e]
                        .iter_mut()
                        .find(|x| x.seq == done.tag)
                        .expect("completion for an unknown delivery");
                    for (lane, r) in done.replies.iter().enumerate() {
                        if let Some(r) = r {
                            if slot.replies[lane].is_none() {
                                slot.replies[lane] = Some(*r);
                                slot.remaining -= 1;
                            }
                        }
                    }
                    while pending[e].front().is_some_and(|x| x.remaining == 0) {
                        let x = pending[e].pop_front().unwrap();
                        self.net.return_reply(e, x.seq, x.replies)?;
                    }
                }
            }
            t += 1;
            for p in 0..n {
                for (tag, r) in self.net.drain_replies(p) {
                    replies[p][tag as usize] = r;
                    received[p] += 1;
                    if received[p] == streams[p].len() {
                        cost[p].finish = t;
                        open -= 1;
                    }
                }
            }
        }
        for (p, c) in cost.iter().enumerate() {
            phase.exec(p, c);
        }
        let grants_after: u64 = self.spmus.iter().map(|s| s.stats().grants).sum();
        self.stats.grants += grants_after - grants_before;
        Ok(replies)
    }

    pub(crate) fn finish<T>(self, output: T) -> KernelResult<T> {
        KernelResult {
            output,
            cycles: self.cycles,
            stats: self.stats,
        }
    }
}

/// Unwraps a converted matrix into its compressed storage.
pub(crate) fn compressed(m: &SparseMatrix, f: MatrixFormat) -> CsMatrix {
    match m {
        SparseMatrix::Csr(c) if f == MatrixFormat::Csr => c.clone(),
        SparseMatrix::Csc(c) if f == MatrixFormat::Csc => c.clone(),
        _ => match m.convert(f) {
            SparseMatrix::Csr(c) | SparseMatrix::Csc(c) => c,
            SparseMatrix::Coo(_) => unreachable!("conversion to a compressed format"),
        },
    }
}

/// Items owned by each partition under round-robin tiling.
pub(crate) fn round_robin(n: usize, parts: usize) -> Vec<Vec<usize>> {
    (0..parts).map(|q| (q..n).step_by(parts).collect()).collect()
}

/// Assignment of graph nodes to partitions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Tiling {
    #[default]
    RoundRobin,
    /// Partition id per node, as in a METIS `.part` file.
    Explicit(Vec<u32>),
}

impl Tiling {
    /// Parses one partition id per line.
    pub fn from_reader<R: std::io::BufRead>(r: R) -> Result<Self, KernelError> {
        let mut ids = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line.map_err(|e| KernelError::Input(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            ids.push(
                t.parse()
                    .map_err(|_| KernelError::Input(format!("line {}: bad partition id '{t}'", k + 1)))?,
            );
        }
        Ok(Tiling::Explicit(ids))
    }

    pub(crate) fn assign(&self, n: usize, parts: usize) -> Result<Vec<Vec<usize>>, KernelError> {
        match self {
            Tiling::RoundRobin => Ok(round_robin(n, parts)),
            Tiling::Explicit(ids) => {
                if ids.len() != n {
                    return Err(KernelError::Dimension(format!(
                        "partition file lists {} nodes, graph has {n}",
                        ids.len()
                    )));
                }
                let mut out = vec![Vec::new(); parts];
                for (i, &q) in ids.iter().enumerate() {
                    let q = q as usize;
                    if q >= parts {
                        return Err(KernelError::Input(format!("node {i} assigned to partition {q}")));
                    }
                    out[q].push(i);
                }
                Ok(out)
            }
        }
    }
}

/// Packs requests into full 16-lane vectors in order.
pub(crate) fn pack(reqs: &[MemoryRequest]) -> Vec<RequestVector> {
    reqs.chunks(LANES)
        .map(|c| RequestVector::packed(LANES, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spmu::ReplySelect;

    #[test]
    fn exec_returns_replies_and_closes_accounting() {
        let cfg = MachineConfig::default();
        let mut m = Machine::new(&cfg).unwrap();
        let a = m.alloc(64).unwrap();
        for i in 0..64 {
            let addr = m.addr(a, i);
            m.store(addr, i as u32 * 10);
        }
        let streams: Vec<Vec<RequestVector>> = (0..4)
            .map(|p| {
                let reqs: Vec<_> = (0..20).map(|k| MemoryRequest::read(m.addr(a, (p * 7 + k * 3) % 64))).collect();
                pack(&reqs)
            })
            .collect();
        let mut ph = Phase::new(4);
        let r = m.exec(&streams, &mut ph).unwrap();
        for p in 0..4 {
            let got: Vec<u32> = r[p].iter().flatten().flatten().copied().collect();
            let want: Vec<u32> = (0..20).map(|k| ((p * 7 + k * 3) % 64) as u32 * 10).collect();
            assert_eq!(got, want);
        }
        m.commit(ph);
        let s = m.stats.stalls;
        assert_eq!(s.total(), 16 * 4 * m.cycles);
        assert_eq!(s.active, 80);
        assert_eq!(s.vector_length, 4 * (32 - 20));
    }

    #[test]
    fn remote_adds_accumulate() {
        let cfg = MachineConfig::default();
        let mut m = Machine::new(&cfg).unwrap();
        let a = m.alloc(8).unwrap();
        let streams: Vec<Vec<RequestVector>> = (0..4)
            .map(|_| {
                let reqs: Vec<_> = (0..32)
                    .map(|k| MemoryRequest::rmw(m.addr(a, k % 8), RmwKind::AddInt, 1, ReplySelect::OldValue))
                    .collect();
                pack(&reqs)
            })
            .collect();
        let mut ph = Phase::new(4);
        m.exec(&streams, &mut ph).unwrap();
        for i in 0..8 {
            assert_eq!(m.load(m.addr(a, i)), 16);
        }
    }

    #[test]
    fn capacity_is_checked() {
        let mut m = Machine::new(&MachineConfig::default()).unwrap();
        assert!(m.alloc_local(60_000).is_ok());
        assert!(matches!(m.alloc_local(10_000), Err(KernelError::Capacity { .. })));
    }
}
