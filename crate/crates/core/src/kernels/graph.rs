//! Graph analytics: PageRank, breadth-first search, shortest paths.
//!
//! Entry `(d, s)` of the adjacency matrix is an edge `s -> d`, so a CSC
//! column lists a node's out-edges and a CSR row its in-edges.

use serde::{Deserialize, Serialize};

use super::spmv::{gather_rows, load_rows, scatter_add, write_values};
use super::{
    compressed, pack, round_robin, Array, KernelError, KernelResult, Machine, MachineConfig, Phase, Tiling, LANES, WORD,
};
use crate::formats::{BitVector, CsMatrix, MatrixFormat, SparseMatrix};
use crate::scanner::{tiled_scan, ScanMode};
use crate::spmu::{MemoryRequest, OrderingMode, ReplySelect, RmwKind};

pub const DAMPING: f32 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PageRankVariant {
    /// Row-wise gather over in-edges.
    Pull,
    /// Edge-parallel scatter with atomic adds.
    Edge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfsOutput {
    pub reached: BitVector,
    /// BFS-tree parent; `None` for the source and unreached nodes.
    pub parent: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsspOutput {
    pub dist: Vec<Option<u32>>,
    /// Predecessor on a shortest path; `None` for the source and unreached nodes.
    pub parent: Vec<Option<u32>>,
}

fn check_square(g: &SparseMatrix) -> Result<usize, KernelError> {
    if g.rows() != g.cols() {
        return Err(KernelError::Dimension(format!(
            "adjacency matrix is {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    Ok(g.rows())
}

fn check_source(n: usize, source: usize) -> Result<(), KernelError> {
    if source >= n {
        return Err(KernelError::Input(format!("source {source} outside {n}-node graph")));
    }
    Ok(())
}

/// Damped PageRank from the uniform vector.
pub fn run_pagerank(
    cfg: &MachineConfig,
    g: &SparseMatrix,
    variant: PageRankVariant,
    iterations: usize,
    tiling: &Tiling,
) -> Result<KernelResult<Vec<f32>>, KernelError> {
    let n = check_square(g)?;
    let adj = compressed(g, MatrixFormat::Csc);
    let scaled: Vec<_> = g
        .to_triples()
        .into_iter()
        .map(|(d, s, _)| (d, s, (1.0 / adj.line_len(s as usize) as f32).to_bits()))
        .collect();
    let m = SparseMatrix::from_triples(n, n, scaled)?;

    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let owned = tiling.assign(n, p)?;
    let rank = mach.place((0..n).map(|_| (1.0 / n as f32).to_bits()))?;
    let base = (1.0 - DAMPING) / n as f32;
    let update = |sum: f32| (base + DAMPING * sum).to_bits();

    match variant {
        PageRankVariant::Pull => {
            let csr = compressed(&m, MatrixFormat::Csr);
            let mut load = Phase::new(p);
            load_rows(&mach, &csr, &owned, n, &mut load);
            mach.commit(load);
            for _ in 0..iterations {
                let mut ph = Phase::new(p);
                let sums: Vec<f32> = gather_rows(&mut mach, &csr, &owned, rank, &mut ph)?;
                let items: Vec<Vec<_>> = owned
                    .iter()
                    .map(|nodes| nodes.iter().map(|&d| (d, update(sums[d]))).collect())
                    .collect();
                write_values(&mut mach, rank, &items, &mut ph)?;
                mach.commit(ph);
            }
        }
        PageRankVariant::Edge => {
            let triples = m.to_triples();
            let acc = mach.alloc(n)?;
            let mut load = Phase::new(p);
            for (q, ks) in round_robin(triples.len(), p).iter().enumerate() {
                load.transfer(q, WORD * (3 * ks.len()) as u64, &mach.config().dram);
            }
            mach.commit(load);
            for _ in 0..iterations {
                let mut ph = Phase::new(p);
                scatter_add::<f32>(&mut mach, &triples, rank, acc, &mut ph)?;
                mach.commit(ph);
                let mut ph = Phase::new(p);
                let sums = swap_out(&mut mach, acc, &owned, &mut ph)?;
                let items: Vec<Vec<_>> = owned
                    .iter()
                    .zip(&sums)
                    .map(|(nodes, s)| nodes.iter().zip(s).map(|(&d, &x)| (d, update(f32::from_bits(x)))).collect())
                    .collect();
                write_values(&mut mach, rank, &items, &mut ph)?;
                mach.commit(ph);
            }
        }
    }
    let r = (0..n).map(|i| f32::from_bits(mach.load(mach.addr(rank, i)))).collect();
    Ok(mach.finish(r))
}

/// Reads and zeroes the owned entries of `a` with atomic swaps.
fn swap_out(
    mach: &mut Machine,
    a: Array,
    owned: &[Vec<usize>],
    phase: &mut Phase,
) -> Result<Vec<Vec<u32>>, KernelError> {
    let streams: Vec<_> = owned
        .iter()
        .map(|nodes| {
            let reqs: Vec<_> = nodes
                .iter()
                .map(|&d| MemoryRequest::rmw(mach.addr(a, d), RmwKind::Swap, 0, ReplySelect::OldValue))
                .collect();
            pack(&reqs)
        })
        .collect();
    let replies = mach.exec(&streams, phase)?;
    Ok(replies
        .into_iter()
        .map(|rs| rs.into_iter().flatten().flatten().collect())
        .collect())
}

/// Per-partition frontier bit-vectors over owned nodes.
struct Frontier {
    owned: Vec<Vec<usize>>,
    owner: Vec<usize>,
    pos: Vec<usize>,
    bits: Vec<BitVector>,
}

impl Frontier {
    fn new(n: usize, owned: Vec<Vec<usize>>) -> Self {
        let mut owner = vec![0; n];
        let mut pos = vec![0; n];
        for (q, nodes) in owned.iter().enumerate() {
            for (k, &i) in nodes.iter().enumerate() {
                owner[i] = q;
                pos[i] = k;
            }
        }
        let bits = owned.iter().map(|o| BitVector::zeros(o.len())).collect();
        Self { owned, owner, pos, bits }
    }

    fn set(&mut self, node: usize) {
        self.bits[self.owner[node]].set(self.pos[node]);
    }

    fn is_empty(&self) -> bool {
        self.bits.iter().all(BitVector::is_zero)
    }

    /// Scans and clears every partition's frontier.
    fn take(&mut self, mach: &Machine, phase: &mut Phase) -> Result<Vec<Vec<usize>>, KernelError> {
        let cfg = &mach.config().scanner;
        let mut out = Vec::with_capacity(self.bits.len());
        for (q, fr) in self.bits.iter_mut().enumerate() {
            let scan = tiled_scan(ScanMode::Single, fr, fr, cfg)?;
            phase.scan(q, &scan, cfg);
            out.push(scan.elements.iter().map(|e| self.owned[q][e.j as usize]).collect());
            *fr = BitVector::zeros(fr.len());
        }
        Ok(out)
    }
}

/// Builds one RMW per out-edge of each source, vectorised per source.
fn edge_requests(
    mach: &Machine,
    adj: &CsMatrix,
    target: Array,
    sources: &[usize],
    mut req: impl FnMut(usize, u32, u32) -> MemoryRequest,
) -> (Vec<crate::spmu::RequestVector>, Vec<u32>, u64) {
    let mut vectors = Vec::new();
    let mut dests = Vec::new();
    let mut bytes = 0;
    for &s in sources {
        let (idx, w) = adj.line(s);
        bytes += WORD * (2 * idx.len() + 2) as u64;
        for (ci, cw) in idx.chunks(LANES).zip(w.chunks(LANES)) {
            let reqs: Vec<_> = ci
                .iter()
                .zip(cw)
                .map(|(&d, &wt)| {
                    let mut r = req(s, d, wt);
                    r.address = mach.addr(target, d as usize);
                    r
                })
                .collect();
            vectors.extend(pack(&reqs));
            dests.extend_from_slice(ci);
        }
    }
    (vectors, dests, bytes)
}

/// Level-synchronous BFS; the first writer of a node's back-pointer wins.
pub fn run_bfs(
    cfg: &MachineConfig,
    g: &SparseMatrix,
    source: usize,
    tiling: &Tiling,
) -> Result<KernelResult<BfsOutput>, KernelError> {
    let n = check_square(g)?;
    check_source(n, source)?;
    let adj = compressed(g, MatrixFormat::Csc);
    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let ptr = mach.alloc(n)?;
    mach.store(mach.addr(ptr, source), source as u32 + 1);
    let mut fr = Frontier::new(n, tiling.assign(n, p)?);
    fr.set(source);
    while !fr.is_empty() {
        let mut ph = Phase::new(p);
        let sources = fr.take(&mach, &mut ph)?;
        let mut streams = Vec::with_capacity(p);
        let mut dests = Vec::with_capacity(p);
        for (q, ss) in sources.iter().enumerate() {
            let (v, d, bytes) = edge_requests(&mach, &adj, ptr, ss, |s, _, _| {
                MemoryRequest::rmw(0, RmwKind::WriteIfZero, s as u32 + 1, ReplySelect::OldValue)
            });
            ph.transfer(q, bytes, &mach.config().dram);
            streams.push(v);
            dests.push(d);
        }
        let replies = mach.exec(&streams, &mut ph)?;
        mach.commit(ph);
        for (rep, ds) in replies.iter().zip(&dests) {
            for (old, &d) in rep.iter().flatten().flatten().zip(ds) {
                if *old == 0 {
                    fr.set(d as usize);
                }
            }
        }
    }
    let mut reached = BitVector::zeros(n);
    let mut parent = vec![None; n];
    for (i, slot) in parent.iter_mut().enumerate() {
        let w = mach.load(mach.addr(ptr, i));
        if w != 0 {
            reached.set(i);
            if i != source {
                *slot = Some(w - 1);
            }
        }
    }
    Ok(mach.finish(BfsOutput { reached, parent }))
}

/// Frontier-driven Bellman-Ford. Distance and back-pointer share one
/// word, `dist << ptr_bits | ptr`, so a single min-and-report-changed RMW
/// updates both.
pub fn run_sssp(
    cfg: &MachineConfig,
    g: &SparseMatrix,
    source: usize,
    tiling: &Tiling,
) -> Result<KernelResult<SsspOutput>, KernelError> {
    let n = check_square(g)?;
    check_source(n, source)?;
    let adj = compressed(g, MatrixFormat::Csc);
    if adj.values.iter().any(|&w| (w as i32) < 0) {
        return Err(KernelError::Input("negative edge weight".into()));
    }
    let ptr_bits = usize::BITS - (n.max(2) - 1).leading_zeros();
    let dist_limit = (i32::MAX as u64) >> ptr_bits;
    let total: u64 = adj.values.iter().map(|&w| w as u64).sum();
    if total >= dist_limit {
        return Err(KernelError::Input(format!(
            "weight sum {total} does not fit in {} distance bits",
            31 - ptr_bits
        )));
    }
    let inf = i32::MAX as u32;
    let pack_word = |d: u32, s: usize| d << ptr_bits | s as u32;

    let mut cfg = cfg.clone();
    cfg.spmu.mode = OrderingMode::AddressOrdered;
    let mut mach = Machine::new(&cfg)?;
    let p = mach.partitions();
    let dist = mach.place((0..n).map(|i| if i == source { pack_word(0, source) } else { inf }))?;
    let mut fr = Frontier::new(n, tiling.assign(n, p)?);
    fr.set(source);
    while !fr.is_empty() {
        let mut ph = Phase::new(p);
        let sources = fr.take(&mach, &mut ph)?;
        let reads: Vec<_> = sources
            .iter()
            .map(|ss| {
                let reqs: Vec<_> = ss.iter().map(|&s| MemoryRequest::read(mach.addr(dist, s))).collect();
                pack(&reqs)
            })
            .collect();
        let known = mach.exec(&reads, &mut ph)?;
        let mut streams = Vec::with_capacity(p);
        let mut dests = Vec::with_capacity(p);
        for (q, (ss, rep)) in sources.iter().zip(&known).enumerate() {
            let ds: std::collections::HashMap<usize, u32> = ss
                .iter()
                .zip(rep.iter().flatten().flatten())
                .map(|(&s, &w)| (s, w >> ptr_bits))
                .collect();
            let (v, d, bytes) = edge_requests(&mach, &adj, dist, ss, |s, _, w| {
                MemoryRequest::rmw(0, RmwKind::Min, pack_word(ds[&s] + w, s), ReplySelect::ChangedFlag)
            });
            ph.transfer(q, bytes, &mach.config().dram);
            streams.push(v);
            dests.push(d);
        }
        let replies = mach.exec(&streams, &mut ph)?;
        mach.commit(ph);
        for (rep, ds) in replies.iter().zip(&dests) {
            for (changed, &d) in rep.iter().flatten().flatten().zip(ds) {
                if *changed != 0 {
                    fr.set(d as usize);
                }
            }
        }
    }
    let mask = (1u32 << ptr_bits) - 1;
    let (mut dv, mut pv) = (vec![None; n], vec![None; n]);
    for i in 0..n {
        let w = mach.load(mach.addr(dist, i));
        if w != inf {
            dv[i] = Some(w >> ptr_bits);
            if i != source {
                pv[i] = Some(w & mask);
            }
        }
    }
    Ok(mach.finish(SsspOutput { dist: dv, parent: pv }))
}
