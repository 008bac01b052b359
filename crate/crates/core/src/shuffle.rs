//! Butterfly shuffle network between compute tiles and memory partitions.
//!
//! A network with `n` endpoints has `log2(n)` stages. Stage `s` pairs rows
//! that differ in bit `k-1-s` and partitions requests on the matching
//! address bit, most significant partition bit first, so that after the
//! last stage every request sits at the endpoint owning its partition.
//! Each merge unit records per-lane decisions in a bounded FIFO; replies
//! retrace the recorded permutations back to their source lanes.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spmu::{MemoryRequest, ReplySelect, RequestVector, RmwKind};

/// How far a merge unit may move a request from its input lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MergeFlex {
    /// Requests keep their lane.
    Mrg0,
    /// Requests may shift one lane left or right.
    Mrg1,
    /// Any free output lane.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShuffleConfig {
    pub endpoints: usize,
    pub lanes: usize,
    /// Lowest address bit of the partition number.
    pub partition_shift: u32,
    pub merge: MergeFlex,
    pub bypass: bool,
    /// Disables the center links, leaving two independent halves.
    pub split: bool,
    pub fifo_depth: usize,
}

impl Default for ShuffleConfig {
    fn default() -> Self {
        Self {
            endpoints: 4,
            lanes: 16,
            partition_shift: 16,
            merge: MergeFlex::Mrg1,
            bypass: true,
            split: false,
            fifo_depth: 64,
        }
    }
}

impl ShuffleConfig {
    pub fn stages(&self) -> usize {
        self.endpoints.trailing_zeros() as usize
    }

    pub fn partition_of(&self, address: u32) -> usize {
        (address >> self.partition_shift) as usize & (self.endpoints - 1)
    }

    /// Address bit tested by stage `s`.
    pub fn stage_bit(&self, s: usize) -> u32 {
        self.partition_shift + (self.stages() - 1 - s) as u32
    }

    pub fn validate(&self) -> Result<(), ShuffleError> {
        if !self.endpoints.is_power_of_two() {
            return Err(ShuffleError::Config(format!(
                "endpoint count {} is not a power of two",
                self.endpoints
            )));
        }
        if self.lanes == 0 || self.lanes > 64 {
            return Err(ShuffleError::Config(format!("unsupported lane count {}", self.lanes)));
        }
        if self.fifo_depth == 0 {
            return Err(ShuffleError::Config("decision FIFO depth must be nonzero".into()));
        }
        if self.split && self.endpoints < 2 {
            return Err(ShuffleError::Config("split needs at least two endpoints".into()));
        }
        if self.partition_shift as usize + self.stages() > 32 {
            return Err(ShuffleError::Config("partition bits exceed the address".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShuffleError {
    #[error("shuffle configuration: {0}")]
    Config(String),
    #[error("request for partition {partition} cannot leave the half containing endpoint {endpoint}")]
    Routing { endpoint: usize, partition: usize },
    #[error("vector has {got} lanes, network has {expected}")]
    Width { expected: usize, got: usize },
    #[error("reply {got} at endpoint {endpoint} does not match outstanding delivery {expected:?}")]
    Protocol {
        endpoint: usize,
        expected: Option<u64>,
        got: u64,
    },
    #[error("endpoint {0} out of range")]
    Endpoint(usize),
}

/// Where one output lane of a merge unit came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneDecision {
    /// 0 for the `u` input, 1 for `v`.
    pub source: u8,
    pub from_lane: u8,
}

impl LaneDecision {
    pub fn shift(&self, to_lane: usize) -> i32 {
        to_lane as i32 - self.from_lane as i32
    }
}

/// Output of one merge step over a switch's two inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutcome {
    pub out: [RequestVector; 2],
    pub decisions: [Vec<Option<LaneDecision>>; 2],
    pub stalled: [bool; 2],
}

fn candidates(flex: MergeFlex, lane: usize, lanes: usize) -> Vec<usize> {
    match flex {
        MergeFlex::Mrg0 => vec![lane],
        MergeFlex::Mrg1 => [Some(lane), lane.checked_sub(1), Some(lane + 1)]
            .into_iter()
            .flatten()
            .filter(|&l| l < lanes)
            .collect(),
        MergeFlex::Full => {
            let mut c = vec![lane];
            c.extend((0..lanes).filter(|&l| l != lane));
            c
        }
    }
}

/// Partitions `u` and `v` on address bit `bit` and merges each side.
///
/// Inputs are placed whole, the `first` input before the other, lanes
/// left to right, each request taking the first free lane among its
/// candidates. An input with any unplaceable request stalls entirely.
pub fn merge_step(
    u: &RequestVector,
    v: &RequestVector,
    bit: u32,
    flex: MergeFlex,
    first: usize,
) -> MergeOutcome {
    let lanes = u.width();
    let mut out = [RequestVector::empty(lanes), RequestVector::empty(lanes)];
    let mut decisions = [vec![None; lanes], vec![None; lanes]];
    let mut stalled = [false; 2];
    let inputs = [u, v];
    for port in [first, 1 - first] {
        let mut trial = out.clone();
        let mut trial_dec = decisions.clone();
        let mut ok = true;
        for (lane, r) in inputs[port].iter_valid() {
            let side = (r.address >> bit & 1) as usize;
            match candidates(flex, lane, lanes)
                .into_iter()
                .find(|&l| trial[side].lanes[l].is_none())
            {
                Some(l) => {
                    trial[side].lanes[l] = Some(*r);
                    trial_dec[side][l] = Some(LaneDecision {
                        source: port as u8,
                        from_lane: lane as u8,
                    });
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            out = trial;
            decisions = trial_dec;
        } else {
            stalled[port] = true;
        }
    }
    MergeOutcome {
        out,
        decisions,
        stalled,
    }
}

#[derive(Debug, Clone)]
struct Flit {
    vector: RequestVector,
}

#[derive(Debug, Clone)]
struct SplitRecord {
    /// Source tag, kept only at stage 0.
    tag: u64,
    masks: [u64; 2],
    parts: [Option<Vec<Option<u32>>>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Path {
    Bypass { tag: u64 },
    Network,
}

/// A vector handed to an endpoint. Replies must come back with the same
/// `seq`, in delivery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub seq: u64,
    pub vector: RequestVector,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleStats {
    pub cycles: u64,
    pub injected: u64,
    pub delivered: u64,
    pub bypassed: u64,
    pub merge_stalls: u64,
    pub fifo_stalls: u64,
}

impl ShuffleStats {
    /// Delivered requests per cycle.
    pub fn throughput(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.delivered as f64 / self.cycles as f64
        }
    }
}

/// Cycle-level butterfly network.
#[derive(Debug, Clone)]
pub struct ShuffleNetwork {
    cfg: ShuffleConfig,
    slots: Vec<Vec<Option<Flit>>>,
    fifos: Vec<Vec<VecDeque<Vec<Option<LaneDecision>>>>>,
    splits: Vec<Vec<VecDeque<SplitRecord>>>,
    pending_tags: Vec<VecDeque<u64>>,
    favor: Vec<Vec<usize>>,
    deliveries: Vec<VecDeque<Delivery>>,
    outstanding: Vec<VecDeque<(u64, Path)>>,
    next_seq: Vec<u64>,
    replies: Vec<VecDeque<(u64, Vec<Option<u32>>)>>,
    stats: ShuffleStats,
}

impl ShuffleNetwork {
    pub fn new(cfg: ShuffleConfig) -> Result<Self, ShuffleError> {
        cfg.validate()?;
        let n = cfg.endpoints;
        let k = cfg.stages();
        Ok(Self {
            slots: vec![vec![None; n]; k.max(1)],
            fifos: vec![vec![VecDeque::new(); n]; k],
            splits: vec![vec![VecDeque::new(); n]; k],
            pending_tags: vec![VecDeque::new(); n],
            favor: vec![vec![0; n]; k],
            deliveries: vec![VecDeque::new(); n],
            outstanding: vec![VecDeque::new(); n],
            next_seq: vec![0; n],
            replies: vec![VecDeque::new(); n],
            stats: ShuffleStats::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &ShuffleConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ShuffleStats {
        &self.stats
    }

    fn check_endpoint(&self, e: usize) -> Result<(), ShuffleError> {
        if e < self.cfg.endpoints {
            Ok(())
        } else {
            Err(ShuffleError::Endpoint(e))
        }
    }

    fn deliver(&mut self, endpoint: usize, vector: RequestVector, path: Path) {
        let seq = self.next_seq[endpoint];
        self.next_seq[endpoint] += 1;
        self.stats.delivered += vector.valid_count() as u64;
        self.outstanding[endpoint].push_back((seq, path));
        self.deliveries[endpoint].push_back(Delivery { seq, vector });
    }

    /// True if `source` can accept a vector this cycle.
    pub fn can_inject(&self, source: usize) -> bool {
        self.cfg.stages() == 0 || self.slots[0][source].is_none()
    }

    /// Offers a vector from `source`. Returns `Ok(false)` under
    /// back-pressure; the caller retries later.
    pub fn try_inject(&mut self, source: usize, tag: u64, v: RequestVector) -> Result<bool, ShuffleError> {
        self.check_endpoint(source)?;
        if v.width() != self.cfg.lanes {
            return Err(ShuffleError::Width {
                expected: self.cfg.lanes,
                got: v.width(),
            });
        }
        if self.cfg.split {
            let top = self.cfg.endpoints / 2;
            if let Some((_, r)) = v
                .iter_valid()
                .find(|(_, r)| self.cfg.partition_of(r.address) & top != source & top)
            {
                return Err(ShuffleError::Routing {
                    endpoint: source,
                    partition: self.cfg.partition_of(r.address),
                });
            }
        }
        if v.is_empty() {
            self.replies[source].push_back((tag, vec![None; self.cfg.lanes]));
            return Ok(true);
        }
        let local = v
            .iter_valid()
            .all(|(_, r)| self.cfg.partition_of(r.address) == source);
        if (self.cfg.bypass && local) || self.cfg.stages() == 0 {
            self.stats.injected += v.valid_count() as u64;
            self.stats.bypassed += v.valid_count() as u64;
            self.deliver(source, v, Path::Bypass { tag });
            return Ok(true);
        }
        if self.slots[0][source].is_some() {
            return Ok(false);
        }
        self.stats.injected += v.valid_count() as u64;
        self.pending_tags[source].push_back(tag);
        self.slots[0][source] = Some(Flit { vector: v });
        Ok(true)
    }

    /// Requests inside the network, not yet delivered.
    pub fn in_flight(&self) -> u64 {
        self.slots
            .iter()
            .flatten()
            .flatten()
            .map(|f| f.vector.valid_count() as u64)
            .sum()
    }

    /// Advances every stage by one cycle, last stage first.
    pub fn step(&mut self) {
        let k = self.cfg.stages();
        for s in (0..k).rev() {
            let half = 1usize << (k - 1 - s);
            for r0 in (0..self.cfg.endpoints).filter(|r| r & half == 0) {
                self.switch(s, r0, r0 | half);
            }
        }
        self.stats.cycles += 1;
    }

    fn output_free(&self, s: usize, row: usize) -> bool {
        s + 1 == self.cfg.stages() || self.slots[s + 1][row].is_none()
    }

    fn switch(&mut self, s: usize, r0: usize, r1: usize) {
        let lanes = self.cfg.lanes;
        let empty = RequestVector::empty(lanes);
        let u = self.slots[s][r0].as_ref().map(|f| &f.vector);
        let v = self.slots[s][r1].as_ref().map(|f| &f.vector);
        if u.is_none() && v.is_none() {
            return;
        }
        let bit = self.cfg.stage_bit(s);
        let first = self.favor[s][r0];
        let m = merge_step(u.unwrap_or(&empty), v.unwrap_or(&empty), bit, self.cfg.merge, first);
        let rows = [r0, r1];
        for side in 0..2 {
            if m.out[side].is_empty() {
                continue;
            }
            if !self.output_free(s, rows[side]) || self.fifos[s][rows[side]].len() >= self.cfg.fifo_depth {
                self.stats.fifo_stalls += 1;
                return;
            }
        }
        // record how each moving input split across the two sides
        for port in 0..2 {
            if m.stalled[port] {
                continue;
            }
            let Some(flit) = self.slots[s][rows[port]].take() else {
                continue;
            };
            let mut masks = [0u64; 2];
            for (lane, r) in flit.vector.iter_valid() {
                masks[(r.address >> bit & 1) as usize] |= 1 << lane;
            }
            let tag = if s == 0 {
                self.pending_tags[rows[port]].pop_front().unwrap_or_default()
            } else {
                0
            };
            self.splits[s][rows[port]].push_back(SplitRecord {
                tag,
                masks,
                parts: [None, None],
            });
        }
        if m.stalled.iter().any(|&x| x) {
            self.stats.merge_stalls += 1;
            self.favor[s][r0] = if m.stalled[0] { 0 } else { 1 };
        }
        let [out0, out1] = m.out;
        let [d0, d1] = m.decisions;
        for (side, (vec, dec)) in [(out0, d0), (out1, d1)].into_iter().enumerate() {
            if vec.is_empty() {
                continue;
            }
            let row = rows[side];
            self.fifos[s][row].push_back(dec);
            if s + 1 == self.cfg.stages() {
                self.deliver(row, vec, Path::Network);
            } else {
                self.slots[s + 1][row] = Some(Flit { vector: vec });
            }
        }
    }

    /// Vectors delivered to `endpoint` since the last call.
    pub fn drain_deliveries(&mut self, endpoint: usize) -> Vec<Delivery> {
        self.deliveries[endpoint].drain(..).collect()
    }

    /// Sends an endpoint's replies for delivery `seq` back toward their
    /// sources. Deliveries must be answered in order.
    pub fn return_reply(&mut self, endpoint: usize, seq: u64, replies: Vec<Option<u32>>) -> Result<(), ShuffleError> {
        self.check_endpoint(endpoint)?;
        let expected = self.outstanding[endpoint].front().map(|x| x.0);
        if expected != Some(seq) {
            return Err(ShuffleError::Protocol {
                endpoint,
                expected,
                got: seq,
            });
        }
        let (_, path) = self.outstanding[endpoint].pop_front().unwrap();
        match path {
            Path::Bypass { tag } => self.replies[endpoint].push_back((tag, replies)),
            Path::Network => self.ascend(self.cfg.stages() - 1, endpoint, replies),
        }
        Ok(())
    }

    /// Undoes merge unit (`s`, `row`) for its oldest recorded vector.
    fn ascend(&mut self, s: usize, row: usize, reply: Vec<Option<u32>>) {
        let dec = self.fifos[s][row]
            .pop_front()
            .expect("reply without a recorded merge decision");
        let half = 1usize << (self.cfg.stages() - 1 - s);
        let base = row & !half;
        let side = usize::from(row & half != 0);
        let mut parts: [Option<Vec<Option<u32>>>; 2] = [None, None];
        for (lane, d) in dec.iter().enumerate() {
            if let Some(d) = d {
                let p = parts[d.source as usize].get_or_insert_with(|| vec![None; self.cfg.lanes]);
                p[d.from_lane as usize] = reply[lane];
            }
        }
        for (port, part) in parts.into_iter().enumerate() {
            if let Some(part) = part {
                self.collect(s, base | (port * half), side, part);
            }
        }
    }

    /// Files a partial reply at input (`s`, `row`) and forwards every
    /// completed vector at the head of that input's record.
    fn collect(&mut self, s: usize, row: usize, side: usize, part: Vec<Option<u32>>) {
        let q = &mut self.splits[s][row];
        let rec = q
            .iter_mut()
            .find(|r| r.masks[side] != 0 && r.parts[side].is_none())
            .expect("partial reply without a recorded split");
        rec.parts[side] = Some(part);
        while let Some(rec) = self.splits[s][row].front() {
            let done = (0..2).all(|x| rec.masks[x] == 0 || rec.parts[x].is_some());
            if !done {
                break;
            }
            let rec = self.splits[s][row].pop_front().unwrap();
            let mut whole = vec![None; self.cfg.lanes];
            for x in 0..2 {
                if let Some(p) = &rec.parts[x] {
                    for lane in 0..self.cfg.lanes {
                        if rec.masks[x] >> lane & 1 == 1 {
                            whole[lane] = p[lane];
                        }
                    }
                }
            }
            if s == 0 {
                self.replies[row].push_back((rec.tag, whole));
            } else {
                self.ascend(s - 1, row, whole);
            }
        }
    }

    /// Replies that have returned to `source`, with their injection tags.
    pub fn drain_replies(&mut self, source: usize) -> Vec<(u64, Vec<Option<u32>>)> {
        self.replies[source].drain(..).collect()
    }

    /// True when nothing is in the network, queued at an endpoint, or
    /// awaiting a reply.
    pub fn is_idle(&self) -> bool {
        self.in_flight() == 0
            && self.deliveries.iter().all(VecDeque::is_empty)
            && self.outstanding.iter().all(VecDeque::is_empty)
    }
}

/// Random cross-partition traffic: every source offers a fully populated
/// vector each cycle; endpoints answer immediately. Returns counters for
/// `cycles` cycles.
pub fn measure_throughput(cfg: &ShuffleConfig, cycles: u64, seed: u64) -> Result<ShuffleStats, ShuffleError> {
    let mut net = ShuffleNetwork::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.endpoints;
    let span = (n as u64) << cfg.partition_shift;
    let mut waiting: Vec<Option<RequestVector>> = vec![None; n];
    let mut tag = 0;
    for _ in 0..cycles {
        for (src, w) in waiting.iter_mut().enumerate() {
            let v = w.take().unwrap_or_else(|| {
                let lanes = (0..cfg.lanes)
                    .map(|_| {
                        let a = rng.gen_range(0..span) as u32;
                        Some(MemoryRequest::rmw(a, RmwKind::AddInt, 1, ReplySelect::OldValue))
                    })
                    .collect();
                RequestVector::new(lanes)
            });
            if !net.try_inject(src, tag, v.clone())? {
                *w = Some(v);
            } else {
                tag += 1;
            }
        }
        net.step();
        for e in 0..n {
            for d in net.drain_deliveries(e) {
                let replies = d.vector.lanes.iter().map(|l| l.map(|r| r.address)).collect();
                net.return_reply(e, d.seq, replies)?;
            }
            net.drain_replies(e);
        }
    }
    Ok(*net.stats())
}
