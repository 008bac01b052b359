//! Off-chip memory: a fixed-latency, token-bucket DRAM channel, address
//! generators that keep bursts coherent for atomic read-modify-writes, and
//! read-only compressed tile loads.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{compress_stream, decompress_stream, DenseVector, FormatError, BURST_WORDS};
use crate::spmu::{execute, MemoryRequest};

pub const BURST_BYTES: usize = BURST_WORDS * 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DramConfig {
    pub bandwidth_gbps: f64,
    pub clock_ghz: f64,
    pub latency: u64,
    /// Bursts each address generator may track at once.
    pub tracker_capacity: usize,
}

impl Default for DramConfig {
    fn default() -> Self {
        Self::hbm2e()
    }
}

impl DramConfig {
    fn with_bandwidth(bandwidth_gbps: f64) -> Self {
        Self {
            bandwidth_gbps,
            clock_ghz: 1.6,
            latency: 100,
            tracker_capacity: 256,
        }
    }

    pub fn ddr4() -> Self {
        Self::with_bandwidth(68.0)
    }

    pub fn hbm2() -> Self {
        Self::with_bandwidth(900.0)
    }

    pub fn hbm2e() -> Self {
        Self::with_bandwidth(1800.0)
    }

    pub fn bytes_per_cycle(&self) -> f64 {
        self.bandwidth_gbps / self.clock_ghz
    }

    /// Cycles to stream `bytes` sequentially, including one latency.
    pub fn stream_cycles(&self, bytes: u64) -> u64 {
        if bytes == 0 {
            return 0;
        }
        self.latency + (bytes as f64 / self.bytes_per_cycle()).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), DramError> {
        if !(self.bandwidth_gbps > 0.0 && self.clock_ghz > 0.0) {
            return Err(DramError::Config("bandwidth and clock must be positive".into()));
        }
        if self.tracker_capacity == 0 {
            return Err(DramError::Config("tracker capacity must be nonzero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DramError {
    #[error("DRAM configuration: {0}")]
    Config(String),
    #[error("address {address} outside region {region:?} of address generator {ag}")]
    Routing { ag: usize, address: u32, region: Range<u32> },
    #[error("address {address} outside the {words}-word image")]
    Address { address: u32, words: usize },
    #[error("compressed load [{start}, {start}+{len}) is not aligned to {tile}-word tiles")]
    Alignment { start: usize, len: usize, tile: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramStats {
    pub cycles: u64,
    pub burst_reads: u64,
    pub burst_writes: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
enum TransferKind {
    Read,
    Write([u32; BURST_WORDS]),
}

#[derive(Debug, Clone)]
struct Transfer {
    ag: usize,
    burst: u32,
    kind: TransferKind,
}

/// One DRAM channel with a byte-addressable backing image.
#[derive(Debug, Clone)]
pub struct Dram {
    cfg: DramConfig,
    image: Vec<u8>,
    tokens: f64,
    queue: VecDeque<Transfer>,
    in_flight: VecDeque<(u64, Transfer)>,
    stats: DramStats,
}

impl Dram {
    pub fn new(cfg: DramConfig, words: usize) -> Result<Self, DramError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            image: vec![0; words.next_multiple_of(BURST_WORDS) * 4],
            tokens: 0.0,
            queue: VecDeque::new(),
            in_flight: VecDeque::new(),
            stats: DramStats::default(),
        })
    }

    pub fn config(&self) -> &DramConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &DramStats {
        &self.stats
    }

    pub fn words(&self) -> usize {
        self.image.len() / 4
    }

    pub fn read_word(&self, address: u32) -> Result<u32, DramError> {
        let i = self.check(address)?;
        Ok(u32::from_le_bytes(self.image[i..i + 4].try_into().unwrap()))
    }

    /// Backdoor write that bypasses timing, for loading inputs.
    pub fn write_word(&mut self, address: u32, value: u32) -> Result<(), DramError> {
        let i = self.check(address)?;
        self.image[i..i + 4].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    fn check(&self, address: u32) -> Result<usize, DramError> {
        let i = address as usize * 4;
        if i + 4 > self.image.len() {
            return Err(DramError::Address {
                address,
                words: self.words(),
            });
        }
        Ok(i)
    }

    fn burst_words(&self, burst: u32) -> [u32; BURST_WORDS] {
        let base = burst as usize * BURST_BYTES;
        std::array::from_fn(|k| {
            let i = base + 4 * k;
            u32::from_le_bytes(self.image[i..i + 4].try_into().unwrap())
        })
    }

    fn store_burst(&mut self, burst: u32, words: &[u32; BURST_WORDS]) {
        let base = burst as usize * BURST_BYTES;
        for (k, w) in words.iter().enumerate() {
            self.image[base + 4 * k..base + 4 * k + 4].copy_from_slice(&w.to_le_bytes());
        }
    }

    pub fn dump_image(&self, path: &Path) -> Result<(), DramError> {
        std::fs::File::create(path)?.write_all(&self.image)?;
        Ok(())
    }

    /// Replaces the image with a file's bytes, zero-padded to whole bursts.
    pub fn load_image(&mut self, path: &Path) -> Result<(), DramError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        bytes.resize(bytes.len().next_multiple_of(BURST_BYTES), 0);
        self.image = bytes;
        Ok(())
    }

    fn enqueue(&mut self, t: Transfer) {
        self.queue.push_back(t);
    }

    /// Advances one cycle; returns transfers whose latency elapsed.
    fn step(&mut self) -> Vec<Transfer> {
        let bpc = self.cfg.bytes_per_cycle();
        self.tokens = (self.tokens + bpc).min(bpc.max(BURST_BYTES as f64) + bpc);
        let now = self.stats.cycles;
        while self.tokens >= BURST_BYTES as f64 {
            let Some(t) = self.queue.pop_front() else { break };
            self.tokens -= BURST_BYTES as f64;
            self.stats.bytes += BURST_BYTES as u64;
            match &t.kind {
                TransferKind::Read => self.stats.burst_reads += 1,
                TransferKind::Write(_) => self.stats.burst_writes += 1,
            }
            self.in_flight.push_back((now + self.cfg.latency, t));
        }
        let mut done = Vec::new();
        while self.in_flight.front().is_some_and(|(at, _)| *at <= now) {
            let (_, t) = self.in_flight.pop_front().unwrap();
            match &t.kind {
                TransferKind::Read => {}
                TransferKind::Write(words) => self.store_burst(t.burst, words),
            }
            done.push(t);
        }
        self.stats.cycles += 1;
        done
    }

    fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.in_flight.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstState {
    Reading,
    Resident,
    WritingBack,
}

#[derive(Debug, Clone)]
struct TrackedBurst {
    state: BurstState,
    words: [u32; BURST_WORDS],
    dirty: bool,
    last_use: u64,
    pending: VecDeque<(u64, MemoryRequest)>,
}

/// Outstanding and resident bursts of one address generator.
#[derive(Debug, Clone, Default)]
pub struct BurstTracker {
    bursts: HashMap<u32, TrackedBurst>,
    clock: u64,
}

impl BurstTracker {
    pub fn state(&self, burst: u32) -> Option<BurstState> {
        self.bursts.get(&burst).map(|b| b.state)
    }

    pub fn len(&self) -> usize {
        self.bursts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bursts.is_empty()
    }

    /// Bursts counted against capacity; write-backs hold a buffer of
    /// their own.
    pub fn occupancy(&self) -> usize {
        self.bursts
            .values()
            .filter(|b| b.state != BurstState::WritingBack)
            .count()
    }

    fn lru_resident(&self) -> Option<u32> {
        self.bursts
            .iter()
            .filter(|(_, b)| b.state == BurstState::Resident)
            .min_by_key(|(_, b)| b.last_use)
            .map(|(&k, _)| k)
    }
}

/// A reply from an address generator, keyed by the caller's request id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgReply {
    pub id: u64,
    pub value: u32,
}

/// Address generator: owns a word range and applies requests to it one
/// per cycle, in arrival order per burst.
#[derive(Debug, Clone)]
pub struct AddressGenerator {
    region: Range<u32>,
    tracker: BurstTracker,
    input: VecDeque<(u64, MemoryRequest)>,
    replies: Vec<AgReply>,
    stall_cycles: u64,
}

impl AddressGenerator {
    pub fn tracker(&self) -> &BurstTracker {
        &self.tracker
    }

    pub fn region(&self) -> Range<u32> {
        self.region.clone()
    }

    pub fn stall_cycles(&self) -> u64 {
        self.stall_cycles
    }

    fn apply(replies: &mut Vec<AgReply>, b: &mut TrackedBurst, id: u64, r: &MemoryRequest) {
        let k = r.address as usize % BURST_WORDS;
        let (new, reply) = execute(r.op, r.reply, b.words[k], r.data);
        b.dirty |= new != b.words[k];
        b.words[k] = new;
        replies.push(AgReply { id, value: reply });
    }
}

/// DRAM channel shared by address generators with disjoint regions.
#[derive(Debug, Clone)]
pub struct MemorySystem {
    dram: Dram,
    ags: Vec<AddressGenerator>,
}

impl MemorySystem {
    /// One address generator per region.
    pub fn new(cfg: DramConfig, words: usize, regions: Vec<Range<u32>>) -> Result<Self, DramError> {
        for (i, a) in regions.iter().enumerate() {
            if a.end as usize > words.next_multiple_of(BURST_WORDS) {
                return Err(DramError::Config(format!("region {a:?} exceeds the image")));
            }
            if a.start as usize % BURST_WORDS != 0 || a.end as usize % BURST_WORDS != 0 {
                return Err(DramError::Config(format!("region {a:?} is not burst aligned")));
            }
            if regions[..i].iter().any(|b| a.start < b.end && b.start < a.end) {
                return Err(DramError::Config(format!("region {a:?} overlaps another")));
            }
        }
        let ags = regions
            .into_iter()
            .map(|region| AddressGenerator {
                region,
                tracker: BurstTracker::default(),
                input: VecDeque::new(),
                replies: Vec::new(),
                stall_cycles: 0,
            })
            .collect();
        Ok(Self {
            dram: Dram::new(cfg, words)?,
            ags,
        })
    }

    pub fn dram(&self) -> &Dram {
        &self.dram
    }

    pub fn dram_mut(&mut self) -> &mut Dram {
        &mut self.dram
    }

    pub fn ag(&self, i: usize) -> &AddressGenerator {
        &self.ags[i]
    }

    pub fn submit(&mut self, ag: usize, id: u64, req: MemoryRequest) -> Result<(), DramError> {
        let g = &mut self.ags[ag];
        if !g.region.contains(&req.address) {
            return Err(DramError::Routing {
                ag,
                address: req.address,
                region: g.region.clone(),
            });
        }
        g.input.push_back((id, req));
        Ok(())
    }

    pub fn drain_replies(&mut self, ag: usize) -> Vec<AgReply> {
        std::mem::take(&mut self.ags[ag].replies)
    }

    pub fn step(&mut self) {
        for t in self.dram.step() {
            self.complete(t);
        }
        let capacity = self.dram.cfg.tracker_capacity;
        for i in 0..self.ags.len() {
            let Some(&(id, req)) = self.ags[i].input.front() else { continue };
            let burst = req.address / BURST_WORDS as u32;
            if self.accept(i, burst, id, req, capacity) {
                self.ags[i].input.pop_front();
            } else {
                self.ags[i].stall_cycles += 1;
            }
        }
    }

    fn accept(&mut self, i: usize, burst: u32, id: u64, req: MemoryRequest, capacity: usize) -> bool {
        let g = &mut self.ags[i];
        g.tracker.clock += 1;
        let now = g.tracker.clock;
        if let Some(b) = g.tracker.bursts.get_mut(&burst) {
            b.last_use = now;
            match b.state {
                BurstState::Resident => AddressGenerator::apply(&mut g.replies, b, id, &req),
                BurstState::Reading | BurstState::WritingBack => b.pending.push_back((id, req)),
            }
            return true;
        }
        if g.tracker.occupancy() >= capacity {
            let Some(victim) = g.tracker.lru_resident() else {
                return false;
            };
            self.evict(i, victim);
        }
        let g = &mut self.ags[i];
        let mut pending = VecDeque::new();
        pending.push_back((id, req));
        g.tracker.bursts.insert(
            burst,
            TrackedBurst {
                state: BurstState::Reading,
                words: [0; BURST_WORDS],
                dirty: false,
                last_use: now,
                pending,
            },
        );
        self.dram.enqueue(Transfer {
            ag: i,
            burst,
            kind: TransferKind::Read,
        });
        true
    }

    fn evict(&mut self, i: usize, burst: u32) {
        let g = &mut self.ags[i];
        let b = g.tracker.bursts.get_mut(&burst).unwrap();
        if b.dirty {
            b.state = BurstState::WritingBack;
            let words = b.words;
            self.dram.enqueue(Transfer {
                ag: i,
                burst,
                kind: TransferKind::Write(words),
            });
        } else {
            g.tracker.bursts.remove(&burst);
        }
    }

    fn complete(&mut self, t: Transfer) {
        let g = &mut self.ags[t.ag];
        match t.kind {
            TransferKind::Read => {
                let words = self.dram.burst_words(t.burst);
                let b = g.tracker.bursts.get_mut(&t.burst).unwrap();
                b.words = words;
                b.state = BurstState::Resident;
                while let Some((id, r)) = b.pending.pop_front() {
                    AddressGenerator::apply(&mut g.replies, b, id, &r);
                }
            }
            TransferKind::Write(_) => {
                let b = g.tracker.bursts.get_mut(&t.burst).unwrap();
                if b.pending.is_empty() {
                    g.tracker.bursts.remove(&t.burst);
                } else {
                    // a request arrived during write-back: fetch it again
                    b.state = BurstState::Reading;
                    b.dirty = false;
                    self.dram.enqueue(Transfer {
                        ag: t.ag,
                        burst: t.burst,
                        kind: TransferKind::Read,
                    });
                }
            }
        }
    }

    /// Writes back every dirty burst; call at the end of a stream.
    pub fn flush(&mut self) {
        for i in 0..self.ags.len() {
            let resident: Vec<u32> = self.ags[i]
                .tracker
                .bursts
                .iter()
                .filter(|(_, b)| b.state == BurstState::Resident)
                .map(|(&k, _)| k)
                .collect();
            for burst in resident {
                self.evict(i, burst);
            }
        }
    }

    pub fn is_idle(&self) -> bool {
        self.dram.is_idle()
            && self
                .ags
                .iter()
                .all(|g| g.input.is_empty() && g.tracker.bursts.values().all(|b| b.state == BurstState::Resident))
    }

    /// Steps until all input is consumed, flushes, and steps until the
    /// channel drains. Returns the cycles taken.
    pub fn run_to_completion(&mut self) -> u64 {
        let start = self.dram.stats.cycles;
        while !self.is_idle() {
            self.step();
        }
        self.flush();
        while !self.is_idle() || self.ags.iter().any(|g| !g.tracker.is_empty()) {
            self.step();
            self.flush();
        }
        self.dram.stats.cycles - start
    }
}

/// A dense array stored as independently compressed tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedArray {
    len: usize,
    tile_words: usize,
    tiles: Vec<Vec<u8>>,
}

impl CompressedArray {
    /// Compresses `words` in tiles of `tile_words` (a multiple of 16).
    pub fn new(words: &[u32], tile_words: usize) -> Result<Self, DramError> {
        if tile_words == 0 || tile_words % BURST_WORDS != 0 {
            return Err(DramError::Config(format!(
                "tile of {tile_words} words is not a whole number of bursts"
            )));
        }
        Ok(Self {
            len: words.len(),
            tile_words,
            tiles: words.chunks(tile_words).map(compress_stream).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tile_words(&self) -> usize {
        self.tile_words
    }

    pub fn compressed_bytes(&self) -> usize {
        self.tiles.iter().map(Vec::len).sum()
    }

    pub fn raw_bytes(&self) -> usize {
        self.len.next_multiple_of(BURST_WORDS) * 4
    }
}

/// Words and traffic of one compressed load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedLoad {
    pub values: DenseVector,
    pub bytes: usize,
    pub raw_bytes: usize,
}

/// Loads `len` words starting at `start`. The range must begin on a tile
/// boundary and end on one or at the end of the array.
pub fn compressed_load(a: &CompressedArray, start: usize, len: usize) -> Result<CompressedLoad, DramError> {
    let end = start + len;
    let t = a.tile_words;
    if start % t != 0 || (end % t != 0 && end != a.len) || end > a.len {
        return Err(DramError::Alignment { start, len, tile: t });
    }
    let mut values = Vec::with_capacity(len);
    let mut bytes = 0;
    for tile in &a.tiles[start / t..end.div_ceil(t)] {
        bytes += tile.len();
        values.extend(decompress_stream(tile)?);
    }
    values.truncate(len);
    Ok(CompressedLoad {
        values: DenseVector::new(values),
        bytes,
        raw_bytes: len.next_multiple_of(BURST_WORDS) * 4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spmu::{ReplySelect, RmwKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn add(a: u32, d: u32) -> MemoryRequest {
        MemoryRequest::rmw(a, RmwKind::AddInt, d, ReplySelect::OldValue)
    }

    fn system(cfg: DramConfig) -> MemorySystem {
        MemorySystem::new(cfg, 1 << 16, vec![0..1 << 15, 1 << 15..1 << 16]).unwrap()
    }

    #[test]
    fn sixteen_adds_to_one_burst_coalesce() {
        let mut m = system(DramConfig::default());
        for k in 0..16 {
            m.submit(0, k, add(32 + k as u32, 1)).unwrap();
        }
        m.run_to_completion();
        assert_eq!(m.dram().stats().burst_reads, 1);
        assert_eq!(m.dram().stats().burst_writes, 1);
        assert_eq!(m.drain_replies(0).len(), 16);
        assert_eq!(m.dram().read_word(40).unwrap(), 1);
    }

    #[test]
    fn read_only_stream_never_writes() {
        let mut m = system(DramConfig::default());
        for b in 0..20u32 {
            m.submit(0, b as u64, MemoryRequest::read(b * 16)).unwrap();
        }
        m.run_to_completion();
        assert_eq!(m.dram().stats().burst_reads, 20);
        assert_eq!(m.dram().stats().burst_writes, 0);
    }

    #[test]
    fn wrong_region_is_a_routing_error() {
        let mut m = system(DramConfig::default());
        assert!(matches!(m.submit(0, 0, add(1 << 15, 1)), Err(DramError::Routing { .. })));
    }

    #[test]
    fn read_during_write_back_sees_new_value() {
        let cfg = DramConfig {
            tracker_capacity: 1,
            ..Default::default()
        };
        let mut m = system(cfg);
        m.submit(0, 0, add(0, 5)).unwrap();
        // the second burst evicts the first while it is dirty
        m.submit(0, 1, add(16, 1)).unwrap();
        m.submit(0, 2, MemoryRequest::read(0)).unwrap();
        let mut saw_writeback = false;
        for _ in 0..1000 {
            m.step();
            saw_writeback |= m.ag(0).tracker().state(0) == Some(BurstState::WritingBack);
        }
        m.run_to_completion();
        assert!(saw_writeback);
        let replies = m.drain_replies(0);
        let last = replies.iter().find(|r| r.id == 2).unwrap();
        assert_eq!(last.value, 5);
    }

    #[test]
    fn bandwidth_is_respected() {
        for cfg in [DramConfig::ddr4(), DramConfig::hbm2()] {
            let bpc = cfg.bytes_per_cycle();
            let mut m = system(cfg);
            for b in 0..2000u32 {
                let a = b * 32;
                m.submit((a >> 15) as usize, b as u64, add(a, 1)).unwrap();
            }
            let cycles = m.run_to_completion();
            let s = *m.dram().stats();
            assert!(s.bytes as f64 <= bpc * cycles as f64 + 2.0 * BURST_BYTES as f64);
        }
    }

    #[test]
    fn dump_and_load_round_trip() {
        let mut d = Dram::new(DramConfig::default(), 64).unwrap();
        d.write_word(7, 0xDEAD_BEEF).unwrap();
        let dir = std::env::temp_dir().join(format!("capstan-dram-{}", std::process::id()));
        d.dump_image(&dir).unwrap();
        let mut e = Dram::new(DramConfig::default(), 0).unwrap();
        e.load_image(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(e.read_word(7).unwrap(), 0xDEAD_BEEF);
        assert_eq!(e.words(), 64);
    }

    #[test]
    fn compressed_pointer_tile_is_small() {
        // source-node pointers of an edge list: long runs of equal values
        let ptrs: Vec<u32> = (0..1024u32).map(|e| 50_000 + e / 7).collect();
        let a = CompressedArray::new(&ptrs, 256).unwrap();
        let l = compressed_load(&a, 0, 1024).unwrap();
        assert_eq!(l.values.values, ptrs);
        assert!(l.raw_bytes >= 3 * l.bytes, "{} vs {}", l.raw_bytes, l.bytes);
    }

    #[test]
    fn random_tile_costs_header_overhead() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<u32> = (0..256).map(|_| rng.gen::<u32>() | 1 << 31).collect();
        let a = CompressedArray::new(&w, 256).unwrap();
        let l = compressed_load(&a, 0, 256).unwrap();
        assert!((l.bytes as f64 / l.raw_bytes as f64 - 69.0 / 64.0).abs() < 0.01);
    }

    #[test]
    fn alignment_and_empty() {
        let a = CompressedArray::new(&[1; 600], 256).unwrap();
        assert!(matches!(compressed_load(&a, 16, 256), Err(DramError::Alignment { .. })));
        assert!(matches!(compressed_load(&a, 0, 100), Err(DramError::Alignment { .. })));
        assert_eq!(compressed_load(&a, 512, 88).unwrap().values.len(), 88);
        let e = CompressedArray::new(&[], 256).unwrap();
        assert!(compressed_load(&e, 0, 0).unwrap().values.is_empty());
    }

    proptest! {
        #[test]
        fn random_rmws_match_sequential(
            ops in prop::collection::vec((0u32..4096, 0u32..100, prop::bool::ANY), 1..400),
            cap in 1usize..8,
        ) {
            let cfg = DramConfig { tracker_capacity: cap, latency: 7, ..DramConfig::ddr4() };
            let mut m = MemorySystem::new(cfg, 4096, vec![0..2048, 2048..4096]).unwrap();
            let mut reference = vec![0u32; 4096];
            let mut expect = HashMap::new();
            for (id, &(a, d, is_min)) in ops.iter().enumerate() {
                let r = if is_min {
                    MemoryRequest::rmw(a, RmwKind::Max, d, ReplySelect::OldValue)
                } else {
                    add(a, d)
                };
                let (new, reply) = execute(r.op, r.reply, reference[a as usize], r.data);
                reference[a as usize] = new;
                expect.insert(id as u64, reply);
                m.submit((a / 2048) as usize, id as u64, r).unwrap();
            }
            m.run_to_completion();
            for a in 0..4096u32 {
                prop_assert_eq!(m.dram().read_word(a).unwrap(), reference[a as usize]);
            }
            let mut n = 0;
            for ag in 0..2 {
                for r in m.drain_replies(ag) {
                    prop_assert_eq!(r.value, expect[&r.id]);
                    n += 1;
                }
            }
            prop_assert_eq!(n, ops.len());
        }

        #[test]
        fn unbounded_tracker_reads_each_burst_once(addrs in prop::collection::vec(0u32..2048, 1..300)) {
            let mut m = MemorySystem::new(DramConfig::default(), 2048, vec![0..2048]).unwrap();
            for (i, &a) in addrs.iter().enumerate() {
                m.submit(0, i as u64, add(a, 1)).unwrap();
            }
            m.run_to_completion();
            let distinct: std::collections::HashSet<u32> = addrs.iter().map(|a| a / 16).collect();
            prop_assert_eq!(m.dram().stats().burst_reads, distinct.len() as u64);
        }
    }
}
