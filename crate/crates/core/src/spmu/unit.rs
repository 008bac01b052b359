use std::collections::VecDeque;

use super::alloc::{allocate, GrantSet};
use super::bloom::CountingBloom;
use super::config::{OrderingMode, SpmuConfig};
use super::hash::bank_of;
use super::order::{elide_reads, enqueue_ordered, Admission};
use super::request::{MemoryRequest, RequestVector};
use super::rmw::execute;
use super::SpmuError;
use crate::stats::{CycleRecord, SimStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntryState {
    Waiting,
    Issued,
    Done,
}

#[derive(Debug, Clone)]
struct Entry {
    req: MemoryRequest,
    bank: usize,
    state: EntryState,
    reply: u32,
}

#[derive(Debug, Clone)]
struct QueuedVector {
    tag: u64,
    entries: Vec<Option<Entry>>,
    elided: Vec<Option<usize>>,
    outstanding: usize,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    id: u64,
    lane: usize,
}

/// A request vector whose lanes have all completed.
///
/// A vector split by address ordering completes as two parts with the same
/// tag; each part only carries replies for its own lanes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedVector {
    pub tag: u64,
    pub replies: Vec<Option<u32>>,
}

/// What happened in one cycle.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub completed: Vec<CompletedVector>,
    pub grants: GrantSet,
    /// True if a waiting input vector could not enter the queue.
    pub enqueue_blocked: bool,
}

/// A sparse memory unit: banked scratchpad, scheduled issue queue and
/// per-bank read-modify-write pipelines.
///
/// Each cycle runs, in order: the write stage of requests granted two
/// cycles ago, the read-and-execute stage of requests granted last cycle,
/// enqueue of at most one input vector, allocation, and in-order dequeue of
/// finished head vectors.
#[derive(Debug, Clone)]
pub struct Spmu {
    cfg: SpmuConfig,
    windows: Vec<usize>,
    memory: Vec<u32>,
    inbox: VecDeque<(u64, RequestVector)>,
    queue: VecDeque<QueuedVector>,
    head_id: u64,
    read_stage: Vec<InFlight>,
    write_stage: Vec<InFlight>,
    filter: CountingBloom,
    stats: SimStats,
    log: Option<Vec<CycleRecord>>,
}

impl Spmu {
    pub fn new(cfg: SpmuConfig) -> Result<Self, SpmuError> {
        cfg.validate()?;
        Ok(Self {
            windows: cfg.priority_windows(),
            memory: vec![0; cfg.capacity_words()],
            inbox: VecDeque::new(),
            queue: VecDeque::with_capacity(cfg.depth),
            head_id: 0,
            read_stage: Vec::new(),
            write_stage: Vec::new(),
            filter: CountingBloom::new(cfg.bloom_bits, cfg.bloom_hashes),
            stats: SimStats::new(cfg.banks),
            log: None,
            cfg,
        })
    }

    pub fn config(&self) -> &SpmuConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    /// Starts appending one [`CycleRecord`] per cycle.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[CycleRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn memory(&self) -> &[u32] {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut [u32] {
        &mut self.memory
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox.len()
    }

    /// True when nothing is queued, in flight or waiting to enter.
    pub fn is_idle(&self) -> bool {
        self.inbox.is_empty()
            && self.queue.is_empty()
            && self.read_stage.is_empty()
            && self.write_stage.is_empty()
    }

    /// Appends a vector to the input stream.
    pub fn submit(&mut self, tag: u64, v: RequestVector) -> Result<(), SpmuError> {
        if v.width() != self.cfg.lanes {
            return Err(SpmuError::Width {
                expected: self.cfg.lanes,
                got: v.width(),
            });
        }
        if let Some((_, r)) = v
            .iter_valid()
            .find(|(_, r)| r.address as usize >= self.memory.len())
        {
            return Err(SpmuError::Address {
                address: r.address,
                capacity: self.memory.len(),
            });
        }
        self.inbox.push_back((tag, v));
        Ok(())
    }

    fn bank(&self, address: u32) -> usize {
        bank_of(address, self.cfg.banks, self.cfg.hashing)
    }

    fn push_vector(&mut self, tag: u64, v: &RequestVector) {
        let (vector, elided) = if self.cfg.elide_reads {
            let e = elide_reads(v);
            (e.vector, e.elided)
        } else {
            (v.clone(), vec![None; v.width()])
        };
        let entries: Vec<Option<Entry>> = vector
            .lanes
            .iter()
            .map(|l| {
                l.map(|req| Entry {
                    req,
                    bank: self.bank(req.address),
                    state: EntryState::Waiting,
                    reply: 0,
                })
            })
            .collect();
        if self.cfg.mode == OrderingMode::AddressOrdered {
            for e in entries.iter().flatten() {
                self.filter.insert(e.req.address);
            }
        }
        let outstanding = entries.iter().flatten().count();
        self.queue.push_back(QueuedVector {
            tag,
            entries,
            elided,
            outstanding,
        });
    }

    /// Moves at most one vector from the inbox into the queue. Returns true
    /// if a vector was waiting but could not enter.
    fn enqueue(&mut self) -> bool {
        if self.inbox.is_empty() {
            return false;
        }
        if self.queue.len() >= self.cfg.depth {
            return true;
        }
        let (tag, v) = self.inbox.pop_front().unwrap();
        if self.cfg.mode != OrderingMode::AddressOrdered {
            self.push_vector(tag, &v);
            return false;
        }
        let filter = self.admission_filter(tag);
        match enqueue_ordered(&filter, &v, self.cfg.elide_reads) {
            Admission::Accepted => {
                self.push_vector(tag, &v);
                false
            }
            Admission::Split(head, tail) => {
                self.push_vector(tag, &head);
                self.inbox.push_front((tag, tail));
                false
            }
            Admission::Stalled => {
                self.inbox.push_front((tag, v));
                true
            }
        }
    }

    /// Filter seen by an incoming vector. The remainder of a split vector
    /// does not wait on its own head's issued requests: those already sit in
    /// the bank pipeline ahead of anything it could issue.
    fn admission_filter(&self, tag: u64) -> std::borrow::Cow<'_, CountingBloom> {
        let Some(head) = self.queue.back().filter(|qv| qv.tag == tag) else {
            return std::borrow::Cow::Borrowed(&self.filter);
        };
        let mut f = self.filter.clone();
        for e in head.entries.iter().flatten() {
            if e.state == EntryState::Issued {
                f.remove(e.req.address);
            }
        }
        std::borrow::Cow::Owned(f)
    }

    fn pending_banks(&self, window_slots: usize) -> Vec<Vec<Option<usize>>> {
        let mut q = vec![Vec::with_capacity(window_slots); self.cfg.lanes];
        for qv in self.queue.iter().take(window_slots) {
            for (lane, e) in qv.entries.iter().enumerate() {
                q[lane].push(
                    e.as_ref()
                        .filter(|e| e.state == EntryState::Waiting)
                        .map(|e| e.bank),
                );
            }
        }
        q
    }

    fn schedule(&self) -> GrantSet {
        match self.cfg.mode {
            OrderingMode::Unordered | OrderingMode::AddressOrdered => {
                let q = self.pending_banks(self.cfg.depth);
                allocate(&q, self.cfg.banks, &self.windows, self.cfg.crossbar)
            }
            OrderingMode::Arbitrated => self.arbitrated_issue(),
            OrderingMode::FullyOrdered => self.fully_ordered_issue(),
        }
    }

    /// Baseline: only the oldest vector with unissued lanes bids; each bank
    /// serves its lowest requesting lane.
    fn arbitrated_issue(&self) -> GrantSet {
        let Some(slot) = self
            .queue
            .iter()
            .position(|qv| qv.entries.iter().flatten().any(|e| e.state == EntryState::Waiting))
        else {
            return GrantSet::default();
        };
        let mut grants = GrantSet::default();
        let mut used = 0u64;
        for (lane, e) in self.queue[slot].entries.iter().enumerate() {
            if let Some(e) = e.as_ref().filter(|e| e.state == EntryState::Waiting) {
                if used & (1 << e.bank) == 0 {
                    used |= 1 << e.bank;
                    grants.grants.push(super::alloc::Grant {
                        lane,
                        bank: e.bank,
                        slot,
                    });
                }
            }
        }
        grants
    }

    /// Issues the longest program-order prefix of unissued requests whose
    /// banks (and lanes) are pairwise distinct.
    pub(crate) fn fully_ordered_issue(&self) -> GrantSet {
        let mut grants = GrantSet::default();
        let mut banks = 0u64;
        let mut lanes = 0u64;
        for (slot, qv) in self.queue.iter().enumerate() {
            for (lane, e) in qv.entries.iter().enumerate() {
                let Some(e) = e else { continue };
                if e.state != EntryState::Waiting {
                    continue;
                }
                if banks & (1 << e.bank) != 0 || lanes & (1 << lane) != 0 {
                    return grants;
                }
                banks |= 1 << e.bank;
                lanes |= 1 << lane;
                grants.grants.push(super::alloc::Grant {
                    lane,
                    bank: e.bank,
                    slot,
                });
            }
        }
        grants
    }

    /// Advances the unit by one cycle.
    pub fn step(&mut self) -> StepOutcome {
        // write stage: requests granted two cycles ago complete
        for f in std::mem::take(&mut self.write_stage) {
            let qv = &mut self.queue[(f.id - self.head_id) as usize];
            let e = qv.entries[f.lane].as_mut().unwrap();
            e.state = EntryState::Done;
            qv.outstanding -= 1;
            if qv.outstanding == 0 && self.cfg.mode == OrderingMode::AddressOrdered {
                for e in qv.entries.iter().flatten() {
                    self.filter.remove(e.req.address);
                }
            }
        }
        // read + execute stage: in grant order, so per-bank order is kept
        for f in std::mem::take(&mut self.read_stage) {
            let qv = &mut self.queue[(f.id - self.head_id) as usize];
            let e = qv.entries[f.lane].as_mut().unwrap();
            let addr = e.req.address as usize;
            let (new, reply) = execute(e.req.op, e.req.reply, self.memory[addr], e.req.data);
            self.memory[addr] = new;
            e.reply = reply;
            self.write_stage.push(f);
        }

        let enqueue_blocked = self.enqueue();

        let grants = self.schedule();
        debug_assert!({
            let mut banks = 0u64;
            grants.grants.iter().all(|g| {
                let fresh = banks & (1 << g.bank) == 0;
                banks |= 1 << g.bank;
                fresh
            })
        });
        for g in &grants.grants {
            let id = self.head_id + g.slot as u64;
            let e = self.queue[g.slot].entries[g.lane].as_mut().unwrap();
            debug_assert_eq!(e.state, EntryState::Waiting);
            e.state = EntryState::Issued;
            self.read_stage.push(InFlight { id, lane: g.lane });
        }

        let mut completed = Vec::new();
        while self.queue.front().is_some_and(|qv| qv.outstanding == 0) {
            let qv = self.queue.pop_front().unwrap();
            self.head_id += 1;
            let mut replies: Vec<Option<u32>> =
                qv.entries.iter().map(|e| e.as_ref().map(|e| e.reply)).collect();
            for (lane, src) in qv.elided.iter().enumerate() {
                if let Some(src) = src {
                    replies[lane] = replies[*src];
                }
            }
            completed.push(CompletedVector {
                tag: qv.tag,
                replies,
            });
        }

        let cycle = self.stats.cycles;
        self.stats.record_cycle(grants.len());
        if let Some(log) = self.log.as_mut() {
            log.push(CycleRecord {
                cycle,
                grants: grants.len() as u32,
                banks_active: grants.len() as u32,
                queue_occupancy: self.queue.len() as u32,
            });
        }

        StepOutcome {
            completed,
            grants,
            enqueue_blocked,
        }
    }

    /// Runs a batch of vectors to completion and returns each vector's
    /// replies (in submission order) plus the cycles taken.
    pub fn run_batch(&mut self, vectors: Vec<RequestVector>) -> Result<BatchResult, SpmuError> {
        let start = self.stats.cycles;
        let n = vectors.len();
        let mut replies: Vec<Vec<Option<u32>>> =
            vectors.iter().map(|v| vec![None; v.width()]).collect();
        let mut remaining: Vec<usize> = vectors.iter().map(|v| v.valid_count()).collect();
        let mut open = remaining.iter().filter(|&&r| r > 0).count();
        let base = TAG_BASE;
        for (i, v) in vectors.into_iter().enumerate() {
            if remaining[i] > 0 {
                self.submit(base + i as u64, v)?;
            }
        }
        while open > 0 {
            for done in self.step().completed {
                let i = (done.tag - base) as usize;
                for (lane, r) in done.replies.iter().enumerate() {
                    if let Some(r) = r {
                        if replies[i][lane].is_none() {
                            replies[i][lane] = Some(*r);
                            remaining[i] -= 1;
                        }
                    }
                }
                if remaining[i] == 0 {
                    open -= 1;
                }
            }
        }
        debug_assert_eq!(replies.len(), n);
        Ok(BatchResult {
            replies,
            cycles: self.stats.cycles - start,
        })
    }
}

const TAG_BASE: u64 = 1 << 48;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchResult {
    pub replies: Vec<Vec<Option<u32>>>,
    pub cycles: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spmu::config::BankHashing;
    use crate::spmu::request::{Op, ReplySelect, RmwKind};
    use crate::spmu::rmw::execute;
    use proptest::prelude::*;

    fn linear(mode: OrderingMode) -> Spmu {
        Spmu::new(SpmuConfig {
            mode,
            hashing: BankHashing::Linear,
            ..Default::default()
        })
        .unwrap()
    }

    fn add(a: u32) -> MemoryRequest {
        MemoryRequest::rmw(a, RmwKind::AddInt, 1, ReplySelect::OldValue)
    }

    /// Distinct addresses mapping (linearly) to the given banks.
    fn on_banks(banks: &[usize]) -> RequestVector {
        let reqs: Vec<_> = banks
            .iter()
            .enumerate()
            .map(|(lane, &b)| add((b + 16 * lane) as u32))
            .collect();
        RequestVector::packed(16, &reqs)
    }

    fn grant_lanes(o: &StepOutcome) -> Vec<usize> {
        let mut l: Vec<_> = o.grants.grants.iter().map(|g| g.lane).collect();
        l.sort();
        l
    }

    #[test]
    fn conflict_free_vector_drains_in_three_cycles() {
        let mut u = linear(OrderingMode::Unordered);
        u.submit(7, on_banks(&(0..16).collect::<Vec<_>>())).unwrap();
        let first = u.step();
        assert_eq!(first.grants.len(), 16);
        assert!(u.step().completed.is_empty());
        let third = u.step();
        assert_eq!(third.completed.len(), 1);
        assert_eq!(third.completed[0].tag, 7);
        assert!(u.is_idle());
    }

    #[test]
    fn arbitrated_four_way_bank_conflict_takes_four_cycles() {
        let mut banks: Vec<usize> = (0..16).collect();
        for lane in [3, 6, 9, 12] {
            banks[lane] = 10;
        }
        banks[10] = 3;
        banks[3] = 10;
        let mut u = linear(OrderingMode::Arbitrated);
        u.submit(0, on_banks(&banks)).unwrap();
        let issued: Vec<usize> = (0..5).map(|_| u.step().grants.len()).collect();
        assert_eq!(issued, vec![13, 1, 1, 1, 0]);
    }

    #[test]
    fn fully_ordered_issue_groups() {
        let banks = [4, 1, 8, 12, 3, 2, 7, 11, 2, 12, 10, 10, 10, 9, 10, 5];
        let mut u = linear(OrderingMode::FullyOrdered);
        u.submit(0, on_banks(&banks)).unwrap();
        let groups: Vec<Vec<usize>> = (0..5).map(|_| grant_lanes(&u.step())).collect();
        let expected: Vec<Vec<usize>> = vec![
            (0..8).collect(),
            (8..11).collect(),
            vec![11],
            vec![12, 13],
            vec![14, 15],
        ];
        assert_eq!(groups, expected);
    }

    #[test]
    fn fully_ordered_single_bank_serializes() {
        let mut u = linear(OrderingMode::FullyOrdered);
        u.submit(0, on_banks(&[6; 16])).unwrap();
        for lane in 0..16 {
            assert_eq!(grant_lanes(&u.step()), vec![lane]);
        }
    }

    #[test]
    fn duplicate_address_splits_and_tail_follows_next_cycle() {
        let mut reqs: Vec<_> = (0..16).map(add).collect();
        reqs[8] = add(5);
        let mut u = linear(OrderingMode::AddressOrdered);
        u.submit(0, RequestVector::packed(16, &reqs)).unwrap();
        assert_eq!(grant_lanes(&u.step()), (0..8).collect::<Vec<_>>());
        assert_eq!(grant_lanes(&u.step()), (8..16).collect::<Vec<_>>());
        while !u.is_idle() {
            u.step();
        }
        assert_eq!(u.memory()[5], 2);
    }

    #[test]
    fn pending_address_stalls_until_completion() {
        let mut u = linear(OrderingMode::AddressOrdered);
        u.submit(0, RequestVector::packed(16, &[add(77)])).unwrap();
        u.submit(1, RequestVector::packed(16, &[add(77)])).unwrap();
        assert_eq!(u.step().grants.len(), 1);
        let second = u.step();
        assert!(second.enqueue_blocked);
        assert_eq!(second.grants.len(), 0);
        let third = u.step();
        assert_eq!(third.completed.len(), 1);
        assert_eq!(third.grants.len(), 1);
    }

    #[test]
    fn elided_reads_share_one_reply() {
        let mut u = linear(OrderingMode::Unordered);
        u.memory_mut()[42] = 9;
        let v = RequestVector::packed(16, &[MemoryRequest::read(42); 16]);
        let first = {
            u.submit(0, v).unwrap();
            u.step()
        };
        assert_eq!(first.grants.len(), 1);
        let r = loop {
            let o = u.step();
            if let Some(c) = o.completed.into_iter().next() {
                break c;
            }
        };
        assert_eq!(r.replies, vec![Some(9); 16]);
    }

    #[test]
    fn width_and_address_are_checked() {
        let mut u = linear(OrderingMode::Unordered);
        assert!(matches!(
            u.submit(0, RequestVector::empty(8)),
            Err(SpmuError::Width { .. })
        ));
        assert!(matches!(
            u.submit(0, RequestVector::packed(16, &[add(1 << 20)])),
            Err(SpmuError::Address { .. })
        ));
    }

    /// Program-order execution: vectors in order, lanes in order.
    fn sequential(vectors: &[RequestVector], words: usize) -> (Vec<u32>, Vec<Vec<Option<u32>>>) {
        let mut mem = vec![0u32; words];
        let replies = vectors
            .iter()
            .map(|v| {
                v.lanes
                    .iter()
                    .map(|l| {
                        l.map(|r| {
                            let (new, reply) = execute(r.op, r.reply, mem[r.address as usize], r.data);
                            mem[r.address as usize] = new;
                            reply
                        })
                    })
                    .collect()
            })
            .collect();
        (mem, replies)
    }

    fn mixed_ops() -> BoxedStrategy<Op> {
        prop_oneof![
            Just(Op::Read),
            Just(Op::Write),
            Just(Op::Rmw(RmwKind::AddInt)),
            Just(Op::Rmw(RmwKind::Swap)),
            Just(Op::Rmw(RmwKind::WriteIfZero)),
            Just(Op::Rmw(RmwKind::SubInt)),
        ]
        .boxed()
    }

    /// One commuting kind for the whole trace.
    fn commuting_ops() -> BoxedStrategy<BoxedStrategy<Op>> {
        prop_oneof![
            Just(RmwKind::AddInt),
            Just(RmwKind::Min),
            Just(RmwKind::BitOr),
            Just(RmwKind::TestAndSet),
        ]
        .prop_map(|k| Just(Op::Rmw(k)).boxed())
        .boxed()
    }

    fn trace(ops: BoxedStrategy<Op>) -> impl Strategy<Value = Vec<RequestVector>> {
        let lane = proptest::option::weighted(0.85, (0u32..48, ops, 0u32..100));
        prop::collection::vec(prop::collection::vec(lane, 16), 1..24).prop_map(|vs| {
            vs.into_iter()
                .map(|lanes| {
                    RequestVector::new(
                        lanes
                            .into_iter()
                            .map(|l| {
                                l.map(|(address, op, data)| MemoryRequest {
                                    address,
                                    op,
                                    data,
                                    reply: ReplySelect::OldValue,
                                })
                            })
                            .collect(),
                    )
                })
                .collect()
        })
    }

    fn run_hashed(mode: OrderingMode, vectors: Vec<RequestVector>) -> (Vec<u32>, Vec<Vec<Option<u32>>>) {
        let mut u = Spmu::new(SpmuConfig {
            mode,
            ..Default::default()
        })
        .unwrap();
        let r = u.run_batch(vectors).unwrap();
        (u.memory()[..48].to_vec(), r.replies)
    }

    proptest! {
        #[test]
        fn ordered_modes_match_sequential(vs in trace(mixed_ops())) {
            let (mem, replies) = sequential(&vs, 48);
            for mode in [OrderingMode::AddressOrdered, OrderingMode::FullyOrdered] {
                let (m, r) = run_hashed(mode, vs.clone());
                prop_assert_eq!(&m, &mem);
                prop_assert_eq!(&r, &replies);
            }
        }

        #[test]
        fn commutative_traces_match_in_every_mode(vs in commuting_ops().prop_flat_map(trace)) {
            let (mem, _) = sequential(&vs, 48);
            for mode in [OrderingMode::Unordered, OrderingMode::Arbitrated] {
                let (m, _) = run_hashed(mode, vs.clone());
                prop_assert_eq!(&m, &mem);
            }
        }
    }
}
