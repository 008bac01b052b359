//! Enqueue-time transformations: repeated-read elision and address-ordered
//! admission.

use std::collections::HashMap;

use super::bloom::CountingBloom;
use super::request::{Op, RequestVector};

/// A vector after elision: squashed lanes point at the lane whose reply
/// they copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElidedVector {
    pub vector: RequestVector,
    pub elided: Vec<Option<usize>>,
}

/// Addresses touched only by reads within `v`.
fn read_only_addresses(v: &RequestVector) -> HashMap<u32, bool> {
    let mut ro: HashMap<u32, bool> = HashMap::new();
    for (_, r) in v.iter_valid() {
        let e = ro.entry(r.address).or_insert(true);
        *e &= r.op == Op::Read;
    }
    ro
}

/// Squashes later reads of an address already read by an earlier lane.
///
/// Only addresses that the vector never writes are eligible, so a squashed
/// lane can never observe a different value than its source.
pub fn elide_reads(v: &RequestVector) -> ElidedVector {
    let ro = read_only_addresses(v);
    let mut first: HashMap<u32, usize> = HashMap::new();
    let mut out = v.clone();
    let mut elided = vec![None; v.width()];
    for (lane, r) in v.iter_valid() {
        if !ro[&r.address] {
            continue;
        }
        match first.get(&r.address) {
            Some(&src) => {
                out.lanes[lane] = None;
                elided[lane] = Some(src);
            }
            None => {
                first.insert(r.address, lane);
            }
        }
    }
    ElidedVector {
        vector: out,
        elided,
    }
}

/// Result of presenting a vector to an address-ordered queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    /// Lanes before the split point enter now; the rest retries next cycle.
    Split(RequestVector, RequestVector),
    Stalled,
}

/// Lane of the first request that repeats an earlier lane's address.
///
/// With `skip_reads`, repeats among read-only addresses are left for
/// elision instead of forcing a split.
pub fn split_point(v: &RequestVector, skip_reads: bool) -> Option<usize> {
    let ro = read_only_addresses(v);
    let mut seen = std::collections::HashSet::new();
    for (lane, r) in v.iter_valid() {
        if !seen.insert(r.address) && !(skip_reads && ro[&r.address]) {
            return Some(lane);
        }
    }
    None
}

/// Decides whether `v` may enter an address-ordered queue.
///
/// The vector is first split at its first intra-vector duplicate address.
/// The part that would enter is then checked against the filter of
/// addresses still waiting in the queue; any possible hit stalls the whole
/// vector.
pub fn enqueue_ordered(filter: &CountingBloom, v: &RequestVector, skip_reads: bool) -> Admission {
    let split = split_point(v, skip_reads);
    let head_lanes = split.unwrap_or(v.width());
    let conflict = v
        .iter_valid()
        .take_while(|(lane, _)| *lane < head_lanes)
        .any(|(_, r)| filter.may_contain(r.address));
    if conflict {
        return Admission::Stalled;
    }
    match split {
        None => Admission::Accepted,
        Some(at) => {
            let mut head = v.clone();
            let mut tail = v.clone();
            for lane in 0..v.width() {
                if lane < at {
                    tail.lanes[lane] = None;
                } else {
                    head.lanes[lane] = None;
                }
            }
            Admission::Split(head, tail)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spmu::request::{MemoryRequest, ReplySelect, RmwKind};

    fn reads(addrs: &[u32]) -> RequestVector {
        let reqs: Vec<_> = addrs.iter().map(|&a| MemoryRequest::read(a)).collect();
        RequestVector::packed(16, &reqs)
    }

    fn adds(addrs: &[u32]) -> RequestVector {
        let reqs: Vec<_> = addrs
            .iter()
            .map(|&a| MemoryRequest::rmw(a, RmwKind::AddInt, 1, ReplySelect::OldValue))
            .collect();
        RequestVector::packed(16, &reqs)
    }

    #[test]
    fn sixteen_identical_reads_issue_once() {
        let e = elide_reads(&reads(&[42; 16]));
        assert_eq!(e.vector.valid_count(), 1);
        assert_eq!(e.elided.iter().filter(|x| **x == Some(0)).count(), 15);
    }

    #[test]
    fn no_duplicates_is_identity() {
        let v = reads(&(0..16).collect::<Vec<_>>());
        let e = elide_reads(&v);
        assert_eq!(e.vector, v);
        assert!(e.elided.iter().all(Option::is_none));
    }

    #[test]
    fn alternating_pairs() {
        let e = elide_reads(&reads(&[10, 20, 10, 20]));
        assert_eq!(e.vector.valid_count(), 2);
        assert_eq!(&e.elided[..4], &[None, None, Some(0), Some(1)]);
    }

    #[test]
    fn written_addresses_are_not_elided() {
        let mut v = reads(&[10, 10, 10]);
        v.lanes[1] = Some(MemoryRequest::write(10, 5));
        let e = elide_reads(&v);
        assert_eq!(e.vector, v);
    }

    #[test]
    fn distinct_addresses_accepted() {
        let f = CountingBloom::new(128, 2);
        assert_eq!(enqueue_ordered(&f, &adds(&(100..116).collect::<Vec<_>>()), true), Admission::Accepted);
    }

    #[test]
    fn duplicate_splits_at_second_occurrence() {
        let f = CountingBloom::new(128, 2);
        let mut addrs: Vec<u32> = (0..16).map(|i| 1000 + i).collect();
        addrs[8] = addrs[5];
        match enqueue_ordered(&f, &adds(&addrs), true) {
            Admission::Split(head, tail) => {
                assert_eq!(head.iter_valid().map(|(l, _)| l).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
                assert_eq!(tail.iter_valid().map(|(l, _)| l).collect::<Vec<_>>(), (8..16).collect::<Vec<_>>());
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn pending_address_stalls() {
        let mut f = CountingBloom::new(128, 2);
        f.insert(77);
        assert_eq!(enqueue_ordered(&f, &adds(&[5, 77]), true), Admission::Stalled);
        f.remove(77);
        assert_eq!(enqueue_ordered(&f, &adds(&[5, 77]), true), Admission::Accepted);
    }
}
