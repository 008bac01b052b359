//! Multi-iteration, multi-priority separable allocation.
//!
//! Each iteration builds a bank x port request matrix from the queue slots
//! inside that iteration's priority window, then runs two stages of
//! fixed-priority arbiters: every free port picks its lowest-indexed
//! requested free bank, then every bank keeps the lowest-indexed port that
//! picked it. Later iterations only see ports and banks left unmatched.

use serde::{Deserialize, Serialize};

use super::config::Crossbar;

/// One granted access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub lane: usize,
    pub bank: usize,
    /// Queue slot (0 = oldest) of the granted request.
    pub slot: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantSet {
    pub grants: Vec<Grant>,
}

impl GrantSet {
    pub fn len(&self) -> usize {
        self.grants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    /// Checks bank uniqueness, per-lane port limits and oldest-slot selection
    /// against the queue the grants were computed from.
    pub fn is_legal(&self, queues: &[Vec<Option<usize>>], crossbar: Crossbar) -> bool {
        let mut banks = 0u64;
        let mut per_lane = vec![0usize; queues.len()];
        for g in &self.grants {
            if banks & (1 << g.bank) != 0 {
                return false;
            }
            banks |= 1 << g.bank;
            per_lane[g.lane] += 1;
            if queues[g.lane].get(g.slot).copied().flatten() != Some(g.bank) {
                return false;
            }
            let port_slots = |s: usize| match crossbar {
                Crossbar::Single => true,
                Crossbar::Double => s % 2 == g.slot % 2,
            };
            let oldest = queues[g.lane]
                .iter()
                .enumerate()
                .find(|&(s, b)| port_slots(s) && *b == Some(g.bank))
                .map(|(s, _)| s);
            if oldest != Some(g.slot) {
                return false;
            }
        }
        if crossbar == Crossbar::Double {
            // two grants to one lane must come from opposite slot parities
            for lane in 0..queues.len() {
                let parities: Vec<_> = self.grants.iter().filter(|g| g.lane == lane).map(|g| g.slot % 2).collect();
                if parities.len() == 2 && parities[0] == parities[1] {
                    return false;
                }
            }
        }
        per_lane.iter().all(|&n| n <= crossbar.ports_per_lane())
    }
}

/// Computes a conflict-free grant set.
///
/// `queues[lane][slot]` is the bank of the pending request in that slot, or
/// `None` if the slot holds nothing that still needs to issue. `windows[i]`
/// is the number of oldest slots that may bid in iteration `i`.
pub fn allocate(
    queues: &[Vec<Option<usize>>],
    banks: usize,
    windows: &[usize],
    crossbar: Crossbar,
) -> GrantSet {
    let ppl = crossbar.ports_per_lane();
    let ports = queues.len() * ppl;
    debug_assert!(ports <= 64 && banks <= 32);

    // per-port request masks for each distinct window size
    let port_mask = |port: usize, window: usize| -> u32 {
        let lane = port / ppl;
        let parity = port % ppl;
        let mut m = 0u32;
        for (s, b) in queues[lane].iter().enumerate().take(window) {
            if ppl == 2 && s % 2 != parity {
                continue;
            }
            if let Some(b) = b {
                m |= 1 << b;
            }
        }
        m
    };

    let mut port_taken = 0u64;
    let mut bank_taken = 0u32;
    let mut matched: Vec<(usize, usize)> = Vec::new();
    // A lane with two ports may not take the same bank twice; bank uniqueness
    // already guarantees that.
    for &window in windows {
        let mut choice = vec![None; ports];
        for (port, c) in choice.iter_mut().enumerate() {
            if port_taken & (1 << port) != 0 {
                continue;
            }
            let avail = port_mask(port, window) & !bank_taken;
            if avail != 0 {
                *c = Some(avail.trailing_zeros() as usize);
            }
        }
        // stage 2: each bank keeps its lowest-indexed requesting port
        let mut bank_winner = vec![None; banks];
        for (port, c) in choice.iter().enumerate() {
            if let Some(b) = *c {
                bank_winner[b].get_or_insert(port);
            }
        }
        for (bank, w) in bank_winner.iter().enumerate() {
            if let Some(port) = *w {
                port_taken |= 1 << port;
                bank_taken |= 1 << bank;
                matched.push((port, bank));
            }
        }
    }

    let grants = matched
        .into_iter()
        .map(|(port, bank)| {
            let lane = port / ppl;
            let parity = port % ppl;
            // per-lane priority encoder: oldest slot requesting the bank
            let slot = queues[lane]
                .iter()
                .enumerate()
                .position(|(s, b)| (ppl == 1 || s % 2 == parity) && *b == Some(bank))
                .expect("granted bank must be requested");
            Grant { lane, bank, slot }
        })
        .collect();
    GrantSet { grants }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_slot(banks: &[&[usize]]) -> Vec<Vec<Option<usize>>> {
        banks
            .iter()
            .map(|bs| bs.iter().map(|&b| Some(b)).collect())
            .collect()
    }

    #[test]
    fn hot_bank_gets_one_grant() {
        let q = vec![vec![Some(3)]; 16];
        let g = allocate(&q, 16, &[1, 1, 1], Crossbar::Single);
        assert_eq!(g.len(), 1);
        assert_eq!(g.grants[0], Grant { lane: 0, bank: 3, slot: 0 });
    }

    #[test]
    fn diagonal_is_conflict_free() {
        let q: Vec<_> = (0..16).map(|i| vec![Some(i)]).collect();
        let g = allocate(&q, 16, &[1, 1, 1], Crossbar::Single);
        assert_eq!(g.len(), 16);
        assert!(g.is_legal(&q, Crossbar::Single));
    }

    #[test]
    fn single_iteration_can_block() {
        let q = single_slot(&[&[0, 1], &[0]]);
        let one = allocate(&q, 2, &[2], Crossbar::Single);
        assert_eq!(one.grants, vec![Grant { lane: 0, bank: 0, slot: 0 }]);
        // a second iteration cannot recover: lane 1 only wants bank 0
        assert_eq!(allocate(&q, 2, &[2, 2, 2], Crossbar::Single).len(), 1);
    }

    #[test]
    fn later_iterations_fill_gaps() {
        // lanes 0 and 1 both pick bank 0 first; lane 1 falls back to bank 1
        let q = single_slot(&[&[0], &[0, 1]]);
        assert_eq!(allocate(&q, 2, &[2], Crossbar::Single).len(), 1);
        assert_eq!(allocate(&q, 2, &[2, 2], Crossbar::Single).len(), 2);
    }

    #[test]
    fn oldest_slot_wins_within_lane() {
        let q = vec![vec![Some(4), Some(2), Some(4)]];
        let g = allocate(&q, 16, &[3], Crossbar::Single);
        assert_eq!(g.grants, vec![Grant { lane: 0, bank: 2, slot: 1 }]);
        let q = vec![vec![Some(7), Some(2), Some(7)]];
        let g = allocate(&q, 16, &[1, 3], Crossbar::Single);
        assert_eq!(g.grants, vec![Grant { lane: 0, bank: 7, slot: 0 }]);
    }

    #[test]
    fn priority_window_restricts_bidding() {
        // slot 2 is outside the first window, so lane 0 only competes for bank 5
        let q = vec![vec![Some(5), None, Some(1)], vec![Some(5)]];
        let g = allocate(&q, 16, &[1], Crossbar::Single);
        assert_eq!(g.grants, vec![Grant { lane: 0, bank: 5, slot: 0 }]);
        let g = allocate(&q, 16, &[1, 3], Crossbar::Single);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn double_crossbar_grants_two_per_lane() {
        let q = vec![vec![Some(1), Some(2), Some(3)]];
        let g = allocate(&q, 16, &[3], Crossbar::Double);
        assert_eq!(g.len(), 2);
        assert!(g.is_legal(&q, Crossbar::Double));
        let single = allocate(&q, 16, &[3], Crossbar::Single);
        assert_eq!(single.len(), 1);
    }

    proptest::proptest! {
        #[test]
        fn grants_are_always_legal(
            q in proptest::collection::vec(
                proptest::collection::vec(proptest::option::of(0usize..16), 16),
                16,
            ),
            double in proptest::bool::ANY,
        ) {
            let xb = if double { Crossbar::Double } else { Crossbar::Single };
            let g = allocate(&q, 16, &[5, 10, 16], xb);
            proptest::prop_assert!(g.is_legal(&q, xb));
        }
    }
}
