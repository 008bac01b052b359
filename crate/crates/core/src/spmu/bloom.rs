/// Counting Bloom filter over word addresses.
///
/// Hash `i` is a multiply-shift with its own odd constant. Counters let
/// entries be removed when the matching request leaves the queue.
#[derive(Debug, Clone)]
pub struct CountingBloom {
    counters: Vec<u16>,
    shift: u32,
    hashes: usize,
}

const MULTIPLIERS: [u32; 4] = [0x9E37_79B1, 0x85EB_CA77, 0xC2B2_AE3D, 0x27D4_EB2F];

impl CountingBloom {
    pub fn new(bits: usize, hashes: usize) -> Self {
        assert!(bits.is_power_of_two() && bits >= 2);
        assert!((1..=MULTIPLIERS.len()).contains(&hashes));
        Self {
            counters: vec![0; bits],
            shift: 32 - bits.trailing_zeros(),
            hashes,
        }
    }

    fn positions(&self, address: u32) -> impl Iterator<Item = usize> + '_ {
        MULTIPLIERS[..self.hashes]
            .iter()
            .map(move |&m| (address.wrapping_mul(m) >> self.shift) as usize)
    }

    pub fn insert(&mut self, address: u32) {
        let pos: Vec<_> = self.positions(address).collect();
        for p in pos {
            self.counters[p] += 1;
        }
    }

    pub fn remove(&mut self, address: u32) {
        let pos: Vec<_> = self.positions(address).collect();
        for p in pos {
            debug_assert!(self.counters[p] > 0, "removing absent address");
            self.counters[p] = self.counters[p].saturating_sub(1);
        }
    }

    /// True if `address` may be present (all its counters are nonzero).
    pub fn may_contain(&self, address: u32) -> bool {
        self.positions(address).all(|p| self.counters[p] > 0)
    }

    pub fn is_empty(&self) -> bool {
        self.counters.iter().all(|&c| c == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_false_negatives_and_clears() {
        let mut f = CountingBloom::new(128, 2);
        let addrs = [1u32, 77, 4096, 65535, 1];
        for &a in &addrs {
            f.insert(a);
        }
        assert!(addrs.iter().all(|&a| f.may_contain(a)));
        for &a in &addrs {
            f.remove(a);
        }
        assert!(f.is_empty());
        assert!(!f.may_contain(77));
    }

    #[test]
    fn duplicate_insert_needs_two_removals() {
        let mut f = CountingBloom::new(128, 2);
        f.insert(9);
        f.insert(9);
        f.remove(9);
        assert!(f.may_contain(9));
        f.remove(9);
        assert!(!f.may_contain(9));
    }
}
