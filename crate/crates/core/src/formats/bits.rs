//! Packed bit-vector and two-level bit-tree formats.

use serde::{Deserialize, Serialize};

use super::FormatError;

/// Bits per scanner tile.
pub const TILE_BITS: usize = 256;

/// A fixed-length packed bit set.
///
/// Bit `i` lives in word `i / 64`, position `i % 64`. Bits beyond `len` are
/// always clear.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BitVector")
            .field("len", &self.len)
            .field("ones", &self.iter_ones().collect::<Vec<_>>())
            .finish()
    }
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for w in v.words.iter_mut() {
            *w = u64::MAX;
        }
        v.trim();
        v
    }

    /// Builds a vector of `len` bits with each listed position set.
    ///
    /// Panics if a position is out of range.
    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut v = Self::zeros(len);
        for i in indices {
            v.set(i);
        }
        v
    }

    /// Builds an 8..64-bit vector from the low `len` bits of `bits`.
    pub fn from_u64(len: usize, bits: u64) -> Self {
        assert!(len <= 64);
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = bits;
        }
        v.trim();
        v
    }

    fn trim(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Number of set bits strictly below position `i`.
    pub fn rank(&self, i: usize) -> usize {
        let i = i.min(self.len);
        let full = i / 64;
        let mut r: usize = self.words[..full].iter().map(|w| w.count_ones() as usize).sum();
        let rem = i % 64;
        if rem != 0 {
            r += (self.words[full] & ((1u64 << rem) - 1)).count_ones() as usize;
        }
        r
    }

    /// Position of the `k`-th set bit (0-based).
    pub fn select(&self, k: usize) -> Option<usize> {
        self.iter_ones().nth(k)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.len, other.len, "bit-vector length mismatch");
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self { len: self.len, words }
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn or_assign(&mut self, other: &Self) {
        assert_eq!(self.len, other.len, "bit-vector length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Splits into consecutive tiles of `tile` bits; the last one may be short.
    pub fn tiles(&self, tile: usize) -> Vec<BitVector> {
        (0..self.len)
            .step_by(tile.max(1))
            .map(|start| {
                let end = (start + tile).min(self.len);
                BitVector::from_indices(
                    end - start,
                    self.iter_ones()
                        .skip_while(|&i| i < start)
                        .take_while(|&i| i < end)
                        .map(|i| i - start),
                )
            })
            .collect()
    }
}

/// Converts sorted positions inside one tile into a bit-vector tile.
///
/// Models the compute-tile format converter: positions must lie in
/// `[base, base + tile_len)`.
pub fn pointers_to_bitvector(
    indices: &[u32],
    base: u32,
    tile_len: usize,
) -> Result<BitVector, FormatError> {
    let mut v = BitVector::zeros(tile_len);
    for &p in indices {
        let rel = p.checked_sub(base).map(|r| r as usize);
        match rel {
            Some(r) if r < tile_len => v.set(r),
            _ => {
                return Err(FormatError::OutOfTile {
                    position: p,
                    base,
                    len: tile_len,
                })
            }
        }
    }
    Ok(v)
}

/// A two-level bit-tree: one top-level bit per leaf span, and a leaf
/// bit-vector for each set top bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitTree {
    top: BitVector,
    leaf_len: usize,
    leaves: Vec<BitVector>,
}

impl BitTree {
    /// Builds a tree spanning `top_len * leaf_len` positions.
    pub fn from_indices<I: IntoIterator<Item = usize>>(
        top_len: usize,
        leaf_len: usize,
        indices: I,
    ) -> Self {
        let mut top = BitVector::zeros(top_len);
        let mut dense: Vec<Option<BitVector>> = vec![None; top_len];
        for i in indices {
            let t = i / leaf_len;
            assert!(t < top_len, "index {i} outside bit-tree span");
            top.set(t);
            dense[t]
                .get_or_insert_with(|| BitVector::zeros(leaf_len))
                .set(i % leaf_len);
        }
        let leaves = dense.into_iter().flatten().collect();
        Self {
            top,
            leaf_len,
            leaves,
        }
    }

    /// Builds the smallest tree with `leaf_len` leaves covering `span` positions.
    pub fn with_span<I: IntoIterator<Item = usize>>(span: usize, leaf_len: usize, indices: I) -> Self {
        Self::from_indices(span.div_ceil(leaf_len).max(1), leaf_len, indices)
    }

    /// Assembles a tree from parts, checking its invariants.
    pub fn from_parts(
        top: BitVector,
        leaf_len: usize,
        leaves: Vec<BitVector>,
    ) -> Result<Self, FormatError> {
        if leaves.len() != top.count_ones() {
            return Err(FormatError::Invalid(format!(
                "bit-tree has {} leaves for {} top bits",
                leaves.len(),
                top.count_ones()
            )));
        }
        if leaves.iter().any(|l| l.len() != leaf_len || l.is_zero()) {
            return Err(FormatError::Invalid(
                "bit-tree leaves must be nonzero and of uniform length".into(),
            ));
        }
        Ok(Self {
            top,
            leaf_len,
            leaves,
        })
    }

    pub fn top(&self) -> &BitVector {
        &self.top
    }

    pub fn leaves(&self) -> &[BitVector] {
        &self.leaves
    }

    pub fn leaf_len(&self) -> usize {
        self.leaf_len
    }

    /// Number of logical positions covered.
    pub fn span(&self) -> usize {
        self.top.len() * self.leaf_len
    }

    pub fn count_ones(&self) -> usize {
        self.leaves.iter().map(BitVector::count_ones).sum()
    }

    /// Leaf for top-level position `t`, if present.
    pub fn leaf(&self, t: usize) -> Option<&BitVector> {
        self.top.get(t).then(|| &self.leaves[self.top.rank(t)])
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.top
            .iter_ones()
            .zip(&self.leaves)
            .flat_map(move |(t, leaf)| leaf.iter_ones().map(move |i| t * self.leaf_len + i))
    }

    pub fn flatten(&self) -> BitVector {
        BitVector::from_indices(self.span(), self.iter_ones())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_select_agree() {
        let v = BitVector::from_indices(200, [0, 3, 64, 65, 130, 199]);
        assert_eq!(v.count_ones(), 6);
        assert_eq!(v.rank(0), 0);
        assert_eq!(v.rank(4), 2);
        assert_eq!(v.rank(66), 4);
        assert_eq!(v.rank(200), 6);
        for k in 0..6 {
            let p = v.select(k).unwrap();
            assert_eq!(v.rank(p), k);
        }
        assert_eq!(v.select(6), None);
    }

    #[test]
    fn ones_trims_tail() {
        let v = BitVector::ones(70);
        assert_eq!(v.count_ones(), 70);
        assert!(!v.get(70));
    }

    #[test]
    fn pointer_conversion_examples() {
        let v = pointers_to_bitvector(&[0, 1, 3], 0, 8).unwrap();
        assert_eq!(v.words()[0], 0b0000_1011);
        assert!(pointers_to_bitvector(&[], 0, 256).unwrap().is_zero());
        let idx: Vec<u32> = (256..272).collect();
        let v = pointers_to_bitvector(&idx, 256, 256).unwrap();
        assert_eq!(v.words()[0], 0xFFFF);
        assert_eq!(v.count_ones(), 16);
        assert!(matches!(
            pointers_to_bitvector(&[300], 0, 256),
            Err(FormatError::OutOfTile { position: 300, .. })
        ));
        assert!(pointers_to_bitvector(&[3], 4, 8).is_err());
    }

    #[test]
    fn bit_tree_leaves_are_nonzero() {
        let t = BitTree::from_indices(4, 8, [1, 2, 25, 31]);
        assert_eq!(t.top().iter_ones().collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(t.leaves().len(), 2);
        assert_eq!(t.iter_ones().collect::<Vec<_>>(), vec![1, 2, 25, 31]);
        assert!(t.leaf(1).is_none());
        assert!(BitTree::from_parts(BitVector::from_indices(2, [0]), 8, vec![BitVector::zeros(8)]).is_err());
    }

    #[test]
    fn two_level_tree_span() {
        // an empty 512-bit top level stands for 262,144 zeros
        let t = BitTree::from_indices(512, 512, []);
        assert_eq!(t.span(), 262_144);
        assert!(t.leaves().is_empty());
        assert_eq!(t.count_ones(), 0);
    }
}
