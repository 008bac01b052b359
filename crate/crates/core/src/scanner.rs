//! Sparse loop headers: bit-vector scanners that turn one or two operand
//! masks into vectorized streams of iteration indices.
//!
//! A scan emits its element count first, then up to `vectorization`
//! elements per cycle. Each element carries the dense position `j`, the
//! sequence number `jprime`, and the compressed positions `ja` / `jb` of
//! the element in each operand (`-1` when the operand has no value there).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{BitTree, BitVector, TILE_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanMode {
    Intersection,
    Union,
    /// One operand; behaves as intersection with an all-ones mask.
    Single,
}

/// How the leading count is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CountCycle {
    /// The count takes a cycle of its own: `1 + ceil(n / v)`.
    #[default]
    Separate,
    /// The count rides with the first element group: `max(1, ceil(n / v))`.
    Overlapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScannerConfig {
    pub input_width: usize,
    pub vectorization: usize,
    pub count_cycle: CountCycle,
}

impl Default for ScannerConfig {
    fn default() -> Self {
        Self {
            input_width: TILE_BITS,
            vectorization: 16,
            count_cycle: CountCycle::Separate,
        }
    }
}

impl ScannerConfig {
    pub fn with_vectorization(vectorization: usize) -> Self {
        Self {
            vectorization,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        if self.vectorization == 0 || self.vectorization > self.input_width {
            return Err(ScanError::Config(format!(
                "vectorization {} must be in 1..={}",
                self.vectorization, self.input_width
            )));
        }
        Ok(())
    }

    /// Cycles to emit a scan of `count` elements.
    pub fn scan_cycles(&self, count: usize) -> u64 {
        let groups = count.div_ceil(self.vectorization) as u64;
        match self.count_cycle {
            CountCycle::Separate => 1 + groups,
            CountCycle::Overlapped => groups.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("scanner configuration: {0}")]
    Config(String),
    #[error("operand lengths differ: {a} vs {b}")]
    Dimension { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScanElement {
    pub jprime: u32,
    pub j: u32,
    pub ja: i32,
    pub jb: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScanOutput {
    pub count: usize,
    pub elements: Vec<ScanElement>,
    pub cycles: u64,
}

impl ScanOutput {
    /// Elements grouped as they leave the scanner, `width` per cycle.
    pub fn groups(&self, width: usize) -> std::slice::Chunks<'_, ScanElement> {
        self.elements.chunks(width.max(1))
    }

    /// Appends a scan taken at dense offset `j0` whose operands start at
    /// compressed offsets `a0` / `b0`.
    fn extend_from(&mut self, part: ScanOutput, j0: usize, a0: usize, b0: usize) {
        let base = self.count as u32;
        let shift = |x: i32, off: usize| if x < 0 { x } else { x + off as i32 };
        self.elements.extend(part.elements.into_iter().map(|e| ScanElement {
            jprime: base + e.jprime,
            j: e.j + j0 as u32,
            ja: shift(e.ja, a0),
            jb: shift(e.jb, b0),
        }));
        self.count += part.count;
        self.cycles += part.cycles;
    }
}

fn check_pair(mode: ScanMode, a: &BitVector, b: &BitVector) -> Result<(), ScanError> {
    if mode != ScanMode::Single && a.len() != b.len() {
        return Err(ScanError::Dimension {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok(())
}

/// Enumerates one tile's combined mask without cycle accounting.
fn scan_words(mode: ScanMode, a: &BitVector, b: &BitVector) -> Vec<ScanElement> {
    let mut out = Vec::new();
    let (mut ra, mut rb) = (0i32, 0i32);
    let bw = b.words();
    for (w, &aw) in a.words().iter().enumerate() {
        let bword = bw.get(w).copied().unwrap_or(0);
        let combined = match mode {
            ScanMode::Intersection => aw & bword,
            ScanMode::Union => aw | bword,
            ScanMode::Single => aw,
        };
        let mut rest = combined;
        while rest != 0 {
            let bit = rest.trailing_zeros();
            let below = (1u64 << bit) - 1;
            let j = w as u32 * 64 + bit;
            let in_a = aw >> bit & 1 == 1;
            let ja = if in_a { ra + (aw & below).count_ones() as i32 } else { -1 };
            let jb = match mode {
                ScanMode::Single => j as i32,
                _ if bword >> bit & 1 == 1 => rb + (bword & below).count_ones() as i32,
                _ => -1,
            };
            out.push(ScanElement {
                jprime: out.len() as u32,
                j,
                ja,
                jb,
            });
            rest &= rest - 1;
        }
        ra += aw.count_ones() as i32;
        rb += bword.count_ones() as i32;
    }
    out
}

/// Scans a single tile of at most `cfg.input_width` bits.
pub fn bit_scan(
    mode: ScanMode,
    a: &BitVector,
    b: &BitVector,
    cfg: &ScannerConfig,
) -> Result<ScanOutput, ScanError> {
    cfg.validate()?;
    check_pair(mode, a, b)?;
    if a.len() > cfg.input_width {
        return Err(ScanError::Config(format!(
            "operand of {} bits exceeds scanner input width {}",
            a.len(),
            cfg.input_width
        )));
    }
    let elements = scan_words(mode, a, b);
    Ok(ScanOutput {
        count: elements.len(),
        cycles: cfg.scan_cycles(elements.len()),
        elements,
    })
}

/// Scans operands of any length one input-width tile at a time; indices
/// are global.
pub fn tiled_scan(
    mode: ScanMode,
    a: &BitVector,
    b: &BitVector,
    cfg: &ScannerConfig,
) -> Result<ScanOutput, ScanError> {
    cfg.validate()?;
    check_pair(mode, a, b)?;
    let w = cfg.input_width;
    let ta = a.tiles(w);
    let tb = if mode == ScanMode::Single {
        vec![BitVector::zeros(w); ta.len()]
    } else {
        b.tiles(w)
    };
    let mut out = ScanOutput::default();
    let (mut a0, mut b0) = (0, 0);
    for (t, (x, y)) in ta.iter().zip(&tb).enumerate() {
        let part = bit_scan(mode, x, y, cfg)?;
        let b_off = if mode == ScanMode::Single { t * w } else { b0 };
        out.extend_from(part, t * w, a0, b_off);
        a0 += x.count_ones();
        b0 += y.count_ones();
    }
    if ta.is_empty() {
        out.cycles = cfg.scan_cycles(0);
    }
    Ok(out)
}

/// Nonzero words of a vector, one per cycle, in lane order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DataScan {
    pub hits: Vec<(usize, u32)>,
    pub cycles: u64,
}

pub fn data_scan(v: &[u32]) -> DataScan {
    let hits: Vec<_> = v
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0)
        .map(|(i, &x)| (i, x))
        .collect();
    DataScan {
        cycles: hits.len().max(1) as u64,
        hits,
    }
}

/// Top-level mask plus the leaf pairs under each of its set bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realigned {
    pub top: BitVector,
    pub pairs: Vec<(BitVector, BitVector)>,
}

fn check_trees(a: &BitTree, b: &BitTree) -> Result<(), ScanError> {
    if a.span() != b.span() || a.leaf_len() != b.leaf_len() {
        return Err(ScanError::Dimension {
            a: a.span(),
            b: b.span(),
        });
    }
    Ok(())
}

/// Lines up the leaves of two bit-trees under their combined top mask.
/// Union pads missing leaves with zeros; intersection drops them.
pub fn bittree_realign(mode: ScanMode, a: &BitTree, b: &BitTree) -> Result<Realigned, ScanError> {
    if mode == ScanMode::Single {
        let pairs = a
            .leaves()
            .iter()
            .map(|l| (l.clone(), BitVector::ones(a.leaf_len())))
            .collect();
        return Ok(Realigned {
            top: a.top().clone(),
            pairs,
        });
    }
    check_trees(a, b)?;
    let top = match mode {
        ScanMode::Union => a.top().or(b.top()),
        _ => a.top().and(b.top()),
    };
    let zero = BitVector::zeros(a.leaf_len());
    let pairs = top
        .iter_ones()
        .map(|t| {
            (
                a.leaf(t).unwrap_or(&zero).clone(),
                b.leaf(t).unwrap_or(&zero).clone(),
            )
        })
        .collect();
    Ok(Realigned { top, pairs })
}

/// Nested scan over two bit-trees: the top masks are scanned first, then
/// each realigned leaf pair. Compressed indices are positions within each
/// operand's full value array.
pub fn bittree_scan(
    mode: ScanMode,
    a: &BitTree,
    b: &BitTree,
    cfg: &ScannerConfig,
) -> Result<ScanOutput, ScanError> {
    cfg.validate()?;
    if mode != ScanMode::Single {
        check_trees(a, b)?;
    }
    let r = bittree_realign(mode, a, b)?;
    let top_b = if mode == ScanMode::Single { a.top() } else { b.top() };
    let top = tiled_scan(mode, a.top(), top_b, cfg)?;
    let mut out = ScanOutput {
        cycles: top.cycles,
        ..Default::default()
    };
    let len = a.leaf_len();
    let a_before = prefix_counts(a);
    let b_before = if mode == ScanMode::Single {
        Vec::new()
    } else {
        prefix_counts(b)
    };
    for (t, (la, lb)) in r.top.iter_ones().zip(&r.pairs) {
        let part = tiled_scan(mode, la, lb, cfg)?;
        let a0 = a_before.get(a.top().rank(t)).copied().unwrap_or(0);
        let b0 = match mode {
            ScanMode::Single => t * len,
            _ => b_before.get(b.top().rank(t)).copied().unwrap_or(0),
        };
        out.extend_from(part, t * len, a0, b0);
    }
    Ok(out)
}

/// Number of set bits in all leaves before each leaf.
fn prefix_counts(t: &BitTree) -> Vec<usize> {
    let mut acc = 0;
    t.leaves()
        .iter()
        .map(|l| {
            let here = acc;
            acc += l.count_ones();
            here
        })
        .collect()
}
