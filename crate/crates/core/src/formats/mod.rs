//! Sparse tensor storage formats.
//!
//! Vectors come in four flavours: [`DenseVector`], [`BitVector`],
//! [`BitTree`] and [`CompressedVector`]. Matrices are [`SparseMatrix`] in
//! CSR, CSC or COO layout. Every value is a raw 32-bit word; whether it holds
//! an integer or an IEEE-754 single is up to the consumer.

mod bits;
mod burst;
mod market;
mod matrix;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bits::{pointers_to_bitvector, BitTree, BitVector, TILE_BITS};
pub use burst::{
    compress_burst, compress_stream, decompress_burst, decompress_stream, CompressedBurst,
    BURST_WORDS,
};
pub use market::{load_matrix_market, MarketField, MarketMatrix};
pub use matrix::{CooMatrix, CsMatrix, MatrixFormat, SparseMatrix, Triple};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("position {position} outside tile [{base}, {base}+{len})")]
    OutOfTile { position: u32, base: u32, len: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid burst header byte {0:#04x}")]
    BadHeader(u8),
    #[error("truncated compressed burst: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("invalid tensor: {0}")]
    Invalid(String),
}

/// A dense vector of 32-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DenseVector {
    pub values: Vec<u32>,
}

impl DenseVector {
    pub fn new(values: Vec<u32>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn from_i32(values: &[i32]) -> Self {
        Self::new(values.iter().map(|&v| v as u32).collect())
    }

    pub fn from_f32(values: &[f32]) -> Self {
        Self::new(values.iter().map(|v| v.to_bits()).collect())
    }

    pub fn as_i32(&self) -> Vec<i32> {
        self.values.iter().map(|&v| v as i32).collect()
    }

    pub fn as_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| f32::from_bits(v)).collect()
    }
}

/// Compressed (pointer + value) sparse vector.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompressedVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<u32>,
}

impl CompressedVector {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<u32>) -> Result<Self, FormatError> {
        if indices.len() != values.len() {
            return Err(FormatError::Invalid(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FormatError::Invalid(
                "compressed indices must be strictly increasing".into(),
            ));
        }
        if indices.last().is_some_and(|&i| i as usize >= dim) {
            return Err(FormatError::Invalid(format!(
                "index beyond dimension {dim}"
            )));
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    /// Keeps the nonzero words of a dense vector.
    pub fn from_dense(v: &DenseVector) -> Self {
        let (indices, values) = v
            .values
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0)
            .map(|(i, &w)| (i as u32, w))
            .unzip();
        Self {
            dim: v.len(),
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self) -> DenseVector {
        let mut out = DenseVector::zeros(self.dim);
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out.values[i as usize] = v;
        }
        out
    }

    /// Occupancy as a bit-vector spanning the full dimension.
    pub fn to_bitvector(&self) -> BitVector {
        BitVector::from_indices(self.dim, self.indices.iter().map(|&i| i as usize))
    }
}
