use serde::{Deserialize, Serialize};

use super::{BitTree, FormatError};

/// `(row, col, value)`.
pub type Triple = (u32, u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixFormat {
    Csr,
    Csc,
    Coo,
}

/// Compressed-major storage shared by CSR (major = row) and CSC (major = col).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsMatrix {
    pub rows: usize,
    pub cols: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<u32>,
    pub values: Vec<u32>,
}

impl CsMatrix {
    /// Checks pointer monotonicity and per-line strict ordering.
    fn validate(&self, major: usize, minor: usize) -> Result<(), FormatError> {
        if self.ptr.len() != major + 1 || self.ptr[0] != 0 {
            return Err(FormatError::Invalid(format!(
                "pointer array must have length {} and start at 0",
                major + 1
            )));
        }
        if self.ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(FormatError::Invalid("pointer array decreases".into()));
        }
        let nnz = *self.ptr.last().unwrap();
        if nnz != self.idx.len() || nnz != self.values.len() {
            return Err(FormatError::Invalid(format!(
                "final pointer {nnz} disagrees with {} indices / {} values",
                self.idx.len(),
                self.values.len()
            )));
        }
        for m in 0..major {
            let line = &self.idx[self.ptr[m]..self.ptr[m + 1]];
            if line.windows(2).any(|w| w[0] >= w[1]) {
                return Err(FormatError::Invalid(format!(
                    "indices in line {m} not strictly increasing"
                )));
            }
            if line.last().is_some_and(|&i| i as usize >= minor) {
                return Err(FormatError::Invalid(format!("index out of range in line {m}")));
            }
        }
        Ok(())
    }

    /// Indices and values of major line `m`.
    pub fn line(&self, m: usize) -> (&[u32], &[u32]) {
        let r = self.ptr[m]..self.ptr[m + 1];
        (&self.idx[r.clone()], &self.values[r])
    }

    pub fn line_len(&self, m: usize) -> usize {
        self.ptr[m + 1] - self.ptr[m]
    }

    /// Occupancy of each major line as a bit-tree with `leaf_len`-bit leaves.
    pub fn line_trees(&self, minor: usize, leaf_len: usize) -> Vec<BitTree> {
        (0..self.ptr.len() - 1)
            .map(|m| BitTree::with_span(minor, leaf_len, self.line(m).0.iter().map(|&i| i as usize)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooMatrix {
    pub rows: usize,
    pub cols: usize,
    pub triples: Vec<Triple>,
}

/// A sparse matrix in one of three layouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SparseMatrix {
    Csr(CsMatrix),
    Csc(CsMatrix),
    Coo(CooMatrix),
}

impl SparseMatrix {
    /// Canonical COO from arbitrary triples: sorts by (row, col).
    ///
    /// Duplicate coordinates are rejected.
    pub fn from_triples(
        rows: usize,
        cols: usize,
        mut triples: Vec<Triple>,
    ) -> Result<Self, FormatError> {
        triples.sort_unstable_by_key(|&(r, c, _)| (r, c));
        if triples.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(FormatError::Invalid("duplicate coordinate".into()));
        }
        if triples
            .iter()
            .any(|&(r, c, _)| r as usize >= rows || c as usize >= cols)
        {
            return Err(FormatError::Invalid("coordinate out of range".into()));
        }
        Ok(SparseMatrix::Coo(CooMatrix {
            rows,
            cols,
            triples,
        }))
    }

    pub fn csr(rows: usize, cols: usize, ptr: Vec<usize>, idx: Vec<u32>, values: Vec<u32>) -> Result<Self, FormatError> {
        let m = CsMatrix { rows, cols, ptr, idx, values };
        m.validate(rows, cols)?;
        Ok(SparseMatrix::Csr(m))
    }

    pub fn csc(rows: usize, cols: usize, ptr: Vec<usize>, idx: Vec<u32>, values: Vec<u32>) -> Result<Self, FormatError> {
        let m = CsMatrix { rows, cols, ptr, idx, values };
        m.validate(cols, rows)?;
        Ok(SparseMatrix::Csc(m))
    }

    pub fn identity(n: usize, value: u32) -> Self {
        SparseMatrix::Coo(CooMatrix {
            rows: n,
            cols: n,
            triples: (0..n as u32).map(|i| (i, i, value)).collect(),
        })
    }

    pub fn format(&self) -> MatrixFormat {
        match self {
            SparseMatrix::Csr(_) => MatrixFormat::Csr,
            SparseMatrix::Csc(_) => MatrixFormat::Csc,
            SparseMatrix::Coo(_) => MatrixFormat::Coo,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            SparseMatrix::Csr(m) | SparseMatrix::Csc(m) => m.rows,
            SparseMatrix::Coo(m) => m.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            SparseMatrix::Csr(m) | SparseMatrix::Csc(m) => m.cols,
            SparseMatrix::Coo(m) => m.cols,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            SparseMatrix::Csr(m) | SparseMatrix::Csc(m) => m.idx.len(),
            SparseMatrix::Coo(m) => m.triples.len(),
        }
    }

    /// All nonzeros in (row, col) order, independent of layout.
    pub fn to_triples(&self) -> Vec<Triple> {
        let mut t: Vec<Triple> = match self {
            SparseMatrix::Coo(m) => return m.triples.clone(),
            SparseMatrix::Csr(m) => (0..m.rows)
                .flat_map(|r| {
                    let (idx, val) = m.line(r);
                    idx.iter().zip(val).map(move |(&c, &v)| (r as u32, c, v))
                })
                .collect(),
            SparseMatrix::Csc(m) => (0..m.cols)
                .flat_map(|c| {
                    let (idx, val) = m.line(c);
                    idx.iter().zip(val).map(move |(&r, &v)| (r, c as u32, v))
                })
                .collect(),
        };
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        t
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<u32>> {
        let mut d = vec![vec![0; self.cols()]; self.rows()];
        for (r, c, v) in self.to_triples() {
            d[r as usize][c as usize] = v;
        }
        d
    }

    pub fn convert(&self, target: MatrixFormat) -> SparseMatrix {
        if self.format() == target {
            return self.clone();
        }
        let (rows, cols) = (self.rows(), self.cols());
        let triples = self.to_triples();
        match target {
            MatrixFormat::Coo => SparseMatrix::Coo(CooMatrix {
                rows,
                cols,
                triples,
            }),
            MatrixFormat::Csr => SparseMatrix::Csr(compress(rows, cols, &triples, |&(r, c, v)| {
                (r, c, v)
            })),
            MatrixFormat::Csc => {
                let mut t = triples;
                t.sort_unstable_by_key(|&(r, c, _)| (c, r));
                SparseMatrix::Csc(compress(cols, rows, &t, |&(r, c, v)| (c, r, v)).transposed_dims())
            }
        }
    }

    pub fn as_cs(&self) -> Option<&CsMatrix> {
        match self {
            SparseMatrix::Csr(m) | SparseMatrix::Csc(m) => Some(m),
            SparseMatrix::Coo(_) => None,
        }
    }

    pub fn as_coo(&self) -> Option<&CooMatrix> {
        match self {
            SparseMatrix::Coo(m) => Some(m),
            _ => None,
        }
    }
}

impl CsMatrix {
    fn transposed_dims(mut self) -> Self {
        std::mem::swap(&mut self.rows, &mut self.cols);
        self
    }
}

/// Builds compressed-major storage from triples already sorted by major
/// then minor. `key` maps a triple to (major, minor, value).
fn compress(
    major: usize,
    minor: usize,
    sorted: &[Triple],
    key: impl Fn(&Triple) -> (u32, u32, u32),
) -> CsMatrix {
    let mut ptr = vec![0usize; major + 1];
    let mut idx = Vec::with_capacity(sorted.len());
    let mut values = Vec::with_capacity(sorted.len());
    for t in sorted {
        let (m, i, v) = key(t);
        ptr[m as usize + 1] += 1;
        idx.push(i);
        values.push(v);
    }
    for m in 0..major {
        ptr[m + 1] += ptr[m];
    }
    CsMatrix {
        rows: major,
        cols: minor,
        ptr,
        idx,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coo_to_csr_example() {
        let m = SparseMatrix::from_triples(2, 2, vec![(1, 0, 3), (0, 1, 2)]).unwrap();
        let SparseMatrix::Csr(c) = m.convert(MatrixFormat::Csr) else {
            panic!()
        };
        assert_eq!(c.ptr, vec![0, 1, 2]);
        assert_eq!(c.idx, vec![1, 0]);
        assert_eq!(c.values, vec![2, 3]);
    }

    #[test]
    fn empty_matrix_has_zero_pointers() {
        let m = SparseMatrix::from_triples(4, 3, vec![]).unwrap();
        let SparseMatrix::Csr(c) = m.convert(MatrixFormat::Csr) else {
            panic!()
        };
        assert_eq!(c.ptr, vec![0; 5]);
        let SparseMatrix::Csc(c) = m.convert(MatrixFormat::Csc) else {
            panic!()
        };
        assert_eq!(c.ptr, vec![0; 4]);
        assert_eq!((c.rows, c.cols), (4, 3));
    }

    #[test]
    fn identity_csr_equals_csc_arrays() {
        let id = SparseMatrix::identity(7, 1);
        let csr = id.convert(MatrixFormat::Csr);
        let csc = id.convert(MatrixFormat::Csc);
        assert_eq!(csr.as_cs().unwrap(), csc.as_cs().unwrap());
    }

    #[test]
    fn rectangular_csc_round_trip() {
        let t = vec![(0, 4, 1), (2, 0, 5), (2, 3, 6)];
        let m = SparseMatrix::from_triples(3, 5, t.clone()).unwrap();
        let csc = m.convert(MatrixFormat::Csc);
        let SparseMatrix::Csc(c) = &csc else { panic!() };
        assert_eq!((c.rows, c.cols), (3, 5));
        assert_eq!(c.ptr, vec![0, 1, 1, 1, 2, 3]);
        assert_eq!(csc.to_triples(), t);
    }

    #[test]
    fn validation_rejects_bad_pointers() {
        assert!(SparseMatrix::csr(2, 2, vec![0, 2, 1], vec![0, 1], vec![1, 1]).is_err());
        assert!(SparseMatrix::csr(1, 2, vec![0, 2], vec![1, 0], vec![1, 1]).is_err());
        assert!(SparseMatrix::csr(1, 2, vec![0, 1], vec![2], vec![1]).is_err());
        assert!(SparseMatrix::from_triples(2, 2, vec![(0, 0, 1), (0, 0, 2)]).is_err());
    }
}
