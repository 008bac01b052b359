//! Sparse-sparse kernels: matrix addition and Gustavson SpMSpM.

use super::{
    compressed, pack, round_robin, KernelError, KernelResult, Machine, MachineConfig, Phase, Scalar, WORD,
};
use crate::formats::{BitTree, BitVector, MatrixFormat, SparseMatrix};
use crate::scanner::{bittree_scan, tiled_scan, ScanMode};
use crate::spmu::{MemoryRequest, ReplySelect, RmwKind};

/// Leaf width of the per-row bit-trees used by matrix addition.
pub const BITTREE_LEAF: usize = 64;

fn csr_from_rows(rows: usize, cols: usize, out: Vec<(Vec<u32>, Vec<u32>)>) -> Result<SparseMatrix, KernelError> {
    let mut ptr = Vec::with_capacity(rows + 1);
    ptr.push(0);
    let (mut idx, mut values) = (Vec::new(), Vec::new());
    for (i, v) in out {
        ptr.push(ptr.last().unwrap() + i.len());
        idx.extend(i);
        values.extend(v);
    }
    Ok(SparseMatrix::csr(rows, cols, ptr, idx, values)?)
}

/// `A + B` by a union scan over each row pair's bit-trees. Cancelled
/// entries stay in the output as explicit zeros.
pub fn run_mat_add<T: Scalar>(
    cfg: &MachineConfig,
    a: &SparseMatrix,
    b: &SparseMatrix,
) -> Result<KernelResult<SparseMatrix>, KernelError> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(KernelError::Dimension(format!(
            "{}x{} plus {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (ca, cb) = (compressed(a, MatrixFormat::Csr), compressed(b, MatrixFormat::Csr));
    let (rows, cols) = (ca.rows, ca.cols);
    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let mut out = vec![(Vec::new(), Vec::new()); rows];
    let mut ph = Phase::new(p);
    for (q, owned) in round_robin(rows, p).iter().enumerate() {
        let (mut fetched, mut stored) = (0u64, 0u64);
        for &r in owned {
            let (ia, va) = ca.line(r);
            let (ib, vb) = cb.line(r);
            let ta = BitTree::with_span(cols, BITTREE_LEAF, ia.iter().map(|&c| c as usize));
            let tb = BitTree::with_span(cols, BITTREE_LEAF, ib.iter().map(|&c| c as usize));
            let scan = bittree_scan(ScanMode::Union, &ta, &tb, &mach.config().scanner)?;
            ph.scan(q, &scan, &mach.config().scanner);
            let pick = |vals: &[u32], k: i32| if k < 0 { T::zero() } else { T::from_bits(vals[k as usize]) };
            let row = &mut out[r];
            for e in &scan.elements {
                row.0.push(e.j);
                row.1.push(pick(va, e.ja).add(pick(vb, e.jb)).to_bits());
            }
            fetched += WORD * (2 * (ia.len() + ib.len()) + 2) as u64;
            stored += WORD * (2 * scan.count + 1) as u64;
        }
        ph.transfer(q, fetched + stored, &mach.config().dram);
    }
    mach.commit(ph);
    let c = csr_from_rows(rows, cols, out)?;
    Ok(mach.finish(c))
}

/// Row-by-row Gustavson product. Each output row unions the bit-vectors
/// of the `B` rows it touches, accumulates partial products into a
/// compressed scratch tile with atomic adds, then reads the tile out with
/// swap-to-zero so the next row can reuse it.
pub fn run_spmspm<T: Scalar>(
    cfg: &MachineConfig,
    a: &SparseMatrix,
    b: &SparseMatrix,
) -> Result<KernelResult<SparseMatrix>, KernelError> {
    if a.cols() != b.rows() {
        return Err(KernelError::Dimension(format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (ca, cb) = (compressed(a, MatrixFormat::Csr), compressed(b, MatrixFormat::Csr));
    let (m, n) = (ca.rows, cb.cols);
    let brows: Vec<BitVector> = (0..cb.rows)
        .map(|j| BitVector::from_indices(n, cb.line(j).0.iter().map(|&c| c as usize)))
        .collect();
    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let scfg = mach.config().scanner;
    let scratch = mach.alloc_local(n.max(1))?;
    let owned = round_robin(m, p);
    let rounds = owned.iter().map(Vec::len).max().unwrap_or(0);
    let tiles = n.div_ceil(scfg.input_width).max(1) as u64;
    let mut out = vec![(Vec::new(), Vec::new()); m];

    for t in 0..rounds {
        let mut ph = Phase::new(p);
        let mut vals = vec![BitVector::zeros(n); p];
        let mut adds = vec![Vec::new(); p];
        for (q, rows) in owned.iter().enumerate() {
            let Some(&i) = rows.get(t) else { continue };
            let (ia, va) = ca.line(i);
            let val = &mut vals[q];
            let mut bytes = WORD * (2 * ia.len() + 2) as u64;
            for &j in ia {
                val.or_assign(&brows[j as usize]);
                bytes += WORD * (2 * cb.line_len(j as usize)) as u64 + n.div_ceil(8) as u64;
            }
            ph.scan_only(q, ia.len() as u64 * tiles);
            ph.transfer(q, bytes, &mach.config().dram);
            for (&j, &aij) in ia.iter().zip(va) {
                let scan = tiled_scan(ScanMode::Intersection, &brows[j as usize], val, &scfg)?;
                ph.scan(q, &scan, &scfg);
                let bv = cb.line(j as usize).1;
                let reqs: Vec<_> = scan
                    .elements
                    .iter()
                    .map(|e| {
                        let prod = T::from_bits(aij).mul(T::from_bits(bv[e.ja as usize]));
                        MemoryRequest::rmw(
                            mach.local_addr(scratch, q, e.jb as usize),
                            T::ADD,
                            prod.to_bits(),
                            ReplySelect::OldValue,
                        )
                    })
                    .collect();
                adds[q].extend(pack(&reqs));
            }
        }
        mach.exec(&adds, &mut ph)?;

        let mut swaps = vec![Vec::new(); p];
        let mut cols = vec![Vec::new(); p];
        for (q, rows) in owned.iter().enumerate() {
            if rows.get(t).is_none() {
                continue;
            }
            let scan = tiled_scan(ScanMode::Single, &vals[q], &vals[q], &scfg)?;
            ph.scan(q, &scan, &scfg);
            ph.transfer(q, WORD * (2 * scan.count + 1) as u64, &mach.config().dram);
            let reqs: Vec<_> = scan
                .elements
                .iter()
                .map(|e| MemoryRequest::rmw(mach.local_addr(scratch, q, e.jprime as usize), RmwKind::Swap, 0, ReplySelect::OldValue))
                .collect();
            swaps[q] = pack(&reqs);
            cols[q] = scan.elements.iter().map(|e| e.j).collect();
        }
        let replies = mach.exec(&swaps, &mut ph)?;
        mach.commit(ph);
        for (q, rows) in owned.iter().enumerate() {
            if let Some(&i) = rows.get(t) {
                let v = replies[q].iter().flatten().flatten().copied().collect();
                out[i] = (std::mem::take(&mut cols[q]), v);
            }
        }
    }
    let c = csr_from_rows(m, n, out)?;
    Ok(mach.finish(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(density) {
                    t.push((r as u32, c as u32, rng.gen_range(-5i32..=5) as u32));
                }
            }
        }
        SparseMatrix::from_triples(rows, cols, t).unwrap()
    }

    fn negate(m: &SparseMatrix) -> SparseMatrix {
        let t = m
            .to_triples()
            .into_iter()
            .map(|(r, c, v)| (r, c, (v as i32).wrapping_neg() as u32))
            .collect();
        SparseMatrix::from_triples(m.rows(), m.cols(), t).unwrap()
    }

    #[test]
    fn add_zero_and_cancellation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random(&mut rng, 30, 200, 0.1);
        let zero = SparseMatrix::from_triples(30, 200, vec![]).unwrap();
        let c = run_mat_add::<i32>(&MachineConfig::default(), &a, &zero).unwrap().output;
        assert_eq!(c.to_triples(), a.to_triples());
        let c = run_mat_add::<i32>(&MachineConfig::default(), &a, &negate(&a)).unwrap().output;
        assert_eq!(c.nnz(), a.nnz());
        assert!(c.to_triples().iter().all(|t| t.2 == 0));
    }

    #[test]
    fn add_random_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random(&mut rng, 40, 300, 0.05);
        let b = random(&mut rng, 40, 300, 0.05);
        let r = run_mat_add::<i32>(&MachineConfig::default(), &a, &b).unwrap();
        assert_eq!(oracle::dense_i32(&r.output), oracle::dense_add(&a, &b));
        assert_eq!(r.stats.stalls.total(), 16 * 4 * r.cycles);
    }

    #[test]
    fn spmspm_identity_and_scaled_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b = random(&mut rng, 20, 30, 0.2);
        let c = run_spmspm::<i32>(&MachineConfig::default(), &SparseMatrix::identity(20, 1), &b)
            .unwrap()
            .output;
        assert_eq!(c.to_triples(), b.to_triples());
        let a = SparseMatrix::from_triples(1, 1, vec![(0, 0, 3)]).unwrap();
        let row = SparseMatrix::from_triples(1, 5, vec![(0, 1, 2), (0, 4, 7)]).unwrap();
        let c = run_spmspm::<i32>(&MachineConfig::default(), &a, &row).unwrap().output;
        assert_eq!(c.to_triples(), vec![(0, 1, 6), (0, 4, 21)]);
    }

    #[test]
    fn spmspm_random_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for density in [0.05, 0.15, 0.25] {
            let a = random(&mut rng, 64, 64, density);
            let b = random(&mut rng, 64, 64, density);
            let r = run_spmspm::<i32>(&MachineConfig::default(), &a, &b).unwrap();
            assert_eq!(oracle::dense_i32(&r.output), oracle::dense_matmul(&a, &b));
            assert_eq!(r.stats.stalls.total(), 16 * 4 * r.cycles);
        }
    }

    #[test]
    fn dimension_errors() {
        let a = SparseMatrix::identity(3, 1);
        let b = SparseMatrix::identity(4, 1);
        assert!(matches!(run_mat_add::<i32>(&MachineConfig::default(), &a, &b), Err(KernelError::Dimension(_))));
        assert!(matches!(run_spmspm::<i32>(&MachineConfig::default(), &a, &b), Err(KernelError::Dimension(_))));
    }
}
