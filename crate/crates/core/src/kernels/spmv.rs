//! Sparse matrix times dense vector in three storage orders.

use super::{
    compressed, pack, round_robin, Array, KernelError, KernelResult, Machine, MachineConfig, Phase,
    Scalar, LANES, WORD,
};
use crate::formats::{CsMatrix, MatrixFormat, SparseMatrix, Triple};
use crate::scanner::data_scan;
use crate::spmu::{MemoryRequest, ReplySelect};

/// Lane-parallel reduction tree.
pub(super) fn tree_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => tree_sum(&xs[..n / 2]).add(tree_sum(&xs[n / 2..])),
    }
}

fn check_vector(m: &SparseMatrix, len: usize) -> Result<(), KernelError> {
    if m.cols() != len {
        return Err(KernelError::Dimension(format!(
            "{}x{} matrix times vector of length {len}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Loads each partition's rows of `csr` plus its slice of a dense vector.
pub(super) fn load_rows(mach: &Machine, csr: &CsMatrix, owned: &[Vec<usize>], dense: usize, phase: &mut Phase) {
    let p = mach.partitions();
    for (q, rows) in owned.iter().enumerate() {
        let nnz: usize = rows.iter().map(|&r| csr.line_len(r)).sum();
        let bytes = WORD * (2 * nnz + rows.len() + 1 + dense.div_ceil(p)) as u64;
        phase.transfer(q, bytes, &mach.config().dram);
    }
}

/// Gathers `v[c]` for every nonzero of every owned row and reduces each row.
pub(super) fn gather_rows<T: Scalar>(
    mach: &mut Machine,
    csr: &CsMatrix,
    owned: &[Vec<usize>],
    v: Array,
    phase: &mut Phase,
) -> Result<Vec<T>, KernelError> {
    let mut streams = Vec::with_capacity(owned.len());
    for rows in owned {
        let mut s = Vec::new();
        for &r in rows {
            let (idx, _) = csr.line(r);
            let reqs: Vec<_> = idx.iter().map(|&c| MemoryRequest::read(mach.addr(v, c as usize))).collect();
            s.extend(pack(&reqs));
        }
        streams.push(s);
    }
    let replies = mach.exec(&streams, phase)?;
    let mut sums = vec![T::zero(); csr.rows];
    for (rows, rep) in owned.iter().zip(&replies) {
        let mut vectors = rep.iter();
        for &r in rows {
            let (_, vals) = csr.line(r);
            let mut acc = T::zero();
            for chunk in vals.chunks(LANES) {
                let got = vectors.next().expect("one reply vector per chunk");
                let prods: Vec<T> = chunk
                    .iter()
                    .zip(got)
                    .map(|(&m, x)| T::from_bits(m).mul(T::from_bits(x.expect("read reply"))))
                    .collect();
                acc = acc.add(tree_sum(&prods));
            }
            sums[r] = acc;
        }
    }
    Ok(sums)
}

/// Writes `(index, word)` pairs per partition into an interleaved array.
pub(super) fn write_values(
    mach: &mut Machine,
    a: Array,
    items: &[Vec<(usize, u32)>],
    phase: &mut Phase,
) -> Result<(), KernelError> {
    let streams: Vec<_> = items
        .iter()
        .map(|xs| {
            let reqs: Vec<_> = xs.iter().map(|&(i, w)| MemoryRequest::write(mach.addr(a, i), w)).collect();
            pack(&reqs)
        })
        .collect();
    mach.exec(&streams, phase)?;
    Ok(())
}

/// Nonzeros dealt round-robin: gather `v[c]`, then atomically add
/// `m * v[c]` into `out[r]`.
pub(super) fn scatter_add<T: Scalar>(
    mach: &mut Machine,
    triples: &[Triple],
    v: Array,
    out: Array,
    phase: &mut Phase,
) -> Result<(), KernelError> {
    let p = mach.partitions();
    let owned = round_robin(triples.len(), p);
    let gathers: Vec<_> = owned
        .iter()
        .map(|ks| {
            let reqs: Vec<_> = ks
                .iter()
                .map(|&k| MemoryRequest::read(mach.addr(v, triples[k].1 as usize)))
                .collect();
            pack(&reqs)
        })
        .collect();
    let replies = mach.exec(&gathers, phase)?;
    let adds: Vec<_> = owned
        .iter()
        .zip(&replies)
        .map(|(ks, rep)| {
            let xs = rep.iter().flatten().map(|x| x.expect("read reply"));
            let reqs: Vec<_> = ks
                .iter()
                .zip(xs)
                .map(|(&k, x)| {
                    let (r, _, m) = triples[k];
                    let prod = T::from_bits(m).mul(T::from_bits(x));
                    MemoryRequest::rmw(mach.addr(out, r as usize), T::ADD, prod.to_bits(), ReplySelect::OldValue)
                })
                .collect();
            pack(&reqs)
        })
        .collect();
    mach.exec(&adds, phase)?;
    Ok(())
}

fn read_out<T: Scalar>(mach: &Machine, a: Array, n: usize) -> Vec<T> {
    (0..n).map(|i| T::from_bits(mach.load(mach.addr(a, i)))).collect()
}

/// Row-parallel SpMV; each row gathers its inputs through the SpMUs.
pub fn run_csr_spmv<T: Scalar>(
    cfg: &MachineConfig,
    m: &SparseMatrix,
    v: &[T],
) -> Result<KernelResult<Vec<T>>, KernelError> {
    check_vector(m, v.len())?;
    let csr = compressed(m, MatrixFormat::Csr);
    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let vs = mach.place(v.iter().map(|x| x.to_bits()))?;
    let out = mach.alloc(csr.rows)?;
    let owned = round_robin(csr.rows, p);

    let mut load = Phase::new(p);
    load_rows(&mach, &csr, &owned, v.len(), &mut load);
    mach.commit(load);

    let mut gather = Phase::new(p);
    let sums: Vec<T> = gather_rows(&mut mach, &csr, &owned, vs, &mut gather)?;
    mach.commit(gather);

    let items: Vec<Vec<_>> = owned
        .iter()
        .map(|rows| rows.iter().map(|&r| (r, sums[r].to_bits())).collect())
        .collect();
    let mut store = Phase::new(p);
    write_values(&mut mach, out, &items, &mut store)?;
    mach.commit(store);

    let y = read_out(&mach, out, csr.rows);
    Ok(mach.finish(y))
}

/// Nonzero-parallel SpMV accumulating with atomic adds.
pub fn run_coo_spmv<T: Scalar>(
    cfg: &MachineConfig,
    m: &SparseMatrix,
    v: &[T],
) -> Result<KernelResult<Vec<T>>, KernelError> {
    check_vector(m, v.len())?;
    let triples = m.to_triples();
    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let vs = mach.place(v.iter().map(|x| x.to_bits()))?;
    let out = mach.alloc(m.rows())?;

    let mut load = Phase::new(p);
    for (q, ks) in round_robin(triples.len(), p).iter().enumerate() {
        let bytes = WORD * (3 * ks.len() + v.len().div_ceil(p)) as u64;
        load.transfer(q, bytes, &mach.config().dram);
    }
    mach.commit(load);

    let mut work = Phase::new(p);
    scatter_add::<T>(&mut mach, &triples, vs, out, &mut work)?;
    mach.commit(work);

    let y = read_out(&mach, out, m.rows());
    Ok(mach.finish(y))
}

/// Column-parallel SpMV over a sparse input: zero inputs are skipped by a
/// data scan and the surviving columns scatter atomic adds.
pub fn run_csc_spmv<T: Scalar>(
    cfg: &MachineConfig,
    m: &SparseMatrix,
    v: &[T],
) -> Result<KernelResult<Vec<T>>, KernelError> {
    check_vector(m, v.len())?;
    let csc = compressed(m, MatrixFormat::Csc);
    let mut mach = Machine::new(cfg)?;
    let p = mach.partitions();
    let out = mach.alloc(csc.rows)?;
    let owned = round_robin(csc.cols, p);

    let mut load = Phase::new(p);
    for (q, cols) in owned.iter().enumerate() {
        load.transfer(q, WORD * cols.len() as u64, &mach.config().dram);
    }
    mach.commit(load);

    let mut work = Phase::new(p);
    let mut streams = Vec::with_capacity(p);
    let mut fetched = Vec::with_capacity(p);
    for (q, cols) in owned.iter().enumerate() {
        let slice: Vec<u32> = cols.iter().map(|&c| v[c].to_bits()).collect();
        let scan = data_scan(&slice);
        work.scan_only(q, scan.cycles);
        let mut reqs = Vec::new();
        let mut bytes = 0;
        for &(k, x) in &scan.hits {
            let c = cols[k];
            let (idx, vals) = csc.line(c);
            bytes += WORD * (2 * idx.len() + 2) as u64;
            for chunk in idx.iter().zip(vals).collect::<Vec<_>>().chunks(LANES) {
                let rs: Vec<_> = chunk
                    .iter()
                    .map(|(&r, &mv)| {
                        let prod = T::from_bits(mv).mul(T::from_bits(x));
                        MemoryRequest::rmw(mach.addr(out, r as usize), T::ADD, prod.to_bits(), ReplySelect::OldValue)
                    })
                    .collect();
                reqs.push(rs);
            }
        }
        fetched.push(bytes);
        streams.push(reqs.iter().flat_map(|c| pack(c)).collect());
    }
    for (q, &b) in fetched.iter().enumerate() {
        work.transfer(q, b, &mach.config().dram);
    }
    mach.exec(&streams, &mut work)?;
    mach.commit(work);

    let y = read_out(&mach, out, csc.rows);
    Ok(mach.finish(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::oracle;
    use crate::spmu::OrderingMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(density) {
                    t.push((r as u32, c as u32, rng.gen_range(-9i32..=9) as u32));
                }
            }
        }
        SparseMatrix::from_triples(rows, cols, t).unwrap()
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<i32> {
        (0..n).map(|_| rng.gen_range(-20..=20)).collect()
    }

    type Spmv = fn(&MachineConfig, &SparseMatrix, &[i32]) -> Result<KernelResult<Vec<i32>>, KernelError>;
    const ALL: [(MatrixFormat, Spmv); 3] = [
        (MatrixFormat::Csr, run_csr_spmv::<i32>),
        (MatrixFormat::Coo, run_coo_spmv::<i32>),
        (MatrixFormat::Csc, run_csc_spmv::<i32>),
    ];

    #[test]
    fn identity_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vector(&mut rng, 40);
        let id = SparseMatrix::identity(40, 1);
        for (f, run) in ALL {
            let r = run(&MachineConfig::default(), &id.convert(f), &v).unwrap();
            assert_eq!(r.output, v, "{f:?}");
        }
    }

    #[test]
    fn ones_row_sums() {
        let v: Vec<i32> = (1..=37).collect();
        let t = (0..37).map(|c| (0, c, 1)).collect();
        let m = SparseMatrix::from_triples(1, 37, t).unwrap();
        for (f, run) in ALL {
            assert_eq!(run(&MachineConfig::default(), &m.convert(f), &v).unwrap().output, vec![703]);
        }
    }

    #[test]
    fn random_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(&mut rng, 64, 64, 0.1);
        let v = random_vector(&mut rng, 64);
        let want = oracle::spmv(&m, &v);
        for (f, run) in ALL {
            let r = run(&MachineConfig::default(), &m.convert(f), &v).unwrap();
            assert_eq!(r.output, want, "{f:?}");
            assert_eq!(r.stats.stalls.total(), 16 * 4 * r.cycles);
        }
    }

    #[test]
    fn float_spmv_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 50, 70, 0.2);
        let fm = SparseMatrix::from_triples(
            50,
            70,
            m.to_triples().into_iter().map(|(r, c, x)| (r, c, (x as i32 as f32 * 0.37).to_bits())).collect(),
        )
        .unwrap();
        let v: Vec<f32> = (0..70).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want = oracle::spmv_f64(&fm, &v);
        for (f, run) in [
            (MatrixFormat::Csr, run_csr_spmv::<f32> as fn(&_, &_, &_) -> _),
            (MatrixFormat::Coo, run_coo_spmv::<f32>),
            (MatrixFormat::Csc, run_csc_spmv::<f32>),
        ] {
            let got = run(&MachineConfig::default(), &fm.convert(f), &v).unwrap().output;
            assert!(oracle::within_relative(&got, &want, 1e-5), "{f:?}");
        }
    }

    #[test]
    fn csc_skips_zero_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_matrix(&mut rng, 48, 48, 0.2);
        assert_eq!(
            run_csc_spmv(&MachineConfig::default(), &m, &[0i32; 48]).unwrap().output,
            vec![0; 48]
        );
        let mut e = vec![0i32; 48];
        e[17] = 1;
        let col: Vec<i32> = (0..48).map(|r| m.to_dense()[r][17] as i32).collect();
        assert_eq!(run_csc_spmv(&MachineConfig::default(), &m, &e).unwrap().output, col);
        let sparse: Vec<i32> = (0..48).map(|_| if rng.gen_bool(0.3) { rng.gen_range(1..9) } else { 0 }).collect();
        assert_eq!(
            run_csc_spmv(&MachineConfig::default(), &m, &sparse).unwrap().output,
            oracle::spmv(&m, &sparse)
        );
    }

    #[test]
    fn unordered_beats_arbitrated_with_identical_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(&mut rng, 128, 128, 0.1);
        let v = random_vector(&mut rng, 128);
        let mut cfg = MachineConfig::default();
        cfg.spmu.mode = OrderingMode::Arbitrated;
        let slow = run_coo_spmv(&cfg, &m, &v).unwrap();
        cfg.spmu.mode = OrderingMode::Unordered;
        let fast = run_coo_spmv(&cfg, &m, &v).unwrap();
        assert_eq!(slow.output, fast.output);
        assert_eq!(fast.output, oracle::spmv(&m, &v));
        assert!(fast.cycles < slow.cycles, "{} vs {}", fast.cycles, slow.cycles);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = SparseMatrix::identity(4, 1);
        for (_, run) in ALL {
            assert!(matches!(
                run(&MachineConfig::default(), &m, &[1, 2, 3]),
                Err(KernelError::Dimension(_))
            ));
        }
    }

    #[test]
    fn tree_sum_adds_everything() {
        let xs: Vec<i32> = (1..=23).collect();
        assert_eq!(tree_sum(&xs), 276);
    }
}
