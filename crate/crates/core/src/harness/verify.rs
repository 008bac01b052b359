//! Runs a kernel and judges it against its dense oracle.

use serde::{Deserialize, Serialize};

use crate::formats::SparseMatrix;
use crate::kernels::{
    oracle, run_bfs, run_coo_spmv, run_csc_spmv, run_csr_spmv, run_mat_add, run_pagerank, run_spmspm, run_sssp,
    KernelError, KernelName, KernelResult, MachineConfig, PageRankVariant, Tiling, DAMPING,
};
use crate::stats::SimStats;

/// Relative tolerance for float kernels other than PageRank.
pub const FLOAT_TOLERANCE: f64 = 1e-5;
pub const PAGERANK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelInputs {
    pub a: SparseMatrix,
    /// Second operand of MatAdd and SpMSpM.
    pub b: Option<SparseMatrix>,
    /// Input vector of the SpMV kernels, as raw words.
    pub vector: Option<Vec<u32>>,
    /// Matrix and vector words are IEEE singles rather than integers.
    pub float: bool,
    pub source: usize,
    pub iterations: usize,
}

impl KernelInputs {
    pub fn new(a: SparseMatrix) -> Self {
        Self {
            a,
            b: None,
            vector: None,
            float: false,
            source: 0,
            iterations: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub kernel: KernelName,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub cycles: u64,
    pub stats: SimStats,
    pub passed: bool,
    pub detail: String,
    /// Output tensor as little-endian words.
    #[serde(skip)]
    pub output: Vec<u32>,
}

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T, KernelError> {
    x.as_ref().ok_or_else(|| KernelError::Input(format!("missing {what}")))
}

fn f32s(words: &[u32]) -> Vec<f32> {
    words.iter().map(|&w| f32::from_bits(w)).collect()
}

fn i32s(words: &[u32]) -> Vec<i32> {
    words.iter().map(|&w| w as i32).collect()
}

fn flat<T: Copy>(m: Vec<Vec<T>>) -> Vec<T> {
    m.into_iter().flatten().collect()
}

struct Judged {
    cycles: u64,
    stats: SimStats,
    passed: bool,
    detail: String,
    output: Vec<u32>,
}

fn judge<T>(r: KernelResult<T>, passed: bool, detail: impl Into<String>, output: Vec<u32>) -> Judged {
    Judged {
        cycles: r.cycles,
        stats: r.stats,
        passed,
        detail: if passed { "ok".into() } else { detail.into() },
        output,
    }
}

fn csr_words(m: &SparseMatrix) -> Vec<u32> {
    let t = m.to_triples();
    let mut w = vec![m.rows() as u32, m.cols() as u32, t.len() as u32];
    for (r, c, v) in t {
        w.extend([r, c, v]);
    }
    w
}

/// Runs `name` on `inputs` and compares with the reference result.
pub fn check_kernel(
    name: KernelName,
    cfg: &MachineConfig,
    inputs: &KernelInputs,
    tiling: &Tiling,
) -> Result<KernelReport, KernelError> {
    let a = &inputs.a;
    let j = match name {
        KernelName::CsrSpmv | KernelName::CooSpmv | KernelName::CscSpmv => {
            let v = need(&inputs.vector, "input vector")?;
            if inputs.float {
                let x = f32s(v);
                let r = match name {
                    KernelName::CsrSpmv => run_csr_spmv(cfg, a, &x)?,
                    KernelName::CooSpmv => run_coo_spmv(cfg, a, &x)?,
                    _ => run_csc_spmv(cfg, a, &x)?,
                };
                let ok = oracle::within_relative(&r.output, &oracle::spmv_f64(a, &x), FLOAT_TOLERANCE);
                let out = r.output.iter().map(|x| x.to_bits()).collect();
                judge(r, ok, "output differs from dense mat-vec", out)
            } else {
                let x = i32s(v);
                let r = match name {
                    KernelName::CsrSpmv => run_csr_spmv(cfg, a, &x)?,
                    KernelName::CooSpmv => run_coo_spmv(cfg, a, &x)?,
                    _ => run_csc_spmv(cfg, a, &x)?,
                };
                let ok = r.output == oracle::spmv(a, &x);
                let out = r.output.iter().map(|&x| x as u32).collect();
                judge(r, ok, "output differs from dense mat-vec", out)
            }
        }
        KernelName::PrPull | KernelName::PrEdge => {
            let variant = if name == KernelName::PrPull {
                PageRankVariant::Pull
            } else {
                PageRankVariant::Edge
            };
            let r = run_pagerank(cfg, a, variant, inputs.iterations, tiling)?;
            let want = oracle::pagerank(a, DAMPING as f64, inputs.iterations);
            let ok = oracle::within_relative(&r.output, &want, PAGERANK_TOLERANCE);
            let out = r.output.iter().map(|x| x.to_bits()).collect();
            judge(r, ok, "ranks differ from power iteration", out)
        }
        KernelName::Bfs => {
            let r = run_bfs(cfg, a, inputs.source, tiling)?;
            let depth = oracle::bfs_depths(a, inputs.source);
            let dense = a.to_dense();
            let mut bad = None;
            for (d, want) in depth.iter().enumerate() {
                if r.output.reached.get(d) != want.is_some() {
                    bad = Some(format!("reachability of node {d}"));
                    break;
                }
                if let Some(p) = r.output.parent[d] {
                    let p = p as usize;
                    if dense[d][p] == 0 || depth[p].map(|x| x + 1) != *want {
                        bad = Some(format!("parent {p} of node {d}"));
                        break;
                    }
                } else if want.is_some() && d != inputs.source {
                    bad = Some(format!("node {d} has no parent"));
                    break;
                }
            }
            let out = r.output.parent.iter().map(|p| p.map_or(u32::MAX, |x| x)).collect();
            let ok = bad.is_none();
            judge(r, ok, bad.unwrap_or_default(), out)
        }
        KernelName::Sssp => {
            if inputs.float {
                return Err(KernelError::Input("shortest paths need integer weights".into()));
            }
            let r = run_sssp(cfg, a, inputs.source, tiling)?;
            let want = oracle::bellman_ford(a, inputs.source);
            let dense = a.to_dense();
            let mut bad = None;
            for (d, w) in want.iter().enumerate() {
                if r.output.dist[d].map(i64::from) != *w {
                    bad = Some(format!("distance of node {d}"));
                    break;
                }
                if let Some(p) = r.output.parent[d] {
                    let p = p as usize;
                    let ok = dense[d][p] != 0
                        && want[p].zip(*w).is_some_and(|(dp, dd)| dp + dense[d][p] as i64 == dd);
                    if !ok {
                        bad = Some(format!("parent {p} of node {d}"));
                        break;
                    }
                }
            }
            let out = r.output.dist.iter().map(|x| x.unwrap_or(u32::MAX)).collect();
            let ok = bad.is_none();
            judge(r, ok, bad.unwrap_or_default(), out)
        }
        KernelName::MatAdd | KernelName::SpMSpM => {
            let b = need(&inputs.b, "second matrix")?;
            let add = name == KernelName::MatAdd;
            if inputs.float {
                let r = if add {
                    run_mat_add::<f32>(cfg, a, b)?
                } else {
                    run_spmspm::<f32>(cfg, a, b)?
                };
                let want = if add {
                    let (x, y) = (oracle::dense_f64(a), oracle::dense_f64(b));
                    x.iter().zip(&y).map(|(p, q)| p.iter().zip(q).map(|(u, v)| u + v).collect()).collect()
                } else {
                    oracle::dense_matmul_f64(a, b)
                };
                let got: Vec<f32> = flat(oracle::dense_f64(&r.output)).into_iter().map(|x| x as f32).collect();
                let ok = oracle::within_relative(&got, &flat(want), FLOAT_TOLERANCE);
                let out = csr_words(&r.output);
                judge(r, ok, "product differs from dense reference", out)
            } else {
                let r = if add {
                    run_mat_add::<i32>(cfg, a, b)?
                } else {
                    run_spmspm::<i32>(cfg, a, b)?
                };
                let want = if add {
                    oracle::dense_add(a, b)
                } else {
                    oracle::dense_matmul(a, b)
                };
                let ok = oracle::dense_i32(&r.output) == want;
                let out = csr_words(&r.output);
                judge(r, ok, "result differs from dense reference", out)
            }
        }
    };
    Ok(KernelReport {
        kernel: name,
        rows: a.rows(),
        cols: a.cols(),
        nnz: a.nnz(),
        cycles: j.cycles,
        stats: j.stats,
        passed: j.passed,
        detail: j.detail,
        output: j.output,
    })
}
