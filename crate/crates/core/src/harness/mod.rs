//! Experiment driver behind the `capstan-sim` binary.
//!
//! An [`ExperimentSpec`] names an experiment plus configuration overrides.
//! Sweep points run on a rayon pool, each with its own simulator and a
//! seed derived from the experiment seed and the point's index, and are
//! collected in grid order so output bytes never depend on scheduling.

pub mod generate;
mod verify;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dram::DramConfig;
use crate::formats::{load_matrix_market, BitVector, FormatError, MarketField, SparseMatrix};
use crate::kernels::{KernelError, KernelName, MachineConfig, Tiling};
use crate::scanner::{tiled_scan, ScanError, ScanMode, ScannerConfig};
use crate::shuffle::{measure_throughput, MergeFlex, ShuffleConfig, ShuffleError};
use crate::spmu::{measure_utilization, Crossbar, OrderingMode, SpmuConfig, SpmuError, TraceParams};
use crate::stats::StallCategory;

pub use verify::{check_kernel, KernelInputs, KernelReport, FLOAT_TOLERANCE, PAGERANK_TOLERANCE};

pub const DEFAULT_SEED: u64 = 0xCAFE;
pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "CAPSTAN_SIM_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spmu(#[from] SpmuError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |err| HarnessError::Io {
        path: path.to_owned(),
        err,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BankSweep,
    OrderingSweep,
    MergeSweep,
    ScannerSweep,
    Kernel,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BankSweep => "bank-sweep",
            Experiment::OrderingSweep => "ordering-sweep",
            Experiment::MergeSweep => "merge-sweep",
            Experiment::ScannerSweep => "scanner-sweep",
            Experiment::Kernel => "kernel",
        }
    }
}

/// Kernel input source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dataset {
    /// Random operands; graphs get integer weights in `1..=max_weight`.
    Generate {
        rows: usize,
        cols: usize,
        density: f64,
        #[serde(default)]
        float: bool,
    },
    /// MatrixMarket files. Without `second`, MatAdd adds the matrix to
    /// itself and SpMSpM multiplies it by its transpose. Graph kernels
    /// read real-valued files as unit-weight patterns.
    MatrixMarket {
        path: PathBuf,
        #[serde(default)]
        second: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSpec {
    pub name: KernelName,
    pub dataset: Dataset,
    pub source: usize,
    pub iterations: usize,
    /// Nonzero fraction of the sparse input vector of CSC SpMV.
    pub vector_density: f64,
    pub max_weight: u32,
    /// One partition id per node, METIS style.
    pub partition_file: Option<PathBuf>,
    /// Where to write the output tensor as little-endian words.
    pub dump: Option<PathBuf>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            name: KernelName::CsrSpmv,
            dataset: Dataset::Generate {
                rows: 64,
                cols: 64,
                density: 0.1,
                float: false,
            },
            source: 0,
            iterations: 5,
            vector_density: 0.3,
            max_weight: 20,
            partition_file: None,
            dump: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub spmu: SpmuConfig,
    pub shuffle: ShuffleConfig,
    pub scanner: ScannerConfig,
    pub dram: DramConfig,
    pub partitions: usize,
    pub warmup_cycles: u64,
    /// Measured cycles per sweep point; each sweep has its own default.
    pub cycles: Option<u64>,
    pub kernel: KernelSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: None,
            spmu: SpmuConfig::default(),
            shuffle: ShuffleConfig::default(),
            scanner: ScannerConfig::default(),
            dram: DramConfig::default(),
            partitions: 4,
            warmup_cycles: 1_000,
            cycles: None,
            kernel: KernelSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn machine(&self) -> MachineConfig {
        MachineConfig {
            partitions: self.partitions,
            spmu: self.spmu.clone(),
            merge: self.shuffle.merge,
            scanner: self.scanner,
            dram: self.dram.clone(),
        }
    }

    fn trace(&self, default_cycles: u64, seed: u64) -> TraceParams {
        TraceParams {
            warmup_cycles: self.warmup_cycles,
            measure_cycles: self.cycles.unwrap_or(default_cycles),
            seed,
            ..Default::default()
        }
    }
}

/// Seed of sub-experiment `index`: one ChaCha stream per point.
pub fn point_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Worker pool capped by `CAPSTAN_SIM_THREADS` when set.
pub fn pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn sweep<P: Sync, R: Send>(
    points: &[P],
    f: impl Fn(usize, &P) -> Result<R, HarnessError> + Sync + Send,
) -> Result<Vec<R>, HarnessError> {
    pool().install(|| points.par_iter().enumerate().map(|(i, p)| f(i, p)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankPoint {
    pub depth: usize,
    pub crossbar: Crossbar,
    pub priorities: usize,
    /// Percentage of banks granted per cycle.
    pub utilization: f64,
}

pub const BANK_DEPTHS: [usize; 3] = [8, 16, 32];
pub const BANK_CROSSBARS: [Crossbar; 2] = [Crossbar::Single, Crossbar::Double];
pub const BANK_PRIORITIES: [usize; 3] = [1, 2, 3];

/// Utilization over depth x crossbar x priority levels on the random trace.
pub fn run_bank_sweep(spec: &ExperimentSpec, seed: u64) -> Result<Vec<BankPoint>, HarnessError> {
    let mut grid = Vec::new();
    for d in BANK_DEPTHS {
        for x in BANK_CROSSBARS {
            for p in BANK_PRIORITIES {
                grid.push((d, x, p));
            }
        }
    }
    sweep(&grid, |i, &(depth, crossbar, priorities)| {
        let cfg = SpmuConfig {
            depth,
            crossbar,
            priorities,
            iterations: spec.spmu.iterations.max(priorities),
            ..spec.spmu.clone()
        };
        let s = measure_utilization(&cfg, &spec.trace(100_000, point_seed(seed, i as u64)))?;
        Ok(BankPoint {
            depth,
            crossbar,
            priorities,
            utilization: 100.0 * s.utilization(),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingPoint {
    pub mode: OrderingMode,
    pub utilization: f64,
}

pub const ORDERING_MODES: [OrderingMode; 4] = [
    OrderingMode::Unordered,
    OrderingMode::AddressOrdered,
    OrderingMode::FullyOrdered,
    OrderingMode::Arbitrated,
];

/// The four ordering modes on the random trace at the spec's SpMU shape.
pub fn run_ordering_sweep(spec: &ExperimentSpec, seed: u64) -> Result<Vec<OrderingPoint>, HarnessError> {
    sweep(&ORDERING_MODES, |i, &mode| {
        let cfg = SpmuConfig {
            mode,
            ..spec.spmu.clone()
        };
        let s = measure_utilization(&cfg, &spec.trace(100_000, point_seed(seed, i as u64)))?;
        Ok(OrderingPoint {
            mode,
            utilization: 100.0 * s.utilization(),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePoint {
    pub endpoints: usize,
    pub merge: MergeFlex,
    /// Delivered requests per cycle.
    pub throughput: f64,
    pub merge_stalls: u64,
    pub fifo_stalls: u64,
}

pub const MERGE_ENDPOINTS: [usize; 3] = [4, 8, 16];
pub const MERGE_FLEX: [MergeFlex; 3] = [MergeFlex::Mrg0, MergeFlex::Mrg1, MergeFlex::Full];

/// Shuffle throughput on uniform cross-partition traffic.
pub fn run_merge_sweep(spec: &ExperimentSpec, seed: u64) -> Result<Vec<MergePoint>, HarnessError> {
    let mut grid = Vec::new();
    for e in MERGE_ENDPOINTS {
        for m in MERGE_FLEX {
            grid.push((e, m));
        }
    }
    let cycles = spec.cycles.unwrap_or(20_000);
    sweep(&grid, |i, &(endpoints, merge)| {
        let cfg = ShuffleConfig {
            endpoints,
            merge,
            ..spec.shuffle.clone()
        };
        let s = measure_throughput(&cfg, cycles, point_seed(seed, i as u64))?;
        Ok(MergePoint {
            endpoints,
            merge,
            throughput: s.throughput(),
            merge_stalls: s.merge_stalls,
            fifo_stalls: s.fifo_stalls,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerPoint {
    pub vectorization: usize,
    pub density: f64,
    pub cycles: u64,
    /// Cycles relative to a 16-wide scanner on the same operands.
    pub slowdown: f64,
}

pub const SCANNER_WIDTHS: [usize; 5] = [1, 2, 4, 8, 16];
pub const SCANNER_DENSITIES: [f64; 4] = [0.01, 0.1, 0.3, 0.5];
const SCANNER_BITS: usize = 1 << 16;

/// Cycles to enumerate random bit-vectors at each output vectorization.
pub fn run_scanner_sweep(spec: &ExperimentSpec, seed: u64) -> Result<Vec<ScannerPoint>, HarnessError> {
    let rows = sweep(&SCANNER_DENSITIES, |i, &density| {
        let mut rng = ChaCha8Rng::seed_from_u64(point_seed(seed, i as u64));
        let bits = spec.cycles.map_or(SCANNER_BITS, |c| c as usize);
        let a = BitVector::from_indices(bits, (0..bits).filter(|_| rand::Rng::gen_bool(&mut rng, density)));
        let cycles = |w: usize| -> Result<u64, HarnessError> {
            let cfg = ScannerConfig {
                vectorization: w,
                ..spec.scanner
            };
            Ok(tiled_scan(ScanMode::Single, &a, &a, &cfg)?.cycles)
        };
        let base = cycles(16)?;
        SCANNER_WIDTHS
            .iter()
            .map(|&w| {
                let c = cycles(w)?;
                Ok(ScannerPoint {
                    vectorization: w,
                    density,
                    cycles: c,
                    slowdown: c as f64 / base as f64,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

fn load_market(path: &Path) -> Result<(SparseMatrix, MarketField), HarnessError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let m = load_matrix_market(BufReader::new(f))?;
    Ok((m.matrix, m.field))
}

fn transpose(m: &SparseMatrix) -> SparseMatrix {
    let t = m.to_triples().into_iter().map(|(r, c, v)| (c, r, v)).collect();
    SparseMatrix::from_triples(m.cols(), m.rows(), t).expect("transpose of a valid matrix")
}

fn unit_weights(m: &SparseMatrix) -> SparseMatrix {
    let t = m.to_triples().into_iter().map(|(r, c, _)| (r, c, 1)).collect();
    SparseMatrix::from_triples(m.rows(), m.cols(), t).expect("pattern of a valid matrix")
}

fn is_graph(k: KernelName) -> bool {
    matches!(
        k,
        KernelName::PrPull | KernelName::PrEdge | KernelName::Bfs | KernelName::Sssp
    )
}

/// Builds kernel operands from a dataset description.
pub fn kernel_inputs(spec: &KernelSpec, seed: u64) -> Result<KernelInputs, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = spec.name;
    let mut inputs = match &spec.dataset {
        Dataset::Generate {
            rows,
            cols,
            density,
            float,
        } => {
            if !(0.0..=1.0).contains(density) {
                return Err(HarnessError::Config(format!("density {density} outside [0, 1]")));
            }
            if is_graph(name) {
                let mut i = KernelInputs::new(generate::random_graph(&mut rng, *rows, *density, spec.max_weight));
                i.float = false;
                i
            } else {
                let a = generate::random_matrix(&mut rng, *rows, *cols, *density, *float);
                let b = match name {
                    KernelName::MatAdd => Some(generate::random_matrix(&mut rng, *rows, *cols, *density, *float)),
                    KernelName::SpMSpM => Some(generate::random_matrix(&mut rng, *cols, *cols, *density, *float)),
                    _ => None,
                };
                let mut i = KernelInputs::new(a);
                i.b = b;
                i.float = *float;
                i
            }
        }
        Dataset::MatrixMarket { path, second } => {
            let (mut a, field) = load_market(path)?;
            if is_graph(name) && field == MarketField::Real {
                a = unit_weights(&a);
            }
            let b = match second {
                Some(p) => Some(load_market(p)?.0),
                None if name == KernelName::MatAdd => Some(a.clone()),
                None if name == KernelName::SpMSpM => Some(transpose(&a)),
                None => None,
            };
            let mut i = KernelInputs::new(a);
            i.b = b;
            i.float = field == MarketField::Real && !is_graph(name);
            i
        }
    };
    if matches!(name, KernelName::CsrSpmv | KernelName::CooSpmv | KernelName::CscSpmv) {
        let n = inputs.a.cols();
        inputs.vector = Some(if name == KernelName::CscSpmv {
            generate::sparse_vector(&mut rng, n, spec.vector_density, inputs.float)
        } else {
            generate::dense_vector(&mut rng, n, inputs.float)
        });
    }
    inputs.source = spec.source;
    inputs.iterations = spec.iterations;
    Ok(inputs)
}

/// Runs the spec's kernel and checks it against the oracle.
pub fn run_kernel(spec: &ExperimentSpec, seed: u64) -> Result<KernelReport, HarnessError> {
    let inputs = kernel_inputs(&spec.kernel, seed)?;
    let tiling = match &spec.kernel.partition_file {
        Some(p) => Tiling::from_reader(BufReader::new(fs::File::open(p).map_err(io_err(p))?))?,
        None => Tiling::RoundRobin,
    };
    let report = check_kernel(spec.kernel.name, &spec.machine(), &inputs, &tiling)?;
    if let Some(p) = &spec.kernel.dump {
        let bytes: Vec<u8> = report.output.iter().flat_map(|w| w.to_le_bytes()).collect();
        fs::write(p, bytes).map_err(io_err(p))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Bank(Vec<BankPoint>),
    Ordering(Vec<OrderingPoint>),
    Merge(Vec<MergePoint>),
    Scanner(Vec<ScannerPoint>),
    Kernel(Box<KernelReport>),
}

pub fn run_experiment(kind: Experiment, spec: &ExperimentSpec, seed: u64) -> Result<Outcome, HarnessError> {
    Ok(match kind {
        Experiment::BankSweep => Outcome::Bank(run_bank_sweep(spec, seed)?),
        Experiment::OrderingSweep => Outcome::Ordering(run_ordering_sweep(spec, seed)?),
        Experiment::MergeSweep => Outcome::Merge(run_merge_sweep(spec, seed)?),
        Experiment::ScannerSweep => Outcome::Scanner(run_scanner_sweep(spec, seed)?),
        Experiment::Kernel => Outcome::Kernel(Box::new(run_kernel(spec, seed)?)),
    })
}

fn variant<T: Serialize>(x: &T) -> String {
    match serde_json::to_value(x) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Outcome {
    pub fn experiment(&self) -> Experiment {
        match self {
            Outcome::Bank(_) => Experiment::BankSweep,
            Outcome::Ordering(_) => Experiment::OrderingSweep,
            Outcome::Merge(_) => Experiment::MergeSweep,
            Outcome::Scanner(_) => Experiment::ScannerSweep,
            Outcome::Kernel(_) => Experiment::Kernel,
        }
    }

    /// Failed oracle check.
    pub fn failed(&self) -> bool {
        matches!(self, Outcome::Kernel(r) if !r.passed)
    }

    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        match self {
            Outcome::Bank(rows) => (
                vec!["depth", "crossbar", "priorities", "utilization_pct"],
                rows.iter()
                    .map(|r| {
                        vec![
                            r.depth.to_string(),
                            variant(&r.crossbar),
                            r.priorities.to_string(),
                            format!("{:.3}", r.utilization),
                        ]
                    })
                    .collect(),
            ),
            Outcome::Ordering(rows) => (
                vec!["mode", "utilization_pct"],
                rows.iter()
                    .map(|r| vec![variant(&r.mode), format!("{:.3}", r.utilization)])
                    .collect(),
            ),
            Outcome::Merge(rows) => (
                vec!["endpoints", "merge", "throughput", "merge_stalls", "fifo_stalls"],
                rows.iter()
                    .map(|r| {
                        vec![
                            r.endpoints.to_string(),
                            variant(&r.merge),
                            format!("{:.4}", r.throughput),
                            r.merge_stalls.to_string(),
                            r.fifo_stalls.to_string(),
                        ]
                    })
                    .collect(),
            ),
            Outcome::Scanner(rows) => (
                vec!["vectorization", "density", "cycles", "slowdown"],
                rows.iter()
                    .map(|r| {
                        vec![
                            r.vectorization.to_string(),
                            r.density.to_string(),
                            r.cycles.to_string(),
                            format!("{:.4}", r.slowdown),
                        ]
                    })
                    .collect(),
            ),
            Outcome::Kernel(r) => {
                let mut cols = vec!["kernel", "rows", "cols", "nnz", "cycles", "passed"];
                let mut row = vec![
                    variant(&r.kernel),
                    r.rows.to_string(),
                    r.cols.to_string(),
                    r.nnz.to_string(),
                    r.cycles.to_string(),
                    r.passed.to_string(),
                ];
                const NAMES: [&str; 8] = [
                    "active", "scan", "load_store", "vector_length", "imbalance", "network", "sram", "dram",
                ];
                for (c, n) in StallCategory::ALL.iter().zip(NAMES) {
                    cols.push(n);
                    row.push(r.stats.stalls.get(*c).to_string());
                }
                cols.push("detail");
                row.push(quote(&r.detail));
                (cols, vec![row])
            }
        }
    }

    pub fn render(&self, format: OutputFormat, seed: u64) -> Result<String, HarnessError> {
        let name = self.experiment().name();
        match format {
            OutputFormat::Csv => {
                let (cols, rows) = self.table();
                let mut s = format!("#schema,capstan-sim/{name},v{SCHEMA_VERSION},seed={seed}\n");
                s.push_str(&cols.join(","));
                s.push('\n');
                for r in rows {
                    s.push_str(&r.join(","));
                    s.push('\n');
                }
                Ok(s)
            }
            OutputFormat::Json => {
                let body = match self {
                    Outcome::Bank(r) => serde_json::to_value(r)?,
                    Outcome::Ordering(r) => serde_json::to_value(r)?,
                    Outcome::Merge(r) => serde_json::to_value(r)?,
                    Outcome::Scanner(r) => serde_json::to_value(r)?,
                    Outcome::Kernel(r) => serde_json::to_value(r)?,
                };
                let doc = serde_json::json!({
                    "schema": format!("capstan-sim/{name}"),
                    "version": SCHEMA_VERSION,
                    "seed": seed,
                    "results": body,
                });
                let mut s = serde_json::to_string_pretty(&doc)?;
                s.push('\n');
                Ok(s)
            }
        }
    }
}
