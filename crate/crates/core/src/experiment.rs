//! Seeded experiment sweeps: SNR versus delivery delay for quantized
//! network coding and the forwarding baseline, with CSV output and
//! block-length optimization.
//!
//! A sweep runs one cell per `(edge count, sparsity ratio, realization)`.
//! Cells are independent jobs; results are merged in job order, never in
//! completion order, so a run is byte-identical for a given config and
//! seed regardless of thread scheduling.
//!
//! Per-cell seeds derive from the base seed by a fixed counter scheme
//! (see [`seeds::derive_seed`]):
//!
//! ```text
//! graph        <- derive(base, [0, edge_index, realization])
//! coefficients <- derive(base, [1, edge_index, realization])
//! messages     <- derive(base, [2, ratio_index, realization])
//! ```
//!
//! so a deployment is shared by every sparsity ratio and block length, and
//! the same messages are replayed over every deployment size.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::coding::{
    assemble_measurements, generate_coefficients, run_qnc, CodingError,
};
use crate::decode::{solve_bpdn, DecodeProblem, SolverOptions};
use crate::forward::{simulate_forwarding, ForwardError};
use crate::graph::{generate_random_network, shortest_paths_to_gateway, GraphError};
use crate::quantizer::{quantizers_for_graph, QuantizerError};
use crate::seeds;
use crate::signal::{generate_sparse_messages, SignalError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("no result rows to optimize")]
    EmptyResults,
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error("SNR needs equal-length non-empty run lists")]
    BadSnrInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

/// Transmission scheme of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    Forwarding,
    Qnc,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Forwarding => "forwarding",
            Scheme::Qnc => "qnc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "forwarding" => Some(Scheme::Forwarding),
            "qnc" => Some(Scheme::Qnc),
            _ => None,
        }
    }
}

/// Sweep parameters; `output` is the default CSV destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    pub edge_counts: Vec<usize>,
    /// Sparsity ratios k/n; k is the nearest positive integer to ratio*n.
    pub sparsity_ratios: Vec<f64>,
    pub block_lengths: Vec<u32>,
    pub realizations: usize,
    pub q_max: f64,
    pub t_max: usize,
    pub base_seed: u64,
    pub capacity: u32,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses the flat `key = value` config format. Lists are
    /// comma-separated; `#` starts a comment. Required keys: `n_nodes`,
    /// `edge_counts`, `sparsity_ratios`, `block_lengths`, `realizations`,
    /// `t_max`. Optional: `q_max` (1.0), `base_seed` (0), `capacity` (1),
    /// `output`.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = ExperimentConfig {
            n_nodes: 0,
            edge_counts: Vec::new(),
            sparsity_ratios: Vec::new(),
            block_lengths: Vec::new(),
            realizations: 0,
            q_max: 1.0,
            t_max: 0,
            base_seed: 0,
            capacity: 1,
            output: None,
        };
        let mut seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ExperimentError::Config {
                    line,
                    msg: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: &str| ExperimentError::Config {
                line,
                msg: format!("{msg}: `{value}`"),
            };
            match key {
                "n_nodes" => cfg.n_nodes = value.parse().map_err(|_| bad("bad count"))?,
                "edge_counts" => cfg.edge_counts = parse_list(value).map_err(|m| bad(&m))?,
                "sparsity_ratios" => {
                    cfg.sparsity_ratios = parse_list(value).map_err(|m| bad(&m))?
                }
                "block_lengths" => cfg.block_lengths = parse_list(value).map_err(|m| bad(&m))?,
                "realizations" => cfg.realizations = value.parse().map_err(|_| bad("bad count"))?,
                "q_max" => cfg.q_max = value.parse().map_err(|_| bad("bad float"))?,
                "t_max" => cfg.t_max = value.parse().map_err(|_| bad("bad count"))?,
                "base_seed" => cfg.base_seed = value.parse().map_err(|_| bad("bad seed"))?,
                "capacity" => cfg.capacity = value.parse().map_err(|_| bad("bad capacity"))?,
                "output" => cfg.output = Some(PathBuf::from(value)),
                _ => {
                    return Err(ExperimentError::Config {
                        line,
                        msg: format!("unknown key `{key}`"),
                    })
                }
            }
            seen.push(key.to_string());
        }
        for required in [
            "n_nodes",
            "edge_counts",
            "sparsity_ratios",
            "block_lengths",
            "realizations",
            "t_max",
        ] {
            if !seen.iter().any(|k| k == required) {
                return Err(ExperimentError::Config {
                    line: 0,
                    msg: format!("missing required key `{required}`"),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::Validation(msg));
        if self.n_nodes < 2 {
            return fail(format!("n_nodes must be at least 2, got {}", self.n_nodes));
        }
        if self.edge_counts.is_empty() || self.sparsity_ratios.is_empty() || self.block_lengths.is_empty() {
            return fail("edge_counts, sparsity_ratios, block_lengths must be non-empty".into());
        }
        if self.sparsity_ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return fail(format!(
                "sparsity ratios must lie in (0, 1], got {:?}",
                self.sparsity_ratios
            ));
        }
        if self
            .block_lengths
            .iter()
            .any(|&l| l.saturating_mul(self.capacity) < 2)
        {
            return fail("every block length needs L*capacity >= 2".into());
        }
        if self.realizations == 0 {
            return fail("realizations must be at least 1".into());
        }
        if self.t_max < 2 {
            return fail(format!("t_max must be at least 2, got {}", self.t_max));
        }
        if !(self.q_max > 0.0) {
            return fail(format!("q_max must be positive, got {}", self.q_max));
        }
        Ok(())
    }

    fn sparsity_for(&self, ratio: f64) -> usize {
        ((ratio * self.n_nodes as f64).round() as usize).clamp(1, self.n_nodes)
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| format!("bad list entry `{}`", tok.trim()))
        })
        .collect()
}

/// One aggregated sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub edges: usize,
    pub k_over_n: f64,
    pub block_length: u32,
    /// Decode time for QNC rows; 0 for forwarding rows, whose delivery
    /// time varies per realization.
    pub t: usize,
    pub snr_db: f64,
    /// Mean delivery delay in channel uses.
    pub delay: f64,
    /// Realizations contributing to the aggregate.
    pub realizations: usize,
}

/// Decoder failure excluded from an aggregate, kept for reporting.
#[derive(Debug, Clone)]
pub struct DecodeFailure {
    pub edges: usize,
    pub k_over_n: f64,
    pub block_length: u32,
    pub realization: usize,
    pub t: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<DecodeFailure>,
}

/// Mean signal to mean error norm ratio in dB; infinite when the error
/// vanishes.
fn snr_from_means(mean_signal_norm: f64, mean_error_norm: f64) -> f64 {
    if mean_error_norm == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (mean_signal_norm / mean_error_norm).log10()
    }
}

/// Average SNR over realizations:
/// `10 log10( mean_r ||x(r)|| / mean_r ||x(r) - xhat(r)|| )`.
pub fn compute_snr(
    x_runs: &[DVector<f64>],
    xhat_runs: &[DVector<f64>],
) -> Result<f64, ExperimentError> {
    if x_runs.is_empty() || x_runs.len() != xhat_runs.len() {
        return Err(ExperimentError::BadSnrInput);
    }
    let count = x_runs.len() as f64;
    let mean_signal = x_runs.iter().map(|x| x.norm()).sum::<f64>() / count;
    let mean_error = x_runs
        .iter()
        .zip(xhat_runs)
        .map(|(x, xh)| (x - xh).norm())
        .sum::<f64>()
        / count;
    Ok(snr_from_means(mean_signal, mean_error))
}

struct QncSample {
    block_length: u32,
    t: usize,
    x_norm: f64,
    err_norm: f64,
}

struct FwdSample {
    block_length: u32,
    x_norm: f64,
    err_norm: f64,
    delay: f64,
}

struct CellOutput {
    edge_index: usize,
    ratio_index: usize,
    qnc: Vec<QncSample>,
    fwd: Vec<FwdSample>,
    failures: Vec<DecodeFailure>,
}

/// Solver settings for sweep decoding; looser than the defaults because
/// cell noise, not solver error, dominates at sweep scale.
fn sweep_solver_options() -> SolverOptions {
    SolverOptions {
        max_iterations: 30_000,
        abs_tol: 1e-11,
        rel_tol: 1e-7,
        ..SolverOptions::default()
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    edge_index: usize,
    ratio_index: usize,
    realization: usize,
) -> Result<CellOutput, ExperimentError> {
    let edges = cfg.edge_counts[edge_index];
    let ratio = cfg.sparsity_ratios[ratio_index];
    let graph_seed = seeds::derive_seed(cfg.base_seed, &[0, edge_index as u64, realization as u64]);
    let coef_seed = seeds::derive_seed(cfg.base_seed, &[1, edge_index as u64, realization as u64]);
    let msg_seed = seeds::derive_seed(cfg.base_seed, &[2, ratio_index as u64, realization as u64]);

    let g = generate_random_network(cfg.n_nodes, edges, cfg.capacity, graph_seed)?;
    let sched = generate_coefficients(&g, cfg.t_max, coef_seed)?;
    let routes = shortest_paths_to_gateway(&g)?;
    let k = cfg.sparsity_for(ratio);
    let ens = generate_sparse_messages(cfg.n_nodes, k, cfg.q_max, msg_seed)?;
    let x_norm = ens.x.norm();
    let identity = DMatrix::identity(cfg.n_nodes, cfg.n_nodes);
    let opts = sweep_solver_options();

    let mut out = CellOutput {
        edge_index,
        ratio_index,
        qnc: Vec::new(),
        fwd: Vec::new(),
        failures: Vec::new(),
    };
    for &block_length in &cfg.block_lengths {
        let quantizers = quantizers_for_graph(&g, block_length, cfg.q_max)?;
        let run = run_qnc(&g, &sched, &quantizers, &ens.x, cfg.t_max)?;
        let mut warm: Option<(DVector<f64>, DVector<f64>)> = None;
        for t in 2..=cfg.t_max {
            let record = assemble_measurements(&run, &g, &sched, &quantizers, t)?;
            // Decode in the sparse domain; phi is orthonormal, so the
            // coefficient error norm equals the message error norm.
            let problem = DecodeProblem {
                theta: &record.psi_tot * &ens.phi,
                z: record.z_tot,
                phi: identity.clone(),
                eps: record.eps_sq.max(0.0).sqrt(),
            };
            match solve_bpdn(&problem, &opts, warm.as_ref().map(|(s, u)| (s, u))) {
                Ok(decoded) => {
                    out.qnc.push(QncSample {
                        block_length,
                        t,
                        x_norm,
                        err_norm: (&decoded.s_hat - &ens.s).norm(),
                    });
                    warm = Some((decoded.s_hat, decoded.dual));
                }
                Err(err) => out.failures.push(DecodeFailure {
                    edges,
                    k_over_n: ratio,
                    block_length,
                    realization,
                    t,
                    message: err.to_string(),
                }),
            }
        }
        let fwd = simulate_forwarding(&g, &routes, &ens.x, block_length, cfg.q_max)?;
        out.fwd.push(FwdSample {
            block_length,
            x_norm,
            err_norm: (&fwd.recovered() - &ens.x).norm(),
            delay: fwd.total_delay as f64,
        });
    }
    Ok(out)
}

/// Runs the full sweep. Cells execute in parallel; aggregation follows the
/// fixed job order, so two runs of the same config produce identical
/// results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for edge_index in 0..cfg.edge_counts.len() {
        for ratio_index in 0..cfg.sparsity_ratios.len() {
            for realization in 0..cfg.realizations {
                jobs.push((edge_index, ratio_index, realization));
            }
        }
    }
    let cells: Result<Vec<CellOutput>, ExperimentError> = jobs
        .par_iter()
        .map(|&(e, r, z)| run_cell(cfg, e, r, z))
        .collect();
    let cells = cells?;

    #[derive(Default)]
    struct Accumulator {
        sum_signal: f64,
        sum_error: f64,
        sum_delay: f64,
        count: usize,
    }
    // Key: (scheme, edge_index, ratio_index, block_length, t).
    let mut agg: BTreeMap<(Scheme, usize, usize, u32, usize), Accumulator> = BTreeMap::new();
    let mut failures = Vec::new();
    for cell in cells {
        for s in &cell.qnc {
            let acc = agg
                .entry((Scheme::Qnc, cell.edge_index, cell.ratio_index, s.block_length, s.t))
                .or_default();
            acc.sum_signal += s.x_norm;
            acc.sum_error += s.err_norm;
            acc.sum_delay += (s.block_length as f64) * (s.t as f64 - 1.0);
            acc.count += 1;
        }
        for s in &cell.fwd {
            let acc = agg
                .entry((Scheme::Forwarding, cell.edge_index, cell.ratio_index, s.block_length, 0))
                .or_default();
            acc.sum_signal += s.x_norm;
            acc.sum_error += s.err_norm;
            acc.sum_delay += s.delay;
            acc.count += 1;
        }
        failures.extend(cell.failures);
    }
    let rows = agg
        .into_iter()
        .map(|((scheme, edge_index, ratio_index, block_length, t), acc)| {
            let count = acc.count as f64;
            ResultRow {
                scheme,
                edges: cfg.edge_counts[edge_index],
                k_over_n: cfg.sparsity_ratios[ratio_index],
                block_length,
                t,
                snr_db: snr_from_means(acc.sum_signal / count, acc.sum_error / count),
                delay: acc.sum_delay / count,
                realizations: acc.count,
            }
        })
        .collect();
    Ok(ExperimentResult { rows, failures })
}

/// Width of the SNR bins used by the block-length optimization.
pub const SNR_BIN_DB: f64 = 0.5;

/// Keeps, per `(scheme, edges, k/n)` group and 0.5 dB SNR bin, the row
/// with the smallest delay across block lengths, then prunes rows
/// dominated in both SNR and delay: the SNR-delay Pareto frontier.
pub fn optimize_block_length(
    results: &ExperimentResult,
) -> Result<ExperimentResult, ExperimentError> {
    if results.rows.is_empty() {
        return Err(ExperimentError::EmptyResults);
    }
    let mut groups: BTreeMap<(Scheme, usize, u64), BTreeMap<i64, &ResultRow>> = BTreeMap::new();
    for row in &results.rows {
        if row.snr_db.is_nan() || row.snr_db == f64::NEG_INFINITY {
            continue;
        }
        let bin = if row.snr_db.is_finite() {
            (row.snr_db / SNR_BIN_DB).floor() as i64
        } else {
            i64::MAX
        };
        let per_bin = groups
            .entry((row.scheme, row.edges, row.k_over_n.to_bits()))
            .or_default();
        per_bin
            .entry(bin)
            .and_modify(|best| {
                let challenger = (row.delay, row.block_length, row.t);
                let incumbent = (best.delay, best.block_length, best.t);
                if challenger < incumbent {
                    *best = row;
                }
            })
            .or_insert(row);
    }
    let mut rows = Vec::new();
    for per_bin in groups.values() {
        // Highest SNR first; keep only rows that strictly reduce delay.
        let mut kept: Vec<&ResultRow> = Vec::new();
        let mut best_delay = f64::INFINITY;
        for row in per_bin.values().rev() {
            if row.delay < best_delay {
                best_delay = row.delay;
                kept.push(row);
            }
        }
        kept.reverse();
        rows.extend(kept.into_iter().cloned());
    }
    Ok(ExperimentResult {
        rows,
        failures: Vec::new(),
    })
}

pub const CSV_HEADER: &str = "scheme,edges,k_over_n,L,t,snr_db,delay,realizations";

/// Renders rows as CSV, sorted lexicographically on the key columns.
/// Floats use the shortest round-trip form, so equal results yield
/// byte-identical output.
pub fn csv_string(results: &ExperimentResult) -> String {
    let mut rows: Vec<&ResultRow> = results.rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.scheme, a.edges)
            .cmp(&(b.scheme, b.edges))
            .then(a.k_over_n.total_cmp(&b.k_over_n))
            .then(a.block_length.cmp(&b.block_length))
            .then(a.t.cmp(&b.t))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme.as_str(),
            r.edges,
            r.k_over_n,
            r.block_length,
            r.t,
            r.snr_db,
            r.delay,
            r.realizations
        );
    }
    out
}

/// Writes [`csv_string`] to a file.
pub fn emit_csv(results: &ExperimentResult, path: &Path) -> Result<(), ExperimentError> {
    std::fs::write(path, csv_string(results))?;
    Ok(())
}

/// Parses CSV produced by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<ExperimentResult, ExperimentError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ExperimentError::CsvParse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if header.trim() != CSV_HEADER {
        return Err(ExperimentError::CsvParse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |msg: &str| ExperimentError::CsvParse {
            line: idx + 1,
            msg: msg.into(),
        };
        if fields.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        rows.push(ResultRow {
            scheme: Scheme::parse(fields[0]).ok_or_else(|| bad("unknown scheme"))?,
            edges: fields[1].parse().map_err(|_| bad("bad edges"))?,
            k_over_n: fields[2].parse().map_err(|_| bad("bad k_over_n"))?,
            block_length: fields[3].parse().map_err(|_| bad("bad L"))?,
            t: fields[4].parse().map_err(|_| bad("bad t"))?,
            snr_db: fields[5].parse().map_err(|_| bad("bad snr"))?,
            delay: fields[6].parse().map_err(|_| bad("bad delay"))?,
            realizations: fields[7].parse().map_err(|_| bad("bad realizations"))?,
        });
    }
    Ok(ExperimentResult {
        rows,
        failures: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n_nodes: 12,
            edge_counts: vec![40],
            sparsity_ratios: vec![0.25],
            block_lengths: vec![4],
            realizations: 1,
            q_max: 1.0,
            t_max: 5,
            base_seed: 3,
            capacity: 1,
            output: None,
        }
    }

    #[test]
    fn snr_reference_points() {
        let x = vec![DVector::from_column_slice(&[1.0, 0.0])];
        let exact = vec![DVector::from_column_slice(&[1.0, 0.0])];
        assert_eq!(compute_snr(&x, &exact).unwrap(), f64::INFINITY);

        let off = vec![DVector::from_column_slice(&[0.9, 0.0])];
        let snr = compute_snr(&x, &off).unwrap();
        assert!((snr - 10.0).abs() < 1e-12);

        // Scaling the error by 10 costs exactly 10 dB.
        let off10 = vec![DVector::from_column_slice(&[0.0, 0.0])];
        let snr10 = compute_snr(&x, &off10).unwrap();
        assert!((snr - snr10 - 10.0).abs() < 1e-12);

        assert!(compute_snr(&[], &[]).is_err());
    }

    #[test]
    fn config_parsing_round_trip() {
        let text = "\
# sweep
n_nodes = 12
edge_counts = 40, 50
sparsity_ratios = 0.1, 0.25
block_lengths = 2, 4
realizations = 2
q_max = 1.0
t_max = 5
base_seed = 9
capacity = 1
output = out.csv
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.edge_counts, vec![40, 50]);
        assert_eq!(cfg.sparsity_ratios, vec![0.1, 0.25]);
        assert_eq!(cfg.base_seed, 9);
        assert_eq!(cfg.output, Some(PathBuf::from("out.csv")));
        assert!(ExperimentConfig::parse("n_nodes = 12").is_err());
        assert!(ExperimentConfig::parse("bogus_key = 3").is_err());
    }

    #[test]
    fn row_count_arithmetic_for_single_cell() {
        let cfg = tiny_config();
        let result = run_experiment(&cfg).unwrap();
        assert!(result.failures.is_empty(), "{:?}", result.failures);
        // One QNC row per t in 2..=t_max plus one forwarding row.
        assert_eq!(result.rows.len(), (cfg.t_max - 1) + 1);
        for row in &result.rows {
            match row.scheme {
                Scheme::Qnc => {
                    let expected = cfg.block_lengths[0] as f64 * (row.t as f64 - 1.0);
                    assert_eq!(row.delay, expected);
                }
                Scheme::Forwarding => assert_eq!(row.t, 0),
            }
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = tiny_config();
        let a = csv_string(&run_experiment(&cfg).unwrap());
        let b = csv_string(&run_experiment(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn forwarding_snr_depends_only_on_block_length() {
        let mut cfg = tiny_config();
        cfg.edge_counts = vec![40, 70];
        cfg.realizations = 2;
        let result = run_experiment(&cfg).unwrap();
        let fwd: Vec<&ResultRow> = result
            .rows
            .iter()
            .filter(|r| r.scheme == Scheme::Forwarding)
            .collect();
        assert_eq!(fwd.len(), 2);
        assert_eq!(fwd[0].snr_db, fwd[1].snr_db);
    }

    #[test]
    fn qnc_snr_grows_early_then_noise_accumulation_caps_it() {
        // Averaged over realizations, the first decode times add
        // measurements faster than quantization noise accumulates; once
        // recovery saturates, the growing noise radius pulls SNR back
        // down.
        let cfg = ExperimentConfig {
            n_nodes: 14,
            edge_counts: vec![60],
            sparsity_ratios: vec![0.15],
            block_lengths: vec![8],
            realizations: 8,
            q_max: 1.0,
            t_max: 5,
            base_seed: 17,
            capacity: 1,
            output: None,
        };
        let result = run_experiment(&cfg).unwrap();
        let snr_at = |t: usize| {
            result
                .rows
                .iter()
                .find(|r| r.scheme == Scheme::Qnc && r.t == t)
                .map(|r| r.snr_db)
                .unwrap()
        };
        let curve: Vec<f64> = (2..=5).map(snr_at).collect();
        let peak = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(snr_at(3) > snr_at(2), "early growth missing: {curve:?}");
        assert!(peak > snr_at(2), "peak at the first decode time: {curve:?}");
        assert!(snr_at(5) < peak, "no accumulation regime visible: {curve:?}");
    }

    #[test]
    fn csv_round_trip() {
        let cfg = tiny_config();
        let result = run_experiment(&cfg).unwrap();
        let text = csv_string(&result);
        let back = parse_csv(&text).unwrap();
        assert_eq!(csv_string(&back), text);
        assert_eq!(back.rows.len(), result.rows.len());
    }

    fn row(scheme: Scheme, l: u32, t: usize, snr: f64, delay: f64) -> ResultRow {
        ResultRow {
            scheme,
            edges: 40,
            k_over_n: 0.1,
            block_length: l,
            t,
            snr_db: snr,
            delay,
            realizations: 5,
        }
    }

    #[test]
    fn frontier_reduces_single_block_length_to_bin_minima() {
        let rows = vec![
            row(Scheme::Qnc, 2, 2, 3.1, 2.0),
            row(Scheme::Qnc, 2, 3, 3.3, 4.0), // same 0.5 dB bin, larger delay
            row(Scheme::Qnc, 2, 4, 6.0, 6.0),
        ];
        let result = ExperimentResult {
            rows,
            failures: Vec::new(),
        };
        let frontier = optimize_block_length(&result).unwrap();
        assert_eq!(frontier.rows.len(), 2);
        assert!(frontier.rows.iter().any(|r| r.t == 2));
        assert!(frontier.rows.iter().any(|r| r.t == 4));
        assert!(!frontier.rows.iter().any(|r| r.t == 3));
    }

    #[test]
    fn dominated_rows_are_pruned() {
        let rows = vec![
            row(Scheme::Qnc, 2, 2, 8.0, 10.0),
            // Worse SNR and worse delay: dominated.
            row(Scheme::Qnc, 4, 2, 5.0, 20.0),
        ];
        let result = ExperimentResult {
            rows,
            failures: Vec::new(),
        };
        let frontier = optimize_block_length(&result).unwrap();
        assert_eq!(frontier.rows.len(), 1);
        assert_eq!(frontier.rows[0].block_length, 2);
    }

    #[test]
    fn frontier_switches_block_length_at_known_crossover() {
        // L=2 is better at low SNR, L=4 reaches higher SNR with more delay.
        let rows = vec![
            row(Scheme::Qnc, 2, 2, 4.0, 2.0),
            row(Scheme::Qnc, 2, 3, 8.0, 4.0),
            row(Scheme::Qnc, 4, 2, 4.1, 4.0),
            row(Scheme::Qnc, 4, 3, 12.0, 8.0),
        ];
        let result = ExperimentResult {
            rows,
            failures: Vec::new(),
        };
        let frontier = optimize_block_length(&result).unwrap();
        let picks: Vec<(u32, f64)> = frontier
            .rows
            .iter()
            .map(|r| (r.block_length, r.snr_db))
            .collect();
        assert!(picks.contains(&(2, 4.0)));
        assert!(picks.contains(&(2, 8.0)));
        assert!(picks.contains(&(4, 12.0)));
        assert_eq!(frontier.rows.len(), 3);
        assert!(optimize_block_length(&ExperimentResult::default()).is_err());
    }

    #[test]
    fn empty_results_render_header_only() {
        let text = csv_string(&ExperimentResult::default());
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(parse_csv(&text).unwrap().rows.is_empty());
    }
}
