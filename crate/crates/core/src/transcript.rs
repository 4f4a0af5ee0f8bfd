//! Plain-text run transcripts for offline decoding and debugging.
//!
//! A transcript captures one quantized run end to end: the deployment, the
//! messages and their sparsity basis, the per-time edge contents and
//! logged quantization errors, and the assembled measurement system. The
//! format is line-oriented; every float is written in Rust's shortest
//! round-trip decimal form, so a parsed transcript is bit-identical to the
//! one that was written.
//!
//! ```text
//! qnc-transcript v1
//! graph
//! <edge-list block: `n m gateway`, then `edge_id tail head capacity` lines>
//! endgraph
//! params L <L> q_max <q> t <t>
//! x <n floats>
//! phi <n floats>          (n rows)
//! y <time> <|E| floats>   (times 1..=t)
//! nq <time> <|E| floats>  (times 1..=t; quantization errors)
//! ztot <m floats>
//! psirow <n floats>       (m rows of Psi_tot)
//! nefftot <m floats>
//! epssq <value>
//! end
//! ```

use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::coding::{MeasurementRecord, QncRun};
use crate::graph::{GraphError, NetworkGraph};
use crate::quantizer::quantizer_for_edge;
use crate::signal::MessageEnsemble;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("transcript is inconsistent: {0}")]
    Inconsistent(String),
}

/// One stored quantized run plus its assembled measurement system.
#[derive(Debug, Clone)]
pub struct RunTranscript {
    pub graph: NetworkGraph,
    pub block_length: u32,
    pub q_max: f64,
    /// Decode time the measurement block was assembled at.
    pub t: usize,
    pub x: DVector<f64>,
    pub phi: DMatrix<f64>,
    /// `y(1) ..= y(t)`, one vector per time.
    pub edge_contents: Vec<DVector<f64>>,
    /// `n(1) ..= n(t)`, logged quantization errors (all zero at t = 1).
    pub quant_errors: Vec<DVector<f64>>,
    pub z_tot: DVector<f64>,
    pub psi_tot: DMatrix<f64>,
    pub n_eff_tot: DVector<f64>,
    pub eps_sq: f64,
}

impl RunTranscript {
    /// Packages a simulated run, its message ensemble, and the measurement
    /// record assembled at time `record.t`.
    pub fn from_run(
        graph: &NetworkGraph,
        ensemble: &MessageEnsemble,
        run: &QncRun,
        record: &MeasurementRecord,
        block_length: u32,
    ) -> Self {
        let t = record.t;
        Self {
            graph: graph.clone(),
            block_length,
            q_max: ensemble.q_max,
            t,
            x: ensemble.x.clone(),
            phi: ensemble.phi.clone(),
            edge_contents: (1..=t).map(|tp| run.state_at(tp).y.clone()).collect(),
            quant_errors: (1..=t).map(|tp| run.state_at(tp).quant_err.clone()).collect(),
            z_tot: record.z_tot.clone(),
            psi_tot: record.psi_tot.clone(),
            n_eff_tot: record.n_eff_tot.clone(),
            eps_sq: record.eps_sq,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qnc-transcript v1");
        let _ = writeln!(out, "graph");
        out.push_str(&self.graph.to_edge_list());
        let _ = writeln!(out, "endgraph");
        let _ = writeln!(
            out,
            "params L {} q_max {} t {}",
            self.block_length, self.q_max, self.t
        );
        let _ = writeln!(out, "x {}", floats(self.x.iter()));
        for i in 0..self.phi.nrows() {
            let _ = writeln!(out, "phi {}", floats(self.phi.row(i).iter()));
        }
        for (i, y) in self.edge_contents.iter().enumerate() {
            let _ = writeln!(out, "y {} {}", i + 1, floats(y.iter()));
        }
        for (i, nq) in self.quant_errors.iter().enumerate() {
            let _ = writeln!(out, "nq {} {}", i + 1, floats(nq.iter()));
        }
        let _ = writeln!(out, "ztot {}", floats(self.z_tot.iter()));
        for i in 0..self.psi_tot.nrows() {
            let _ = writeln!(out, "psirow {}", floats(self.psi_tot.row(i).iter()));
        }
        let _ = writeln!(out, "nefftot {}", floats(self.n_eff_tot.iter()));
        let _ = writeln!(out, "epssq {}", self.eps_sq);
        let _ = writeln!(out, "end");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TranscriptError> {
        let err = |line: usize, msg: &str| TranscriptError::Parse {
            line,
            msg: msg.into(),
        };
        let mut lines = text.lines().enumerate().peekable();
        let (l, magic) = lines.next().ok_or_else(|| err(1, "empty input"))?;
        if magic.trim() != "qnc-transcript v1" {
            return Err(err(l + 1, "expected `qnc-transcript v1` header"));
        }
        let (l, tag) = lines.next().ok_or_else(|| err(2, "missing graph block"))?;
        if tag.trim() != "graph" {
            return Err(err(l + 1, "expected `graph`"));
        }
        let mut graph_text = String::new();
        let mut graph_end = 0;
        for (l, line) in lines.by_ref() {
            if line.trim() == "endgraph" {
                graph_end = l;
                break;
            }
            graph_text.push_str(line);
            graph_text.push('\n');
        }
        if graph_end == 0 {
            return Err(err(0, "missing `endgraph`"));
        }
        let graph = NetworkGraph::from_edge_list(&graph_text)?;

        let (l, params) = lines.next().ok_or_else(|| err(0, "missing params"))?;
        let toks: Vec<&str> = params.split_whitespace().collect();
        if toks.len() != 7 || toks[0] != "params" || toks[1] != "L" || toks[3] != "q_max" || toks[5] != "t" {
            return Err(err(l + 1, "expected `params L <L> q_max <q> t <t>`"));
        }
        let block_length: u32 = toks[2].parse().map_err(|_| err(l + 1, "bad L"))?;
        let q_max: f64 = toks[4].parse().map_err(|_| err(l + 1, "bad q_max"))?;
        let t: usize = toks[6].parse().map_err(|_| err(l + 1, "bad t"))?;

        let mut x = None;
        let mut phi_rows = Vec::new();
        let mut ys: Vec<(usize, DVector<f64>)> = Vec::new();
        let mut nqs: Vec<(usize, DVector<f64>)> = Vec::new();
        let mut z_tot = None;
        let mut psi_rows = Vec::new();
        let mut n_eff_tot = None;
        let mut eps_sq = None;
        for (l, line) in lines {
            let mut toks = line.split_whitespace();
            let Some(tag) = toks.next() else { continue };
            if tag == "end" {
                break;
            }
            let rest: Vec<&str> = toks.collect();
            let parse_floats = |skip: usize| -> Result<DVector<f64>, TranscriptError> {
                let vals: Result<Vec<f64>, _> =
                    rest[skip..].iter().map(|s| s.parse::<f64>()).collect();
                Ok(DVector::from_vec(
                    vals.map_err(|_| err(l + 1, "bad float"))?,
                ))
            };
            match tag {
                "x" => x = Some(parse_floats(0)?),
                "phi" => phi_rows.push(parse_floats(0)?),
                "y" | "nq" => {
                    let time: usize = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(l + 1, "bad time index"))?;
                    let v = parse_floats(1)?;
                    if tag == "y" {
                        ys.push((time, v));
                    } else {
                        nqs.push((time, v));
                    }
                }
                "ztot" => z_tot = Some(parse_floats(0)?),
                "psirow" => psi_rows.push(parse_floats(0)?),
                "nefftot" => n_eff_tot = Some(parse_floats(0)?),
                "epssq" => {
                    eps_sq = Some(
                        rest.first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(l + 1, "bad epssq"))?,
                    )
                }
                _ => return Err(err(l + 1, "unknown tag")),
            }
        }

        let n = graph.n_nodes();
        let take_ordered = |mut v: Vec<(usize, DVector<f64>)>,
                            what: &str|
         -> Result<Vec<DVector<f64>>, TranscriptError> {
            v.sort_by_key(|(time, _)| *time);
            if v.len() != t || v.iter().enumerate().any(|(i, (time, _))| *time != i + 1) {
                return Err(TranscriptError::Inconsistent(format!(
                    "expected {what} rows for times 1..={t}"
                )));
            }
            Ok(v.into_iter().map(|(_, v)| v).collect())
        };
        if phi_rows.len() != n || phi_rows.iter().any(|r| r.len() != n) {
            return Err(TranscriptError::Inconsistent("phi shape".into()));
        }
        let phi = DMatrix::from_fn(n, n, |i, j| phi_rows[i][j]);
        let psi_tot = if psi_rows.is_empty() {
            return Err(TranscriptError::Inconsistent("missing psi rows".into()));
        } else {
            if psi_rows.iter().any(|r| r.len() != n) {
                return Err(TranscriptError::Inconsistent("psi row length".into()));
            }
            DMatrix::from_fn(psi_rows.len(), n, |i, j| psi_rows[i][j])
        };
        Ok(Self {
            graph,
            block_length,
            q_max,
            t,
            x: x.ok_or_else(|| TranscriptError::Inconsistent("missing x".into()))?,
            phi,
            edge_contents: take_ordered(ys, "y")?,
            quant_errors: take_ordered(nqs, "nq")?,
            z_tot: z_tot.ok_or_else(|| TranscriptError::Inconsistent("missing ztot".into()))?,
            psi_tot,
            n_eff_tot: n_eff_tot
                .ok_or_else(|| TranscriptError::Inconsistent("missing nefftot".into()))?,
            eps_sq: eps_sq.ok_or_else(|| TranscriptError::Inconsistent("missing epssq".into()))?,
        })
    }

    /// Runs the invariant suite against the stored data.
    pub fn verify(&self) -> VerifyReport {
        let mut checks = Vec::new();
        let mut push = |name: &'static str, passed: bool, detail: String| {
            checks.push(VerifyCheck {
                name,
                passed,
                detail,
            });
        };

        let rest = self
            .edge_contents
            .first()
            .map_or(f64::INFINITY, |y| y.amax());
        push("initial_rest", rest == 0.0, format!("max |y(1)| = {rest:e}"));

        let y_peak = self
            .edge_contents
            .iter()
            .map(|y| y.amax())
            .fold(0.0, f64::max);
        push(
            "edge_contents_bounded",
            y_peak <= self.q_max,
            format!("max |y_e(t)| = {y_peak} vs q_max = {}", self.q_max),
        );

        let mut quant_ok = true;
        let mut worst_ratio = 0.0f64;
        for e in 0..self.graph.n_edges() {
            let quantizer = match quantizer_for_edge(
                self.block_length,
                self.graph.edge(e).capacity,
                self.q_max,
            ) {
                Ok(q) => q,
                Err(_) => {
                    quant_ok = false;
                    break;
                }
            };
            let half = quantizer.step() / 2.0;
            for nq in &self.quant_errors {
                let ratio = nq[e].abs() / half;
                worst_ratio = worst_ratio.max(ratio);
                if ratio > 1.0 + 1e-12 {
                    quant_ok = false;
                }
            }
        }
        push(
            "quantization_error_bounded",
            quant_ok,
            format!("max |n_e| / (step/2) = {worst_ratio}"),
        );

        let g_rows = self.graph.gateway_in_edges().len();
        let stacking_ok = (2..=self.t).all(|tp| {
            self.graph
                .gateway_in_edges()
                .iter()
                .enumerate()
                .all(|(i, &e)| self.z_tot[(tp - 2) * g_rows + i] == self.edge_contents[tp - 1][e])
        }) && self.z_tot.len() == (self.t - 1) * g_rows;
        push(
            "gateway_stacking",
            stacking_ok,
            "z_tot rows equal gateway in-edge contents".into(),
        );

        let residual = (&self.z_tot - &self.psi_tot * &self.x - &self.n_eff_tot).amax();
        push(
            "measurement_identity",
            residual < 1e-9,
            format!("max |z - Psi x - n_eff| = {residual:e}"),
        );

        let energy = self.n_eff_tot.norm_squared();
        push(
            "noise_bound",
            energy <= self.eps_sq * (1.0 + 1e-12),
            format!("||n_eff||^2 = {energy:e} vs eps^2 = {:e}", self.eps_sq),
        );

        VerifyReport { checks }
    }
}

fn floats<'a>(it: impl Iterator<Item = &'a f64>) -> String {
    it.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of the transcript invariant suite.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        write!(
            f,
            "{}",
            if self.all_passed() {
                "all checks passed"
            } else {
                "CHECKS FAILED"
            }
        )
    }
}
