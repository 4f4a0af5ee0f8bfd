//! The quantized network coding engine.
//!
//! At every time step, each edge carries the quantized linear combination
//! of its tail node's incoming edge contents and that node's own message:
//!
//! ```text
//! y_e(t) = Q_e[ sum_{e' in In(v)} beta_{e,e'}(t) * y_{e'}(t-1) + alpha_{e,v}(t) * x_v ]
//! ```
//!
//! Coefficients follow the local design that makes the gateway's stacked
//! measurements behave like a Gaussian measurement matrix: the message
//! injections `alpha` are Gaussian at t = 2 and zero afterwards, while the
//! mixing weights `beta` are deterministic. The overflow budget
//! `sum |beta| + |alpha| <= 1` goes entirely to the injections at t = 2
//! (every edge is still at rest, so `beta(2) = 0`) and entirely to the
//! mixing afterwards: for t >= 3 each input of edge e carries weight
//! `1/|In(v)|` with a sign fixed by a hash of the edge pair. Signed
//! mixing keeps the stacked measurements linearly diverse over time,
//! where all-positive averaging would collapse them toward a common
//! profile, and the overflow condition only constrains the magnitudes.
//!
//! The module also maintains the matrix view of the same recursion
//! (`y(t) = F(t) y(t-1) + A(t) x + n(t)`), assembles the gateway's total
//! measurement system `z_tot = Psi_tot x + n_eff_tot`, and evaluates the
//! accumulated quantization-noise bound `eps^2(t)` used by the decoder.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::{EdgeId, NetworkGraph};
use crate::quantizer::{Quantizer, QuantizerError};
use crate::seeds;
use rand::Rng;
use rand_distr::StandardNormal;

/// Guard against division by zero when rescaling a Gaussian draw.
const ALPHA_RESCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("schedule horizon t_max must be at least 2, got {0}")]
    HorizonTooShort(usize),
    #[error("time {t} outside the schedule horizon 2..={t_max}")]
    TimeOutOfRange { t: usize, t_max: usize },
    #[error("measurements start at t = 2, got t = {0}")]
    DecodeTimeTooEarly(usize),
    #[error("edge {edge} at t = {t}: pre-quantization value {value} overflows q_max = {q_max}")]
    Overflow {
        edge: EdgeId,
        t: usize,
        value: f64,
        q_max: f64,
    },
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("per-edge quantizers disagree on q_max")]
    MixedQMax,
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

/// Time-indexed network coding coefficients for one graph.
///
/// A schedule is only meaningful for the graph it was generated from; all
/// structural queries take that graph as an argument.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    n_edges: usize,
    /// `alpha_{e,tail(e)}(2)` per edge; zero for every t > 2.
    alpha2: Vec<f64>,
    /// Mixing magnitude shared by all of edge e's inputs for t >= 3, just
    /// under `1/|In(tail(e))|`; the sign per input comes from
    /// [`mixing_sign`]. At t = 2 every beta is zero: the inputs are all
    /// at rest, and spending overflow headroom on them would only shrink
    /// the message injections.
    beta: Vec<f64>,
    t_max: usize,
}

/// Deterministic sign of `beta_{e,e'}`: a fixed function of the edge pair,
/// identical for every seed.
fn mixing_sign(e: EdgeId, e_in: EdgeId) -> f64 {
    let h = seeds::mix((e as u64) << 32 | e_in as u64);
    if h & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl CoefficientSchedule {
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// `alpha_{e,v}(t)` for `v = tail(e)`.
    pub fn alpha(&self, e: EdgeId, t: usize) -> f64 {
        if t == 2 {
            self.alpha2[e]
        } else {
            0.0
        }
    }

    /// `beta_{e,e'}(t)`; zero unless `tail(e) = head(e')` and `t >= 3`.
    pub fn beta(&self, g: &NetworkGraph, e: EdgeId, e_in: EdgeId, t: usize) -> f64 {
        if t >= 3 && g.tail(e) == g.head(e_in) {
            self.beta[e] * mixing_sign(e, e_in)
        } else {
            0.0
        }
    }
}

/// Draws a coefficient schedule satisfying the overflow condition
/// `sum |beta| + |alpha| <= 1` at every node, edge, and time.
///
/// `alpha_{e,v}(2) ~ N(0,1)` i.i.d. in edge-id order, rescaled into the
/// injection-step headroom `1 - sum |beta(2)| = 1` where necessary;
/// `beta` is deterministic, so two schedules for the same graph differ
/// only in `alpha`.
pub fn generate_coefficients(
    g: &NetworkGraph,
    t_max: usize,
    seed: u64,
) -> Result<CoefficientSchedule, CodingError> {
    if t_max < 2 {
        return Err(CodingError::HorizonTooShort(t_max));
    }
    let m = g.n_edges();
    let mut rng = seeds::rng_for(seed, &[]);
    let mut alpha2 = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    // Margins keep the condition true under any summation order a checker
    // may use.
    let alpha_target = 1.0 - 16.0 * f64::EPSILON;
    let beta_margin = 1.0 - 1e-9;
    for e in 0..m {
        let in_degree = g.in_edges(g.tail(e)).len();
        let mut a: f64 = rng.sample(StandardNormal);
        if a.abs() > alpha_target {
            a *= alpha_target / a.abs().max(ALPHA_RESCALE_FLOOR);
        }
        alpha2.push(a);
        beta.push(if in_degree == 0 {
            0.0
        } else {
            beta_margin / in_degree as f64
        });
    }
    Ok(CoefficientSchedule {
        n_edges: m,
        alpha2,
        beta,
        t_max,
    })
}

/// Dense transfer matrices of the linear-system view at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrices {
    /// `F(t)`: edge-to-edge mixing, `{F}_{e,e'} = beta_{e,e'}(t)` where
    /// `tail(e) = head(e')`, zero elsewhere.
    pub f: DMatrix<f64>,
    /// `A(t)`: message injection, `{A}_{e,v} = alpha_{e,v}(t)` where
    /// `tail(e) = v`, zero elsewhere.
    pub a: DMatrix<f64>,
    /// Gateway selector: row i picks the i-th incoming edge of the gateway
    /// (ascending edge id).
    pub b: DMatrix<f64>,
    pub t: usize,
}

/// The selector matrix `B` mapping edge contents to the gateway's
/// incoming-edge measurements, rows in ascending edge-id order.
pub fn gateway_selector(g: &NetworkGraph) -> DMatrix<f64> {
    let in_edges = g.gateway_in_edges();
    let mut b = DMatrix::zeros(in_edges.len(), g.n_edges());
    for (i, &e) in in_edges.iter().enumerate() {
        b[(i, e)] = 1.0;
    }
    b
}

/// Builds `F(t)`, `A(t)`, and `B` for the given schedule and graph.
pub fn build_transfer_matrices(
    sched: &CoefficientSchedule,
    g: &NetworkGraph,
    t: usize,
) -> Result<TransferMatrices, CodingError> {
    if t < 2 || t > sched.t_max() {
        return Err(CodingError::TimeOutOfRange {
            t,
            t_max: sched.t_max(),
        });
    }
    let m = g.n_edges();
    let n = g.n_nodes();
    let mut f = DMatrix::zeros(m, m);
    let mut a = DMatrix::zeros(m, n);
    for e in 0..m {
        let v = g.tail(e);
        for &e_in in g.in_edges(v) {
            f[(e, e_in)] = sched.beta(g, e, e_in, t);
        }
        a[(e, v)] = sched.alpha(e, t);
    }
    Ok(TransferMatrices {
        f,
        a,
        b: gateway_selector(g),
        t,
    })
}

/// Sparse view of `F`; the schedule's mixing weights are constant over
/// time, so one instance serves every step.
struct SparseTransfer {
    n_edges: usize,
    /// `(e, e_in, beta)` triples for the structurally non-zero entries.
    entries: Vec<(EdgeId, EdgeId, f64)>,
}

impl SparseTransfer {
    /// Non-zeros of the mixing matrix for t >= 3; `F(2)` only ever
    /// multiplies the all-zero initial state.
    fn new(g: &NetworkGraph, sched: &CoefficientSchedule) -> Self {
        let mut entries = Vec::new();
        for e in 0..g.n_edges() {
            for &e_in in g.in_edges(g.tail(e)) {
                entries.push((e, e_in, sched.beta(g, e, e_in, 3)));
            }
        }
        Self {
            n_edges: g.n_edges(),
            entries,
        }
    }

    /// `F * m` for a matrix with one row per edge.
    fn mul_left(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_edges, m.ncols());
        for &(e, e_in, w) in &self.entries {
            for c in 0..m.ncols() {
                out[(e, c)] += w * m[(e_in, c)];
            }
        }
        out
    }

    fn mul_left_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_edges);
        for &(e, e_in, w) in &self.entries {
            out[e] += w * v[e_in];
        }
        out
    }

    /// `d * F` for a matrix with one column per edge.
    fn mul_right(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(d.nrows(), self.n_edges);
        for &(e, e_in, w) in &self.entries {
            for r in 0..d.nrows() {
                out[(r, e_in)] += w * d[(r, e)];
            }
        }
        out
    }
}

/// Edge contents and logged quantization errors at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    /// `y_e(t)` per edge.
    pub y: DVector<f64>,
    /// `n_e(t)` per edge: quantized minus unquantized value.
    pub quant_err: DVector<f64>,
    pub t: usize,
}

impl EdgeState {
    /// Initial rest: all edges empty at t = 1.
    pub fn initial_rest(n_edges: usize) -> Self {
        Self {
            y: DVector::zeros(n_edges),
            quant_err: DVector::zeros(n_edges),
            t: 1,
        }
    }
}

fn check_step_inputs(
    g: &NetworkGraph,
    x: &DVector<f64>,
    state: &EdgeState,
) -> Result<(), CodingError> {
    if x.len() != g.n_nodes() {
        return Err(CodingError::DimensionMismatch(format!(
            "message vector has length {}, graph has {} nodes",
            x.len(),
            g.n_nodes()
        )));
    }
    if state.y.len() != g.n_edges() {
        return Err(CodingError::DimensionMismatch(format!(
            "state has {} edges, graph has {}",
            state.y.len(),
            g.n_edges()
        )));
    }
    Ok(())
}

/// Advances the network one step with per-edge quantization, logging each
/// edge's quantization error. Fails hard if any pre-quantization value
/// leaves `[-q_max, q_max]`, since the coefficient condition rules that out.
pub fn step_network(
    g: &NetworkGraph,
    sched: &CoefficientSchedule,
    quantizers: &[Quantizer],
    x: &DVector<f64>,
    state: &EdgeState,
) -> Result<EdgeState, CodingError> {
    check_step_inputs(g, x, state)?;
    if quantizers.len() != g.n_edges() {
        return Err(CodingError::DimensionMismatch(format!(
            "{} quantizers for {} edges",
            quantizers.len(),
            g.n_edges()
        )));
    }
    let t_next = state.t + 1;
    if t_next > sched.t_max() {
        return Err(CodingError::TimeOutOfRange {
            t: t_next,
            t_max: sched.t_max(),
        });
    }
    let m = g.n_edges();
    let mut y = DVector::zeros(m);
    let mut quant_err = DVector::zeros(m);
    for e in 0..m {
        let v = g.tail(e);
        let mut u = sched.alpha(e, t_next) * x[v];
        for &e_in in g.in_edges(v) {
            u += sched.beta(g, e, e_in, t_next) * state.y[e_in];
        }
        let q = quantizers[e].quantize(u).map_err(|err| match err {
            QuantizerError::Overflow { value, q_max } => CodingError::Overflow {
                edge: e,
                t: t_next,
                value,
                q_max,
            },
            other => CodingError::Quantizer(other),
        })?;
        y[e] = q;
        quant_err[e] = q - u;
    }
    Ok(EdgeState {
        y,
        quant_err,
        t: t_next,
    })
}

/// Advances the network one step without quantization. This is the
/// impulse-response route to the measurement matrix: running it from rest
/// with `x = e_v` produces column v of `Psi(t)` at the gateway.
pub fn step_network_unquantized(
    g: &NetworkGraph,
    sched: &CoefficientSchedule,
    x: &DVector<f64>,
    state: &EdgeState,
) -> Result<EdgeState, CodingError> {
    check_step_inputs(g, x, state)?;
    let t_next = state.t + 1;
    if t_next > sched.t_max() {
        return Err(CodingError::TimeOutOfRange {
            t: t_next,
            t_max: sched.t_max(),
        });
    }
    let m = g.n_edges();
    let mut y = DVector::zeros(m);
    for e in 0..m {
        let v = g.tail(e);
        let mut u = sched.alpha(e, t_next) * x[v];
        for &e_in in g.in_edges(v) {
            u += sched.beta(g, e, e_in, t_next) * state.y[e_in];
        }
        y[e] = u;
    }
    Ok(EdgeState {
        y,
        quant_err: DVector::zeros(m),
        t: t_next,
    })
}

/// A completed simulation: one state per time step, starting from rest.
#[derive(Debug, Clone)]
pub struct QncRun {
    states: Vec<EdgeState>,
}

impl QncRun {
    /// Final simulated time.
    pub fn t_end(&self) -> usize {
        self.states.len()
    }

    /// State at time `t`, `1 <= t <= t_end`.
    pub fn state_at(&self, t: usize) -> &EdgeState {
        &self.states[t - 1]
    }

    pub fn states(&self) -> &[EdgeState] {
        &self.states
    }
}

/// Runs the quantized recursion from rest through `t_end`.
pub fn run_qnc(
    g: &NetworkGraph,
    sched: &CoefficientSchedule,
    quantizers: &[Quantizer],
    x: &DVector<f64>,
    t_end: usize,
) -> Result<QncRun, CodingError> {
    if t_end < 2 || t_end > sched.t_max() {
        return Err(CodingError::TimeOutOfRange {
            t: t_end,
            t_max: sched.t_max(),
        });
    }
    if !quantizers.is_empty() && quantizers.windows(2).any(|w| w[0].q_max() != w[1].q_max()) {
        return Err(CodingError::MixedQMax);
    }
    let mut states = vec![EdgeState::initial_rest(g.n_edges())];
    for _ in 1..t_end {
        let next = step_network(g, sched, quantizers, x, states.last().unwrap())?;
        states.push(next);
    }
    Ok(QncRun { states })
}

/// The marginal measurement matrix `Psi(t)`: the linear map from messages
/// to the gateway's incoming-edge contents at time t,
/// `B * sum_{t'=2}^{t} F(t) F(t-1) ... F(t'+1) A(t')`, products applied in
/// descending time order with the empty product equal to identity.
pub fn compute_psi(
    sched: &CoefficientSchedule,
    g: &NetworkGraph,
    t: usize,
) -> Result<DMatrix<f64>, CodingError> {
    if t < 2 || t > sched.t_max() {
        return Err(CodingError::TimeOutOfRange {
            t,
            t_max: sched.t_max(),
        });
    }
    let sparse = SparseTransfer::new(g, sched);
    let b = gateway_selector(g);
    let n = g.n_nodes();
    let mut psi = DMatrix::zeros(b.nrows(), n);
    // Left row-product B * F(t) * ... * F(t'+1), extended one factor per
    // iteration as t' descends.
    let mut row_product = b;
    for t_prime in (2..=t).rev() {
        if t_prime < t {
            row_product = sparse.mul_right(&row_product);
        }
        // A(t') has a single non-zero per row, at (e, tail(e)).
        for e in 0..g.n_edges() {
            let alpha = sched.alpha(e, t_prime);
            if alpha != 0.0 {
                let v = g.tail(e);
                for r in 0..psi.nrows() {
                    psi[(r, v)] += row_product[(r, e)] * alpha;
                }
            }
        }
    }
    Ok(psi)
}

/// The gateway's stacked linear system at decode time t.
#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    /// `z(2) .. z(t)` stacked; length `m = (t-1) * |In(v0)|`.
    pub z_tot: DVector<f64>,
    /// `Psi(2) .. Psi(t)` stacked, `m x n`.
    pub psi_tot: DMatrix<f64>,
    /// Network-filtered quantization errors reconstructed from the logs;
    /// satisfies `z_tot = psi_tot * x + n_eff_tot`.
    pub n_eff_tot: DVector<f64>,
    /// Noise-energy bound `eps^2(t)` with `||n_eff_tot||^2 <= eps_sq`.
    pub eps_sq: f64,
    pub t: usize,
}

impl MeasurementRecord {
    /// Number of scalar measurements.
    pub fn m(&self) -> usize {
        self.z_tot.len()
    }
}

/// Stacks the gateway's measurements `z(t') = B y(t')` for t' = 2..=t,
/// the matching rows of the total measurement matrix, and the effective
/// noise rebuilt from the logged quantization errors.
///
/// `Psi(t')` and the filtered noise are accumulated with the state-space
/// recursions `M(t') = F M(t'-1) + A(t')` and `w(t') = F w(t'-1) + n(t')`,
/// which reproduce the stacked per-time products up to float associativity.
pub fn assemble_measurements(
    run: &QncRun,
    g: &NetworkGraph,
    sched: &CoefficientSchedule,
    quantizers: &[Quantizer],
    t: usize,
) -> Result<MeasurementRecord, CodingError> {
    if t < 2 {
        return Err(CodingError::DecodeTimeTooEarly(t));
    }
    if t > run.t_end() {
        return Err(CodingError::TimeOutOfRange {
            t,
            t_max: run.t_end(),
        });
    }
    let sparse = SparseTransfer::new(g, sched);
    let b_rows = g.gateway_in_edges().to_vec();
    let g_rows = b_rows.len();
    let n = g.n_nodes();
    let m_total = (t - 1) * g_rows;

    let mut z_tot = DVector::zeros(m_total);
    let mut psi_tot = DMatrix::zeros(m_total, n);
    let mut n_eff_tot = DVector::zeros(m_total);

    // M(1) = 0, w(1) = 0 by initial rest.
    let mut m_mat = DMatrix::<f64>::zeros(g.n_edges(), n);
    let mut noise_acc = DVector::<f64>::zeros(g.n_edges());
    for t_prime in 2..=t {
        m_mat = sparse.mul_left(&m_mat);
        for e in 0..g.n_edges() {
            let alpha = sched.alpha(e, t_prime);
            if alpha != 0.0 {
                m_mat[(e, g.tail(e))] += alpha;
            }
        }
        noise_acc = sparse.mul_left_vec(&noise_acc) + &run.state_at(t_prime).quant_err;

        let block = (t_prime - 2) * g_rows;
        for (i, &e) in b_rows.iter().enumerate() {
            z_tot[block + i] = run.state_at(t_prime).y[e];
            n_eff_tot[block + i] = noise_acc[e];
            for c in 0..n {
                psi_tot[(block + i, c)] = m_mat[(e, c)];
            }
        }
    }
    let eps_sq = compute_epsilon_sq(sched, g, quantizers, t)?;
    Ok(MeasurementRecord {
        z_tot,
        psi_tot,
        n_eff_tot,
        eps_sq,
        t,
    })
}

fn half_steps(quantizers: &[Quantizer]) -> DVector<f64> {
    DVector::from_iterator(quantizers.len(), quantizers.iter().map(|q| q.step() / 2.0))
}

/// Gateway rows of the absolute transfer powers scaled by the half steps:
/// `w_p = |B F^p| * (Delta_Q / 2)` for p = 0..=p_max.
fn abs_power_rows(
    g: &NetworkGraph,
    sched: &CoefficientSchedule,
    quantizers: &[Quantizer],
    p_max: usize,
) -> Vec<DVector<f64>> {
    let sparse = SparseTransfer::new(g, sched);
    let half = half_steps(quantizers);
    let mut d = gateway_selector(g);
    let mut rows = Vec::with_capacity(p_max + 1);
    for p in 0..=p_max {
        if p > 0 {
            d = sparse.mul_right(&d);
        }
        let mut w = DVector::zeros(d.nrows());
        for r in 0..d.nrows() {
            let mut acc = 0.0;
            for c in 0..d.ncols() {
                acc += d[(r, c)].abs() * half[c];
            }
            w[r] = acc;
        }
        rows.push(w);
    }
    rows
}

/// Accumulated quantization-noise energy bound at decode time t:
///
/// ```text
/// eps^2(t) = sum_{t'=2}^{t} || B * sum_{t''=1}^{t'-1} |prod_{i=t''+2}^{t'} F(i)| * (Delta_Q/2) ||^2
/// ```
///
/// with entrywise absolute values and empty products equal to identity.
/// This is the per-time bound on `|n_eff(t')|` applied at each t' and
/// summed, and it dominates `||n_eff_tot(t)||^2` on every run.
pub fn compute_epsilon_sq(
    sched: &CoefficientSchedule,
    g: &NetworkGraph,
    quantizers: &[Quantizer],
    t: usize,
) -> Result<f64, CodingError> {
    check_epsilon_args(sched, g, quantizers, t)?;
    let rows = abs_power_rows(g, sched, quantizers, t.saturating_sub(2));
    let g_rows = g.gateway_in_edges().len();
    let mut prefix = DVector::zeros(g_rows);
    let mut eps_sq = 0.0;
    for t_prime in 2..=t {
        prefix += &rows[t_prime - 2];
        eps_sq += prefix.norm_squared();
    }
    Ok(eps_sq)
}

/// The same bound read with the mismatched product limits exactly as
/// printed: the left factor of each quadratic form carries products up to
/// the decode time t while the right factor stops at t'. Computed for
/// comparison against [`compute_epsilon_sq`]; the symmetric reading is the
/// one the decoder uses.
pub fn compute_epsilon_sq_literal(
    sched: &CoefficientSchedule,
    g: &NetworkGraph,
    quantizers: &[Quantizer],
    t: usize,
) -> Result<f64, CodingError> {
    check_epsilon_args(sched, g, quantizers, t)?;
    let rows = abs_power_rows(g, sched, quantizers, t.saturating_sub(2));
    let g_rows = g.gateway_in_edges().len();
    let mut eps_sq = 0.0;
    for t_prime in 2..=t {
        let mut left = DVector::zeros(g_rows);
        let mut right = DVector::zeros(g_rows);
        // t'' = 1..=t'-1 maps to power p = top - t'' - 1 for each factor's
        // own upper limit.
        for t_dprime in 1..=(t_prime - 1) {
            left += &rows[t - t_dprime - 1];
            right += &rows[t_prime - t_dprime - 1];
        }
        eps_sq += left.dot(&right);
    }
    Ok(eps_sq)
}

fn check_epsilon_args(
    sched: &CoefficientSchedule,
    g: &NetworkGraph,
    quantizers: &[Quantizer],
    t: usize,
) -> Result<(), CodingError> {
    if t < 2 || t > sched.t_max() {
        return Err(CodingError::TimeOutOfRange {
            t,
            t_max: sched.t_max(),
        });
    }
    if quantizers.len() != g.n_edges() {
        return Err(CodingError::DimensionMismatch(format!(
            "{} quantizers for {} edges",
            quantizers.len(),
            g.n_edges()
        )));
    }
    Ok(())
}
