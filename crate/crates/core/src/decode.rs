//! Recovery of the gathered messages from the measurement system.
//!
//! The decoder solves the constrained form directly:
//!
//! ```text
//! s_hat = argmin ||s'||_1  subject to  ||z_tot - Theta s'||_2^2 <= eps^2,
//! x_hat = phi * s_hat
//! ```
//!
//! via ADMM with an exact projection onto the residual ball (computed from
//! a singular value decomposition of `Theta`), so the returned point is
//! always feasible. A brute-force restricted-isometry estimator and an
//! exhaustive small-instance oracle provide independent checks, and the
//! recovery error bound turns a certified RIP constant and noise radius
//! into a guaranteed error ceiling.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::seeds;
use crate::transcript::RunTranscript;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("{0}")]
    BadProblem(String),
    #[error(
        "solver did not converge: constraint residual {constraint_residual:e}, \
         primal gap {primal_gap:e} after {iterations} iterations"
    )]
    NonConvergence {
        constraint_residual: f64,
        primal_gap: f64,
        iterations: usize,
    },
    #[error("oracle budget exceeded (n={n}, k={k}; limits n<=20, k<=3)")]
    OracleBudgetExceeded { n: usize, k: usize },
    #[error(
        "RIP budget exceeded (n={n}, k={k}; limits n<=20, k<=4); \
         use rip_constant_sampled for a Monte-Carlo lower bound"
    )]
    RipBudgetExceeded { n: usize, k: usize },
    #[error("recovery bound needs delta_2k < sqrt(2)-1, got {0}")]
    BoundInapplicable(f64),
}

/// One decoding instance: measurements, sensing matrix in the sparse
/// domain, sparsity basis, and noise radius.
#[derive(Debug, Clone)]
pub struct DecodeProblem {
    pub z: DVector<f64>,
    /// `Theta = Psi_tot * phi`, one column per node.
    pub theta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    /// Residual-norm radius `eps(t) >= 0`; the constraint is on its square.
    pub eps: f64,
}

impl DecodeProblem {
    fn validate(&self) -> Result<(), DecodeError> {
        let (m, n) = self.theta.shape();
        if m == 0 || n == 0 {
            return Err(DecodeError::BadProblem("empty sensing matrix".into()));
        }
        if self.z.len() != m {
            return Err(DecodeError::BadProblem(format!(
                "z has length {}, Theta has {m} rows",
                self.z.len()
            )));
        }
        if self.phi.nrows() != n || self.phi.ncols() != n {
            return Err(DecodeError::BadProblem(format!(
                "phi is {}x{}, expected {n}x{n}",
                self.phi.nrows(),
                self.phi.ncols()
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(DecodeError::BadProblem(format!(
                "eps must be non-negative, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Solver knobs; the defaults meet the decoder contract (feasible within
/// 1e-6 relative slack, l1 objective within 1e-5 relative of optimal on
/// oracle-sized instances).
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Absolute floor of the ADMM stopping thresholds.
    pub abs_tol: f64,
    /// Relative part of the ADMM stopping thresholds.
    pub rel_tol: f64,
    /// Initial penalty parameter (the problem is pre-scaled to ||z|| = 1).
    pub rho: f64,
    /// Rebalance the penalty from the primal/dual residual ratio.
    pub adaptive_rho: bool,
    /// Over-relaxation factor in [1, 1.8].
    pub relaxation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            rho: 1.0,
            adaptive_rho: true,
            relaxation: 1.7,
        }
    }
}

/// Decoder output, always feasible for the problem it was solved from.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub x_hat: DVector<f64>,
    pub s_hat: DVector<f64>,
    /// `||z - Theta s_hat||_2` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    /// Scaled ADMM dual variable; carries solver state for warm restarts.
    pub dual: DVector<f64>,
}

impl Decoded {
    pub fn l1_objective(&self) -> f64 {
        self.s_hat.iter().map(|v| v.abs()).sum()
    }
}

/// Exact projection onto `{ w : ||Theta w - z|| <= eps }` in the
/// coordinates of Theta's singular value decomposition. The residual as a
/// function of the multiplier is smooth, convex, and decreasing, so a
/// safeguarded Newton iteration from zero converges monotonically.
struct BallProjector {
    /// Right singular vectors for the positive singular values, n x r.
    v_r: DMatrix<f64>,
    sigma: Vec<f64>,
    /// `U^T z` coordinates matching `sigma`.
    z_coef: Vec<f64>,
    /// Squared distance from z to the range of Theta.
    min_residual_sq: f64,
    eps_sq: f64,
}

impl BallProjector {
    fn new(theta: &DMatrix<f64>, z: &DVector<f64>, eps: f64) -> Self {
        let svd = theta.clone().svd(true, true);
        let u = svd.u.expect("svd with u");
        let v_t = svd.v_t.expect("svd with v_t");
        let sv = &svd.singular_values;
        let smax = sv.max();
        let cutoff = smax * (theta.nrows().max(theta.ncols()) as f64) * f64::EPSILON;
        let mut sigma = Vec::new();
        let mut z_coef = Vec::new();
        let mut cols = Vec::new();
        for i in 0..sv.len() {
            if sv[i] > cutoff {
                sigma.push(sv[i]);
                z_coef.push(u.column(i).dot(z));
                cols.push(i);
            }
        }
        let r = cols.len();
        let n = theta.ncols();
        let mut v_r = DMatrix::zeros(n, r);
        for (j, &i) in cols.iter().enumerate() {
            for row in 0..n {
                v_r[(row, j)] = v_t[(i, row)];
            }
        }
        // Distance from z to the range, via the explicit residual vector:
        // the subtraction of captured energy from ||z||^2 cancels
        // catastrophically for consistent systems.
        let mut range_part = DVector::zeros(z.len());
        for (j, &i) in cols.iter().enumerate() {
            range_part += u.column(i) * z_coef[j];
        }
        Self {
            v_r,
            sigma,
            z_coef,
            min_residual_sq: (z - range_part).norm_squared(),
            eps_sq: eps * eps,
        }
    }

    fn min_residual(&self) -> f64 {
        self.min_residual_sq.sqrt()
    }

    fn feasible(&self) -> bool {
        self.min_residual_sq <= self.eps_sq * (1.0 + 1e-9) + f64::EPSILON
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let r = self.sigma.len();
        let vt = self.v_r.transpose() * v;
        let mut c = vec![0.0; r];
        let mut g0 = self.min_residual_sq;
        for i in 0..r {
            c[i] = self.sigma[i] * vt[i] - self.z_coef[i];
            g0 += c[i] * c[i];
        }
        if g0 <= self.eps_sq * (1.0 + 1e-12) + f64::EPSILON {
            return v.clone();
        }
        let target = self.eps_sq - self.min_residual_sq;
        let mut w_coef = vec![0.0; r];
        if target <= f64::EPSILON * self.eps_sq.max(1.0) {
            // Radius pinned at the least-squares floor: land exactly on it.
            for i in 0..r {
                w_coef[i] = self.z_coef[i] / self.sigma[i];
            }
        } else {
            let mut nu = 0.0;
            for _ in 0..200 {
                let mut h = -target;
                let mut dh = 0.0;
                for i in 0..r {
                    let s2 = self.sigma[i] * self.sigma[i];
                    let d = 1.0 + nu * s2;
                    let term = c[i] / d;
                    h += term * term;
                    dh -= 2.0 * s2 * term * term / d;
                }
                if h <= target * 1e-13 {
                    break;
                }
                let step = h / dh;
                nu -= step;
                if !nu.is_finite() || step.abs() <= nu.abs() * 1e-16 {
                    break;
                }
            }
            for i in 0..r {
                let s2 = self.sigma[i] * self.sigma[i];
                w_coef[i] = (vt[i] + nu * self.sigma[i] * self.z_coef[i]) / (1.0 + nu * s2);
            }
        }
        let delta = DVector::from_iterator(r, (0..r).map(|i| w_coef[i] - vt[i]));
        v + &self.v_r * delta
    }

    fn residual(&self, w: &DVector<f64>) -> f64 {
        let wt = self.v_r.transpose() * w;
        let mut sq = self.min_residual_sq;
        for i in 0..self.sigma.len() {
            let d = self.sigma[i] * wt[i] - self.z_coef[i];
            sq += d * d;
        }
        sq.max(0.0).sqrt()
    }
}

fn soft_threshold(v: &DVector<f64>, kappa: f64) -> DVector<f64> {
    v.map(|x| {
        if x > kappa {
            x - kappa
        } else if x < -kappa {
            x + kappa
        } else {
            0.0
        }
    })
}

/// ADMM on the split `min ||s||_1 + I{||Theta w - z|| <= eps}` with
/// consensus `s = w`; returns the projected (feasible) iterate.
///
/// The problem is solved in coordinates scaled by `||z||`, which leaves
/// the minimizer unchanged up to that factor and makes one penalty
/// parameter serve every measurement magnitude.
pub(crate) fn solve_bpdn(
    problem: &DecodeProblem,
    opts: &SolverOptions,
    warm: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<Decoded, DecodeError> {
    problem.validate()?;
    let n = problem.theta.ncols();

    // The zero vector is optimal whenever it is feasible.
    let z_norm = problem.z.norm();
    if z_norm <= problem.eps {
        return Ok(Decoded {
            x_hat: DVector::zeros(n),
            s_hat: DVector::zeros(n),
            residual: z_norm,
            iterations: 0,
            dual: DVector::zeros(n),
        });
    }

    let scale = z_norm;
    let z_scaled = &problem.z / scale;
    let projector = BallProjector::new(&problem.theta, &z_scaled, problem.eps / scale);
    if !projector.feasible() {
        return Err(DecodeError::NonConvergence {
            constraint_residual: projector.min_residual() * scale,
            primal_gap: f64::INFINITY,
            iterations: 0,
        });
    }

    let mut rho = opts.rho;
    let relax = opts.relaxation.clamp(1.0, 1.8);
    let (mut s, mut u) = match warm {
        Some((s0, u0)) if s0.len() == n && u0.len() == n => (s0 / scale, u0 / scale),
        _ => (DVector::zeros(n), DVector::zeros(n)),
    };
    let mut w = projector.project(&s);
    let sqrt_n = (n as f64).sqrt();

    for iter in 1..=opts.max_iterations {
        s = soft_threshold(&(&w - &u), 1.0 / rho);
        let s_relaxed = &s * relax + &w * (1.0 - relax);
        let w_prev = w;
        w = projector.project(&(&s_relaxed + &u));
        u += &s_relaxed - &w;

        let r_norm = (&s - &w).norm();
        let d_norm = rho * (&w - &w_prev).norm();
        let eps_pri = sqrt_n * opts.abs_tol + opts.rel_tol * s.norm().max(w.norm());
        let eps_dual = sqrt_n * opts.abs_tol + opts.rel_tol * (rho * u.norm());
        if r_norm <= eps_pri && d_norm <= eps_dual {
            let s_hat = w * scale;
            return Ok(Decoded {
                x_hat: &problem.phi * &s_hat,
                residual: projector.residual(&(&s_hat / scale)) * scale,
                s_hat,
                iterations: iter,
                dual: u * scale,
            });
        }
        if opts.adaptive_rho && iter % 50 == 0 {
            if r_norm > 10.0 * d_norm && rho < 1e8 {
                rho *= 2.0;
                u /= 2.0;
            } else if d_norm > 10.0 * r_norm && rho > 1e-8 {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    Err(DecodeError::NonConvergence {
        constraint_residual: projector.residual(&w) * scale,
        primal_gap: (&s - &w).norm() * scale,
        iterations: opts.max_iterations,
    })
}

/// Solves the constrained l1 recovery with default options.
pub fn l1_min_decode(problem: &DecodeProblem) -> Result<Decoded, DecodeError> {
    solve_bpdn(problem, &SolverOptions::default(), None)
}

/// Solves the constrained l1 recovery with explicit options.
pub fn l1_min_decode_with(
    problem: &DecodeProblem,
    opts: &SolverOptions,
) -> Result<Decoded, DecodeError> {
    solve_bpdn(problem, opts, None)
}

/// Best solution the decoder could possibly return on a small instance,
/// found by exhausting supports.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub s: DVector<f64>,
    pub support: Vec<usize>,
    /// `||z - Theta s||_2` of the fit.
    pub residual: f64,
    pub l1: f64,
    /// False when no support of size <= k meets the radius; the returned
    /// fit is then the minimal-residual one.
    pub feasible: bool,
}

fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k == 0 {
        visit(&[]);
        return;
    }
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // Advance lexicographically.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn least_squares_on_support(
    theta: &DMatrix<f64>,
    z: &DVector<f64>,
    support: &[usize],
) -> (DVector<f64>, f64) {
    let m = theta.nrows();
    if support.is_empty() {
        return (DVector::zeros(theta.ncols()), z.norm());
    }
    let mut sub = DMatrix::zeros(m, support.len());
    for (j, &col) in support.iter().enumerate() {
        sub.set_column(j, &theta.column(col));
    }
    let svd = sub.clone().svd(true, true);
    let coef = svd
        .solve(z, f64::EPSILON * 100.0)
        .expect("svd solve on explicit factors");
    let coef = DVector::from_column_slice(coef.as_slice());
    let residual = (z - &sub * &coef).norm();
    let mut s = DVector::zeros(theta.ncols());
    for (j, &col) in support.iter().enumerate() {
        s[col] = coef[j];
    }
    (s, residual)
}

/// Exhaustive reference decoder: least-squares fit on every support of
/// size at most k, returning the minimal-l1 feasible fit, or the
/// minimal-residual fit flagged infeasible when the radius admits none.
pub fn exhaustive_sparse_oracle(
    z: &DVector<f64>,
    theta: &DMatrix<f64>,
    k: usize,
    eps: f64,
) -> Result<OracleSolution, DecodeError> {
    let n = theta.ncols();
    if n > 20 || k > 3 {
        return Err(DecodeError::OracleBudgetExceeded { n, k });
    }
    // Numerical slack so radius-zero fits of exactly representable z count
    // as feasible.
    let feas_tol = eps + 1e-9 * z.norm().max(1.0);
    let mut best_feasible: Option<OracleSolution> = None;
    let mut best_any: Option<OracleSolution> = None;
    for size in 0..=k.min(n) {
        for_each_combination(n, size, |support| {
            let (s, residual) = least_squares_on_support(theta, z, support);
            let l1 = s.iter().map(|v| v.abs()).sum();
            let candidate = OracleSolution {
                s,
                support: support.to_vec(),
                residual,
                l1,
                feasible: residual <= feas_tol,
            };
            // Strict improvement beyond fp noise, so a superset fit cannot
            // displace an equivalent smaller support on a rounding tie.
            if candidate.feasible
                && best_feasible
                    .as_ref()
                    .map_or(true, |b| candidate.l1 < b.l1 * (1.0 - 1e-12))
            {
                best_feasible = Some(candidate.clone());
            }
            if best_any
                .as_ref()
                .map_or(true, |b| candidate.residual < b.residual)
            {
                best_any = Some(candidate);
            }
        });
    }
    Ok(best_feasible.or(best_any).expect("at least the empty fit"))
}

/// Restricted-isometry estimate of order k.
#[derive(Debug, Clone)]
pub struct RipEstimate {
    pub k: usize,
    /// Smallest constant bounding the squared-norm distortion over the
    /// inspected supports.
    pub delta_k: f64,
    /// Support attaining the extreme singular value.
    pub worst_support: Vec<usize>,
}

fn support_distortion(theta: &DMatrix<f64>, support: &[usize]) -> f64 {
    let m = theta.nrows();
    let mut sub = DMatrix::zeros(m, support.len());
    for (j, &col) in support.iter().enumerate() {
        sub.set_column(j, &theta.column(col));
    }
    let sv = sub.svd(false, false).singular_values;
    let smax = sv.max();
    let smin = if support.len() > m { 0.0 } else { sv.min() };
    (smax * smax - 1.0).max(1.0 - smin * smin)
}

/// Brute-force RIP constant: the exact smallest `delta_k` over all
/// supports of size k (supports of smaller size are dominated by any
/// size-k superset through singular value interlacing).
pub fn rip_constant(theta: &DMatrix<f64>, k: usize) -> Result<RipEstimate, DecodeError> {
    let n = theta.ncols();
    if k == 0 || k > n {
        return Err(DecodeError::BadProblem(format!(
            "RIP order k={k} out of range 1..={n}"
        )));
    }
    if n > 20 || k > 4 {
        return Err(DecodeError::RipBudgetExceeded { n, k });
    }
    let mut delta_k = f64::NEG_INFINITY;
    let mut worst = Vec::new();
    for_each_combination(n, k, |support| {
        let d = support_distortion(theta, support);
        if d > delta_k {
            delta_k = d;
            worst = support.to_vec();
        }
    });
    Ok(RipEstimate {
        k,
        delta_k: delta_k.max(0.0),
        worst_support: worst,
    })
}

/// Monte-Carlo RIP probe over `samples` random supports; a lower bound on
/// the exhaustive constant.
pub fn rip_constant_sampled(
    theta: &DMatrix<f64>,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<RipEstimate, DecodeError> {
    let n = theta.ncols();
    if k == 0 || k > n {
        return Err(DecodeError::BadProblem(format!(
            "RIP order k={k} out of range 1..={n}"
        )));
    }
    let mut rng = seeds::rng_for(seed, &[]);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut delta_k = f64::NEG_INFINITY;
    let mut worst = Vec::new();
    for _ in 0..samples.max(1) {
        for i in 0..k {
            let j = rng.gen_range(i..n);
            indices.swap(i, j);
        }
        let mut support: Vec<usize> = indices[..k].to_vec();
        support.sort_unstable();
        let d = support_distortion(theta, &support);
        if d > delta_k {
            delta_k = d;
            worst = support;
        }
    }
    Ok(RipEstimate {
        k,
        delta_k: delta_k.max(0.0),
        worst_support: worst,
    })
}

/// `c1 = 4 sqrt(1 + delta_2k) / (1 - (1 + sqrt(2)) delta_2k)`, defined for
/// `delta_2k < sqrt(2) - 1`.
pub fn recovery_constant(delta_2k: f64) -> Result<f64, DecodeError> {
    if !(delta_2k >= 0.0) || delta_2k >= SQRT2 - 1.0 {
        return Err(DecodeError::BoundInapplicable(delta_2k));
    }
    Ok(4.0 * (1.0 + delta_2k).sqrt() / (1.0 - (1.0 + SQRT2) * delta_2k))
}

/// Certified ceiling on the squared recovery error, `c1 * eps^2`.
pub fn error_bound(delta_2k: f64, eps_sq: f64) -> Result<f64, DecodeError> {
    Ok(recovery_constant(delta_2k)? * eps_sq)
}

/// Decode report for a stored run transcript.
#[derive(Debug, Clone)]
pub struct DecodeReport {
    pub x_hat: DVector<f64>,
    pub measurements: usize,
    pub residual: f64,
    pub iterations: usize,
    pub eps: f64,
    /// `||x - x_hat||_2` against the transcript's true messages.
    pub recovery_error: f64,
    /// `||n_eff_tot||^2 <= eps^2` on this transcript.
    pub noise_bound_holds: bool,
}

impl fmt::Display for DecodeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "decode report")?;
        writeln!(f, "  nodes             {}", self.x_hat.len())?;
        writeln!(f, "  measurements      {}", self.measurements)?;
        writeln!(f, "  iterations        {}", self.iterations)?;
        writeln!(f, "  eps               {:.6e}", self.eps)?;
        writeln!(f, "  residual          {:.6e}", self.residual)?;
        writeln!(f, "  recovery_error_l2 {:.6e}", self.recovery_error)?;
        writeln!(
            f,
            "  noise_bound       {}",
            if self.noise_bound_holds { "ok" } else { "VIOLATED" }
        )?;
        write!(f, "  x_hat {}", vec_line(&self.x_hat))
    }
}

fn vec_line(v: &DVector<f64>) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs the l1 decoder on a stored transcript and checks it against the
/// transcript's own ground truth.
pub fn decode_transcript(tr: &RunTranscript) -> Result<DecodeReport, DecodeError> {
    let problem = DecodeProblem {
        z: tr.z_tot.clone(),
        theta: &tr.psi_tot * &tr.phi,
        phi: tr.phi.clone(),
        eps: tr.eps_sq.max(0.0).sqrt(),
    };
    let decoded = l1_min_decode(&problem)?;
    let recovery_error = (&decoded.x_hat - &tr.x).norm();
    Ok(DecodeReport {
        measurements: tr.z_tot.len(),
        residual: decoded.residual,
        iterations: decoded.iterations,
        eps: problem.eps,
        recovery_error,
        noise_bound_holds: tr.n_eff_tot.norm_squared() <= tr.eps_sq * (1.0 + 1e-12),
        x_hat: decoded.x_hat,
    })
}
