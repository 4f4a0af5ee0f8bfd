//! Sparse message ensembles `x = phi * s` with a bounded dynamic range.
//!
//! `s` is a k-sparse coefficient vector with non-zeros drawn uniformly on
//! (-1/2, 1/2), `phi` is a random orthonormal basis, and both are rescaled
//! together so the messages satisfy `max |x_v| = 0.99 * q_max`, keeping the
//! strict bound `|x_v| < q_max` with an unambiguous margin at the quantizer
//! boundary.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("basis dimension must be at least 1")]
    EmptyBasis,
    #[error("sparsity k={k} out of range 1..={n}")]
    BadSparsity { k: usize, n: usize },
    #[error("q_max must be positive, got {0}")]
    NonPositiveQMax(f64),
    #[error("basis is not orthonormal (max |phi^T phi - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("ensemble parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A k-sparse coefficient vector, its orthonormal basis, and the resulting
/// bounded messages.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageEnsemble {
    pub n: usize,
    pub k: usize,
    pub s: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub x: DVector<f64>,
    pub q_max: f64,
}

/// Random n-by-n orthonormal matrix: QR of an i.i.d. standard Gaussian
/// matrix, with column signs fixed by the R diagonal so the result is
/// deterministic for a given seed.
pub fn random_orthonormal_basis(n: usize, seed: u64) -> Result<DMatrix<f64>, SignalError> {
    if n == 0 {
        return Err(SignalError::EmptyBasis);
    }
    let mut rng = seeds::rng_for(seed, &[]);
    let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (mut q, r) = gauss.qr().unpack();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

fn max_abs_gram_deviation(phi: &DMatrix<f64>) -> f64 {
    let gram = phi.transpose() * phi;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Draws a k-sparse ensemble in the given basis: support uniform over
/// size-k subsets, non-zeros i.i.d. uniform on (-1/2, 1/2), then `s` and
/// `x = phi * s` scaled together so `max |x_v| = 0.99 * q_max`.
pub fn generate_sparse_messages_with_basis(
    phi: &DMatrix<f64>,
    k: usize,
    q_max: f64,
    seed: u64,
) -> Result<MessageEnsemble, SignalError> {
    let n = phi.nrows();
    if n == 0 {
        return Err(SignalError::EmptyBasis);
    }
    if k == 0 || k > n {
        return Err(SignalError::BadSparsity { k, n });
    }
    if !(q_max > 0.0) {
        return Err(SignalError::NonPositiveQMax(q_max));
    }
    let dev = max_abs_gram_deviation(phi);
    if dev >= 1e-10 {
        return Err(SignalError::NotOrthonormal(dev));
    }
    let mut rng = seeds::rng_for(seed, &[]);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let mut s = DVector::zeros(n);
    for &i in &indices[..k] {
        // Open interval: redraw the measure-zero exact zero so the support
        // size stays exactly k.
        let mut v = 0.0;
        while v == 0.0 {
            v = rng.gen_range(-0.5..0.5);
        }
        s[i] = v;
    }
    let x = phi * &s;
    let peak = x.amax();
    debug_assert!(peak > 0.0);
    let scale = 0.99 * q_max / peak;
    Ok(MessageEnsemble {
        n,
        k,
        s: s * scale,
        phi: phi.clone(),
        x: x * scale,
        q_max,
    })
}

/// Draws the basis and the sparse coefficients from a single seed.
pub fn generate_sparse_messages(
    n: usize,
    k: usize,
    q_max: f64,
    seed: u64,
) -> Result<MessageEnsemble, SignalError> {
    let phi = random_orthonormal_basis(n, seeds::derive_seed(seed, &[0]))?;
    generate_sparse_messages_with_basis(&phi, k, q_max, seeds::derive_seed(seed, &[1]))
}

impl MessageEnsemble {
    /// Number of non-zero coefficients in `s`.
    pub fn support_size(&self) -> usize {
        self.s.iter().filter(|&&v| v != 0.0).count()
    }

    /// Plain-text dump for replay: scalars, then `s`, `x`, and the rows of
    /// `phi`, one vector per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qnc-ensemble v1");
        let _ = writeln!(out, "n {} k {} q_max {}", self.n, self.k, self.q_max);
        let _ = writeln!(out, "s {}", join(&self.s));
        let _ = writeln!(out, "x {}", join(&self.x));
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.phi[(i, j)].to_string()).collect();
            let _ = writeln!(out, "phi {}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SignalError> {
        let err = |line: usize, msg: &str| SignalError::Parse {
            line,
            msg: msg.into(),
        };
        let mut lines = text.lines().enumerate();
        let (l, magic) = lines.next().ok_or_else(|| err(1, "empty input"))?;
        if magic.trim() != "qnc-ensemble v1" {
            return Err(err(l + 1, "expected `qnc-ensemble v1` header"));
        }
        let (l, hdr) = lines.next().ok_or_else(|| err(2, "missing size line"))?;
        let toks: Vec<&str> = hdr.split_whitespace().collect();
        if toks.len() != 6 || toks[0] != "n" || toks[2] != "k" || toks[4] != "q_max" {
            return Err(err(l + 1, "expected `n <n> k <k> q_max <v>`"));
        }
        let n: usize = toks[1].parse().map_err(|_| err(l + 1, "bad n"))?;
        let k: usize = toks[3].parse().map_err(|_| err(l + 1, "bad k"))?;
        let q_max: f64 = toks[5].parse().map_err(|_| err(l + 1, "bad q_max"))?;
        let mut s = None;
        let mut x = None;
        let mut phi_rows: Vec<Vec<f64>> = Vec::new();
        for (l, line) in lines {
            let mut toks = line.split_whitespace();
            let Some(tag) = toks.next() else { continue };
            let vals: Result<Vec<f64>, _> = toks.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|_| err(l + 1, "bad float"))?;
            if vals.len() != n {
                return Err(err(l + 1, "wrong vector length"));
            }
            match tag {
                "s" => s = Some(DVector::from_vec(vals)),
                "x" => x = Some(DVector::from_vec(vals)),
                "phi" => phi_rows.push(vals),
                _ => return Err(err(l + 1, "unknown tag")),
            }
        }
        if phi_rows.len() != n {
            return Err(err(0, "wrong number of phi rows"));
        }
        let phi = DMatrix::from_fn(n, n, |i, j| phi_rows[i][j]);
        Ok(Self {
            n,
            k,
            s: s.ok_or_else(|| err(0, "missing s"))?,
            phi,
            x: x.ok_or_else(|| err(0, "missing x"))?,
            q_max,
        })
    }
}

fn join(v: &DVector<f64>) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_basis_is_sign() {
        for seed in 0..8 {
            let phi = random_orthonormal_basis(1, seed).unwrap();
            assert!((phi[(0, 0)].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for seed in [0, 1, 2] {
            let phi = random_orthonormal_basis(5, seed).unwrap();
            assert!(max_abs_gram_deviation(&phi) < 1e-10);
        }
    }

    #[test]
    fn basis_determinant_is_unit() {
        let phi = random_orthonormal_basis(8, 3).unwrap();
        let det = phi.determinant();
        assert!(
            (det.abs() - 1.0).abs() < 1e-9,
            "det should be +/-1, got {det}"
        );
    }

    #[test]
    fn basis_is_deterministic() {
        let a = random_orthonormal_basis(6, 42).unwrap();
        let b = random_orthonormal_basis(6, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_support_identity_basis_scales_s() {
        let phi = DMatrix::identity(6, 6);
        let ens = generate_sparse_messages_with_basis(&phi, 6, 2.0, 9).unwrap();
        assert_eq!(ens.support_size(), 6);
        assert_eq!(ens.x, ens.s);
        assert!((ens.x.amax() - 0.99 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn support_size_is_exact() {
        for seed in 0..20 {
            let ens = generate_sparse_messages(15, 4, 1.0, seed).unwrap();
            assert_eq!(ens.support_size(), 4);
        }
    }

    #[test]
    fn peak_message_hits_normalization_target() {
        let ens = generate_sparse_messages(20, 4, 1.0, 11).unwrap();
        assert!((ens.x.amax() - 0.99).abs() < 1e-12);
        assert!(ens.x.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn factorization_survives_scaling() {
        let ens = generate_sparse_messages(12, 3, 1.0, 5).unwrap();
        let recon = &ens.phi * &ens.s;
        assert!((&recon - &ens.x).amax() < 1e-12);
        // phi^T x recovers s.
        let s_back = ens.phi.transpose() * &ens.x;
        assert!((&s_back - &ens.s).amax() < 1e-10);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_sparse_messages(10, 0, 1.0, 0).is_err());
        assert!(generate_sparse_messages(10, 11, 1.0, 0).is_err());
        assert!(generate_sparse_messages(10, 3, 0.0, 0).is_err());
        let skewed = DMatrix::from_element(4, 4, 0.5);
        assert!(matches!(
            generate_sparse_messages_with_basis(&skewed, 2, 1.0, 0),
            Err(SignalError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let ens = generate_sparse_messages(9, 2, 1.5, 77).unwrap();
        let back = MessageEnsemble::from_text(&ens.to_text()).unwrap();
        assert_eq!(ens, back);
    }
}
