//! Exact Gaussian moments for a covariance family `C(s) = C0 + s·C1`.
//!
//! Moments are polynomials in `s`, obtained from the Wick recursion
//! `⟨x_a x^β⟩ = Σ_b β_b C_ab ⟨x^{β−e_b}⟩`.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::poly::Poly;
use crate::ClusterError;

/// Dense univariate polynomial, `coeffs[k]` multiplies `s^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Poly1 {
    pub coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        Self { coeffs: vec![c0, c1] }
    }

    pub fn add_scaled(&mut self, other: &Poly1, k: f64) {
        if self.coeffs.len() < other.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += k * b;
        }
    }

    pub fn mul(&self, other: &Poly1) -> Poly1 {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Poly1::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly1 { coeffs: c }
    }

    pub fn derivative(&self) -> Poly1 {
        Poly1 { coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect() }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn max_coeff_diff(&self, other: &Poly1) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n)
            .map(|k| {
                let a = self.coeffs.get(k).copied().unwrap_or(0.0);
                let b = other.coeffs.get(k).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Covariance family on `[0, 1]`, checked positive semidefinite at both ends
/// (and hence on the whole segment, by convexity).
#[derive(Clone, Debug)]
pub struct GaussianFamily {
    n: usize,
    c0: Vec<f64>,
    c1: Vec<f64>,
}

const PSD_TOL: f64 = 1e-12;

impl GaussianFamily {
    /// `c0` and `c1` are row-major `n × n` symmetric matrices.
    pub fn new(n: usize, c0: Vec<f64>, c1: Vec<f64>) -> Result<Self, ClusterError> {
        assert_eq!(c0.len(), n * n);
        assert_eq!(c1.len(), n * n);
        for i in 0..n {
            for j in 0..n {
                assert!(
                    c0[i * n + j] == c0[j * n + i] && c1[i * n + j] == c1[j * n + i],
                    "covariance family must be symmetric"
                );
            }
        }
        for s in [0.0, 1.0] {
            let m = DMatrix::from_fn(n, n, |i, j| c0[i * n + j] + s * c1[i * n + j]);
            let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            let min_eig = SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            if n > 0 && min_eig < -PSD_TOL * scale {
                return Err(ClusterError::NotPsd { s, min_eig });
            }
        }
        Ok(Self { n, c0, c1 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn cov(&self, a: usize, b: usize) -> Poly1 {
        Poly1::linear(self.c0[a * self.n + b], self.c1[a * self.n + b])
    }

    pub fn slope(&self, a: usize, b: usize) -> f64 {
        self.c1[a * self.n + b]
    }

    /// `⟨x^α⟩_s` as a polynomial in `s`.
    pub fn moment(&self, exps: &[u32]) -> Poly1 {
        let mut memo = HashMap::new();
        self.moment_memo(exps.to_vec(), &mut memo)
    }

    fn moment_memo(&self, exps: Vec<u32>, memo: &mut HashMap<Vec<u32>, Poly1>) -> Poly1 {
        let total: u32 = exps.iter().sum();
        if total == 0 {
            return Poly1::constant(1.0);
        }
        if total % 2 == 1 {
            return Poly1::zero();
        }
        if let Some(m) = memo.get(&exps) {
            return m.clone();
        }
        let a = exps.iter().position(|&e| e > 0).expect("nonzero exponent");
        let mut beta = exps.clone();
        beta[a] -= 1;
        let mut out = Poly1::zero();
        for b in 0..self.n {
            if beta[b] == 0 {
                continue;
            }
            let mut rest = beta.clone();
            rest[b] -= 1;
            let sub = self.moment_memo(rest, memo);
            out.add_scaled(&self.cov(a, b).mul(&sub), beta[b] as f64);
        }
        memo.insert(exps, out.clone());
        out
    }

    /// `⟨F⟩_s` as a polynomial in `s`.
    pub fn expectation(&self, f: &Poly) -> Poly1 {
        assert_eq!(f.nvars(), self.n);
        let mut memo = HashMap::new();
        let mut out = Poly1::zero();
        for (e, c) in f.terms() {
            let m = self.moment_memo(e.to_vec(), &mut memo);
            out.add_scaled(&m, c);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    /// `d/ds ⟨F⟩_s`
    pub lhs: Poly1,
    /// `½ Σ_{a,b} C1_ab ⟨∂_a ∂_b F⟩_s`
    pub rhs: Poly1,
    pub max_coeff_diff: f64,
}

impl IdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_coeff_diff <= tol
    }
}

/// Checks the Gaussian interpolation identity
/// `d/ds ⟨F⟩_s = ½ Σ_{a,b} C1_ab ⟨∂_a ∂_b F⟩_s` coefficient by coefficient.
pub fn gaussian_ds_identity_check(family: &GaussianFamily, f: &Poly) -> IdentityReport {
    let lhs = family.expectation(f).derivative();
    let mut rhs = Poly1::zero();
    for a in 0..family.n() {
        let da = f.derivative(a);
        for b in 0..family.n() {
            let c = family.slope(a, b);
            if c == 0.0 {
                continue;
            }
            rhs.add_scaled(&family.expectation(&da.derivative(b)), 0.5 * c);
        }
    }
    let max_coeff_diff = lhs.max_coeff_diff(&rhs);
    IdentityReport { lhs, rhs, max_coeff_diff }
}
