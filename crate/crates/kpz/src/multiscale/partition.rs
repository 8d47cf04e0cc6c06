use serde::Serialize;

use crate::error::{KpzError, Result};
use crate::quad::{RadialTable, Rule};

/// `exp(−1/u)` glued to 0, the C^∞ building block of the cutoffs.
fn flat(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// Smooth step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
fn step(u: f64) -> f64 {
    let (a, b) = (flat(u), flat(1.0 - u));
    a / (a + b)
}

/// Equal to 1 on `[0, 1/2]`, vanishing from 1 on; 0 for negative times.
pub fn chi0(tau: f64) -> f64 {
    if tau < 0.0 {
        0.0
    } else {
        step(2.0 - 2.0 * tau)
    }
}

/// `χ⁰(u/2) − χ⁰(u)`, supported in `[1/2, 2]`.
pub fn chi(u: f64) -> f64 {
    chi0(0.5 * u) - chi0(u)
}

/// Extremes of the normalization table over a grid.
#[derive(Clone, Debug, Serialize)]
pub struct SRange {
    pub min: f64,
    pub argmin: f64,
    pub max: f64,
    pub argmax: f64,
}

/// Dyadic partition `χ⁰, χʲ(τ) = χ(2^{−j}τ)` with tabulated self-convolutions.
///
/// Scale `j ≥ 1` carries the time profile `aʲ = 2^{−j/2}χʲ`, whose
/// self-convolution is `(χ∗χ)(2^{−j}τ)`; scale 0 carries `χ⁰∗χ⁰`. The
/// normalized profiles `ρʲ = (aʲ∗aʲ)/S` sum to one wherever `S > 0`.
#[derive(Clone, Debug)]
pub struct ScalePartition {
    pub jmax: u32,
    c0: RadialTable,
    c1: RadialTable,
}

const TABLE_POINTS: usize = 8001;

impl ScalePartition {
    pub fn build(jmax: u32) -> Result<Self> {
        if jmax < 1 {
            return Err(KpzError::Argument("jmax must be at least 1".into()));
        }
        let rule = Rule::new(12);
        let c0 =
            RadialTable::build(2.0, TABLE_POINTS, |t| rule.integrate(0.0, t.min(1.0), 32, |s| chi0(s) * chi0(t - s)));
        let c1 = RadialTable::build(4.0, TABLE_POINTS, |u| {
            let (lo, hi) = ((u - 2.0).max(0.5), (u - 0.5).min(2.0));
            rule.integrate(lo, hi, 48, |s| chi(s) * chi(u - s))
        });
        let p = Self { jmax, c0, c1 };
        // S may vanish only at the forced zeros (τ → 0⁺, τ = 2, top edge)
        for i in 1..400 {
            let tau = 2.0 + (2f64.powi(jmax as i32 + 2) - 2.0) * i as f64 / 400.0;
            if p.s(tau) < 0.0 {
                return Err(KpzError::NoConvergence(format!("S({tau}) < 0")));
            }
        }
        Ok(p)
    }

    /// Time profile `aʲ(τ)` of `Aʲ = Bʲ`.
    pub fn a(&self, j: u32, tau: f64) -> f64 {
        if j == 0 {
            chi0(tau)
        } else {
            let s = 2f64.powi(-(j as i32));
            s.sqrt() * chi(s * tau)
        }
    }

    /// Self-convolution `aʲ∗aʲ`.
    pub fn raw(&self, j: u32, tau: f64) -> f64 {
        if tau <= 0.0 || j > self.jmax {
            return 0.0;
        }
        if j == 0 {
            self.c0.eval(tau).max(0.0)
        } else {
            self.c1.eval(tau * 2f64.powi(-(j as i32))).max(0.0)
        }
    }

    pub fn s(&self, tau: f64) -> f64 {
        (0..=self.jmax).map(|j| self.raw(j, tau)).sum()
    }

    /// Scale that takes the whole weight where `S` underflows to 0.
    fn fallback(&self, tau: f64) -> u32 {
        if tau <= 2.0 {
            0
        } else if tau >= 2f64.powi(self.jmax as i32 + 1) {
            self.jmax
        } else {
            1
        }
    }

    /// Normalized profile `ρʲ(τ)`; `Σⱼ ρʲ = 1` for every `τ > 0`.
    pub fn rho(&self, j: u32, tau: f64) -> f64 {
        if tau <= 0.0 || j > self.jmax {
            return 0.0;
        }
        let s = self.s(tau);
        if s > 0.0 {
            self.raw(j, tau) / s
        } else if j == self.fallback(tau) {
            1.0
        } else {
            0.0
        }
    }

    /// `Σ_{j≥1} ρʲ`: the indicator of `τ > 2`, because scale 0 lives on
    /// `(0, 2)` and scale 1 starts at 2.
    pub fn rho_above(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            0.0
        } else {
            1.0 - self.rho(0, tau)
        }
    }

    /// Time at which scale 0 hands over to the higher scales.
    pub fn split_time(&self) -> f64 {
        2.0
    }

    /// Upper end of the covered range `(0, 2^{jmax+2})`.
    pub fn tau_max(&self) -> f64 {
        2f64.powi(self.jmax as i32 + 2)
    }

    /// Time support of `Aʲ`.
    pub fn a_support(j: u32) -> (f64, f64) {
        if j == 0 {
            (0.0, 1.0)
        } else {
            let s = 2f64.powi(j as i32);
            (0.5 * s, 2.0 * s)
        }
    }

    /// Time support of `Gʲ`.
    pub fn g_support(j: u32) -> (f64, f64) {
        let (a, b) = Self::a_support(j);
        (2.0 * a, 2.0 * b)
    }

    pub fn s_range(&self, taus: &[f64]) -> SRange {
        let mut r = SRange { min: f64::INFINITY, argmin: 0.0, max: f64::NEG_INFINITY, argmax: 0.0 };
        for &t in taus {
            let s = self.s(t);
            if s < r.min {
                r.min = s;
                r.argmin = t;
            }
            if s > r.max {
                r.max = s;
                r.argmax = t;
            }
        }
        r
    }

    /// Log-uniform grid over the covered range.
    pub fn tau_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = (1e-3f64.ln(), (self.tau_max() * 0.999).ln());
        (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
    }
}
