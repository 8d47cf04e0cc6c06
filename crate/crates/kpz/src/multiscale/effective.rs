use std::f64::consts::PI;

use serde::Serialize;

use super::partition::ScalePartition;
use crate::error::{KpzError, Result};
use crate::noise::bump;
use crate::quad::{RadialTable, Rule};

/// Isotropic spatial bump `χ̄⁰` on `R³` (radius 1, unit mass) and its Fourier
/// transform.
#[derive(Clone, Debug)]
pub struct SpatialBump {
    hat: RadialTable,
    norm: f64,
}

const BUMP_RADIUS: f64 = 1.0;
const XI_MAX: f64 = 80.0;

impl SpatialBump {
    pub fn new() -> Self {
        let rule = Rule::new(16);
        let raw = 4.0 * PI * rule.integrate(0.0, BUMP_RADIUS, 16, |r| r * r * bump(r / BUMP_RADIUS));
        let norm = 1.0 / raw;
        let hat = RadialTable::build(XI_MAX, 8001, |xi| {
            4.0 * PI
                * norm
                * rule.integrate(0.0, BUMP_RADIUS, 16, |r| {
                    let sinc = if xi * r < 1e-8 { 1.0 } else { (xi * r).sin() / (xi * r) };
                    r * r * bump(r / BUMP_RADIUS) * sinc
                })
        });
        Self { hat, norm }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.norm * bump(r / BUMP_RADIUS)
    }

    /// `χ̂⁰(ξ)`, with `χ̂⁰(0) = 1`.
    pub fn hat(&self, xi: f64) -> f64 {
        self.hat.eval(xi)
    }

    /// Symbol of `Δ^{→0}`: `−|ξ|² χ̂⁰(ξ)`.
    pub fn laplacian_symbol(&self, xi: f64) -> f64 {
        -xi * xi * self.hat(xi)
    }
}

impl Default for SpatialBump {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EffectiveMode {
    /// `A^{→1}(1 − δν B^{→1}Δ^{→0}A^{→1})^{−1}B^{→1}`
    Tilde,
    /// `(∂_t − νΔ − δνΔ^{→0})^{−1}`
    OneEff,
    /// `(∂_t − ν_eff Δ)^{−1}`
    Eff,
}

/// Per-mode effective propagators in `d = 3`.
///
/// Every series term carries the same heat factor `e^{−ντ|ξ|²}`, so the
/// Neumann series reduces to `Σₙ (δν m(ξ))ⁿ Rₙ(τ)` with time profiles `Rₙ`
/// obtained by iterated Volterra convolution against the time kernel
/// (`ρ^{→1} = 1_{τ>2}` for `Tilde`, `1` for `OneEff`).
pub struct EffectivePropagator {
    pub nu: f64,
    pub delta_nu: f64,
    pub mode: EffectiveMode,
    bump: SpatialBump,
    h: f64,
    terms: Vec<Vec<f64>>,
}

const GRID_PER_UNIT: usize = 64;
const MAX_TERMS: usize = 120;
const SERIES_TOL: f64 = 1e-10;

/// Cumulative integral from index `start` of a grid function, exact for cubics.
fn cumulative(f: &[f64], start: usize, h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < start + 4 {
        return out;
    }
    for m in start..n - 1 {
        let inc = if m == start {
            9.0 * f[m] + 19.0 * f[m + 1] - 5.0 * f[m + 2] + f[m + 3]
        } else if m + 2 >= n {
            f[m - 2] - 5.0 * f[m - 1] + 19.0 * f[m] + 9.0 * f[m + 1]
        } else {
            -f[m - 1] + 13.0 * f[m] + 13.0 * f[m + 1] - f[m + 2]
        };
        out[m + 1] = out[m] + inc * h / 24.0;
    }
    out
}

impl EffectivePropagator {
    pub fn new(part: &ScalePartition, nu: f64, delta_nu: f64, mode: EffectiveMode, tau_max: f64) -> Result<Self> {
        if delta_nu.abs() >= 0.25 * nu {
            return Err(KpzError::Argument(format!("|δν| = {} must be below ν/4", delta_nu.abs())));
        }
        let h = 1.0 / GRID_PER_UNIT as f64;
        let n = (tau_max / h).ceil() as usize + 4;
        let shift = match mode {
            EffectiveMode::Tilde => (part.split_time() / h).round() as usize,
            _ => 0,
        };
        let mut terms = Vec::new();
        let mut start = shift;
        let mut cur: Vec<f64> = (0..n).map(|i| if i >= start { 1.0 } else { 0.0 }).collect();
        if mode != EffectiveMode::Eff {
            for _ in 0..MAX_TERMS {
                let cum = cumulative(&cur, start, h);
                let mut next = vec![0.0; n];
                let lo = (start + shift).min(n);
                next[lo..].copy_from_slice(&cum[lo - shift..n - shift]);
                terms.push(std::mem::replace(&mut cur, next));
                start += shift;
                if start + 4 > n {
                    break;
                }
            }
        }
        Ok(Self { nu, delta_nu, mode, bump: SpatialBump::new(), h, terms })
    }

    fn term(&self, n: usize, tau: f64) -> f64 {
        let v = &self.terms[n];
        let x = tau / self.h;
        let i = (x.floor() as usize).clamp(1, v.len() - 3);
        let t = x - i as f64;
        let p = [v[i - 1], v[i], v[i + 1], v[i + 2]];
        let l = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        p.iter().zip(l).map(|(a, b)| a * b).sum()
    }

    /// Kernel in Fourier variables at time `τ` and `|ξ|`.
    pub fn mode_value(&self, tau: f64, xi: f64) -> Result<f64> {
        if tau <= 0.0 {
            return Ok(0.0);
        }
        let heat = (-self.nu * tau * xi * xi).exp();
        if self.mode == EffectiveMode::Eff {
            return Ok((-(self.nu + self.delta_nu) * tau * xi * xi).exp());
        }
        if self.mode == EffectiveMode::Tilde && tau <= 2.0 {
            return Ok(0.0);
        }
        if heat < 1e-250 {
            return Ok(0.0);
        }
        let c = self.delta_nu * self.bump.laplacian_symbol(xi);
        // terms may grow until n ≈ |c|τ before the factorial wins
        let growth_window = 2.0 * c.abs() * tau + 10.0;
        let (mut sum, mut cn, mut prev) = (0.0, 1.0, f64::INFINITY);
        for n in 0..self.terms.len() {
            let term = cn * self.term(n, tau);
            sum += term;
            if n > 0 && term.abs() <= SERIES_TOL * sum.abs().max(1e-300) {
                return Ok(heat * sum);
            }
            if n as f64 > growth_window && term.abs() > prev {
                return Err(KpzError::NoConvergence(format!("series terms grow at ξ = {xi}, τ = {tau}")));
            }
            prev = term.abs();
            cn *= c;
        }
        if heat * prev < 1e-300 {
            return Ok(heat * sum);
        }
        Err(KpzError::NoConvergence(format!("series not converged at ξ = {xi}, τ = {tau}")))
    }

    /// Closed form of the `OneEff` mode value, `e^{−ντξ² + δν m(ξ) τ}`.
    pub fn one_eff_closed(&self, tau: f64, xi: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        (-self.nu * tau * xi * xi + self.delta_nu * self.bump.laplacian_symbol(xi) * tau).exp()
    }

    /// Real-space kernel at time `τ` and distance `r` (3D Hankel transform).
    pub fn real_value(&self, tau: f64, r: f64) -> Result<f64> {
        if tau <= 0.0 {
            return Ok(0.0);
        }
        let nu_lo = self.nu.min(self.nu + self.delta_nu);
        let cut = (69.0 / (nu_lo * tau)).sqrt();
        let rule = Rule::new(8);
        let panels = 64 + (cut * r / 2.0).ceil() as usize;
        let mut acc = 0.0;
        for (xi, w) in rule.composite(0.0, cut, panels) {
            let f = self.mode_value(tau, xi)?;
            let radial = if r * xi < 1e-8 { xi * xi } else { xi * (xi * r).sin() / r };
            acc += w * radial * f;
        }
        Ok(acc / (2.0 * PI * PI))
    }

    /// `|G̃ − G_eff| / G_eff` at `τ = 1/ε`, `r = ε^{−1/2}|x|` (`t − t′ = 1`).
    pub fn relative_deviation(part: &ScalePartition, nu: f64, delta_nu: f64, eps: f64, x: f64) -> Result<f64> {
        let tau = 1.0 / eps;
        let r = x / eps.sqrt();
        let tilde = Self::new(part, nu, delta_nu, EffectiveMode::Tilde, tau + 1.0)?;
        let eff = Self::new(part, nu, delta_nu, EffectiveMode::Eff, tau + 1.0)?;
        let (a, b) = (tilde.real_value(tau, r)?, eff.real_value(tau, r)?);
        Ok((a - b).abs() / b)
    }
}
