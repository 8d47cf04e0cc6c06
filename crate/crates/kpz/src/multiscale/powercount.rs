use serde::Serialize;
use statrs::function::gamma::gamma;

use super::kernels::{dq, q};
use super::partition::ScalePartition;
use crate::error::{KpzError, Result};
use crate::quad::Rule;

/// Least-squares line `y = a + b x`; returns `(b, a, R²)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (b, my - b * mx, r2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Pw1Variant {
    /// `∇³ = ∂₁³`
    Grad3,
    /// `∂_t ∂₁`
    TimeGrad,
}

/// Comparison kernel viscosity relative to `ν`.
const NU_RATIO: f64 = 2.0;

/// `∫ dz φ(z) f(z)` over a standard normal `z`, composite GL on `[−8, 8]`.
fn gauss_avg(nodes: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    nodes.iter().map(|&(z, w)| w * c * (-0.5 * z * z).exp() * f(z)).sum()
}

/// PW1 constant of scale `j`:
/// `sup_{T,x} ∫dt′dx′ G(T−τ, x−x′)|D Gʲ(τ, x′)| / (2^{−j/2} G_{2ν}(T, x))`
/// with `x = (x₁, 0, …)`, `T` from `2ʲ` to `64·2ʲ`.
pub fn pw1_constant(part: &ScalePartition, j: u32, nu: f64, d: usize, variant: Pw1Variant) -> f64 {
    let zs = Rule::new(4).composite(-8.0, 8.0, if variant == Pw1Variant::Grad3 { 64 } else { 24 });
    let chis = Rule::new(4).composite(0.0, 8.0, 12);
    let (lo, hi) = ScalePartition::g_support(j);
    let taus = Rule::new(6).composite(lo, hi, 10);
    let nu2 = NU_RATIO * nu;
    let scale = 2f64.powi(j as i32);
    let h = 1e-4 * scale;
    let rho_dot = |t: f64| (part.rho(j, t + h) - part.rho(j, t - h)) / (2.0 * h);
    let perp = (d - 1) as f64;
    // chi distribution with d−1 degrees of freedom
    let chi_norm: f64 = chis.iter().map(|&(r, w)| w * r.powf(perp - 1.0) * (-0.5 * r * r).exp()).sum();
    let mut best = 0.0f64;
    for ti in 0..12 {
        let tt = scale * 2f64.powf(6.0 * ti as f64 / 11.0);
        for xi in 0..12 {
            let x1 = 4.0 * (2.0 * nu2 * tt).sqrt() * xi as f64 / 11.0;
            let mut acc = 0.0;
            for &(tau, wt) in &taus {
                if tau >= tt {
                    continue;
                }
                let (s, sig) = (nu * tau, (2.0 * nu * (tt - tau)).sqrt());
                let v = match variant {
                    Pw1Variant::Grad3 => {
                        let one = gauss_avg(&zs, |z| dq(3, s, x1 + sig * z).abs());
                        part.rho(j, tau) * one * q(nu * tt, 0.0).powf(perp)
                    }
                    Pw1Variant::TimeGrad => {
                        let (r, rd) = (part.rho(j, tau), rho_dot(tau));
                        let mut inner = 0.0;
                        for &(c, wc) in &chis {
                            let rp = sig * c;
                            let wr = wc * c.powf(perp - 1.0) * (-0.5 * c * c).exp() / chi_norm;
                            let perp_q =
                                (4.0 * std::f64::consts::PI * s).powf(-0.5 * perp) * (-rp * rp / (4.0 * s)).exp();
                            // Δ of the transverse Gaussian factor at radius rp
                            let perp_lap = perp_q * (rp * rp / (4.0 * s * s) - perp / (2.0 * s));
                            inner += wr
                                * gauss_avg(&zs, |z| {
                                    let y = x1 + sig * z;
                                    let d1 = dq(1, s, y);
                                    let d1_lap = dq(3, s, y) * perp_q + d1 * perp_lap;
                                    (rd * d1 * perp_q + r * nu * d1_lap).abs()
                                });
                        }
                        // transverse Gaussian average replaces the G factor in the d−1 directions
                        inner
                    }
                };
                acc += wt * v;
            }
            let bound = 2f64.powf(-0.5 * j as f64) * q(nu2 * tt, x1) * q(nu2 * tt, 0.0).powf(perp);
            best = best.max(acc / bound);
        }
    }
    best
}

/// Divergent cases `|κ| ∈ {0, 2}` (`κ = ∂₁^{|κ|}`) with the scale-`≥1`
/// profile `ρ^{→1}` as UV regularization: returns `(t, I(t))` with
/// `I(t) = ∫dt′dx′ G(t−t′)|∇^κ G^{→1}(t′)| / G(t)` at `x = 0`.
pub fn pw1_divergent(part: &ScalePartition, nu: f64, d: usize, kappa: usize, ts: &[f64]) -> Vec<(f64, f64)> {
    let zs = Rule::new(4).composite(-8.0, 8.0, 64);
    let _ = d;
    ts.iter()
        .map(|&t| {
            let split = part.split_time();
            if t <= split {
                return (t, 0.0);
            }
            // log-spaced panels in τ over (2, t)
            let panels = 24 + (t / split).ln().ceil() as usize * 4;
            let rule = Rule::new(6);
            let (a, b) = (split.ln(), t.ln());
            let v = rule.integrate(a, b, panels, |lt| {
                let tau = lt.exp();
                let (s, sig) = (nu * tau, (2.0 * nu * (t - tau).max(0.0)).sqrt());
                let j = if kappa == 0 { q(nu * t, 0.0) } else { gauss_avg(&zs, |z| dq(kappa, s, sig * z).abs()) };
                tau * part.rho_above(tau) * j
            });
            (t, v / q(nu * t, 0.0))
        })
        .collect()
}

/// PW2 volume-factor inequality `2^{−j₂(1+d/2)} ≤ 2^{−5j₁/4} 2^{−5j₂/4}`;
/// returns whether it holds and the log₂ margin.
pub fn pw2_check(d: usize, j1: u32, j2: u32) -> Result<(bool, f64)> {
    if j1 < 1 {
        return Err(KpzError::Argument("PW2 needs j1 ≥ 1".into()));
    }
    if j1 > j2 {
        return Err(KpzError::Argument(format!("PW2 needs j1 ≤ j2, got {j1} > {j2}")));
    }
    if d < 3 {
        return Err(KpzError::Argument("PW2 needs d ≥ 3".into()));
    }
    let margin = j2 as f64 * (1.0 + 0.5 * d as f64) - 1.25 * (j1 + j2) as f64;
    Ok((margin >= 0.0, margin))
}

/// Sampling grid for [`gradient_bound_check`]: `t` values and points
/// `|x_a|²/t ∈ [0, r_max]` per axis.
#[derive(Clone, Debug)]
pub struct GradientGrid {
    pub ts: Vec<f64>,
    pub r_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientReport {
    pub kappa: Vec<usize>,
    /// Smallest `C` with `|∇^κ G_ν| ≤ C^{|κ|+1}(λ√(νt))^{−|κ|}Γ(|κ|/2) G_{ν′}`.
    pub c_min: f64,
    /// `ν′ − ν`.
    pub nu_shift: f64,
}

/// Gradient bound with comparison kernel `G_{ν′}`, `ν′ = ν + shift·λ²`
/// (`Γ(0)` is read as 1).
pub fn gradient_bound_check(
    nu: f64,
    lambda: f64,
    kappa: &[usize],
    shift: f64,
    grid: &GradientGrid,
) -> Result<GradientReport> {
    let order: usize = kappa.iter().sum();
    if order > 4 {
        return Err(KpzError::Argument("|κ| ≤ 4 required".into()));
    }
    let nu2 = nu + shift * lambda * lambda;
    let gam = if order == 0 { 1.0 } else { gamma(0.5 * order as f64) };
    let mut best = 0.0f64;
    for &t in &grid.ts {
        // the sup factorizes over the axes
        let mut prod = 1.0;
        for &k in kappa {
            let mut m = 0.0f64;
            for i in 0..grid.points {
                let x = (grid.r_max * t).sqrt() * i as f64 / (grid.points - 1) as f64;
                m = m.max(dq(k, nu * t, x).abs() / q(nu2 * t, x));
            }
            prod *= m;
        }
        let v = prod * (lambda * (nu * t).sqrt()).powi(order as i32) / gam;
        best = best.max(v);
    }
    Ok(GradientReport { kappa: kappa.to_vec(), c_min: best.powf(1.0 / (order as f64 + 1.0)), nu_shift: nu2 - nu })
}
