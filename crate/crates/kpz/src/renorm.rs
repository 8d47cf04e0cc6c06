//! Leading-order renormalized constants by deterministic quadrature.
//!
//! Throughout, `Ω = ω∗ω` is the noise covariance, `G⁰ = 1_{(0,2)}(τ) p_{ντ}`
//! the scale-0 heat kernel (which equals the full heat kernel on the unit
//! time support of `Ω`), and `g = (λ/ν)√D`.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{KpzError, Result};
use crate::lattice::Torus;
use crate::lattice_spde::{HeatStep, SimConfig};
use crate::noise::{mollified_lag_covariance, mollified_taps, CovarianceTable, Mollifier, NoiseKind};
use crate::quad::{radial_self_convolution, sphere_area, RadialTable, Rule};

/// `g = (λ/ν)√D`.
pub fn coupling(lambda: f64, nu: f64, d0: f64) -> f64 {
    lambda / nu * d0.sqrt()
}

/// Value with a quadrature error estimate (difference to a coarser rule).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Radial points of the tabulated covariance `Ω`.
pub const OMEGA_POINTS: usize = 2001;
/// Radial points of the tabulated `Ω∗Ω`.
pub const OMEGA4_POINTS: usize = 801;
/// Gauss–Legendre order per panel of the self-convolution.
pub const CONVOLUTION_ORDER: usize = 12;

/// Tabulated covariances shared by the quadratures of one dimension.
#[derive(Clone, Debug)]
pub struct RenormTables {
    pub d: usize,
    pub omega: CovarianceTable,
    /// `Ω∗Ω` on `R^{1+d}`, support radius 2.
    pub omega4: RadialTable,
}

impl RenormTables {
    pub fn new(d: usize) -> Self {
        let m = Mollifier::new(d);
        let omega = CovarianceTable::new(&m, OMEGA_POINTS);
        let rule = Rule::new(CONVOLUTION_ORDER);
        let om = omega.clone();
        let omega4 = RadialTable::build(2.0, OMEGA4_POINTS, |rho| {
            radial_self_convolution(&|r| om.radial(r), 1.0, d + 1, rho, &rule, 12)
        });
        Self { d, omega, omega4 }
    }

    /// `∫Ω` over space-time (`= (∫ω)² = 1`).
    pub fn omega_mass(&self) -> f64 {
        sphere_area(self.d + 1)
            * Rule::new(16).integrate(0.0, 1.0, 32, |r| r.powi(self.d as i32) * self.omega.radial(r))
    }
}

fn check_cfg(cfg: &SimConfig) -> Result<()> {
    if cfg.noise != NoiseKind::Mollified {
        return Err(KpzError::Config("renormalized constants are defined for mollified noise".into()));
    }
    if !(cfg.nu0 > 0.0) || cfg.d0 < 0.0 {
        return Err(KpzError::Config("need nu0 > 0 and D0 ≥ 0".into()));
    }
    Ok(())
}

/// `∫_0^{t_max} dτ ∫dx p_{ντ}(x) w(x) Ω(τ, x)` for radial weights
/// `w(|x|)`, with `x = √(4ντ) u`.
fn heat_moment(t: &RenormTables, nu: f64, t_max: f64, weight: impl Fn(f64) -> f64, order: usize) -> f64 {
    let d = t.d;
    let rule = Rule::new(order);
    let area = sphere_area(d);
    let t_max = t_max.min(1.0);
    // τ = s² removes the endpoint behaviour at τ → 0
    rule.integrate(0.0, t_max.sqrt(), 24, |s| {
        let tau = s * s;
        let scale = (4.0 * nu * tau).sqrt();
        let u_max = (((1.0 - tau * tau).max(0.0)).sqrt() / scale).min(7.0);
        2.0 * s
            * rule.integrate(0.0, u_max, 16, |u| {
                let r = scale * u;
                area * u.powi(d as i32 - 1)
                    * PI.powf(-0.5 * d as f64)
                    * (-u * u).exp()
                    * weight(r)
                    * t.omega.radial((tau * tau + r * r).sqrt())
            })
    })
}

fn estimate(f: impl Fn(usize) -> f64) -> Estimate {
    let (hi, lo) = (f(12), f(8));
    Estimate { value: hi, error: (hi - lo).abs().max(1e-15 * hi.abs()) }
}

/// `v⁽⁰⁾ = g ∫ G⁰ Ω` at leading order.
pub fn v0_leading(cfg: &SimConfig, t: &RenormTables) -> Result<Estimate> {
    check_cfg(cfg)?;
    let g = cfg.g0();
    let e = estimate(|o| heat_moment(t, cfg.nu0, 1.0, |_| 1.0, o));
    Ok(Estimate { value: g * e.value, error: g * e.error })
}

/// Leading-order `v⁽⁰⁾(T)` with the time integral truncated at `T`.
pub fn v0_truncated(cfg: &SimConfig, t: &RenormTables, t_cut: f64) -> Result<f64> {
    check_cfg(cfg)?;
    if t_cut <= 0.0 {
        return Ok(0.0);
    }
    Ok(cfg.g0() * heat_moment(t, cfg.nu0, t_cut, |_| 1.0, 12))
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPoint {
    pub value: f64,
    pub iterations: usize,
    pub ratio: f64,
}

/// Solves `v = g∫G⁰(Ω + v²) = g I + g M v²` with `M = ∫G⁰ = 2`.
pub fn v0_fixed_point(cfg: &SimConfig, t: &RenormTables, tol: f64) -> Result<FixedPoint> {
    let lead = v0_leading(cfg, t)?;
    let g = cfg.g0();
    if g == 0.0 {
        return Ok(FixedPoint { value: 0.0, iterations: 0, ratio: 0.0 });
    }
    let m = 2.0;
    let (mut v, mut prev_step, mut ratio) = (lead.value, f64::NAN, 0.0);
    for it in 1..=200 {
        let next = lead.value + g * m * v * v;
        let step = (next - v).abs();
        if prev_step.is_finite() && prev_step > 0.0 {
            ratio = step / prev_step;
            if ratio >= 0.5 {
                return Err(KpzError::NoConvergence(format!("fixed-point step ratio {ratio:.3} ≥ 1/2")));
            }
        }
        v = next;
        if step <= tol {
            return Ok(FixedPoint { value: v, iterations: it, ratio });
        }
        prev_step = step;
    }
    Err(KpzError::NoConvergence("fixed point did not reach tolerance in 200 steps".into()))
}

/// `δν = ½ g² ∫_0^∞dt∫dx x₁² Ω G⁰`, radial form (`x₁² → |x|²/d`).
pub fn delta_nu_leading(cfg: &SimConfig, t: &RenormTables) -> Result<Estimate> {
    check_cfg(cfg)?;
    let g2 = cfg.g0().powi(2);
    let d = t.d as f64;
    let e = estimate(|o| heat_moment(t, cfg.nu0, 1.0, |r| r * r / d, o));
    Ok(Estimate { value: 0.5 * g2 * e.value, error: 0.5 * g2 * e.error })
}

/// Same integral with the weight `x_axis²`, on a Cartesian product grid.
pub fn delta_nu_axis(cfg: &SimConfig, t: &RenormTables, axis: usize) -> Result<f64> {
    check_cfg(cfg)?;
    let d = t.d;
    if axis >= d {
        return Err(KpzError::Argument(format!("axis {axis} out of range")));
    }
    let rule = Rule::new(10);
    let us = rule.composite(-5.0, 5.0, 4);
    let n = us.len();
    let g2 = cfg.g0().powi(2);
    let v = rule.integrate(0.0, 1.0, 16, |s| {
        let tau = s * s;
        let scale = (4.0 * cfg.nu0 * tau).sqrt();
        let mut acc = 0.0;
        for idx in 0..n.pow(d as u32) {
            let (mut r, mut w, mut u2, mut ua) = (idx, 1.0, 0.0, 0.0);
            for a in 0..d {
                let (u, wu) = us[r % n];
                r /= n;
                w *= wu;
                u2 += u * u;
                if a == axis {
                    ua = u;
                }
            }
            let rho = (tau * tau + scale * scale * u2).sqrt();
            if rho < 1.0 {
                acc += w * (-u2).exp() * scale * scale * ua * ua * t.omega.radial(rho);
            }
        }
        2.0 * s * acc * PI.powf(-0.5 * d as f64)
    });
    Ok(0.5 * g2 * v)
}

/// Cross-check form `(1/(4d)) g² ∫_{−∞}^{∞}dt∫dx |x|² Ω G⁰(|t|)`.
pub fn delta_nu_symmetric(cfg: &SimConfig, t: &RenormTables) -> Result<Estimate> {
    check_cfg(cfg)?;
    let g2 = cfg.g0().powi(2);
    let d = t.d;
    let f = |order: usize| {
        let rule = Rule::new(order);
        let area = sphere_area(d);
        // integrate over t ∈ (−1, 1) with t = sign·s²
        rule.integrate(-1.0, 1.0, 40, |s| {
            let tau = s * s;
            if tau == 0.0 {
                return 0.0;
            }
            let scale = (4.0 * cfg.nu0 * tau).sqrt();
            let u_max = (((1.0 - tau * tau).max(0.0)).sqrt() / scale).min(7.0);
            2.0 * s.abs()
                * rule.integrate(0.0, u_max, 20, |u| {
                    let r = scale * u;
                    area * u.powi(d as i32 - 1)
                        * PI.powf(-0.5 * d as f64)
                        * (-u * u).exp()
                        * r
                        * r
                        * t.omega.radial((tau * tau + r * r).sqrt())
                })
        })
    };
    let (hi, lo) = (f(12), f(8));
    let k = g2 / (4.0 * d as f64);
    Ok(Estimate { value: k * hi, error: k * (hi - lo).abs() })
}

/// `F(a, r) = ∫_a^∞ p_{νs}(r) ds`.
fn heat_time_tail(d: usize, nu: f64, a: f64, r: f64) -> f64 {
    let s = 0.5 * d as f64 - 1.0;
    let z = r * r / (4.0 * nu * a);
    if z < 1e-12 {
        return (4.0 * PI * nu).powf(-0.5 * d as f64) * a.powf(-s) / s;
    }
    r.powf(-2.0 * s) / (4.0 * PI.powf(0.5 * d as f64) * nu) * gamma_lr(s, z) * gamma(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct DEffRatio {
    pub ratio: Estimate,
    pub c4: f64,
    pub c2: f64,
    /// Analytic size of the part beyond the time cutoff.
    pub tail: f64,
    pub t_cut: f64,
}

/// `D_eff/D⁽⁰⁾ = 1 + C₄/C₂`, with
/// `C₄ = g⁴∫dA (Ω∗Ω)(A) ½[F(|A_t|, |A_x|) − F(2T_cut + A_t, |A_x|)]`
/// and `C₂ = g²∫Ω`. `t_cut = ∞` drops the second term.
pub fn d_eff_ratio(cfg: &SimConfig, t: &RenormTables, t_cut: f64) -> Result<DEffRatio> {
    check_cfg(cfg)?;
    let d = t.d;
    if d < 3 {
        return Err(KpzError::Config("the four-point constant converges only for d ≥ 3".into()));
    }
    let g = cfg.g0();
    let c2 = g * g * t.omega_mass();
    if g == 0.0 {
        return Ok(DEffRatio { ratio: Estimate { value: 1.0, error: 0.0 }, c4: 0.0, c2, tail: 0.0, t_cut });
    }
    let nu = cfg.nu0;
    let area = sphere_area(d);
    let kernel = |at: f64, r: f64, with_cut: bool| {
        let f = heat_time_tail(d, nu, at, r);
        if with_cut && t_cut.is_finite() {
            0.5 * (f - heat_time_tail(d, nu, 2.0 * t_cut - at, r))
        } else if with_cut {
            0.5 * f
        } else {
            0.5 * heat_time_tail(d, nu, 2.0 * t_cut - at, r)
        }
    };
    let integral = |order: usize, with_cut: bool| {
        let rule = Rule::new(order);
        // A_t = v², both signs of A_t by symmetry
        2.0 * rule.integrate(0.0, 2f64.sqrt(), 24, |v| {
            let at = v * v;
            let r_max = (4.0 - at * at).max(0.0).sqrt();
            let split = (8.0 * v).min(r_max);
            let part = |lo: f64, hi: f64, panels: usize| {
                rule.integrate(lo, hi, panels, |r| {
                    area * r.powi(d as i32 - 1) * t.omega4.eval((at * at + r * r).sqrt()) * kernel(at, r, with_cut)
                })
            };
            2.0 * v * (part(0.0, split, 16) + part(split, r_max, 16))
        })
    };
    let (hi, lo) = (integral(12, true), integral(8, true));
    let g4 = g.powi(4);
    let c4 = g4 * hi;
    let tail = if t_cut.is_finite() { g4 * integral(12, false) } else { 0.0 };
    if t_cut.is_finite() && tail > 1e-8 * c4.abs().max(1e-300) {
        return Err(KpzError::NoConvergence(format!("time-cutoff tail {tail:e} above 1e-8 relative")));
    }
    Ok(DEffRatio { ratio: Estimate { value: 1.0 + c4 / c2, error: g4 * (hi - lo).abs() / c2 }, c4, c2, tail, t_cut })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryDecay {
    pub rows: Vec<(f64, f64)>,
    pub monotone: bool,
    /// Slope of `log|v − v(T)|` against `T` on the nonzero part.
    pub log_slope: Option<f64>,
}

/// `|v⁽⁰⁾ − v⁽⁰⁾(T)|` per horizon.
pub fn boundary_decay_check(cfg: &SimConfig, t: &RenormTables, ts: &[f64]) -> Result<BoundaryDecay> {
    let full = cfg.g0() * heat_moment(t, cfg.nu0, 1.0, |_| 1.0, 12);
    let mut rows = Vec::new();
    for &tc in ts {
        rows.push((tc, (full - v0_truncated(cfg, t, tc)?).abs()));
    }
    let monotone = rows.windows(2).all(|w| w[0].0 >= w[1].0 || w[1].1 <= w[0].1);
    let nz: Vec<&(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).collect();
    let log_slope = (nz.len() >= 2).then(|| {
        let x: Vec<f64> = nz.iter().map(|r| r.0).collect();
        let y: Vec<f64> = nz.iter().map(|r| r.1.ln()).collect();
        crate::multiscale::fit_line(&x, &y).0
    });
    Ok(BoundaryDecay { rows, monotone, log_slope })
}

#[derive(Clone, Debug, Serialize)]
pub struct RenormConstants {
    pub g0: f64,
    pub v0_leading: Estimate,
    pub v0_fixed_point: f64,
    pub delta_nu: Estimate,
    pub delta_nu_symmetric: Estimate,
    pub d_eff_ratio: Estimate,
    /// `|d_eff_ratio − 1| / g²`.
    pub d_eff_k: f64,
    pub order: &'static str,
}

pub fn renorm_constants(cfg: &SimConfig, t: &RenormTables) -> Result<RenormConstants> {
    let g = cfg.g0();
    let de = d_eff_ratio(cfg, t, f64::INFINITY)?;
    Ok(RenormConstants {
        g0: g,
        v0_leading: v0_leading(cfg, t)?,
        v0_fixed_point: v0_fixed_point(cfg, t, 1e-14)?.value,
        delta_nu: delta_nu_leading(cfg, t)?,
        delta_nu_symmetric: delta_nu_symmetric(cfg, t)?,
        d_eff_k: if g > 0.0 { (de.ratio.value - 1.0).abs() / (g * g) } else { 0.0 },
        d_eff_ratio: de.ratio,
        order: "leading order in g",
    })
}

/// Lattice return probabilities `P^m(0,0)` of the walk matching the heat step.
pub fn return_probabilities(cfg: &SimConfig, m_max: usize) -> Result<Vec<f64>> {
    let torus = Torus::new(cfg.d, cfg.l)?;
    let r = cfg.nu0 * cfg.dt / (cfg.dx * cfg.dx);
    let mu = torus.mu_1d();
    let l = cfg.l as f64;
    Ok(match cfg.heat {
        // `e^{rΔ}` factorizes over coordinates
        HeatStep::Exact => (0..m_max)
            .map(|m| (mu.iter().map(|&k| (-r * k * m as f64).exp()).sum::<f64>() / l).powi(cfg.d as i32))
            .collect(),
        // `1 + rΔ` does not: sum over the full dual lattice
        HeatStep::Euler => {
            let mut p = vec![0.0; m_max];
            for k in crate::lattice::modes(cfg.d, cfg.l) {
                let f = 1.0 - r * k.iter().map(|&ka| mu[ka]).sum::<f64>();
                let mut pw = 1.0;
                for pm in p.iter_mut() {
                    *pm += pw;
                    pw *= f;
                }
            }
            let n = torus.len() as f64;
            p.iter().map(|v| v / n).collect()
        }
    })
}

/// Annealed growth rate of the lattice Cole-Hopf scheme per unit `g` and
/// time, at second order: `g·dt·[½c₀ + Σ_{m≥1} P^m(0,0) c_m]` with `c_m` the
/// lag covariance of the lattice mollified noise. This is the lattice
/// counterpart of `v0_leading` and cancels the mean drift of `h` to leading order.
pub fn lattice_velocity(cfg: &SimConfig) -> Result<f64> {
    check_cfg(cfg)?;
    let taps = mollified_taps(cfg.d, cfg.dt)?;
    let c = mollified_lag_covariance(&taps, cfg.dt);
    let c: Vec<f64> = c.iter().map(|v| v / cfg.dx.powi(cfg.d as i32)).collect();
    let p = return_probabilities(cfg, c.len())?;
    let s = 0.5 * c[0] + (1..c.len()).map(|m| p[m] * c[m]).sum::<f64>();
    Ok(cfg.g0() * cfg.dt * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_examples() {
        assert_eq!(coupling(0.0, 1.0, 1.0), 0.0);
        assert_eq!(coupling(1.0, 1.0, 1.0), 1.0);
        assert!((coupling(0.1, 0.5, 2.0) - 0.2828427124746).abs() < 1e-12);
    }

    #[test]
    fn time_tail_matches_direct_quadrature() {
        let direct = Rule::new(16).integrate(0.0, 1.0, 400, |u| {
            // s = a/u², ds = 2a/u³ du
            let (a, r, nu) = (0.3, 0.7, 1.3);
            if u == 0.0 {
                return 0.0;
            }
            let s = a / (u * u);
            2.0 * a / u.powi(3) * (4.0 * PI * nu * s).powf(-1.5) * (-r * r / (4.0 * nu * s)).exp()
        });
        assert!((heat_time_tail(3, 1.3, 0.3, 0.7) - direct).abs() < 1e-10 * direct);
        let at0 = heat_time_tail(3, 1.0, 0.5, 0.0);
        let near = heat_time_tail(3, 1.0, 0.5, 1e-5);
        assert!((at0 - near).abs() < 1e-6 * at0);
    }
}
