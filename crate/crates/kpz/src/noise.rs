//! Regularized space-time noise: the mollifier, its exact covariance,
//! samplers on fine grids and on the simulation lattice, and the
//! small/large-field box classification.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::field::SpaceTimeField;
use crate::lattice::Torus;
use crate::quad::{radial_self_convolution, sphere_area, RadialTable, Rule};
use crate::rng::StreamKey;

/// `exp(−1/(1−u²))` for `u < 1`.
pub fn bump(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

/// Radial bump on space-time `R^{1+d}`, supported in the ball of radius 1/2,
/// unit total mass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mollifier {
    pub d: usize,
    norm: f64,
}

impl Mollifier {
    pub const RADIUS: f64 = 0.5;

    pub fn new(d: usize) -> Self {
        let raw = radial_mass(d, &|r| bump(2.0 * r));
        Self { d, norm: 1.0 / raw }
    }

    pub fn radial(&self, r: f64) -> f64 {
        self.norm * bump(2.0 * r.abs())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let r2 = t * t + x.iter().map(|v| v * v).sum::<f64>();
        self.radial(r2.sqrt())
    }

    /// Numerical total mass (1 up to quadrature error).
    pub fn mass(&self) -> f64 {
        radial_mass(self.d, &|r| self.radial(r))
    }
}

fn radial_mass(d: usize, f: &dyn Fn(f64) -> f64) -> f64 {
    let rule = Rule::new(20);
    sphere_area(d + 1) * rule.integrate(0.0, Mollifier::RADIUS, 16, |r| r.powi(d as i32) * f(r))
}

/// `(ω∗ω)(dt, dx)` by direct cylindrical quadrature.
pub fn covariance(m: &Mollifier, dt: f64, dx: &[f64]) -> f64 {
    let rho = (dt * dt + dx.iter().map(|v| v * v).sum::<f64>()).sqrt();
    omega2_radial(m, rho, &Rule::new(16), 12)
}

fn omega2_radial(m: &Mollifier, rho: f64, rule: &Rule, panels: usize) -> f64 {
    radial_self_convolution(&|r| m.radial(r), Mollifier::RADIUS, m.d + 1, rho, rule, panels)
}

/// Tabulated `Ω(ρ) = (ω∗ω)` on `[0, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceTable {
    pub d: usize,
    pub table: RadialTable,
}

impl CovarianceTable {
    pub fn new(m: &Mollifier, points: usize) -> Self {
        let rule = Rule::new(16);
        Self { d: m.d, table: RadialTable::build(1.0, points, |r| omega2_radial(m, r, &rule, 12)) }
    }

    pub fn eval(&self, dt: f64, dx: &[f64]) -> f64 {
        let rho = (dt * dt + dx.iter().map(|v| v * v).sum::<f64>()).sqrt();
        self.table.eval(rho)
    }

    pub fn radial(&self, rho: f64) -> f64 {
        self.table.eval(rho)
    }

    /// CSV rows `(dt, |dx|, value)` on a `n × n` grid of the unit quarter disc.
    pub fn csv_rows(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let mut rows = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (t, x) = (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
                rows.push((t, x, self.eval(t, &[x])));
            }
        }
        rows
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    /// Mollified space-time white noise.
    Mollified,
    /// Piecewise constant on unit time intervals, spatially smoothed by `e^{cΔ}`.
    Kick { c: f64 },
    /// Identically zero (deterministic runs).
    Zero,
}

impl NoiseKind {
    pub fn kick_default() -> Self {
        NoiseKind::Kick { c: 0.25 }
    }
}

/// Fine space-time grid for [`sample_noise`]; spacing `h` in time and space.
#[derive(Clone, Debug)]
pub struct NoiseGrid {
    pub d: usize,
    pub l: usize,
    pub nt: usize,
    pub h: f64,
}

/// Mollified noise on a fine grid: iid unit Gaussians scaled by
/// `(cell volume)^{-1/2}`, convolved with `ω` (periodic in space).
pub fn sample_noise(m: &Mollifier, grid: &NoiseGrid, key: &StreamKey) -> Result<SpaceTimeField> {
    let reach = (Mollifier::RADIUS / grid.h).floor() as i64;
    if reach < 2 {
        return Err(KpzError::Config(format!(
            "grid spacing {} cannot resolve the mollifier radius 1/2 (need h ≤ 1/4)",
            grid.h
        )));
    }
    if grid.l as i64 <= 2 * reach {
        return Err(KpzError::Config("spatial period smaller than the mollifier diameter".into()));
    }
    let torus = Torus::new(grid.d, grid.l)?;
    let d = grid.d;
    let vol = grid.h.powi(d as i32 + 1);
    // stencil entries: (time offset, spatial offset, weight)
    let mut stencil: Vec<(i64, Vec<i64>, f64)> = Vec::new();
    let span = (2 * reach + 1) as usize;
    for code in 0..span.pow(d as u32 + 1) {
        let mut c = code;
        let mut off = Vec::with_capacity(d + 1);
        for _ in 0..=d {
            off.push((c % span) as i64 - reach);
            c /= span;
        }
        let r = off.iter().map(|&o| (o as f64 * grid.h).powi(2)).sum::<f64>().sqrt();
        let w = m.radial(r);
        if w > 0.0 {
            stencil.push((off[0], off[1..].to_vec(), w * vol / vol.sqrt()));
        }
    }
    let n = torus.len();
    let total_t = grid.nt + 2 * reach as usize;
    let mut rng = key.rng();
    let white: Vec<f64> = (0..total_t * n).map(|_| rng.sample(StandardNormal)).collect();
    let shifted: Vec<(i64, Vec<usize>, f64)> =
        stencil.iter().map(|(dtoff, dx, w)| (*dtoff, (0..n).map(|i| torus.translate(i, dx)).collect(), *w)).collect();
    let mut out = SpaceTimeField::zeros(&torus, grid.nt, grid.h, grid.h);
    for t in 0..grid.nt {
        let slice = out.slice_mut(t);
        for (dtoff, map, w) in &shifted {
            let src = (t as i64 + reach - dtoff) as usize * n;
            for (i, o) in slice.iter_mut().enumerate() {
                *o += w * white[src + map[i]];
            }
        }
    }
    Ok(out)
}

/// Noise on the simulation lattice, produced one time slice per step.
///
/// Mollified kind: each site carries an independent stationary process
/// `η_n = Σ_k a_k ξ_{n−k} / √(dt·dx^d)` with taps `a_k ∝ ω(k·dt, 0)`,
/// `Σ a_k = 1`. This is the cell average of the mollified noise when the
/// spatial profile of `ω` is below lattice resolution, and it keeps the
/// large-scale covariance mass equal to 1.
pub struct LatticeNoise {
    kind: NoiseKind,
    dt: f64,
    n: usize,
    rng: ChaCha8Rng,
    taps: Vec<f64>,
    ring: Vec<Vec<f64>>,
    head: usize,
    scale: f64,
    step: usize,
    kick_interval: i64,
    kick_slice: Vec<f64>,
    kick_kernel: Vec<f64>,
    torus: Torus,
}

impl LatticeNoise {
    pub fn new(torus: &Torus, kind: NoiseKind, dt: f64, dx: f64, key: &StreamKey) -> Result<Self> {
        let n = torus.len();
        let mut s = Self {
            kind,
            dt,
            n,
            rng: key.rng(),
            taps: Vec::new(),
            ring: Vec::new(),
            head: 0,
            scale: 0.0,
            step: 0,
            kick_interval: -1,
            kick_slice: vec![0.0; n],
            kick_kernel: Vec::new(),
            torus: torus.clone(),
        };
        match kind {
            NoiseKind::Mollified => {
                s.taps = mollified_taps(torus.d(), dt)?;
                s.scale = 1.0 / (dt * dx.powi(torus.d() as i32)).sqrt();
                s.ring = vec![vec![0.0; n]; s.taps.len()];
                // prefill all but the newest slot
                for k in 0..s.taps.len() - 1 {
                    let mut buf = std::mem::take(&mut s.ring[k]);
                    s.fill_white(&mut buf);
                    s.ring[k] = buf;
                }
                s.head = s.taps.len() - 1;
            }
            NoiseKind::Kick { c } => {
                if c < 0.0 {
                    return Err(KpzError::Config("kick smoothing c must be ≥ 0".into()));
                }
                let k = torus.heat_kernel_1d(c);
                let max = k.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                s.kick_kernel = k.into_iter().map(|v| if v.abs() < 1e-16 * max { 0.0 } else { v }).collect();
            }
            NoiseKind::Zero => {}
        }
        Ok(s)
    }

    fn fill_white(&mut self, buf: &mut [f64]) {
        for x in buf.iter_mut() {
            *x = self.rng.sample(StandardNormal);
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Writes the next time slice into `out`.
    pub fn next_slice(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.n);
        match self.kind {
            NoiseKind::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            NoiseKind::Mollified => {
                let mut buf = std::mem::take(&mut self.ring[self.head]);
                self.fill_white(&mut buf);
                self.ring[self.head] = buf;
                let m = self.taps.len();
                out.iter_mut().for_each(|x| *x = 0.0);
                // newest white slice pairs with the last tap
                for (k, &a) in self.taps.iter().enumerate() {
                    let slot = (self.head + 1 + k) % m;
                    let w = a * self.scale;
                    for (o, &x) in out.iter_mut().zip(&self.ring[slot]) {
                        *o += w * x;
                    }
                }
                self.head = (self.head + 1) % m;
            }
            NoiseKind::Kick { .. } => {
                let t = self.step as f64 * self.dt;
                let interval = (t + 1e-9).floor() as i64;
                if interval != self.kick_interval {
                    let mut buf = std::mem::take(&mut self.kick_slice);
                    self.fill_white(&mut buf);
                    self.torus.convolve_separable(&mut buf, &self.kick_kernel);
                    self.kick_slice = buf;
                    self.kick_interval = interval;
                }
                out.copy_from_slice(&self.kick_slice);
            }
        }
        self.step += 1;
    }

    /// Collects `nt` consecutive slices.
    pub fn field(&mut self, nt: usize, dx: f64) -> SpaceTimeField {
        let mut f = SpaceTimeField::zeros(&self.torus, nt, self.dt, dx);
        for t in 0..nt {
            let mut buf = vec![0.0; self.n];
            self.next_slice(&mut buf);
            f.slice_mut(t).copy_from_slice(&buf);
        }
        f
    }
}

/// Normalized taps `a_k ∝ ω(k·dt, 0)` for `|k·dt| < 1/2`, ordered `k = −M..=M`.
pub fn mollified_taps(d: usize, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt <= 0.25) {
        return Err(KpzError::Config(format!(
            "time step {dt} cannot resolve the mollifier radius 1/2 (need 0 < dt ≤ 1/4)"
        )));
    }
    let m = Mollifier::new(d);
    let reach = ((Mollifier::RADIUS / dt).ceil() as i64 - 1).max(0);
    let raw: Vec<f64> = (-reach..=reach).map(|k| m.radial(k as f64 * dt)).collect();
    let s: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|a| a / s).collect())
}

/// Time covariance `c_m = Cov(η_n, η_{n+m})` of the per-site mollified
/// lattice noise (unit spacing), for `m = 0..taps.len()`.
pub fn mollified_lag_covariance(taps: &[f64], dt: f64) -> Vec<f64> {
    let k = taps.len();
    (0..k).map(|m| (0..k - m).map(|i| taps[i] * taps[i + m]).sum::<f64>() / dt).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoxLabel {
    Small,
    Large(u32),
}

/// Label for a box whose noise supremum is `sup`.
pub fn label_for(sup: f64, lambda: f64) -> BoxLabel {
    let unit = 1.0 / lambda.sqrt();
    if sup <= unit {
        return BoxLabel::Small;
    }
    let mut k = 0u32;
    while sup > unit * 2f64.powi(k as i32 + 1) {
        k += 1;
    }
    BoxLabel::Large(k)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoxClassification {
    pub lambda: f64,
    /// Number of unit boxes along time and along each space axis.
    pub time_boxes: usize,
    pub space_boxes: usize,
    pub labels: Vec<BoxLabel>,
}

impl BoxClassification {
    /// Fraction of boxes with label `Large(k)` for some `k ≥ k0`.
    pub fn tail_fraction(&self, k0: u32) -> f64 {
        let c = self.labels.iter().filter(|l| matches!(l, BoxLabel::Large(k) if *k >= k0)).count();
        c as f64 / self.labels.len() as f64
    }

    pub fn histogram(&self) -> BTreeMap<BoxLabel, usize> {
        let mut h = BTreeMap::new();
        for l in &self.labels {
            *h.entry(*l).or_insert(0) += 1;
        }
        h
    }
}

/// Labels every unit space-time box `[n, n+1) × ∏[m_a, m_a+1)` by the
/// supremum of `|η|` over the lattice points it contains.
pub fn classify_boxes(noise: &SpaceTimeField, lambda: f64) -> Result<BoxClassification> {
    if !(lambda > 0.0) {
        return Err(KpzError::Domain("lambda must be positive".into()));
    }
    let per_t = (1.0 / noise.dt).round().max(1.0) as usize;
    let per_x = (1.0 / noise.dx).round().max(1.0) as usize;
    let time_boxes = noise.nt / per_t;
    let space_boxes = noise.l / per_x;
    if time_boxes == 0 || space_boxes == 0 {
        return Err(KpzError::Config("field smaller than one unit box".into()));
    }
    let d = noise.d;
    let nb_space = space_boxes.pow(d as u32);
    let mut sup = vec![0.0f64; time_boxes * nb_space];
    let torus = Torus::new(d, noise.l)?;
    for t in 0..time_boxes * per_t {
        let bt = t / per_t;
        let slice = noise.slice(t);
        for (i, v) in slice.iter().enumerate() {
            let c = torus.coords(i);
            if c.iter().any(|&x| x / per_x >= space_boxes) {
                continue;
            }
            let b = c.iter().rev().fold(0usize, |acc, &x| acc * space_boxes + x / per_x);
            let s = &mut sup[bt * nb_space + b];
            *s = s.max(v.abs());
        }
    }
    Ok(BoxClassification {
        lambda,
        time_boxes,
        space_boxes,
        labels: sup.into_iter().map(|s| label_for(s, lambda)).collect(),
    })
}

/// One observed tail probability `P[k ≥ k0]` at coupling `lambda`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailPoint {
    pub lambda: f64,
    pub k0: u32,
    pub count: usize,
    pub boxes: usize,
}

impl TailPoint {
    pub fn from_classification(b: &BoxClassification, k0: u32) -> Self {
        let count = (b.tail_fraction(k0) * b.labels.len() as f64).round() as usize;
        Self { lambda: b.lambda, k0, count, boxes: b.labels.len() }
    }

    /// Envelope variable `4^{k0}/λ`.
    pub fn x(&self) -> f64 {
        4f64.powi(self.k0 as i32) / self.lambda
    }
}

/// Fit of `log P = log A − c·4^{k0}/λ` over the points with nonzero counts.
#[derive(Clone, Debug, Serialize)]
pub struct TailEnvelope {
    pub c: f64,
    pub log_a: f64,
    pub r2: f64,
    /// Smallest `log A` for which the envelope dominates every nonzero point.
    pub envelope_log_a: f64,
    /// Zero-count points whose envelope expectation `boxes·A e^{−cx}` is
    /// below 3, i.e. compatible with observing nothing.
    pub zeros_consistent: bool,
    pub points: Vec<TailPoint>,
}

pub fn fit_tail_envelope(points: &[TailPoint]) -> Result<TailEnvelope> {
    let used: Vec<&TailPoint> = points.iter().filter(|p| p.count > 0).collect();
    if used.len() < 2 {
        return Err(KpzError::Argument("need at least two nonzero tail counts".into()));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.x()).collect();
    let ys: Vec<f64> = used.iter().map(|p| (p.count as f64 / p.boxes as f64).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(KpzError::Argument("tail points share one value of 4^k0/λ".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let log_a = my - slope * mx;
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let c = -slope;
    let envelope_log_a = xs.iter().zip(&ys).map(|(x, y)| y + c * x).fold(f64::NEG_INFINITY, f64::max);
    let zeros_consistent =
        points.iter().filter(|p| p.count == 0).all(|p| p.boxes as f64 * (envelope_log_a - c * p.x()).exp() < 3.0);
    Ok(TailEnvelope { c, log_a, r2, envelope_log_a, zeros_consistent, points: points.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_mass_and_support() {
        for d in 1..=4 {
            let m = Mollifier::new(d);
            assert!((m.mass() - 1.0).abs() < 1e-10, "d = {d}");
            assert_eq!(m.radial(0.5), 0.0);
            assert_eq!(m.eval(0.3, &vec![0.4; d]), 0.0);
        }
    }

    #[test]
    fn labels_follow_half_open_rule() {
        assert_eq!(label_for(5.0, 0.01), BoxLabel::Small);
        assert_eq!(label_for(10.0, 0.01), BoxLabel::Small);
        assert_eq!(label_for(15.0, 0.01), BoxLabel::Large(0));
        assert_eq!(label_for(20.0, 0.01), BoxLabel::Large(0));
        assert_eq!(label_for(20.0001, 0.01), BoxLabel::Large(1));
    }

    #[test]
    fn envelope_fit_recovers_exact_exponential() {
        let pts: Vec<TailPoint> = [(0.1, 0u32), (0.2, 0), (0.2, 1)]
            .iter()
            .map(|&(lambda, k0)| {
                let x = 4f64.powi(k0 as i32) / lambda;
                let count = (1e9 * 0.7 * (-0.4 * x).exp()).round() as usize;
                TailPoint { lambda, k0, count, boxes: 1_000_000_000 }
            })
            .collect();
        let f = fit_tail_envelope(&pts).unwrap();
        assert!((f.c - 0.4).abs() < 1e-4);
        assert!((f.log_a - 0.7f64.ln()).abs() < 1e-3);
        assert!(f.r2 > 0.999999);
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let a = mollified_taps(3, 0.1).unwrap();
        assert_eq!(a.len(), 9);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..a.len() {
            assert_eq!(a[k], a[a.len() - 1 - k]);
        }
        assert!(mollified_taps(3, 0.5).is_err());
    }
}
