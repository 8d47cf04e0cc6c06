//! Directed-polymer (Feynman–Kac) estimates of the Cole-Hopf field.
//!
//! The default path law is the lattice walk whose one-step kernel is the heat
//! step of the SHE scheme, so for frozen noise
//! `E[∏_j e^{dt·g(η_{n−1−j}(X_j) − v)} w0(X_n)]` equals the scheme's `w_n(a)`
//! exactly. A Brownian law with multilinear noise interpolation and the
//! trapezoid rule is available as the continuum approximation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::field::SpaceTimeField;
use crate::lattice::Torus;
use crate::lattice_spde::{cole_hopf, HeatStep, SimConfig, Simulation};
use crate::noise::{LatticeNoise, NoiseKind};
use crate::rng::StreamKey;

const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathLaw {
    LatticeWalk,
    Brownian,
}

#[derive(Clone, Debug, Serialize)]
pub struct PolymerEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub t: f64,
    pub a: usize,
    pub b: Option<usize>,
}

/// Mean and standard error of a sample.
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Step law of the lattice walk whose transition kernel is the heat step:
/// `1 + rΔ` moves one coordinate by ±1 with probability `r` each (so at most
/// one coordinate per step), `e^{rΔ}` moves every coordinate by an
/// independent Skellam(`r`, `r`) variable.
#[derive(Clone, Debug)]
pub struct StepTable {
    heat: HeatStep,
    d: usize,
    r: f64,
    offsets: Vec<i64>,
    cdf: Vec<f64>,
}

impl StepTable {
    /// `r = ν·dt/dx²`.
    pub fn new(heat: HeatStep, r: f64, d: usize) -> Self {
        let (mut offsets, mut cdf) = (Vec::new(), Vec::new());
        if heat == HeatStep::Exact {
            let mut acc = 0.0;
            for (o, p) in skellam_pmf(r) {
                acc += p;
                offsets.push(o);
                cdf.push(acc);
            }
            cdf.iter_mut().for_each(|c| *c /= acc);
        }
        Self { heat, d, r, offsets, cdf }
    }

    /// Adds one step to `pos`.
    #[inline]
    pub fn step(&self, pos: &mut [i64], rng: &mut ChaCha8Rng) {
        match self.heat {
            HeatStep::Euler => {
                let u: f64 = rng.random();
                let k = (u / self.r) as usize;
                if k < 2 * self.d {
                    pos[k / 2] += if k.is_multiple_of(2) { 1 } else { -1 };
                }
            }
            HeatStep::Exact => {
                for p in pos.iter_mut() {
                    let u: f64 = rng.random();
                    let k = self.cdf.partition_point(|&c| c <= u).min(self.offsets.len() - 1);
                    *p += self.offsets[k];
                }
            }
        }
    }

    /// Characteristic function `E[cos(θ·X)]` of one step.
    pub fn characteristic(&self, theta: &[f64]) -> f64 {
        match self.heat {
            HeatStep::Euler => 1.0 - 2.0 * self.r * theta.iter().map(|t| 1.0 - t.cos()).sum::<f64>(),
            HeatStep::Exact => theta
                .iter()
                .map(|&t| {
                    let mut prev = 0.0;
                    let mut s = 0.0;
                    for (o, c) in self.offsets.iter().zip(&self.cdf) {
                        s += (c - prev) * (t * *o as f64).cos();
                        prev = *c;
                    }
                    s
                })
                .product(),
        }
    }
}

/// `e^{−2r} I_m(2r)`, the law of a difference of two Poisson(`r`) variables.
fn skellam_pmf(r: f64) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    for m in 0i64.. {
        // I_m(2r) = Σ_k r^{2k+m} / (k! (k+m)!)
        let mut term = (0..m).fold(1.0, |acc, i| acc * r / (i + 1) as f64);
        let mut s = 0.0;
        for k in 0..200 {
            s += term;
            term *= r * r / ((k + 1) as f64 * (k + 1 + m) as f64);
            if term < 1e-18 * s {
                break;
            }
        }
        let p = (-2.0 * r).exp() * s;
        if m > 0 && p < 1e-17 {
            break;
        }
        out.push((m, p));
        if m > 0 {
            out.push((-m, p));
        }
    }
    out.sort_by_key(|x| x.0);
    out
}

fn check_horizon(t: f64, noise: &SpaceTimeField, dt: f64) -> Result<usize> {
    let n = (t / dt).round() as usize;
    if n > noise.nt {
        return Err(KpzError::Horizon { requested: t, available: noise.horizon() });
    }
    Ok(n)
}

fn initial_weights(cfg: &SimConfig, torus: &Torus, h0: Option<&[f64]>) -> Option<Vec<f64>> {
    h0.map(|h| {
        assert_eq!(h.len(), torus.len());
        cole_hopf(h, cfg)
    })
}

/// Per-path weights for chunk `c`, lattice walk started at `a`.
#[allow(clippy::too_many_arguments)]
fn walk_chunk(
    cfg: &SimConfig,
    torus: &Torus,
    noise: &SpaceTimeField,
    steps: usize,
    a: usize,
    w0: Option<&[f64]>,
    table: &StepTable,
    mut rng: ChaCha8Rng,
    count: usize,
) -> Vec<f64> {
    let g = cfg.g0();
    let start: Vec<i64> = torus.coords(a).iter().map(|&x| x as i64).collect();
    let mut out = Vec::with_capacity(count);
    let mut pos = start.clone();
    for _ in 0..count {
        pos.copy_from_slice(&start);
        let mut expo = 0.0;
        for j in 0..steps {
            let site = torus.index(&pos);
            expo += noise.get(steps - 1 - j, site) - cfg.v0;
            table.step(&mut pos, &mut rng);
        }
        let mut w = (cfg.dt * g * expo).exp();
        if let Some(w0) = w0 {
            w *= w0[torus.index(&pos)];
        }
        out.push(w);
    }
    out
}

/// Noise value at continuous lattice coordinates by multilinear interpolation.
fn interpolate(torus: &Torus, slice: &[f64], x: &[f64]) -> f64 {
    let d = torus.d();
    let base: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
    let frac: Vec<f64> = x.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();
    let mut s = 0.0;
    let mut corner = vec![0i64; d];
    for mask in 0..(1usize << d) {
        let mut w = 1.0;
        for a in 0..d {
            let bit = (mask >> a) & 1;
            corner[a] = base[a] + bit as i64;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w != 0.0 {
            s += w * slice[torus.index(&corner)];
        }
    }
    s
}

fn nearest_site(torus: &Torus, x: &[f64]) -> usize {
    let c: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
    torus.index(&c)
}

/// Brownian (optionally bridged) path weights for one chunk.
#[allow(clippy::too_many_arguments)]
fn brownian_chunk(
    cfg: &SimConfig,
    torus: &Torus,
    noise: &SpaceTimeField,
    steps: usize,
    a: usize,
    end: Option<usize>,
    w0: Option<&[f64]>,
    mut rng: ChaCha8Rng,
    count: usize,
) -> Vec<f64> {
    let g = cfg.g0();
    let d = torus.d();
    let sigma = (2.0 * cfg.nu0 * cfg.dt).sqrt() / cfg.dx;
    let start: Vec<f64> = torus.coords(a).iter().map(|&x| x as f64).collect();
    // minimal-image displacement to the bridge endpoint
    let shift: Option<Vec<f64>> = end.map(|b| {
        let cb = torus.coords(b);
        let l = torus.l() as f64;
        start
            .iter()
            .zip(&cb)
            .map(|(&s, &e)| {
                let mut v = e as f64 - s;
                v -= l * (v / l).round();
                v
            })
            .collect()
    });
    let last_slice = noise.nt - 1;
    let mut path = vec![vec![0.0; d]; steps + 1];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        path[0].copy_from_slice(&start);
        for j in 1..=steps {
            let (done, rest) = path.split_at_mut(j);
            for (x, &prev) in rest[0].iter_mut().zip(&done[j - 1]) {
                let z: f64 = rng.sample(StandardNormal);
                *x = prev + sigma * z;
            }
        }
        if let Some(shift) = &shift {
            // W_t − (t/T)(W_T − a) + (t/T)·shift
            let fin = path[steps].clone();
            for (j, p) in path.iter_mut().enumerate() {
                let s = j as f64 / steps as f64;
                for a in 0..d {
                    p[a] += s * (start[a] + shift[a] - fin[a]);
                }
            }
        }
        let mut expo = 0.0;
        for (j, p) in path.iter().enumerate() {
            let slice = noise.slice((steps - j).min(last_slice));
            let c = if j == 0 || j == steps { 0.5 } else { 1.0 };
            expo += c * (interpolate(torus, slice, p) - cfg.v0);
        }
        let mut w = (cfg.dt * g * expo).exp();
        if let Some(w0) = w0 {
            w *= w0[nearest_site(torus, &path[steps])];
        }
        out.push(w);
    }
    out
}

fn run_chunks(n_paths: usize, key: &StreamKey, f: impl Fn(ChaCha8Rng, usize) -> Vec<f64> + Sync) -> Vec<f64> {
    let chunks = n_paths.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(n_paths - c * CHUNK);
            f(key.clone().lane(c as u64).rng(), count)
        })
        .collect::<Vec<_>>()
        .concat()
}

/// `w(T, a)` for frozen noise; `h0 = None` means `w0 ≡ 1`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_w(
    t: f64,
    a: usize,
    noise: &SpaceTimeField,
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    n_paths: usize,
    law: PathLaw,
    key: &StreamKey,
) -> Result<PolymerEstimate> {
    cfg.validate()?;
    let torus = Torus::new(cfg.d, cfg.l)?;
    let steps = check_horizon(t, noise, cfg.dt)?;
    let w0 = initial_weights(cfg, &torus, h0);
    let r = cfg.nu0 * cfg.dt / (cfg.dx * cfg.dx);
    let table = StepTable::new(cfg.heat, r, cfg.d);
    let weights = run_chunks(n_paths, key, |rng, count| match law {
        PathLaw::LatticeWalk => walk_chunk(cfg, &torus, noise, steps, a, w0.as_deref(), &table, rng, count),
        PathLaw::Brownian => brownian_chunk(cfg, &torus, noise, steps, a, None, w0.as_deref(), rng, count),
    });
    let (value, stderr) = mean_stderr(&weights);
    Ok(PolymerEstimate { value, stderr, n_paths, t, a, b: None })
}

/// Bridge version `w_T(a, b)`: Brownian paths from `a` pinned at `b` at time `T`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_w_bridge(
    t: f64,
    a: usize,
    b: usize,
    noise: &SpaceTimeField,
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    n_paths: usize,
    key: &StreamKey,
) -> Result<PolymerEstimate> {
    cfg.validate()?;
    let torus = Torus::new(cfg.d, cfg.l)?;
    let steps = check_horizon(t, noise, cfg.dt)?;
    if steps == 0 {
        return Err(KpzError::Config("bridge needs at least one step".into()));
    }
    let w0 = initial_weights(cfg, &torus, h0);
    let weights = run_chunks(n_paths, key, |rng, count| {
        brownian_chunk(cfg, &torus, noise, steps, a, Some(b), w0.as_deref(), rng, count)
    });
    let (value, stderr) = mean_stderr(&weights);
    Ok(PolymerEstimate { value, stderr, n_paths, t, a, b: Some(b) })
}

#[derive(Clone, Debug, Serialize)]
pub struct VelocityEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `ṽ = (1/g) log ⟨E[exp(g∫_0^1 η(0, X_t) dt)]⟩` for kick noise, with the
/// lattice walk of the configured heat step.
pub fn estimate_v0_tilde(cfg: &SimConfig, n_paths: usize, n_noise: usize, key: &StreamKey) -> Result<VelocityEstimate> {
    let c = match cfg.noise {
        NoiseKind::Kick { c } => c,
        NoiseKind::Zero => return Ok(VelocityEstimate { value: 0.0, stderr: 0.0 }),
        NoiseKind::Mollified => return Err(KpzError::Config("the velocity estimate needs kick noise".into())),
    };
    let _ = c;
    cfg.validate()?;
    let g = cfg.g0();
    if g == 0.0 {
        return Ok(VelocityEstimate { value: 0.0, stderr: 0.0 });
    }
    let torus = Torus::new(cfg.d, cfg.l)?;
    let steps = (1.0 / cfg.dt).round() as usize;
    let table = StepTable::new(cfg.heat, cfg.nu0 * cfg.dt / (cfg.dx * cfg.dx), cfg.d);
    let mut probe = cfg.clone();
    probe.v0 = 0.0;
    let origin = 0;
    let per_noise: Vec<f64> = (0..n_noise)
        .into_par_iter()
        .map(|r| {
            let nkey = key.clone().lane(u64::MAX).replica(r as u64);
            let mut src = LatticeNoise::new(&torus, cfg.noise, cfg.dt, cfg.dx, &nkey).expect("validated noise");
            let field = src.field(steps, cfg.dx);
            let pkey = key.clone().replica(r as u64);
            let w = run_chunks(n_paths, &pkey, |rng, count| {
                walk_chunk(&probe, &torus, &field, steps, origin, None, &table, rng, count)
            });
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    let (m, se) = mean_stderr(&per_noise);
    Ok(VelocityEstimate { value: m.ln() / g, stderr: se / (m * g) })
}

/// Same annealed velocity with the Gaussian noise integrated out exactly per
/// path: `E_η exp(g dt Σ_j η(X_j)) = exp(½ g² dt² Σ_{j,j′} C(X_j − X_{j′}))`
/// with `C` the kick covariance. Only the walk is sampled, so the error is
/// far smaller than with sampled noise.
pub fn estimate_v0_tilde_conditional(cfg: &SimConfig, n_paths: usize, key: &StreamKey) -> Result<VelocityEstimate> {
    let c = match cfg.noise {
        NoiseKind::Kick { c } => c,
        NoiseKind::Zero => return Ok(VelocityEstimate { value: 0.0, stderr: 0.0 }),
        NoiseKind::Mollified => return Err(KpzError::Config("the velocity estimate needs kick noise".into())),
    };
    cfg.validate()?;
    let g = cfg.g0();
    if g == 0.0 {
        return Ok(VelocityEstimate { value: 0.0, stderr: 0.0 });
    }
    let torus = Torus::new(cfg.d, cfg.l)?;
    let steps = (1.0 / cfg.dt).round() as usize;
    let table = StepTable::new(cfg.heat, cfg.nu0 * cfg.dt / (cfg.dx * cfg.dx), cfg.d);
    // separable covariance of e^{cΔ}ξ: C(x) = Π_a c1(x_a)
    let l = cfg.l;
    let mu = torus.mu_1d();
    let c1: Vec<f64> = (0..l)
        .map(|x| {
            (0..l)
                .map(|k| (-2.0 * c * mu[k]).exp() * (2.0 * std::f64::consts::PI * (k * x) as f64 / l as f64).cos())
                .sum::<f64>()
                / l as f64
        })
        .collect();
    let cov = |a: &[i64], b: &[i64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| c1[(x - y).rem_euclid(l as i64) as usize]).product()
    };
    let scale = 0.5 * (g * cfg.dt).powi(2);
    let w = run_chunks(n_paths, key, |mut rng, count| {
        let mut path = vec![vec![0i64; cfg.d]; steps];
        (0..count)
            .map(|_| {
                for j in 1..steps {
                    let (prev, rest) = path.split_at_mut(j);
                    rest[0].copy_from_slice(&prev[j - 1]);
                    table.step(&mut rest[0], &mut rng);
                }
                let mut q = 0.0;
                for i in 0..steps {
                    q += cov(&path[i], &path[i]);
                    for j in i + 1..steps {
                        q += 2.0 * cov(&path[i], &path[j]);
                    }
                }
                (scale * q).exp()
            })
            .collect()
    });
    let (m, se) = mean_stderr(&w);
    Ok(VelocityEstimate { value: m.ln() / g, stderr: se / (m * g) })
}

/// Second-cumulant value `(g/2)·Var(∫_0^1 η(0, X_t) dt)` for kick noise,
/// summed exactly over lattice Fourier modes.
pub fn v0_tilde_cumulant(cfg: &SimConfig) -> Result<f64> {
    let c = match cfg.noise {
        NoiseKind::Kick { c } => c,
        _ => return Err(KpzError::Config("the cumulant formula is for kick noise".into())),
    };
    let torus = Torus::new(cfg.d, cfg.l)?;
    let steps = (1.0 / cfg.dt).round() as usize;
    let table = StepTable::new(cfg.heat, cfg.nu0 * cfg.dt / (cfg.dx * cfg.dx), cfg.d);
    let l = cfg.l as f64;
    let mut var = 0.0;
    for k in crate::lattice::modes(cfg.d, cfg.l) {
        let chat = (-2.0 * c * torus.mu(&k)).exp();
        let theta: Vec<f64> = k.iter().map(|&ka| 2.0 * std::f64::consts::PI * ka as f64 / l).collect();
        let phi = table.characteristic(&theta);
        // Σ_{j,j'} φ^{|j−j'|}
        let mut s = steps as f64;
        let mut p = 1.0;
        for m in 1..steps {
            p *= phi;
            s += 2.0 * (steps - m) as f64 * p;
        }
        var += chat * s;
    }
    var *= cfg.dt * cfg.dt / torus.len() as f64;
    Ok(0.5 * cfg.g0() * var)
}

#[derive(Clone, Debug, Serialize)]
pub struct FeketeRow {
    pub t: f64,
    pub mean_h: f64,
    pub stderr: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FeketeReport {
    pub rows: Vec<FeketeRow>,
    /// `(T, T', excess, stderr)` for every pair with `T + T'` in the horizon list.
    pub superadditivity: Vec<(f64, f64, f64, f64)>,
    /// `⟨h_T⟩/(T√D)` at the largest horizon, with its error.
    pub velocity: (f64, f64),
}

impl FeketeReport {
    pub fn nonnegative_within(&self, sigmas: f64) -> bool {
        self.rows.iter().all(|r| r.mean_h >= -sigmas * r.stderr)
    }

    pub fn superadditive_within(&self, sigmas: f64) -> bool {
        self.superadditivity.iter().all(|&(_, _, e, s)| e >= -sigmas * s)
    }
}

/// Spatially averaged `h(T)` per replica at each horizon, Cole-Hopf solver, `w0 ≡ 1`.
/// At `λ = 0` the transform degenerates and the linear equation is run instead.
pub fn height_means(cfg: &SimConfig, horizons: &[f64], replicas: usize, key: &StreamKey) -> Result<Vec<Vec<f64>>> {
    use crate::lattice_spde::Equation;
    let mut cfg = cfg.clone();
    cfg.equation = if cfg.lambda == 0.0 { Equation::Ew } else { Equation::She };
    cfg.validate()?;
    let marks: Vec<usize> = horizons.iter().map(|&t| (t / cfg.dt).round() as usize).collect();
    let last = marks.iter().copied().max().unwrap_or(0);
    let n = cfg.l.pow(cfg.d as u32);
    (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut sim = Simulation::new(&cfg, &vec![0.0; n], &key.clone().replica(r as u64))?;
            let mut at = vec![0.0; marks.len()];
            for s in 1..=last {
                sim.advance()?;
                for (k, &m) in marks.iter().enumerate() {
                    if m == s {
                        at[k] = sim.height().iter().sum::<f64>() / n as f64;
                    }
                }
            }
            Ok(at)
        })
        .collect()
}

/// Mean height growth diagnostics at zero bare velocity.
pub fn fekete_diagnostics(cfg: &SimConfig, horizons: &[f64], replicas: usize, key: &StreamKey) -> Result<FeketeReport> {
    let mut cfg = cfg.clone();
    cfg.v0 = 0.0;
    let per = height_means(&cfg, horizons, replicas, key)?;
    let col = |k: usize| -> Vec<f64> { per.iter().map(|r| r[k]).collect() };
    let rows: Vec<FeketeRow> = horizons
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let (m, s) = mean_stderr(&col(k));
            FeketeRow { t, mean_h: m, stderr: s, rate: m / t }
        })
        .collect();
    let mut superadditivity = Vec::new();
    for (i, &t1) in horizons.iter().enumerate() {
        for (j, &t2) in horizons.iter().enumerate().skip(i) {
            if let Some(k) = horizons.iter().position(|&t| (t - t1 - t2).abs() < 1e-9) {
                let diff: Vec<f64> = per.iter().map(|r| r[k] - r[i] - r[j]).collect();
                let (m, s) = mean_stderr(&diff);
                superadditivity.push((t1, t2, m, s));
            }
        }
    }
    let kmax = horizons.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0);
    let scale = horizons.get(kmax).copied().unwrap_or(1.0) * cfg.d0.sqrt();
    let velocity = (rows.get(kmax).map_or(0.0, |r| r.mean_h) / scale, rows.get(kmax).map_or(0.0, |r| r.stderr) / scale);
    Ok(FeketeReport { rows, superadditivity, velocity })
}
