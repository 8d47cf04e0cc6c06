//! Connected correlation estimators of the simulated height field, the
//! Edwards–Wilkinson covariance oracles, diffusive-rescaling collapse and
//! effective-constant fits.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KpzError, Result};
use crate::feynman_kac::mean_stderr;
use crate::lattice::{modes, Torus};
use crate::lattice_spde::{SimConfig, Simulation};
use crate::noise::{mollified_lag_covariance, mollified_taps, NoiseKind};
use crate::rng::StreamKey;

/// Space-time lattice point: step index and site coordinates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Probe {
    pub step: usize,
    pub x: Vec<i64>,
}

impl Probe {
    pub fn new(step: usize, x: Vec<i64>) -> Self {
        Self { step, x }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbePair {
    pub p: Probe,
    pub q: Probe,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoPointEstimate {
    pub pairs: Vec<ProbePair>,
    pub epsilon: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CumulantEstimate {
    pub order: usize,
    pub points: Vec<Probe>,
    pub re: f64,
    pub re_stderr: f64,
    pub im: f64,
    pub im_stderr: f64,
    pub samples: usize,
}

/// Heights of one replica at the requested steps (ascending, deduplicated).
fn record(cfg: &SimConfig, h0: &[f64], steps: &[usize], key: &StreamKey) -> Result<Vec<Vec<f64>>> {
    let mut sim = Simulation::new(cfg, h0, key)?;
    let mut out = Vec::with_capacity(steps.len());
    for &s in steps {
        sim.run(s - sim.step())?;
        out.push(sim.height());
    }
    Ok(out)
}

/// Runs `groups` groups of `size` replicas in parallel; `reduce` sees the
/// recorded heights `[replica][step][site]` of one group.
fn run_groups<T: Send>(
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    steps: &[usize],
    size: usize,
    groups: usize,
    key: &StreamKey,
    reduce: impl Fn(&[Vec<Vec<f64>>]) -> T + Sync,
) -> Result<Vec<T>> {
    let n = cfg.l.pow(cfg.d as u32);
    let zero = vec![0.0; n];
    let h0 = h0.unwrap_or(&zero);
    let horizon = steps.iter().copied().max().unwrap_or(0);
    if horizon > cfg.steps() {
        return Err(KpzError::Horizon { requested: horizon as f64 * cfg.dt, available: cfg.t_end });
    }
    (0..groups)
        .into_par_iter()
        .map(|g| -> Result<T> {
            let data = (0..size)
                .map(|i| record(cfg, h0, steps, &key.clone().replica((g * size + i) as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(reduce(&data))
        })
        .collect()
}

/// Site index of `z + x` for every `z`.
fn shift_table(torus: &Torus, x: &[i64]) -> Vec<u32> {
    (0..torus.len()).map(|z| torus.translate(z, x) as u32).collect()
}

struct Layout {
    steps: Vec<usize>,
    shifts: Vec<(usize, Vec<u32>)>,
}

impl Layout {
    fn new(torus: &Torus, probes: &[&Probe]) -> Self {
        let mut steps: Vec<usize> = probes.iter().map(|p| p.step).collect();
        steps.sort_unstable();
        steps.dedup();
        let shifts = probes
            .iter()
            .map(|p| (steps.binary_search(&p.step).expect("step listed"), shift_table(torus, &p.x)))
            .collect();
        Self { steps, shifts }
    }

    /// Value of probe `k` at translation `z` for recorded replica data.
    #[inline]
    fn value(&self, data: &[Vec<f64>], k: usize, z: usize) -> f64 {
        let (s, ref t) = self.shifts[k];
        data[s][t[z] as usize]
    }
}

/// `½⟨(h¹_p − h²_p)(h¹_q − h²_q)⟩` averaged over lattice translations, one
/// value per replica pair and probe pair.
fn replica_pair_values(layout: &Layout, npairs: usize, a: &[Vec<f64>], b: &[Vec<f64>], sites: usize) -> Vec<f64> {
    (0..npairs)
        .map(|k| {
            let mut acc = 0.0;
            for z in 0..sites {
                let dp = layout.value(a, 2 * k, z) - layout.value(b, 2 * k, z);
                let dq = layout.value(a, 2 * k + 1, z) - layout.value(b, 2 * k + 1, z);
                acc += dp * dq;
            }
            0.5 * acc / sites as f64
        })
        .collect()
}

fn summarize(per_group: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n).map(|k| mean_stderr(&per_group.iter().map(|g| g[k]).collect::<Vec<_>>())).unzip()
}

/// Connected two-point function by the two-replica difference estimator.
/// `replicas` is the total replica count (rounded down to pairs).
pub fn connected_two_point(
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    pairs: &[ProbePair],
    epsilon: f64,
    replicas: usize,
    key: &StreamKey,
) -> Result<TwoPointEstimate> {
    let torus = Torus::new(cfg.d, cfg.l)?;
    let probes: Vec<&Probe> = pairs.iter().flat_map(|p| [&p.p, &p.q]).collect();
    let layout = Layout::new(&torus, &probes);
    let sites = torus.len();
    let per = run_groups(cfg, h0, &layout.steps, 2, replicas / 2, key, |d| {
        replica_pair_values(&layout, pairs.len(), &d[0], &d[1], sites)
    })?;
    let (mean, stderr) = summarize(&per, pairs.len());
    Ok(TwoPointEstimate { pairs: pairs.to_vec(), epsilon, mean, stderr, replicas: 2 * (replicas / 2) })
}

/// Naive `⟨h_p h_q⟩ − ⟨h_p⟩⟨h_q⟩` over replicas (translation averaged), with
/// jackknife errors. Used only to compare variances.
pub fn naive_two_point(
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    pairs: &[ProbePair],
    replicas: usize,
    key: &StreamKey,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let torus = Torus::new(cfg.d, cfg.l)?;
    let probes: Vec<&Probe> = pairs.iter().flat_map(|p| [&p.p, &p.q]).collect();
    let layout = Layout::new(&torus, &probes);
    let sites = torus.len();
    let per = run_groups(cfg, h0, &layout.steps, 1, replicas, key, |d| {
        (0..pairs.len())
            .map(|k| {
                let (mut pq, mut p, mut q) = (0.0, 0.0, 0.0);
                for z in 0..sites {
                    let (a, b) = (layout.value(&d[0], 2 * k, z), layout.value(&d[0], 2 * k + 1, z));
                    pq += a * b;
                    p += a;
                    q += b;
                }
                let s = sites as f64;
                [pq / s, p / s, q / s]
            })
            .collect::<Vec<_>>()
    })?;
    let n = per.len() as f64;
    let mut means = Vec::new();
    let mut errs = Vec::new();
    for k in 0..pairs.len() {
        let tot: [f64; 3] = per.iter().fold([0.0; 3], |a, r| [a[0] + r[k][0], a[1] + r[k][1], a[2] + r[k][2]]);
        let est = |t: [f64; 3], m: f64| t[0] / m - (t[1] / m) * (t[2] / m);
        let full = est(tot, n);
        let jack: Vec<f64> =
            per.iter().map(|r| est([tot[0] - r[k][0], tot[1] - r[k][1], tot[2] - r[k][2]], n - 1.0)).collect();
        let jm = jack.iter().sum::<f64>() / n;
        let var = (n - 1.0) / n * jack.iter().map(|v| (v - jm) * (v - jm)).sum::<f64>();
        means.push(full);
        errs.push(var.sqrt());
    }
    Ok((means, errs))
}

/// Continuous-time lattice EW covariance with white noise and zero initial
/// condition: per Fourier mode `D e^{−νμ(t₁−t₂)}(1 − e^{−2νμt₂})/(2νμ)`
/// (`D·t₂` for the zero mode), `t₁ ≥ t₂`.
pub fn ew_covariance_analytic(nu: f64, d0: f64, t1: f64, t2: f64, x: &[i64], l: usize) -> f64 {
    let (t1, t2) = if t1 >= t2 { (t1, t2) } else { (t2, t1) };
    if t2 <= 0.0 {
        return 0.0;
    }
    let d = x.len();
    let torus = Torus::new(d, l).expect("valid torus");
    let mu1 = torus.mu_1d();
    let l_f = l as f64;
    let cos_tab: Vec<Vec<f64>> = x
        .iter()
        .map(|&xa| (0..l).map(|k| (2.0 * std::f64::consts::PI * k as f64 * xa as f64 / l_f).cos()).collect())
        .collect();
    let mut acc = 0.0;
    for k in modes(d, l) {
        let mu: f64 = k.iter().map(|&ka| mu1[ka]).sum();
        let c: f64 = k.iter().enumerate().map(|(a, &ka)| cos_tab[a][ka]).product();
        let v = if mu < 1e-14 {
            t2
        } else {
            (-nu * mu * (t1 - t2)).exp() * (-(2.0 * nu * mu * t2)).exp_m1().abs() / (2.0 * nu * mu)
        };
        acc += c * v;
    }
    d0 * acc / torus.len() as f64
}

/// Exact covariance of the explicit Euler EW scheme with the lattice
/// mollified noise: per mode
/// `dt² D Σ_{m<n₁} Σ_{m′<n₂} r^{n₁−1−m} r^{n₂−1−m′} c_{m−m′}`, `r = 1 − dt ν μ`.
pub fn ew_covariance_scheme(cfg: &SimConfig, n1: usize, n2: usize, x: &[i64]) -> Result<f64> {
    let c: Vec<f64> = match cfg.noise {
        NoiseKind::Mollified => mollified_lag_covariance(&mollified_taps(cfg.d, cfg.dt)?, cfg.dt),
        _ => return Err(KpzError::Config("scheme covariance is implemented for mollified noise".into())),
    };
    let c: Vec<f64> = c.iter().map(|v| v / cfg.dx.powi(cfg.d as i32)).collect();
    let torus = Torus::new(cfg.d, cfg.l)?;
    let mu1 = torus.mu_1d();
    let l_f = cfg.l as f64;
    let cos_tab: Vec<Vec<f64>> = x
        .iter()
        .map(|&xa| (0..cfg.l).map(|k| (2.0 * std::f64::consts::PI * k as f64 * xa as f64 / l_f).cos()).collect())
        .collect();
    let inv_dx2 = 1.0 / (cfg.dx * cfg.dx);
    let kmax = c.len();
    // the covariance depends on the mode only through μ; cache per μ value
    let mut cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut acc = 0.0;
    for k in modes(cfg.d, cfg.l) {
        let mu: f64 = k.iter().map(|&ka| mu1[ka]).sum::<f64>() * inv_dx2;
        let cs: f64 = k.iter().enumerate().map(|(a, &ka)| cos_tab[a][ka]).product();
        let v = *cache.entry(mu.to_bits()).or_insert_with(|| {
            let r = 1.0 - cfg.dt * cfg.nu0 * mu;
            let pw1: Vec<f64> = (0..n1).map(|m| r.powi((n1 - 1 - m) as i32)).collect();
            let pw2: Vec<f64> = (0..n2).map(|m| r.powi((n2 - 1 - m) as i32)).collect();
            let mut s = 0.0;
            for m in 0..n1 {
                let lo = m.saturating_sub(kmax - 1);
                let hi = (m + kmax).min(n2);
                for m2 in lo..hi {
                    s += pw1[m] * pw2[m2] * c[m.abs_diff(m2)];
                }
            }
            s
        });
        acc += cs * v;
    }
    Ok(cfg.dt * cfg.dt * cfg.d0 * acc / torus.len() as f64)
}

/// Lattice dilation by `2^{m/2}`: even powers double every coordinate, an odd
/// power adds one rotation–dilation `(a, b) → (a − b, a + b)` in the first
/// two coordinates. No integer similarity of ratio `√2` exists in three
/// dimensions, so odd powers require `x` to lie in that plane.
pub fn dilate(x: &[i64], m: u32) -> Result<Vec<i64>> {
    let mut v: Vec<i64> = x.iter().map(|a| a << (m / 2)).collect();
    if m % 2 == 1 && v.iter().any(|&a| a != 0) {
        if v.len() < 2 || v[2..].iter().any(|&a| a != 0) {
            return Err(KpzError::Argument(format!("{x:?} cannot be dilated by an odd power of √2")));
        }
        let (a, b) = (v[0], v[1]);
        v[0] = a - b;
        v[1] = a + b;
    }
    Ok(v)
}

/// A probe pair in unscaled coordinates: times and a lattice displacement
/// of the second point.
#[derive(Clone, Debug, Serialize)]
pub struct BasePair {
    pub t1: f64,
    pub t2: f64,
    pub x: Vec<i64>,
}

/// Lattice probe pair at `(t/ε, ε^{−1/2}x)` for `ε = 2^{−m}`.
pub fn rescale(base: &BasePair, eps: f64, dt: f64) -> Result<ProbePair> {
    let m = (-eps.log2()).round();
    if m < 0.0 || (2f64.powf(-m) - eps).abs() > 1e-12 {
        return Err(KpzError::Argument(format!("ε = {eps} is not a dyadic 2^(−m)")));
    }
    let steps = |t: f64| -> Result<usize> {
        let s = t / (eps * dt);
        if (s - s.round()).abs() > 1e-9 {
            return Err(KpzError::Argument(format!("t/ε = {} is not a multiple of dt", t / eps)));
        }
        Ok(s.round() as usize)
    };
    Ok(ProbePair {
        p: Probe::new(steps(base.t1)?, vec![0; base.x.len()]),
        q: Probe::new(steps(base.t2)?, dilate(&base.x, m as u32)?),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseReport {
    pub epsilons: Vec<f64>,
    pub base: Vec<BasePair>,
    /// `ε^{−(d/2−1)}`-rescaled estimates `[ε][pair] = (mean, stderr)`.
    pub rescaled: Vec<Vec<(f64, f64)>>,
    /// Raw estimates at the lattice points.
    pub raw: Vec<TwoPointEstimate>,
    /// Relative RMS discrepancy between consecutive ε.
    pub discrepancy: Vec<f64>,
    pub shrinking: bool,
    /// Mean over pairs of the fitted slope of `log C_ε` against `log ε`.
    pub link_exponent: f64,
    pub link_exponent_spread: f64,
}

/// Rescaled connected two-point functions for every ε from one set of
/// replicas (the replicas are shared across ε, which correlates the curves).
pub fn scaling_collapse(
    cfg: &SimConfig,
    epsilons: &[f64],
    base: &[BasePair],
    replicas: usize,
    key: &StreamKey,
) -> Result<CollapseReport> {
    let torus = Torus::new(cfg.d, cfg.l)?;
    let mut all_pairs = Vec::new();
    for &e in epsilons {
        for b in base {
            all_pairs.push(rescale(b, e, cfg.dt)?);
        }
    }
    let probes: Vec<&Probe> = all_pairs.iter().flat_map(|p| [&p.p, &p.q]).collect();
    let layout = Layout::new(&torus, &probes);
    let sites = torus.len();
    let per = run_groups(cfg, None, &layout.steps, 2, replicas / 2, key, |d| {
        replica_pair_values(&layout, all_pairs.len(), &d[0], &d[1], sites)
    })?;
    let (mean, stderr) = summarize(&per, all_pairs.len());
    let nb = base.len();
    let expo = 0.5 * cfg.d as f64 - 1.0;
    let mut rescaled = Vec::new();
    let mut raw = Vec::new();
    for (i, &e) in epsilons.iter().enumerate() {
        let f = e.powf(-expo);
        rescaled.push((0..nb).map(|k| (f * mean[i * nb + k], f * stderr[i * nb + k])).collect::<Vec<_>>());
        raw.push(TwoPointEstimate {
            pairs: all_pairs[i * nb..(i + 1) * nb].to_vec(),
            epsilon: e,
            mean: mean[i * nb..(i + 1) * nb].to_vec(),
            stderr: stderr[i * nb..(i + 1) * nb].to_vec(),
            replicas: 2 * (replicas / 2),
        });
    }
    let discrepancy: Vec<f64> = rescaled
        .windows(2)
        .map(|w| {
            let num: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a.0 - b.0).powi(2)).sum::<f64>() / nb as f64;
            let den: f64 = w[1].iter().map(|b| b.0.abs()).sum::<f64>() / nb as f64;
            num.sqrt() / den
        })
        .collect();
    let shrinking = discrepancy.windows(2).all(|w| w[1] < w[0]);
    let lx: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let slopes: Vec<f64> = (0..nb)
        .filter_map(|k| {
            let ly: Vec<f64> = (0..epsilons.len()).map(|i| mean[i * nb + k]).collect();
            ly.iter().all(|v| *v > 0.0).then(|| {
                let ly: Vec<f64> = ly.iter().map(|v| v.ln()).collect();
                crate::multiscale::fit_line(&lx, &ly).0
            })
        })
        .collect();
    let (link_exponent, spread) = if slopes.is_empty() { (f64::NAN, f64::NAN) } else { mean_stderr(&slopes) };
    Ok(CollapseReport {
        epsilons: epsilons.to_vec(),
        base: base.to_vec(),
        rescaled,
        raw,
        discrepancy,
        shrinking,
        link_exponent,
        link_exponent_spread: spread,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveFit {
    pub nu: f64,
    pub d: f64,
    /// Covariance matrix of `(ν, D)`.
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
    pub condition: f64,
}

/// Model class for [`fit_effective_constants`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceModel {
    /// [`ew_covariance_analytic`]: white noise, continuous time.
    Continuum,
    /// [`ew_covariance_scheme`]: the simulated Euler scheme and noise.
    Scheme,
}

/// Weighted least-squares fit of an EW covariance in `(ν, D)` to estimates
/// at lattice probe pairs (`D` enters linearly and is profiled out).
pub fn fit_effective_constants(
    est: &TwoPointEstimate,
    cfg: &SimConfig,
    model: CovarianceModel,
) -> Result<EffectiveFit> {
    let (dt, l) = (cfg.dt, cfg.l);
    let shape = |nu: f64| -> Vec<f64> {
        est.pairs
            .iter()
            .map(|pp| {
                let x: Vec<i64> = pp.q.x.iter().zip(&pp.p.x).map(|(a, b)| a - b).collect();
                match model {
                    CovarianceModel::Continuum => {
                        ew_covariance_analytic(nu, 1.0, pp.p.step as f64 * dt, pp.q.step as f64 * dt, &x, l)
                    }
                    CovarianceModel::Scheme => {
                        let mut c = cfg.clone();
                        c.nu0 = nu;
                        c.d0 = 1.0;
                        ew_covariance_scheme(&c, pp.p.step, pp.q.step, &x).unwrap_or(f64::NAN)
                    }
                }
            })
            .collect()
    };
    let w: Vec<f64> = est.stderr.iter().map(|s| 1.0 / (s * s).max(1e-300)).collect();
    let profile = |nu: f64| -> (f64, f64) {
        let f = shape(nu);
        let num: f64 = f.iter().zip(&est.mean).zip(&w).map(|((a, y), w)| w * a * y).sum();
        let den: f64 = f.iter().zip(&w).map(|(a, w)| w * a * a).sum();
        let dd = num / den;
        let chi2 = f.iter().zip(&est.mean).zip(&w).map(|((a, y), w)| w * (y - dd * a).powi(2)).sum();
        (dd, chi2)
    };
    let nu_max = match model {
        CovarianceModel::Continuum => 20.0,
        // explicit Euler stability
        CovarianceModel::Scheme => (0.99 * cfg.dx * cfg.dx / (2.0 * cfg.d as f64 * dt)).min(20.0),
    };
    // golden-section search on log ν
    let (mut lo, mut hi) = ((0.05f64).ln(), nu_max.ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if profile(a.exp()).1 < profile(b.exp()).1 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let nu = (0.5 * (lo + hi)).exp();
    let (d, chi2) = profile(nu);
    // Gauss–Newton covariance from numerical derivatives of the model
    let h = 1e-4 * nu;
    let (fp, fm, f0) = (shape(nu + h), shape(nu - h), shape(nu));
    let mut jtj = [[0.0; 2]; 2];
    for i in 0..f0.len() {
        let j = [d * (fp[i] - fm[i]) / (2.0 * h), f0[i]];
        for a in 0..2 {
            for b in 0..2 {
                jtj[a][b] += w[i] * j[a] * j[b];
            }
        }
    }
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let tr = jtj[0][0] + jtj[1][1];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    let condition = if l2 > 0.0 { l1 / l2 } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(KpzError::IllConditioned(condition));
    }
    let cov = [[jtj[1][1] / det, -jtj[0][1] / det], [-jtj[1][0] / det, jtj[0][0] / det]];
    Ok(EffectiveFit { nu, d, cov, chi2, condition })
}

/// Translation-averaged spatial mean of `h` per replica at the given steps.
pub fn mean_heights(
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    steps: &[usize],
    replicas: usize,
    key: &StreamKey,
) -> Result<Vec<Vec<f64>>> {
    run_groups(cfg, h0, steps, 1, replicas, key, |d| {
        d[0].iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect()
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftRow {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// `⟨h(T)⟩` (spatially averaged) with errors over replicas.
pub fn mean_drift(
    cfg: &SimConfig,
    h0: Option<&[f64]>,
    steps: &[usize],
    replicas: usize,
    key: &StreamKey,
) -> Result<Vec<DriftRow>> {
    let per = mean_heights(cfg, h0, steps, replicas, key)?;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let (m, e) = mean_stderr(&per.iter().map(|r| r[k]).collect::<Vec<_>>());
            DriftRow { t: s as f64 * cfg.dt, mean: m, stderr: e }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ResponseRow {
    pub probe: Probe,
    pub mean: f64,
    pub stderr: f64,
}

/// Contribution of the initial condition to the mean height,
/// `⟨h^{h₀}(t, x) − h^{0}(t, x)⟩`, from pairs of runs sharing their noise
/// (the common noise cancels exactly at `λ = 0`).
pub fn initial_condition_response(
    cfg: &SimConfig,
    h0: &[f64],
    probes: &[Probe],
    replicas: usize,
    key: &StreamKey,
) -> Result<Vec<ResponseRow>> {
    let torus = Torus::new(cfg.d, cfg.l)?;
    let mut steps: Vec<usize> = probes.iter().map(|p| p.step).collect();
    steps.sort_unstable();
    steps.dedup();
    if let Some(&s) = steps.last() {
        if s > cfg.steps() {
            return Err(KpzError::Horizon { requested: s as f64 * cfg.dt, available: cfg.t_end });
        }
    }
    let flat = vec![0.0; torus.len()];
    let sites: Vec<(usize, usize)> =
        probes.iter().map(|p| (steps.binary_search(&p.step).expect("listed"), torus.index(&p.x))).collect();
    let per: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let k = key.clone().replica(r as u64);
            let a = record(cfg, h0, &steps, &k)?;
            let b = record(cfg, &flat, &steps, &k)?;
            Ok(sites.iter().map(|&(s, i)| a[s][i] - b[s][i]).collect())
        })
        .collect::<Result<_>>()?;
    Ok(probes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (mean, stderr) = mean_stderr(&per.iter().map(|r| r[k]).collect::<Vec<_>>());
            ResponseRow { probe: p.clone(), mean, stderr }
        })
        .collect())
}

/// `(1/N) ∏_ℓ Σ_k e^{2πik/N} X_ℓ^{(k)}` for one group; `x[k][ℓ]`.
pub fn cartier_product(x: &[Vec<f64>]) -> Complex64 {
    let n = x.len();
    let npts = x[0].len();
    let mut prod = Complex64::new(1.0, 0.0);
    for l in 0..npts {
        let mut s = Complex64::new(0.0, 0.0);
        for (k, row) in x.iter().enumerate() {
            s += Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64) * row[l];
        }
        prod *= s;
    }
    prod / n as f64
}

fn cumulant_from_samples(order: usize, points: Vec<Probe>, samples: &[Complex64]) -> CumulantEstimate {
    let (re, re_stderr) = mean_stderr(&samples.iter().map(|c| c.re).collect::<Vec<_>>());
    let (im, im_stderr) = mean_stderr(&samples.iter().map(|c| c.im).collect::<Vec<_>>());
    CumulantEstimate { order, points, re, re_stderr, im, im_stderr, samples: samples.len() }
}

/// Connected `N`-point function of `log w = (λ/ν)h` (of `h` itself when
/// `λ = 0`) by the replica root-of-unity formula, translation averaged.
pub fn connected_npoint_cartier(
    cfg: &SimConfig,
    points: &[Probe],
    groups: usize,
    key: &StreamKey,
) -> Result<CumulantEstimate> {
    let n = points.len();
    if n != 2 && n != 4 {
        return Err(KpzError::Argument(format!("N must be 2 or 4, got {n}")));
    }
    let scale = if cfg.lambda > 0.0 { cfg.lambda / cfg.nu0 } else { 1.0 };
    let torus = Torus::new(cfg.d, cfg.l)?;
    // canonical order makes the floating-point result permutation invariant
    let mut refs: Vec<&Probe> = points.iter().collect();
    refs.sort();
    let layout = Layout::new(&torus, &refs);
    let sites = torus.len();
    let per = run_groups(cfg, None, &layout.steps, n, groups, key, |d| {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut x = vec![vec![0.0; n]; n];
        for z in 0..sites {
            for (k, row) in x.iter_mut().enumerate() {
                for (l, v) in row.iter_mut().enumerate() {
                    *v = scale * layout.value(&d[k], l, z);
                }
            }
            acc += cartier_product(&x);
        }
        acc / sites as f64
    })?;
    Ok(cumulant_from_samples(n, points.to_vec(), &per))
}

/// Same estimator on synthetic centered Gaussian vectors with covariance
/// `cov` (row-major `n × n`), where every cumulant above the second vanishes.
pub fn gaussian_toy_cumulant(cov: &[f64], n: usize, samples: usize, key: &StreamKey) -> Result<CumulantEstimate> {
    // Cholesky factor
    let mut lf = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| lf[i * n + k] * lf[j * n + k]).sum();
            if i == j {
                let v = cov[i * n + i] - s;
                if v <= 0.0 {
                    return Err(KpzError::Argument("covariance is not positive definite".into()));
                }
                lf[i * n + i] = v.sqrt();
            } else {
                lf[i * n + j] = (cov[i * n + j] - s) / lf[j * n + j];
            }
        }
    }
    let mut rng = key.rng();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                (0..n).map(|i| (0..=i).map(|k| lf[i * n + k] * z[k]).sum()).collect()
            })
            .collect();
        out.push(cartier_product(&x));
    }
    Ok(cumulant_from_samples(n, Vec::new(), &out))
}
