use kpz::feynman_kac::{
    estimate_v0_tilde, estimate_v0_tilde_conditional, estimate_w, estimate_w_bridge, fekete_diagnostics, mean_stderr,
    v0_tilde_cumulant, PathLaw,
};
use kpz::field::SpaceTimeField;
use kpz::lattice::{modes, Torus};
use kpz::lattice_spde::{bump_initial, cole_hopf, Equation, SimConfig, Simulation};
use kpz::noise::{LatticeNoise, NoiseKind};
use kpz::rng::StreamKey;
use kpz::KpzError;
use proptest::prelude::*;
use std::f64::consts::PI;

fn she(d: usize, l: usize, dt: f64, t: f64, lambda: f64) -> SimConfig {
    let mut c = SimConfig::new(d, l, dt, t, 1.0, 1.0, lambda);
    c.equation = Equation::She;
    c
}

fn frozen(c: &SimConfig, nt: usize, key: &StreamKey) -> SpaceTimeField {
    let torus = Torus::new(c.d, c.l).unwrap();
    LatticeNoise::new(&torus, c.noise, c.dt, c.dx, key).unwrap().field(nt, c.dx)
}

/// `Σ_k f̂(k) m(μ_k) e^{ik·x}` on the torus, by direct summation.
fn fourier_heat(torus: &Torus, f: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = torus.len();
    let l = torus.l() as f64;
    let mut out = vec![0.0; n];
    for k in modes(torus.d(), torus.l()) {
        let phase =
            |i: usize| -> f64 { torus.coords(i).iter().zip(&k).map(|(&x, &ka)| 2.0 * PI * (x * ka) as f64 / l).sum() };
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in f.iter().enumerate() {
            let p = phase(i);
            re += v * p.cos();
            im -= v * p.sin();
        }
        let w = m(torus.mu(&k)) / n as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let p = phase(i);
            *o += w * (re * p.cos() - im * p.sin());
        }
    }
    out
}

#[test]
fn zero_noise_gives_unit_weights() {
    let c = she(2, 8, 0.1, 2.0, 0.5);
    let torus = Torus::new(2, 8).unwrap();
    let noise = SpaceTimeField::zeros(&torus, 20, c.dt, c.dx);
    for law in [PathLaw::LatticeWalk, PathLaw::Brownian] {
        let e = estimate_w(2.0, 5, &noise, &c, None, 3000, law, &StreamKey::new(1, "z")).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
    }
    let b = estimate_w_bridge(2.0, 5, 9, &noise, &c, None, 3000, &StreamKey::new(1, "zb")).unwrap();
    assert_eq!(b.value, 1.0);
    assert_eq!(b.stderr, 0.0);
}

#[test]
fn noiseless_bump_matches_heat_semigroup() {
    // with the noise switched off only the initial weight e^{(λ/ν)h₀} is transported
    let c = she(2, 8, 0.1, 1.5, 0.5);
    let torus = Torus::new(2, 8).unwrap();
    let steps = 15;
    let noise = SpaceTimeField::zeros(&torus, steps, c.dt, c.dx);
    let h0 = bump_initial(&torus, 2.0, 1.5);
    let r = c.nu0 * c.dt;
    let oracle = fourier_heat(&torus, &cole_hopf(&h0, &c), |mu| (1.0 - r * mu).powi(steps as i32));
    for a in [0, torus.index(&[3, 4]), torus.index(&[4, 4])] {
        let e = estimate_w(1.5, a, &noise, &c, Some(&h0), 40_000, PathLaw::LatticeWalk, &StreamKey::new(2, "bump"))
            .unwrap();
        assert!((e.value - oracle[a]).abs() < 3.0 * e.stderr, "site {a}: {} ± {} vs {}", e.value, e.stderr, oracle[a]);
    }
}

#[test]
fn polymer_agrees_with_she_solver_for_frozen_noise() {
    let c = she(2, 8, 0.1, 2.0, 0.6);
    let steps = 20;
    let key = StreamKey::new(3, "frozen");
    let noise = frozen(&c, steps, &key);
    let torus = Torus::new(2, 8).unwrap();
    let h0 = bump_initial(&torus, 0.5, 1.0);
    let mut sim = Simulation::new(&c, &h0, &key).unwrap();
    sim.run(steps).unwrap();
    for a in [0, 27, 36] {
        let e = estimate_w(2.0, a, &noise, &c, Some(&h0), 40_000, PathLaw::LatticeWalk, &StreamKey::new(3, "paths"))
            .unwrap();
        let w = sim.state()[a];
        assert!((e.value - w).abs() < 3.0 * e.stderr, "site {a}: {} ± {} vs {w}", e.value, e.stderr);
    }
}

#[test]
fn bridge_is_symmetric_under_time_reversal() {
    let c = she(2, 12, 0.1, 1.0, 0.8);
    let steps = 10;
    let noise = frozen(&c, steps + 1, &StreamKey::new(4, "rev"));
    let mut reversed = noise.clone();
    for n in 0..=steps {
        reversed.slice_mut(n).copy_from_slice(noise.slice(steps - n));
    }
    let torus = Torus::new(2, 12).unwrap();
    let (a, b) = (torus.index(&[2, 3]), torus.index(&[4, 2]));
    let fwd = estimate_w_bridge(1.0, a, b, &noise, &c, None, 60_000, &StreamKey::new(4, "f")).unwrap();
    let back = estimate_w_bridge(1.0, b, a, &reversed, &c, None, 60_000, &StreamKey::new(4, "b")).unwrap();
    let se = fwd.stderr.hypot(back.stderr);
    assert!((fwd.value - back.value).abs() < 3.0 * se, "{} vs {} (±{se})", fwd.value, back.value);
    assert!(fwd.value != 1.0);
}

#[test]
fn bridges_compose_to_the_free_endpoint_estimate() {
    // w_T(a) = Σ_b p_T(a, b) w_T(a, b), p_T the Gaussian kernel of variance 2νT per axis
    let c = she(2, 16, 0.1, 1.0, 0.8);
    let steps = 10;
    let noise = frozen(&c, steps, &StreamKey::new(5, "ck"));
    let torus = Torus::new(2, 16).unwrap();
    let a = torus.index(&[8, 8]);
    let var = 2.0 * c.nu0 * 1.0;
    let (mut comp, mut comp_var, mut mass) = (0.0, 0.0, 0.0);
    for dx in -6i64..=6 {
        for dy in -6i64..=6 {
            let p = (-((dx * dx + dy * dy) as f64) / (2.0 * var)).exp() / (2.0 * PI * var);
            let b = torus.index(&[8 + dx, 8 + dy]);
            let key = StreamKey::new(5, "bridge").replica(b as u64);
            let e = estimate_w_bridge(1.0, a, b, &noise, &c, None, 2000, &key).unwrap();
            comp += p * e.value;
            comp_var += (p * e.stderr).powi(2);
            mass += p;
        }
    }
    assert!((mass - 1.0).abs() < 1e-3);
    let free = estimate_w(1.0, a, &noise, &c, None, 200_000, PathLaw::Brownian, &StreamKey::new(5, "free")).unwrap();
    let se = (comp_var + free.stderr * free.stderr).sqrt();
    assert!((comp - free.value).abs() < 3.0 * se + 2e-3, "{comp} vs {} (±{se})", free.value);
}

#[test]
fn stderr_scales_as_inverse_root_paths() {
    let c = she(2, 8, 0.1, 2.0, 1.0);
    let noise = frozen(&c, 20, &StreamKey::new(6, "n"));
    let ns = [1000usize, 4000, 16_000, 64_000];
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let e = estimate_w(2.0, 0, &noise, &c, None, n, PathLaw::LatticeWalk, &StreamKey::new(6, "p")).unwrap();
            ((n as f64).ln(), e.stderr.ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}

#[test]
fn horizon_beyond_noise_is_rejected() {
    let c = she(1, 8, 0.1, 2.0, 0.5);
    let torus = Torus::new(1, 8).unwrap();
    let noise = SpaceTimeField::zeros(&torus, 10, c.dt, c.dx);
    let err = estimate_w(2.0, 0, &noise, &c, None, 10, PathLaw::LatticeWalk, &StreamKey::new(0, "h")).unwrap_err();
    assert!(matches!(err, KpzError::Horizon { .. }));
    let err = estimate_w_bridge(2.0, 0, 1, &noise, &c, None, 10, &StreamKey::new(0, "h")).unwrap_err();
    assert!(matches!(err, KpzError::Horizon { .. }));
}

fn kick(lambda: f64) -> SimConfig {
    let mut c = she(3, 8, 0.1, 1.0, lambda);
    c.noise = NoiseKind::kick_default();
    c
}

#[test]
fn velocity_vanishes_without_noise_and_needs_kick_noise() {
    let mut c = kick(0.2);
    c.noise = NoiseKind::Zero;
    let key = StreamKey::new(7, "v");
    assert_eq!(estimate_v0_tilde(&c, 100, 4, &key).unwrap().value, 0.0);
    assert_eq!(estimate_v0_tilde_conditional(&c, 100, &key).unwrap().value, 0.0);
    c.noise = NoiseKind::Mollified;
    assert!(matches!(estimate_v0_tilde(&c, 100, 4, &key), Err(KpzError::Config(_))));
    assert!(matches!(estimate_v0_tilde_conditional(&c, 100, &key), Err(KpzError::Config(_))));
}

#[test]
fn velocity_is_linear_in_lambda_near_zero() {
    let key = StreamKey::new(8, "lin");
    let v: Vec<f64> = [0.01, 0.02, 0.04]
        .iter()
        .map(|&l| estimate_v0_tilde_conditional(&kick(l), 20_000, &key).unwrap().value)
        .collect();
    assert!(v[0] > 0.0 && v[0] < 1e-3);
    for w in v.windows(2) {
        assert!((w[1] / w[0] - 2.0).abs() < 0.05, "{v:?}");
    }
}

#[test]
fn velocity_matches_second_cumulant() {
    let c = kick(0.2);
    let cum = v0_tilde_cumulant(&c).unwrap();
    let est = estimate_v0_tilde_conditional(&c, 40_000, &StreamKey::new(9, "cum")).unwrap();
    assert!((est.value - cum).abs() < 3.0 * est.stderr, "{} ± {} vs {cum}", est.value, est.stderr);
    // the sampled-noise estimator is unbiased for the same quantity, only noisier
    let raw = estimate_v0_tilde(&c, 2000, 40, &StreamKey::new(9, "raw")).unwrap();
    assert!((raw.value - cum).abs() < 3.0 * raw.stderr, "{} ± {} vs {cum}", raw.value, raw.stderr);
}

#[test]
fn fekete_means_vanish_for_linear_equation() {
    let c = she(2, 8, 0.1, 4.0, 0.0);
    let rep = fekete_diagnostics(&c, &[1.0, 2.0, 4.0], 40, &StreamKey::new(10, "f0")).unwrap();
    for r in &rep.rows {
        assert!(r.mean_h.abs() < 3.0 * r.stderr, "{r:?}");
    }
}

#[test]
fn fekete_means_are_nonnegative_and_superadditive() {
    let c = she(2, 8, 0.1, 4.0, 0.5);
    let rep = fekete_diagnostics(&c, &[1.0, 2.0, 3.0, 4.0], 40, &StreamKey::new(10, "f")).unwrap();
    assert!(rep.nonnegative_within(3.0));
    assert!(rep.superadditive_within(3.0));
    assert!(rep.rows.iter().all(|r| r.mean_h > 0.0));
    assert!(!rep.superadditivity.is_empty());
}

#[test]
fn mean_stderr_uses_sample_deviation() {
    let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weights_are_positive(seed in 0u64..1000, lambda in 0.1f64..3.0) {
        let c = she(1, 8, 0.1, 1.0, lambda);
        let noise = frozen(&c, 10, &StreamKey::new(seed, "pos"));
        for law in [PathLaw::LatticeWalk, PathLaw::Brownian] {
            let e = estimate_w(1.0, 3, &noise, &c, None, 200, law, &StreamKey::new(seed, "w")).unwrap();
            prop_assert!(e.value > 0.0 && e.value.is_finite());
        }
    }
}
