use serde::Serialize;

use super::partition::ScalePartition;
use crate::quad::Rule;

/// 1D heat kernel `q_s(x) = (4πs)^{−1/2} e^{−x²/4s}` (variance `2s`).
pub fn q(s: f64, x: f64) -> f64 {
    (-x * x / (4.0 * s)).exp() / (4.0 * std::f64::consts::PI * s).sqrt()
}

/// Physicists' Hermite polynomial `H_n(y)`.
pub fn hermite(n: usize, y: f64) -> f64 {
    let (mut a, mut b) = (1.0, 2.0 * y);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = 2.0 * y * b - 2.0 * k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// `∂ⁿ_x q_s(x) = (−1)ⁿ (4s)^{−n/2} H_n(x/√(4s)) q_s(x)`.
pub fn dq(n: usize, s: f64, x: f64) -> f64 {
    let r = (4.0 * s).sqrt();
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * r.powi(-(n as i32)) * hermite(n, x / r) * q(s, x)
}

/// Heat kernel on `R^d` with `∫|x_a|² = 2s`.
pub fn heat_kernel(s: f64, x: &[f64]) -> f64 {
    x.iter().map(|&xa| q(s, xa)).product()
}

/// `sup_x |∂ⁿ q_1(x)|`, by a fine grid plus local refinement.
fn sup_dq1(n: usize) -> f64 {
    let mut best = (0.0f64, 0.0f64);
    for i in 0..=4000 {
        let x = 10.0 * i as f64 / 4000.0;
        let v = dq(n, 1.0, x).abs();
        if v > best.0 {
            best = (v, x);
        }
    }
    // golden-section polish around the grid maximum
    let (mut lo, mut hi) = ((best.1 - 0.005).max(0.0), best.1 + 0.005);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if dq(n, 1.0, m1).abs() > dq(n, 1.0, m2).abs() {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.0.max(dq(n, 1.0, 0.5 * (lo + hi)).abs())
}

/// `‖∂ⁿ q_1‖_{L¹}`.
fn l1_dq1(n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    2.0 * Rule::new(16).integrate(0.0, 16.0, 256, |x| dq(n, 1.0, x).abs())
}

/// Measured constants of one scale.
#[derive(Clone, Debug, Serialize)]
pub struct ScaleReport {
    pub j: u32,
    pub kappa_t: usize,
    pub kappa_x: Vec<usize>,
    /// `∫dt′dx′ Aʲ`.
    pub mass: f64,
    /// `mass / 2^{j/2}`.
    pub mass_constant: f64,
    /// `sup |∂_t^{κ_t} ∇^κ Aʲ|`.
    pub sup: f64,
    /// `sup · 2^{(j/2)(2κ_t + |κ| + d + 1)}`.
    pub sup_constant: f64,
}

/// Un-normalized scale-`j` kernel `Aʲ(τ, x) = aʲ(τ) p_{ντ}(x)` in `d` dimensions.
pub struct KernelScale<'a> {
    pub partition: &'a ScalePartition,
    pub j: u32,
    pub nu: f64,
    pub d: usize,
}

impl<'a> KernelScale<'a> {
    pub fn new(partition: &'a ScalePartition, j: u32, nu: f64, d: usize) -> Self {
        Self { partition, j, nu, d }
    }

    fn a_dot(&self, tau: f64) -> f64 {
        let h = 1e-5 * 2f64.powi(self.j as i32);
        (self.partition.a(self.j, tau + h) - self.partition.a(self.j, tau - h)) / (2.0 * h)
    }

    /// `∂_τ^{κ_t} ∇^κ Aʲ(τ, x)` for `κ_t ∈ {0, 1}`; zero for `τ ≤ 0`.
    pub fn eval_a(&self, tau: f64, x: &[f64], kappa_t: usize, kappa: &[usize]) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let s = self.nu * tau;
        let prod = |extra: Option<usize>| -> f64 {
            x.iter()
                .enumerate()
                .map(|(a, &xa)| {
                    let n = kappa.get(a).copied().unwrap_or(0) + if extra == Some(a) { 2 } else { 0 };
                    dq(n, s, xa)
                })
                .product()
        };
        match kappa_t {
            0 => self.partition.a(self.j, tau) * prod(None),
            1 => {
                let lap: f64 = (0..self.d).map(|b| prod(Some(b))).sum();
                self.a_dot(tau) * prod(None) + self.partition.a(self.j, tau) * self.nu * lap
            }
            _ => panic!("only first time derivatives are supported"),
        }
    }

    /// Normalized `Gʲ(τ, x) = ρʲ(τ) p_{ντ}(x)`.
    pub fn eval_g(&self, tau: f64, x: &[f64]) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        self.partition.rho(self.j, tau) * heat_kernel(self.nu * tau, x)
    }

    /// `∫dτ aʲ(τ)` (the spatial integral of the heat kernel is 1).
    pub fn mass(&self) -> f64 {
        let (lo, hi) = ScalePartition::a_support(self.j);
        Rule::new(16).integrate(lo, hi, 64, |t| self.partition.a(self.j, t))
    }

    fn tau_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = ScalePartition::a_support(self.j);
        (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
    }

    /// `sup |∂_t^{κ_t} ∇^κ Aʲ|` over a `(τ, x)` grid.
    pub fn sup_norm(&self, kappa_t: usize, kappa: &[usize]) -> f64 {
        let taus = self.tau_grid(240);
        if kappa_t == 0 {
            // separable: the sup over x factorizes over the axes
            let sups: Vec<f64> = (0..self.d).map(|a| sup_dq1(kappa.get(a).copied().unwrap_or(0))).collect();
            return taus
                .iter()
                .map(|&t| {
                    let s = self.nu * t;
                    let f: f64 = (0..self.d)
                        .map(|a| sups[a] * s.powf(-0.5 * (kappa.get(a).copied().unwrap_or(0) as f64 + 1.0)))
                        .product();
                    self.partition.a(self.j, t).abs() * f
                })
                .fold(0.0, f64::max);
        }
        let m = 12usize;
        let mut best = 0.0f64;
        let mut x = vec![0.0; self.d];
        for &t in taus.iter().step_by(4) {
            let w = 4.0 * (2.0 * self.nu * t).sqrt();
            let total = (2 * m + 1).pow(self.d as u32);
            for idx in 0..total {
                let mut r = idx;
                for xa in x.iter_mut() {
                    *xa = w * ((r % (2 * m + 1)) as f64 - m as f64) / m as f64;
                    r /= 2 * m + 1;
                }
                best = best.max(self.eval_a(t, &x, kappa_t, kappa).abs());
            }
        }
        best
    }

    pub fn report(&self, kappa_t: usize, kappa: &[usize]) -> ScaleReport {
        let mass = self.mass();
        let sup = self.sup_norm(kappa_t, kappa);
        let order: usize = kappa.iter().sum();
        let expo = 0.5 * self.j as f64 * (2.0 * kappa_t as f64 + order as f64 + self.d as f64 + 1.0);
        ScaleReport {
            j: self.j,
            kappa_t,
            kappa_x: kappa.to_vec(),
            mass,
            mass_constant: mass / 2f64.powf(0.5 * self.j as f64),
            sup,
            sup_constant: sup * 2f64.powf(expo),
        }
    }

    /// `∫dt dx |∇^κ Aʲ ∇^{κ′} Bʲ|` divided by `2^j · 2^{−(j/2)(|κ|+|κ′|)}`.
    ///
    /// The operator product has time profile `aʲ∗aʲ` and spatial part
    /// `∇^{κ+κ′} p_{ντ}`, whose `L¹` norm scales like `(ντ)^{−|κ+κ′|/2}`.
    pub fn two_scale_constant(&self, kappa: &[usize], kappa2: &[usize]) -> f64 {
        let m: Vec<usize> =
            (0..self.d).map(|a| kappa.get(a).copied().unwrap_or(0) + kappa2.get(a).copied().unwrap_or(0)).collect();
        let norms: Vec<f64> = m.iter().map(|&n| l1_dq1(n)).collect();
        let order: usize = m.iter().sum();
        let (lo, hi) = ScalePartition::g_support(self.j);
        let v = Rule::new(16).integrate(lo, hi, 64, |t| {
            self.partition.raw(self.j, t) * norms.iter().product::<f64>() * (self.nu * t).powf(-0.5 * order as f64)
        });
        v / (2f64.powi(self.j as i32) * 2f64.powf(-0.5 * self.j as f64 * order as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_derivatives_match_finite_differences() {
        for n in 0..4 {
            let h = 1e-4;
            let fd = (dq(n, 0.7, 0.3 + h) - dq(n, 0.7, 0.3 - h)) / (2.0 * h);
            assert!((fd - dq(n + 1, 0.7, 0.3)).abs() < 1e-6, "n = {n}");
        }
    }

    #[test]
    fn kernels_are_causal_and_supported() {
        let p = ScalePartition::build(6).unwrap();
        let k = KernelScale::new(&p, 3, 1.0, 3);
        assert_eq!(k.eval_a(-1.0, &[0.0; 3], 0, &[]), 0.0);
        assert_eq!(k.eval_a(3.9, &[0.0; 3], 0, &[]), 0.0);
        assert_eq!(k.eval_a(16.1, &[0.0; 3], 0, &[]), 0.0);
        assert!(k.eval_a(8.0, &[0.0; 3], 0, &[]) > 0.0);
        assert_eq!(k.eval_g(-0.5, &[0.0; 3]), 0.0);
        assert_eq!(k.eval_g(7.9, &[0.0; 3]), 0.0);
    }
}
