//! Periodic hypercubic lattice `(Z/LZ)^d` with unit or custom spacing.

use std::f64::consts::PI;

use crate::error::{KpzError, Result};

#[derive(Clone, Debug)]
pub struct Torus {
    d: usize,
    l: usize,
    n: usize,
    strides: Vec<usize>,
    /// `nbr[2d·i + 2a]` is `i + e_a`, `nbr[2d·i + 2a + 1]` is `i − e_a`.
    nbr: Vec<u32>,
}

impl Torus {
    pub fn new(d: usize, l: usize) -> Result<Self> {
        if d == 0 || d > 6 {
            return Err(KpzError::Config(format!("dimension {d} outside 1..=6")));
        }
        if l < 3 {
            return Err(KpzError::Config(format!("lattice side {l} must be at least 3")));
        }
        let n = l
            .checked_pow(d as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| KpzError::Config(format!("lattice {l}^{d} too large")))?;
        let strides: Vec<usize> = (0..d).map(|a| l.pow(a as u32)).collect();
        let mut nbr = vec![0u32; 2 * d * n];
        for i in 0..n {
            for a in 0..d {
                let c = (i / strides[a]) % l;
                let up = if c + 1 == l { i + strides[a] - l * strides[a] } else { i + strides[a] };
                let down = if c == 0 { i + (l - 1) * strides[a] } else { i - strides[a] };
                nbr[2 * d * i + 2 * a] = up as u32;
                nbr[2 * d * i + 2 * a + 1] = down as u32;
            }
        }
        Ok(Self { d, l, n, strides, nbr })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.nbr[2 * self.d * i..2 * self.d * (i + 1)]
    }

    pub fn coords(&self, i: usize) -> Vec<usize> {
        (0..self.d).map(|a| (i / self.strides[a]) % self.l).collect()
    }

    /// Site index of integer coordinates, wrapped onto the torus.
    pub fn index(&self, c: &[i64]) -> usize {
        assert_eq!(c.len(), self.d);
        let l = self.l as i64;
        c.iter().zip(&self.strides).map(|(&x, &s)| x.rem_euclid(l) as usize * s).sum()
    }

    /// `i` translated by the integer vector `v`.
    pub fn translate(&self, i: usize, v: &[i64]) -> usize {
        let c: Vec<i64> = self.coords(i).iter().zip(v).map(|(&a, &b)| a as i64 + b).collect();
        self.index(&c)
    }

    /// Unnormalized lattice Laplacian `Σ_a f(i+e_a) + f(i−e_a) − 2f(i)`.
    pub fn laplacian(&self, f: &[f64], out: &mut [f64]) {
        let two_d = 2.0 * self.d as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self.neighbors(i).iter().map(|&j| f[j as usize]).sum();
            *o = s - two_d * f[i];
        }
    }

    /// Eigenvalue of `−Δ` for the mode with integer wave vector `k`.
    pub fn mu(&self, k: &[usize]) -> f64 {
        k.iter().map(|&ka| 2.0 - 2.0 * (2.0 * PI * ka as f64 / self.l as f64).cos()).sum()
    }

    /// 1D eigenvalues `2 − 2cos(2πk/L)`, `k = 0..L`.
    pub fn mu_1d(&self) -> Vec<f64> {
        (0..self.l).map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / self.l as f64).cos()).collect()
    }

    /// Applies a symmetric 1D kernel (indexed by offset mod L) along every axis.
    pub fn convolve_separable(&self, f: &mut [f64], kernel: &[f64]) {
        assert_eq!(kernel.len(), self.l);
        let support: Vec<(usize, f64)> =
            kernel.iter().copied().enumerate().filter(|&(_, k)| k.abs() > 1e-300).collect();
        let mut line = vec![0.0; self.l];
        let mut out = vec![0.0; self.l];
        for a in 0..self.d {
            let s = self.strides[a];
            for base in 0..self.n {
                if !(base / s).is_multiple_of(self.l) {
                    continue;
                }
                for (c, x) in line.iter_mut().enumerate() {
                    *x = f[base + c * s];
                }
                for (c, o) in out.iter_mut().enumerate() {
                    *o = support.iter().map(|&(m, k)| k * line[(c + self.l - m) % self.l]).sum();
                }
                for (c, &x) in out.iter().enumerate() {
                    f[base + c * s] = x;
                }
            }
        }
    }

    /// Torus kernel of `e^{cΔ}` in one dimension, by offset.
    pub fn heat_kernel_1d(&self, c: f64) -> Vec<f64> {
        let mu = self.mu_1d();
        let l = self.l as f64;
        (0..self.l)
            .map(|m| {
                mu.iter()
                    .enumerate()
                    .map(|(k, &mk)| (-c * mk).exp() * (2.0 * PI * (k * m) as f64 / l).cos())
                    .sum::<f64>()
                    / l
            })
            .collect()
    }

    /// Minimal-image Euclidean norm of the displacement between two sites.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords(i), self.coords(j));
        a.iter()
            .zip(&b)
            .map(|(&x, &y)| {
                let d = (x as i64 - y as i64).rem_euclid(self.l as i64);
                let d = d.min(self.l as i64 - d) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Iterates over all integer wave vectors of a `d`-dimensional torus of side `l`.
pub fn modes(d: usize, l: usize) -> impl Iterator<Item = Vec<usize>> {
    let n = l.pow(d as u32);
    (0..n).map(move |mut i| {
        let mut k = vec![0; d];
        for ka in k.iter_mut() {
            *ka = i % l;
            i /= l;
        }
        k
    })
}
