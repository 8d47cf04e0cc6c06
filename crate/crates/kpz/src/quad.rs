//! Composite Gauss–Legendre quadrature and radial helpers.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use statrs::function::gamma::gamma;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize) -> Self {
        let gl = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("nonzero order"));
        let (nodes, weights) = gl.as_node_weight_pairs().iter().copied().unzip();
        Self { nodes, weights }
    }

    /// Nodes and weights of the composite rule on `[a, b]` with `panels` panels.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
        out
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.composite(a, b, panels).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Surface area of the unit sphere in `R^dim` (`2` for `dim = 1`).
pub fn sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// `(f∗f)(ρ)` for a radial function `f` on `R^dim` supported in the ball of
/// radius `radius`, in cylindrical coordinates around the displacement axis.
pub fn radial_self_convolution(
    f: &dyn Fn(f64) -> f64,
    radius: f64,
    dim: usize,
    rho: f64,
    rule: &Rule,
    panels: usize,
) -> f64 {
    if rho >= 2.0 * radius {
        return 0.0;
    }
    let (a_lo, a_hi) = ((rho - radius).max(-radius), radius.min(rho + radius));
    let perp = dim - 1;
    let area = if perp == 0 { 1.0 } else { sphere_area(perp) };
    rule.integrate(a_lo, a_hi, panels, |a| {
        let b_hi2 = (radius * radius - a * a).min(radius * radius - (rho - a) * (rho - a));
        if b_hi2 <= 0.0 {
            return 0.0;
        }
        if perp == 0 {
            return f(a.abs()) * f((rho - a).abs());
        }
        rule.integrate(0.0, b_hi2.sqrt(), panels, |b| {
            area * b.powi(perp as i32 - 1) * f((a * a + b * b).sqrt()) * f(((rho - a) * (rho - a) + b * b).sqrt())
        })
    })
}

/// Radial function tabulated on `[0, radius]` with 4-point Lagrange interpolation.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RadialTable {
    pub radius: f64,
    pub values: Vec<f64>,
}

impl RadialTable {
    pub fn build(radius: f64, points: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = radius / (points - 1) as f64;
        Self { radius, values: (0..points).map(|i| f(h * i as f64)).collect() }
    }

    pub fn step(&self) -> f64 {
        self.radius / (self.values.len() - 1) as f64
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.radius {
            return 0.0;
        }
        let h = self.step();
        let n = self.values.len();
        let x = r / h;
        let i = (x.floor() as usize).min(n - 2);
        // stencil i-1..i+2, reflected at 0 (even function), zero past the end
        let get = |k: isize| -> f64 {
            let k = k.unsigned_abs();
            if k < n {
                self.values[k]
            } else {
                0.0
            }
        };
        let t = x - i as f64;
        let (p0, p1, p2, p3) = (get(i as isize - 1), get(i as isize), get(i as isize + 1), get(i as isize + 2));
        let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = Rule::new(4);
        let v = r.integrate(0.0, 2.0, 3, |x| x.powi(7));
        assert!((v - 32.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn self_convolution_of_ball_indicator_in_one_dim() {
        // indicator of [-1/2, 1/2] convolved with itself is a tent
        let f = |r: f64| if r < 0.5 { 1.0 } else { 0.0 };
        let r = Rule::new(16);
        let v = radial_self_convolution(&f, 0.5, 1, 0.3, &r, 8);
        assert!((v - 0.7).abs() < 1e-12);
    }
}
