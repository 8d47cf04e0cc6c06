//! Explicit time steppers for KPZ, Edwards–Wilkinson and the Cole-Hopf
//! stochastic heat equation on the periodic lattice.

use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::lattice::Torus;
use crate::noise::{LatticeNoise, NoiseKind};
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Kpz,
    Ew,
    She,
}

/// Heat part of the stochastic heat equation step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatStep {
    /// `I + dt·ν·Δ`
    Euler,
    /// Exact lattice semigroup `e^{dt·ν·Δ}`.
    Exact,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub dx: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub nu0: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    pub lambda: f64,
    pub v0: f64,
    pub seed: u64,
    pub noise: NoiseKind,
    pub equation: Equation,
    pub heat: HeatStep,
}

impl SimConfig {
    /// Defaults for everything except the required physical parameters.
    pub fn new(d: usize, l: usize, dt: f64, t_end: f64, nu0: f64, d0: f64, lambda: f64) -> Self {
        Self {
            d,
            l,
            dx: 1.0,
            dt,
            t_end,
            nu0,
            d0,
            lambda,
            v0: 0.0,
            seed: 0,
            noise: NoiseKind::Mollified,
            equation: Equation::Kpz,
            heat: HeatStep::Euler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(KpzError::Config(m));
        if !(1..=4).contains(&self.d) {
            return bad(format!("d = {} outside 1..=4", self.d));
        }
        if !(self.nu0 > 0.0) {
            return bad("nu0 must be positive".into());
        }
        if !(self.d0 > 0.0) {
            return bad("D0 must be positive".into());
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be nonnegative".into());
        }
        if !(self.dx > 0.0 && self.dt > 0.0 && self.t_end >= 0.0) {
            return bad("dx, dt must be positive and T nonnegative".into());
        }
        let limit = self.dx * self.dx / (2.0 * self.d as f64 * self.nu0);
        if self.dt > limit * (1.0 + 1e-12) {
            return bad(format!("dt = {} violates the stability bound dx²/(2dν) = {limit}", self.dt));
        }
        if self.equation == Equation::She && self.lambda == 0.0 {
            return bad("the Cole-Hopf equation needs lambda > 0".into());
        }
        Ok(())
    }

    /// `g = (λ/ν)·√D`.
    pub fn g0(&self) -> f64 {
        self.lambda / self.nu0 * self.d0.sqrt()
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Precomputed per-configuration stepping data.
pub struct Stepper {
    torus: Torus,
    cfg: SimConfig,
    lap: Vec<f64>,
    heat_kernel: Option<Vec<f64>>,
    step: usize,
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let torus = Torus::new(cfg.d, cfg.l)?;
        let heat_kernel = match cfg.heat {
            HeatStep::Euler => None,
            HeatStep::Exact => {
                let k = torus.heat_kernel_1d(cfg.dt * cfg.nu0 / (cfg.dx * cfg.dx));
                let max = k.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                Some(k.into_iter().map(|v| if v.abs() < 1e-17 * max { 0.0 } else { v }).collect())
            }
        };
        let n = torus.len();
        Ok(Self { torus, cfg: cfg.clone(), lap: vec![0.0; n], heat_kernel, step: 0 })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn check(&self, out: &[f64]) -> Result<()> {
        match out.iter().position(|v| !v.is_finite()) {
            Some(site) => Err(KpzError::Unstable { step: self.step, site }),
            None => Ok(()),
        }
    }

    fn height_step(&mut self, h: &[f64], eta: &[f64], out: &mut [f64], lambda: f64, v: f64) -> Result<()> {
        let c = &self.cfg;
        let inv_dx2 = 1.0 / (c.dx * c.dx);
        let grad_scale = 1.0 / (4.0 * c.dx * c.dx);
        let sd = c.d0.sqrt();
        self.torus.laplacian(h, &mut self.lap);
        for i in 0..h.len() {
            let mut rate = c.nu0 * self.lap[i] * inv_dx2;
            if lambda != 0.0 {
                let nb = self.torus.neighbors(i);
                let mut g2 = 0.0;
                for a in 0..c.d {
                    let diff = h[nb[2 * a] as usize] - h[nb[2 * a + 1] as usize];
                    g2 += diff * diff;
                }
                rate += lambda * g2 * grad_scale;
            }
            rate += sd * (eta[i] - v);
            out[i] = h[i] + c.dt * rate;
        }
        self.check(out)?;
        self.step += 1;
        Ok(())
    }

    /// `h ← h + dt(νΔh + λ|∇h|² + √D(η − v))`, centered gradient.
    pub fn step_kpz(&mut self, h: &[f64], eta: &[f64], out: &mut [f64]) -> Result<()> {
        let (lambda, v) = (self.cfg.lambda, self.cfg.v0);
        self.height_step(h, eta, out, lambda, v)
    }

    /// Linear equation, `v` held at 0.
    pub fn step_ew(&mut self, h: &[f64], eta: &[f64], out: &mut [f64]) -> Result<()> {
        self.height_step(h, eta, out, 0.0, 0.0)
    }

    /// `w ← exp(dt·g(η − v))·(heat step of w)`.
    pub fn step_she(&mut self, w: &[f64], eta: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
            return Err(KpzError::Domain(format!("nonpositive Cole-Hopf field at site {i}")));
        }
        self.heat(w, out);
        let (dt, g, v) = (self.cfg.dt, self.cfg.g0(), self.cfg.v0);
        for (o, &e) in out.iter_mut().zip(eta) {
            *o *= (dt * g * (e - v)).exp();
        }
        self.check(out)?;
        self.step += 1;
        Ok(())
    }

    /// Heat part only, `out = P w`.
    pub fn heat(&mut self, w: &[f64], out: &mut [f64]) {
        match &self.heat_kernel {
            None => {
                let r = self.cfg.dt * self.cfg.nu0 / (self.cfg.dx * self.cfg.dx);
                self.torus.laplacian(w, &mut self.lap);
                for ((o, &x), &l) in out.iter_mut().zip(w).zip(&self.lap) {
                    *o = x + r * l;
                }
            }
            Some(k) => {
                out.copy_from_slice(w);
                self.torus.convolve_separable(out, k);
            }
        }
    }
}

pub fn cole_hopf(h: &[f64], cfg: &SimConfig) -> Vec<f64> {
    let a = cfg.lambda / cfg.nu0;
    h.iter().map(|&x| (a * x).exp()).collect()
}

pub fn inverse_cole_hopf(w: &[f64], cfg: &SimConfig) -> Result<Vec<f64>> {
    if !(cfg.lambda > 0.0) {
        return Err(KpzError::Domain("inverse Cole-Hopf needs lambda > 0".into()));
    }
    let a = cfg.nu0 / cfg.lambda;
    w.iter()
        .map(
            |&x| {
                if x > 0.0 {
                    Ok(a * x.ln())
                } else {
                    Err(KpzError::Domain("Cole-Hopf field must be positive".into()))
                }
            },
        )
        .collect()
}

/// `A·exp(−|x − c|²/(2σ²))` centred on the lattice, minimal-image distance.
pub fn bump_initial(torus: &Torus, amplitude: f64, width: f64) -> Vec<f64> {
    let centre = torus.index(&vec![(torus.l() / 2) as i64; torus.d()]);
    (0..torus.len())
        .map(|i| {
            let r = torus.distance(i, centre);
            amplitude * (-r * r / (2.0 * width * width)).exp()
        })
        .collect()
}

/// One trajectory: state, noise source and stepper.
pub struct Simulation {
    stepper: Stepper,
    noise: LatticeNoise,
    state: Vec<f64>,
    scratch: Vec<f64>,
    eta: Vec<f64>,
    step: usize,
}

impl Simulation {
    /// `h0` is the initial height; for the Cole-Hopf equation it is mapped to
    /// `w0 = exp((λ/ν)h0)`.
    pub fn new(cfg: &SimConfig, h0: &[f64], key: &StreamKey) -> Result<Self> {
        let stepper = Stepper::new(cfg)?;
        let n = stepper.torus.len();
        if h0.len() != n {
            return Err(KpzError::Config(format!("initial condition has {} sites, lattice {n}", h0.len())));
        }
        let noise = LatticeNoise::new(&stepper.torus, cfg.noise, cfg.dt, cfg.dx, key)?;
        let state = match cfg.equation {
            Equation::She => cole_hopf(h0, cfg),
            _ => h0.to_vec(),
        };
        Ok(Self { stepper, noise, state, scratch: vec![0.0; n], eta: vec![0.0; n], step: 0 })
    }

    pub fn config(&self) -> &SimConfig {
        &self.stepper.cfg
    }

    pub fn torus(&self) -> &Torus {
        &self.stepper.torus
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.stepper.cfg.dt
    }

    /// Raw state: `h` for KPZ/EW, `w` for the Cole-Hopf equation.
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn last_noise(&self) -> &[f64] {
        &self.eta
    }

    pub fn advance(&mut self) -> Result<()> {
        self.noise.next_slice(&mut self.eta);
        match self.stepper.cfg.equation {
            Equation::Kpz => self.stepper.step_kpz(&self.state, &self.eta, &mut self.scratch)?,
            Equation::Ew => self.stepper.step_ew(&self.state, &self.eta, &mut self.scratch)?,
            Equation::She => self.stepper.step_she(&self.state, &self.eta, &mut self.scratch)?,
        }
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.step += 1;
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.advance()?;
        }
        Ok(())
    }

    /// Height field; for the Cole-Hopf equation `h = (ν/λ) log w`.
    pub fn height(&self) -> Vec<f64> {
        match self.stepper.cfg.equation {
            Equation::She => inverse_cole_hopf(&self.state, &self.stepper.cfg).expect("positive w"),
            _ => self.state.clone(),
        }
    }
}
