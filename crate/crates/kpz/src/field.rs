use serde::{Deserialize, Serialize};

use crate::lattice::Torus;

/// Real field on `nt` time slices of a periodic `d`-dimensional lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub d: usize,
    pub l: usize,
    pub nt: usize,
    pub dt: f64,
    pub dx: f64,
    pub data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(torus: &Torus, nt: usize, dt: f64, dx: f64) -> Self {
        Self { d: torus.d(), l: torus.l(), nt, dt, dx, data: vec![0.0; nt * torus.len()] }
    }

    pub fn sites(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        let s = self.sites();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.sites();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn get(&self, n: usize, site: usize) -> f64 {
        self.data[n * self.sites() + site]
    }

    pub fn horizon(&self) -> f64 {
        self.nt as f64 * self.dt
    }
}
