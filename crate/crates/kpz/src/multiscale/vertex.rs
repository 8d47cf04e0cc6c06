use serde::Serialize;

use crate::error::{KpzError, Result};
use crate::field::SpaceTimeField;
use crate::lattice_spde::{SimConfig, Stepper};

#[derive(Clone, Debug, Serialize)]
pub struct VertexResult {
    /// `Σ_{m≤N} T_m` at the final time.
    pub w: Vec<f64>,
    /// `max |T_m|` per order.
    pub term_norms: Vec<f64>,
    /// Size of the last kept term, used as the truncation estimate.
    pub truncation: f64,
}

/// Vertex (Neumann) expansion of the Cole-Hopf scheme to order `N`.
///
/// One SHE step is `w ↦ (1 + V_k) P w` with `P` the heat step and
/// `V_k = e^{dt·g(η_k − v)} − 1`, so `w_n = Σ_m T_m^n` with
/// `T_m^{k+1} = P T_m^k + V_k P T_{m−1}^k` and `T_0^0 = w₀`.
pub fn vertex_neumann(
    cfg: &SimConfig,
    w0: &[f64],
    noise: &SpaceTimeField,
    order: usize,
    steps: usize,
) -> Result<VertexResult> {
    if order > 8 {
        return Err(KpzError::Argument("vertex order N ≤ 8".into()));
    }
    if steps > noise.nt {
        return Err(KpzError::Horizon { requested: steps as f64 * cfg.dt, available: noise.horizon() });
    }
    let mut stepper = Stepper::new(cfg)?;
    let n = w0.len();
    let (dt, g, v) = (cfg.dt, cfg.g0(), cfg.v0);
    let mut terms = vec![vec![0.0; n]; order + 1];
    terms[0].copy_from_slice(w0);
    let mut heated = vec![vec![0.0; n]; order + 1];
    for k in 0..steps {
        let eta = noise.slice(k);
        for m in 0..=order {
            stepper.heat(&terms[m], &mut heated[m]);
        }
        for m in (0..=order).rev() {
            for i in 0..n {
                let vk = (dt * g * (eta[i] - v)).exp_m1();
                let lower = if m > 0 { vk * heated[m - 1][i] } else { 0.0 };
                terms[m][i] = heated[m][i] + lower;
            }
        }
    }
    let term_norms: Vec<f64> = terms.iter().map(|t| t.iter().fold(0.0f64, |a, b| a.max(b.abs()))).collect();
    if order >= 1 && term_norms[order - 1] > 0.0 && term_norms[order] >= term_norms[order - 1] {
        return Err(KpzError::NoConvergence(format!(
            "vertex series term ratio {} ≥ 1",
            term_norms[order] / term_norms[order - 1]
        )));
    }
    let mut w = vec![0.0; n];
    for t in &terms {
        for (a, b) in w.iter_mut().zip(t) {
            *a += b;
        }
    }
    Ok(VertexResult { w, truncation: term_norms[order], term_norms })
}
