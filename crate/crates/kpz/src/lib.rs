//! Numerical laboratory for the KPZ equation in `d ≥ 3` at weak coupling.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feynman_kac;
pub mod field;
pub mod io;
pub mod lattice;
pub mod lattice_spde;
pub mod multiscale;
pub mod noise;
pub mod quad;
pub mod renorm;
pub mod rng;
pub mod scaling;

pub use error::{KpzError, Result};
