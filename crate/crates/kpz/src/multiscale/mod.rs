//! Dyadic time-scale decomposition of the heat kernel and numerical checks
//! of the scale estimates built on it.

mod effective;
mod kernels;
mod partition;
mod powercount;
mod vertex;

pub use effective::{EffectiveMode, EffectivePropagator, SpatialBump};
pub use kernels::{dq, heat_kernel, hermite, q, KernelScale, ScaleReport};
pub use partition::{chi, chi0, SRange, ScalePartition};
pub use powercount::{
    fit_line, gradient_bound_check, pw1_constant, pw1_divergent, pw2_check, GradientGrid, GradientReport, Pw1Variant,
};
pub use vertex::{vertex_neumann, VertexResult};
