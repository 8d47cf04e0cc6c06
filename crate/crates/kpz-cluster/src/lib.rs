//! Exact combinatorial identities behind cluster expansions.
//!
//! Everything here is deterministic and closed-form: forest sums are
//! integrated over weight-ordering simplices, Gaussian moments come from a
//! Wick evaluator, and partition coefficients are integers.

pub mod bkar;
pub mod forest;
pub mod mayer;
pub mod partitions;
pub mod poly;
pub mod wick;

pub use bkar::{bkar2_sum, bkar_sum};
pub use forest::{enumerate_forests, Forest, InterpolationMatrix, Kind, ObjectSet};
pub use mayer::{MayerSystem, Polymer};
pub use partitions::{leibniz_splits, log_derivative_coeffs, set_partitions, Partition};
pub use poly::Poly;
pub use wick::{gaussian_ds_identity_check, GaussianFamily, IdentityReport, Poly1};

/// Largest object count accepted by the forest enumerator.
pub const MAX_OBJECTS: usize = 8;
/// Largest per-variable degree accepted by the forest sums.
pub const MAX_DEGREE: u32 = 6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("{n} objects exceed the enumeration bound {max}; up to {estimate} link subsets would be visited")]
    TooManyObjects { n: usize, max: usize, estimate: u128 },
    #[error("link ({0}, {1}) is invalid: self-link or object out of range")]
    BadLink(usize, usize),
    #[error("duplicate link ({0}, {1})")]
    DuplicateLink(usize, usize),
    #[error("polynomial has {got} variables, object set has {expected} links")]
    ArityMismatch { expected: usize, got: usize },
    #[error("variable {var} has degree {degree}, above the limit {max}")]
    DegreeTooHigh { var: usize, degree: u32, max: u32 },
    #[error("type labels: {0}")]
    BadKinds(String),
    #[error("polymers {0} and {1} share the external box {2}")]
    ExternalOverlap(usize, usize, u64),
    #[error("covariance family is not positive semidefinite at s = {s} (min eigenvalue {min_eig:e})")]
    NotPsd { s: f64, min_eig: f64 },
    #[error("partition size {0} exceeds the supported bound 8")]
    PartitionTooLarge(usize),
}
