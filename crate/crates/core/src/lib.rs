//! Graded nilpotent Lie groups in exponential coordinates, Pansu
//! differentials of contact maps, and a dilation-scaled quantization.

pub mod algebra;
pub mod convergence;
pub mod error;
pub mod group_law;
pub mod homogeneous;
pub mod invariance;
pub mod maps;
pub mod pansu;
pub mod poly;
pub mod quadrature;
pub mod quantize;
pub mod scalar;

pub use algebra::{builtin, Builtin, GradedLieAlgebra, ValidationReport, Violation};
pub use error::{Error, Result};
pub use group_law::{Group, GroupLaw, Truncation};
pub use homogeneous::{dilate, quasi_norm, Dilation};
pub use scalar::{Rational, Scalar};
pub use maps::{test_map, SmoothMap};
