//! Rotate-and-solve linear discriminant analysis.
//!
//! Data are first rotated by the eigenvectors of `Σ̂ + ρ δ̂ δ̂ᵀ` (pooled
//! within-class covariance plus a rank-one boost along the mean difference),
//! which concentrates the discriminant direction on few coordinates; a sparse
//! linear classifier is then trained on the rotated data.

pub mod classifiers;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod population;
pub mod selection;

pub use error::{Error, Result};
