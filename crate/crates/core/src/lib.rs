//! Two-step model-based clustering of functional data.
//!
//! Noisy observations of each function are first projected onto a basis by
//! ordinary least squares ([`projection`]); the resulting coefficient
//! vectors are then clustered with a Gaussian mixture fitted by EM
//! ([`gmm`]), allocated by maximum posterior probability and scored with the
//! adjusted Rand index ([`cluster`]). [`model_select`] chooses the number of
//! components and [`simgen`] generates labelled synthetic data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod gmm;
pub mod io;
pub mod manifest;
pub mod model_select;
pub mod projection;
pub mod simgen;

pub use basis::{BasisKind, BasisSystem, DesignMatrix, SampleGrid};
pub use cluster::{adjusted_rand_index, allocate, Partition};
pub use error::{Error, Result};
pub use gmm::{EmConfig, FitReport, GmmParams, ResponsibilityMatrix};
pub use projection::{project, CoefficientMatrix, FunctionalDataset};
