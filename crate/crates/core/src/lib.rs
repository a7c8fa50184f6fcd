//! Group-aware contrastive alignment of retinal morphometry with templated
//! clinical narratives, and downstream incident-disease classification.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`cohort`]: synthetic cohorts, CSV files, splits and imputation
//! - [`narrative`]: report rendering and hashed text features
//! - [`gacl`]: group-aware label matrices
//! - [`align`]: projection heads, contrastive losses and training
//! - [`downstream`]: RBF SVM, calibration, cross-validation and metrics
//! - [`experiments`]: the experiment battery and its tables
//! - [`manifest`]: run manifests and file digests

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod cohort;
pub mod downstream;
pub mod error;
pub mod experiments;
pub mod gacl;
pub mod manifest;
pub mod narrative;

pub use error::{Error, Result};
