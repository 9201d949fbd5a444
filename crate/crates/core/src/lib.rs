//! Outlier-robust singular values from L1-norm principal components.
//!
//! The core routine, [`decompose::l1_csvd`], fixes the left factor to an
//! L1-PCA basis and then alternates an exhaustive L1 search for each
//! singular value with a Procrustes update of the right factor. Baselines
//! (plain SVD, principal component pursuit) and the experiment harnesses
//! for synthetic data, vowel classification and direction finding live
//! alongside it.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod decompose;
pub mod doa;
pub mod error;
pub mod l1pca;
pub mod matrix;
pub mod rng;
pub mod rpca;
pub mod synth;
pub mod tol;

pub use decompose::{l1_csvd, L1cSvdOptions, L1cSvdResult};
pub use error::{Error, Result};
pub use matrix::{compact_svd, ComplexMatrix, CompactSvd, Matrix};
