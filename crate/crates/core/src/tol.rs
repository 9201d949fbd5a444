//! Shared numerical tolerances.

/// Maximum entry of `QᵀQ − I` accepted as orthonormal.
pub const ORTHONORMAL: f64 = 1e-10;

/// Reconstruction residual for full-rank decompositions.
pub const RECONSTRUCTION: f64 = 1e-10;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_RELATIVE: f64 = 1e-12;

/// Candidate guard for ratio searches: entries of `v` smaller than this are skipped.
pub const CANDIDATE_GUARD: f64 = 1e-9;
