//! Per-layer manifold characterization: TwoNN intrinsic dimension and KSG
//! mutual information.
//!
//! Both estimators assume continuous data. Before any neighbor search the
//! inputs receive a fixed-seed uniform jitter of `1e-10 x` the largest
//! absolute coordinate, which separates exact duplicates without measurably
//! moving distinct points.

mod ksg;
mod twonn;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
pub use ksg::{ksg_mi, ksg_mi_with_seed, MiEstimate};
pub use twonn::{twonn_id, twonn_id_with_seed, IdEstimate};

/// Seed used for tie-breaking jitter unless the caller supplies one.
pub const JITTER_SEED: u64 = 0x005E_ED0F_71E5;
/// Jitter magnitude relative to the data scale.
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimatorError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("{0} points have a zero nearest-neighbor distance after jitter")]
    DegenerateRatios(usize),
    #[error("discard fraction {0} outside [0, 1)")]
    InvalidDiscard(f64),
    #[error("Z has {0} rows but Y has {1}")]
    LengthMismatch(usize, usize),
    #[error("k must be at least 1")]
    ZeroK,
}

pub(crate) fn jitter(x: &Matrix, seed: u64) -> Matrix {
    let scale = x.max_abs();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let amp = JITTER_SCALE * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v += amp * rng.random_range(-1.0..1.0);
    }
    out
}
