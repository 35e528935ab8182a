//! Representation-geometry analysis of correct vs. erroneous reasoning states.
//!
//! The crate works on per-layer hidden-state matrices (one pooled vector per
//! sample) and measures how far the error samples sit from the point cloud of
//! correct samples, where along the layer stack each error first breaks away,
//! and how separable the two classes are. Intrinsic dimension (TwoNN) and
//! k-NN mutual information (KSG) characterize each class per layer.
//!
//! Inner loops (neighbor search, per-layer analyses, t-SNE gradients) run on
//! rayon when the `parallel` feature is enabled and fall back to sequential
//! iteration otherwise. Results are identical either way.

pub mod dataset;
pub mod deviation;
pub mod divergence;
pub mod estimators;
pub mod fixtures;
pub mod matrix;
pub mod neighbors;
pub mod par;
pub mod pooling;
pub mod projection;
pub mod report;
pub mod separability;
pub mod stats;
pub mod synth;

pub use dataset::{Label, LayerMatrix, SampleMeta, Study};
pub use matrix::Matrix;

/// Crate version embedded in every report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
