//! Two-dimensional embeddings for plotting: PCA and exact t-SNE.

mod pca;
mod tsne;

pub use pca::{pca, pca_project, PcaFit};
pub use tsne::{conditional_probabilities, joint_probabilities, tsne_project, TsneParams};

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::matrix::Matrix;

/// UMAP settings written alongside exported coordinates for external tools.
pub const UMAP_N_NEIGHBORS: usize = 5;
pub const UMAP_MIN_DIST: f64 = 0.1;
pub const UMAP_SPREAD: f64 = 1.0;
pub const UMAP_METRIC: &str = "cosine";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProjectionError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("all points are identical")]
    DegenerateRank,
    #[error("perplexity {perplexity} needs at least {need} points, got {got}")]
    PerplexityTooLarge { perplexity: f64, need: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Tsne,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pca => "pca",
            Method::Tsne => "tsne",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pca" => Ok(Method::Pca),
            "tsne" => Ok(Method::Tsne),
            other => Err(format!("unknown projection method {other:?} (expected pca or tsne)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    /// N×2.
    pub coords: Matrix,
    pub labels: Vec<Label>,
    pub method: Method,
    pub params: serde_json::Value,
    pub seed: u64,
}

impl Projection2D {
    /// Attaches labels; the caller guarantees `labels.len() == coords.nrows()`.
    pub fn with_labels(mut self, labels: Vec<Label>) -> Self {
        assert_eq!(labels.len(), self.coords.nrows(), "one label per projected point");
        self.labels = labels;
        self
    }
}
