//! Per-layer separability of correct vs. error representations.
//!
//! Error samples are the positive class (+1) and correct samples the negative
//! class (-1). Accuracy is estimated by stratified k-fold cross-validation of
//! an RBF-kernel SVM, standardizing features on each training fold.

mod cv;
mod svm;

pub use cv::{cross_validate, stratified_folds, study_separability, train_fold, FoldOutcome};
pub use svm::{svm_train, Gamma, SvmError, SvmModel, SvmParams};

use serde::{Deserialize, Serialize};

use crate::dataset::Label;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SeparabilityError {
    #[error("class {class:?} has {got} members, fewer than the {need} folds")]
    ClassTooSmall { class: Label, need: usize, got: usize },
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("label count {labels} does not match row count {rows}")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("layer {layer}: {source}")]
    Svm { layer: usize, source: SvmError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSeparability {
    pub layer_index: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub per_layer: Vec<LayerSeparability>,
    pub folds: usize,
    pub seed: u64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma_rule: String,
    pub class_weight: String,
}

/// Maps labels to SVM targets: error → +1, correct → -1.
pub fn svm_targets(labels: &[Label]) -> Vec<i8> {
    labels.iter().map(|l| if *l == Label::Error { 1 } else { -1 }).collect()
}
