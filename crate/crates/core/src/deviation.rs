//! Deviation of error representations from the correct-sample point cloud.
//!
//! For layer `l`, an error sample's deviation `D_j` is its mean distance to
//! its `k'` nearest correct samples; a correct sample's internal distance
//! `d_i` is the same quantity against the other correct samples. The two
//! distributions are compared with Welch's t-test per layer and pooled across
//! layers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition_matrix, Label, Study};
use crate::matrix::Matrix;
use crate::neighbors::{knn, Metric, NeighborError, PointSet};
use crate::par;
use crate::stats::{mean, population_std, spearman, SpearmanResult, StatsError, welch_t, WelchResult};

pub const DEFAULT_K_PRIME: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DeviationError {
    #[error("layer {layer}: {got} correct samples, need at least k' + 1 = {need}")]
    TooFewCorrect { layer: usize, need: usize, got: usize },
    #[error("layer {layer} has no {class:?} samples")]
    EmptyClass { layer: usize, class: Label },
    #[error("subsample ratio {0} outside (0, 1]")]
    BadRatio(f64),
    #[error("k' list is empty or contains 0")]
    BadK,
    #[error(transparent)]
    Neighbors(#[from] NeighborError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDeviation {
    pub layer_index: usize,
    pub k_prime: usize,
    /// `D_j`, in the order error samples appear in the manifest.
    pub per_error_dist: Vec<f64>,
    /// `d_i`, in the order correct samples appear in the manifest.
    pub per_correct_dist: Vec<f64>,
    pub mean_error: f64,
    pub mean_correct: f64,
    /// Mean of `d_i`; the divergence baseline.
    pub mu_correct: f64,
    /// Population standard deviation of `d_i`.
    pub sigma_correct: f64,
    /// `None` if either class has fewer than two samples.
    pub welch: Option<WelchResult>,
}

impl LayerDeviation {
    fn from_distances(layer_index: usize, k_prime: usize, per_error_dist: Vec<f64>, per_correct_dist: Vec<f64>) -> Self {
        let mean_error = mean(&per_error_dist);
        let mean_correct = mean(&per_correct_dist);
        let sigma_correct = population_std(&per_correct_dist);
        let welch = welch_t(&per_error_dist, &per_correct_dist).ok();
        Self {
            layer_index,
            k_prime,
            per_error_dist,
            per_correct_dist,
            mean_error,
            mean_correct,
            mu_correct: mean_correct,
            sigma_correct,
            welch,
        }
    }
}

/// Deviation for one layer at a single `k'` under euclidean distance.
pub fn layer_deviation(correct: &Matrix, error: &Matrix, k_prime: usize) -> Result<LayerDeviation, DeviationError> {
    Ok(layer_deviation_sweep(0, correct, error, &[k_prime], Metric::Euclidean)?.remove(0))
}

/// Deviations for several `k'` values from a single neighbor search at the
/// largest one. Because each row of neighbor distances is sorted, the
/// per-sample means are non-decreasing in `k'`.
pub fn layer_deviation_sweep(
    layer_index: usize,
    correct: &Matrix,
    error: &Matrix,
    k_primes: &[usize],
    metric: Metric,
) -> Result<Vec<LayerDeviation>, DeviationError> {
    let k_max = *k_primes.iter().max().ok_or(DeviationError::BadK)?;
    if k_primes.contains(&0) {
        return Err(DeviationError::BadK);
    }
    if error.nrows() == 0 {
        return Err(DeviationError::EmptyClass { layer: layer_index, class: Label::Error });
    }
    if correct.nrows() < k_max + 1 {
        return Err(DeviationError::TooFewCorrect { layer: layer_index, need: k_max + 1, got: correct.nrows() });
    }
    let base = PointSet::new(correct, metric)?;
    let to_error = knn(&base, error, k_max, false)?;
    let internal = knn(&base, correct, k_max, true)?;
    Ok(k_primes
        .iter()
        .map(|&k| LayerDeviation::from_distances(layer_index, k, to_error.mean_distances(k), internal.mean_distances(k)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDeviationSummary {
    /// Unweighted mean over layers of `D_error^l`.
    pub avg_error_dist: f64,
    /// Unweighted mean over layers of `D_correct^l`.
    pub avg_correct_dist: f64,
    /// `avg_error_dist / avg_correct_dist - 1`.
    pub relative_deviation: f64,
    /// Welch test on all per-sample distances concatenated across layers.
    pub pooled_welch: Option<WelchResult>,
    /// Mean of the per-layer Welch t statistics.
    pub mean_layer_t: Option<f64>,
    pub k_prime: usize,
    pub accuracy: Option<f64>,
}

impl StudyDeviationSummary {
    pub fn from_layers(layers: &[LayerDeviation], accuracy: Option<f64>) -> Self {
        let avg_error_dist = layers.iter().map(|l| l.mean_error).sum::<f64>() / layers.len() as f64;
        let avg_correct_dist = layers.iter().map(|l| l.mean_correct).sum::<f64>() / layers.len() as f64;
        let all_err: Vec<f64> = layers.iter().flat_map(|l| l.per_error_dist.iter().copied()).collect();
        let all_cor: Vec<f64> = layers.iter().flat_map(|l| l.per_correct_dist.iter().copied()).collect();
        let ts: Vec<f64> = layers.iter().filter_map(|l| l.welch.map(|w| w.t_stat)).collect();
        Self {
            avg_error_dist,
            avg_correct_dist,
            relative_deviation: relative_deviation(avg_error_dist, avg_correct_dist),
            pooled_welch: welch_t(&all_err, &all_cor).ok(),
            mean_layer_t: (ts.len() == layers.len() && !ts.is_empty()).then(|| mean(&ts)),
            k_prime: layers.first().map_or(0, |l| l.k_prime),
            accuracy,
        }
    }
}

pub fn relative_deviation(avg_error: f64, avg_correct: f64) -> f64 {
    avg_error / avg_correct - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDeviation {
    pub layers: Vec<LayerDeviation>,
    pub summary: StudyDeviationSummary,
}

/// Per-layer deviation and study summary at one `k'`.
pub fn study_deviation(study: &Study, k_prime: usize, metric: Metric) -> Result<StudyDeviation, DeviationError> {
    Ok(study_deviation_sweep(study, &[k_prime], metric)?.remove(0))
}

/// One [`StudyDeviation`] per entry of `k_primes`, sharing neighbor searches.
pub fn study_deviation_sweep(study: &Study, k_primes: &[usize], metric: Metric) -> Result<Vec<StudyDeviation>, DeviationError> {
    let labels = study.labels();
    let per_layer: Vec<Result<Vec<LayerDeviation>, DeviationError>> = par::map_slice(&study.layers, |layer| {
        let p = partition_matrix(&layer.data, &labels);
        if p.correct.nrows() == 0 {
            return Err(DeviationError::EmptyClass { layer: layer.layer_index, class: Label::Correct });
        }
        layer_deviation_sweep(layer.layer_index, &p.correct, &p.error, k_primes, metric)
    });
    let per_layer: Vec<Vec<LayerDeviation>> = per_layer.into_iter().collect::<Result<_, _>>()?;
    let accuracy = Some(study.accuracy());
    Ok((0..k_primes.len())
        .map(|ki| {
            let layers: Vec<LayerDeviation> = per_layer.iter().map(|v| v[ki].clone()).collect();
            let summary = StudyDeviationSummary::from_layers(&layers, accuracy);
            StudyDeviation { layers, summary }
        })
        .collect())
}

/// Spearman correlation between accuracy and relative deviation across
/// studies, from `(accuracy, relative_deviation)` pairs.
pub fn cross_task_correlation(pairs: &[(f64, f64)]) -> Result<SpearmanResult, StatsError> {
    let (acc, rel): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    spearman(&acc, &rel)
}

/// Sample indices keeping `round(ratio * n_c)` members of each class, drawn
/// with a seeded shuffle and returned in manifest order.
pub fn subsample_indices(labels: &[Label], ratio: f64, seed: u64) -> Result<Vec<usize>, DeviationError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DeviationError::BadRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for class in [Label::Correct, Label::Error] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n_keep = ((idx.len() as f64) * ratio).round() as usize;
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..n_keep.min(idx.len())]);
    }
    keep.sort_unstable();
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_enumerated_error_distance() {
        let correct = m(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let error = m(&[[2.0, 2.0]]);
        let d = layer_deviation(&correct, &error, 2).unwrap();
        // two nearest are (1,0) and (0,1), both at sqrt(5); (0,0) is at 2*sqrt(2)
        assert!((d.per_error_dist[0] - 5f64.sqrt()).abs() < 1e-15);
        assert!((d.mean_error - 2.236_067_977_499_79).abs() < 1e-12);
        assert!(d.welch.is_none());
    }

    #[test]
    fn coincident_error_point_has_zero_deviation() {
        let correct = m(&[[0.0, 0.0], [3.0, 1.0]]);
        let error = m(&[[3.0, 1.0]]);
        assert_eq!(layer_deviation(&correct, &error, 1).unwrap().per_error_dist, vec![0.0]);
    }

    #[test]
    fn square_corners_internal_distance() {
        let correct = m(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let error = m(&[[5.0, 5.0]]);
        let d = layer_deviation(&correct, &error, 2).unwrap();
        assert_eq!(d.per_correct_dist, vec![1.0; 4]);
        assert_eq!(d.mu_correct, 1.0);
        assert_eq!(d.sigma_correct, 0.0);
    }

    #[test]
    fn too_few_correct() {
        let correct = m(&[[0.0, 0.0], [1.0, 0.0]]);
        let error = m(&[[5.0, 5.0]]);
        assert_eq!(layer_deviation(&correct, &error, 2), Err(DeviationError::TooFewCorrect { layer: 0, need: 3, got: 2 }));
    }

    #[test]
    fn published_relative_deviation_examples() {
        assert!((relative_deviation(1.45, 0.91) - 0.593_406_593).abs() < 1e-9);
        assert!((relative_deviation(40.94, 23.73) - 0.725_242_309).abs() < 1e-9);
        assert_eq!(relative_deviation(3.3, 3.3), 0.0);
    }

    #[test]
    fn subsample_keeps_class_proportions() {
        let labels: Vec<Label> = (0..100).map(|i| if i % 4 == 0 { Label::Error } else { Label::Correct }).collect();
        let idx = subsample_indices(&labels, 0.5, 42).unwrap();
        let errors = idx.iter().filter(|&&i| labels[i] == Label::Error).count();
        assert_eq!(errors, 13);
        assert_eq!(idx.len() - errors, 38);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(idx, subsample_indices(&labels, 0.5, 42).unwrap());
        assert_eq!(subsample_indices(&labels, 1.0, 0).unwrap().len(), 100);
        assert!(subsample_indices(&labels, 0.0, 0).is_err());
    }
}
