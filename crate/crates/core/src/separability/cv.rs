use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{svm_targets, LayerSeparability, SeparabilityError, SeparabilityReport, SvmModel, SvmParams};
use crate::dataset::{Label, Study};
use crate::matrix::Matrix;
use crate::par;
use crate::stats::Scaler;

/// Fold index per row. Each class is shuffled with its own seeded stream and
/// dealt round-robin, so per-class fold sizes differ by at most one.
pub fn stratified_folds(y: &[i8], folds: usize, seed: u64) -> Result<Vec<usize>, SeparabilityError> {
    if folds < 2 {
        return Err(SeparabilityError::TooFewFolds(folds));
    }
    let mut assignment = vec![0; y.len()];
    for (stream, (target, class)) in [(-1i8, Label::Correct), (1i8, Label::Error)].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == target).collect();
        if members.len() < folds {
            return Err(SeparabilityError::ClassTooSmall { class, need: folds, got: members.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Fit on the training rows only.
    pub scaler: Scaler,
    pub model: SvmModel,
    pub accuracy: f64,
}

pub fn train_fold(
    x: &Matrix,
    y: &[i8],
    assignment: &[usize],
    fold: usize,
    params: &SvmParams,
) -> Result<FoldOutcome, super::SvmError> {
    let train_idx: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != fold).collect();
    let test_idx: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == fold).collect();
    let train = x.select_rows(&train_idx);
    let scaler = Scaler::fit(&train);
    let train_y: Vec<i8> = train_idx.iter().map(|&i| y[i]).collect();
    let model = super::svm_train(&scaler.transform(&train), &train_y, params)?;
    let test = scaler.transform(&x.select_rows(&test_idx));
    let hits = test_idx.iter().enumerate().filter(|(r, &i)| model.predict(test.row(*r)) == y[i]).count();
    let accuracy = hits as f64 / test_idx.len().max(1) as f64;
    Ok(FoldOutcome { train_idx, test_idx, scaler, model, accuracy })
}

pub fn cross_validate(
    x: &Matrix,
    y: &[i8],
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<Vec<FoldOutcome>, SeparabilityError> {
    if y.len() != x.nrows() {
        return Err(SeparabilityError::LengthMismatch { labels: y.len(), rows: x.nrows() });
    }
    let assignment = stratified_folds(y, folds, seed)?;
    par::map_range(folds, |f| train_fold(x, y, &assignment, f, params))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| SeparabilityError::Svm { layer: 0, source })
}

fn summarize(layer_index: usize, outcomes: &[FoldOutcome]) -> LayerSeparability {
    let fold_accuracies: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    LayerSeparability { layer_index, fold_accuracies, mean_accuracy }
}

/// Cross-validated accuracy for every layer, using the same folds throughout.
pub fn study_separability(
    study: &Study,
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<SeparabilityReport, SeparabilityError> {
    let y = svm_targets(&study.labels());
    stratified_folds(&y, folds, seed)?;
    let per_layer = par::map_slice(&study.layers, |layer| {
        cross_validate(&layer.data, &y, folds, seed, params)
            .map(|o| summarize(layer.layer_index, &o))
            .map_err(|e| match e {
                SeparabilityError::Svm { source, .. } => SeparabilityError::Svm { layer: layer.layer_index, source },
                other => other,
            })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(SeparabilityReport {
        per_layer,
        folds,
        seed,
        c: params.c,
        gamma_rule: params.gamma.to_string(),
        class_weight: if params.balanced { "balanced".into() } else { "none".into() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_seeded() {
        let y: Vec<i8> = (0..53).map(|i| if i % 4 == 0 { 1 } else { -1 }).collect();
        let a = stratified_folds(&y, 5, 11).unwrap();
        assert_eq!(a, stratified_folds(&y, 5, 11).unwrap());
        assert_ne!(a, stratified_folds(&y, 5, 12).unwrap());
        for target in [-1i8, 1] {
            let sizes: Vec<usize> =
                (0..5).map(|f| (0..y.len()).filter(|&i| y[i] == target && a[i] == f).count()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "{sizes:?}");
        }
    }

    #[test]
    fn small_class_is_rejected() {
        let y = [1, 1, 1, -1, -1, -1, -1, -1];
        assert_eq!(
            stratified_folds(&y, 5, 0),
            Err(SeparabilityError::ClassTooSmall { class: Label::Error, need: 5, got: 3 })
        );
        assert_eq!(stratified_folds(&y, 1, 0), Err(SeparabilityError::TooFewFolds(1)));
    }
}
