//! Earliest layer at which an error sample's deviation exceeds the correct
//! baseline: `D_j^l > mu^l + alpha * sigma^l` (strict), and histograms of
//! those layers in fixed-width bins.

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Study};
use crate::deviation::StudyDeviation;

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BIN_WIDTH: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DivergenceError {
    #[error("{deviations} deviations but {baselines} baselines")]
    LengthMismatch { deviations: usize, baselines: usize },
    #[error("deviation list is empty")]
    Empty,
    #[error("bin width must be at least 1")]
    ZeroBinWidth,
}

/// Mean and population standard deviation of the correct samples' internal
/// distances at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mu: f64,
    pub sigma: f64,
}

impl Baseline {
    pub fn threshold(&self, alpha: f64) -> f64 {
        self.mu + alpha * self.sigma
    }
}

pub fn locate_divergence(per_layer_deviation: &[f64], baselines: &[Baseline], alpha: f64) -> Result<Option<usize>, DivergenceError> {
    if per_layer_deviation.len() != baselines.len() {
        return Err(DivergenceError::LengthMismatch { deviations: per_layer_deviation.len(), baselines: baselines.len() });
    }
    if per_layer_deviation.is_empty() {
        return Err(DivergenceError::Empty);
    }
    Ok(per_layer_deviation.iter().zip(baselines).position(|(d, b)| *d > b.threshold(alpha)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub sample_id: String,
    /// `None` when the sample never crosses the threshold.
    pub divergence_layer: Option<usize>,
    pub per_layer_deviation: Vec<f64>,
}

pub fn baselines(dev: &StudyDeviation) -> Vec<Baseline> {
    dev.layers.iter().map(|l| Baseline { mu: l.mu_correct, sigma: l.sigma_correct }).collect()
}

/// One record per error sample, reusing the deviation analysis' distances
/// and baselines.
pub fn divergence_records(study: &Study, dev: &StudyDeviation, alpha: f64) -> Vec<DivergenceRecord> {
    let base = baselines(dev);
    let error_ids: Vec<&str> = study.samples.iter().filter(|s| s.label == Label::Error).map(|s| s.id.as_str()).collect();
    error_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let per_layer: Vec<f64> = dev.layers.iter().map(|l| l.per_error_dist[j]).collect();
            let divergence_layer = locate_divergence(&per_layer, &base, alpha).expect("one baseline per layer");
            DivergenceRecord { sample_id: id.to_string(), divergence_layer, per_layer_deviation: per_layer }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// `"0-7"` for closed bins, `"32+"` for the trailing open bin.
    pub label: String,
    pub start: usize,
    /// Inclusive end; `None` for the open bin.
    pub end: Option<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceHistogram {
    pub bin_width: usize,
    pub alpha: f64,
    pub num_layers: usize,
    pub bins: Vec<HistogramBin>,
    pub undiverged_count: usize,
}

impl DivergenceHistogram {
    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.count).collect()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum::<usize>() + self.undiverged_count
    }

    /// Index of the bin a layer falls in.
    pub fn bin_of(&self, layer: usize) -> usize {
        (layer / self.bin_width).min(self.bins.len().saturating_sub(1))
    }

    /// Index of the fullest bin (first on ties); `None` when every bin is empty.
    pub fn peak(&self) -> Option<usize> {
        let max = self.bins.iter().map(|b| b.count).max()?;
        (max > 0).then(|| self.bins.iter().position(|b| b.count == max).expect("max exists"))
    }
}

/// Bins of `bin_width` layers over `0..num_layers`. When `num_layers` is not a
/// multiple of the width, the remainder forms one open-ended final bin.
pub fn divergence_histogram(records: &[DivergenceRecord], num_layers: usize, bin_width: usize, alpha: f64) -> Result<DivergenceHistogram, DivergenceError> {
    if bin_width == 0 {
        return Err(DivergenceError::ZeroBinWidth);
    }
    let full = num_layers / bin_width;
    let mut bins: Vec<HistogramBin> = (0..full)
        .map(|b| HistogramBin {
            label: format!("{}-{}", b * bin_width, (b + 1) * bin_width - 1),
            start: b * bin_width,
            end: Some((b + 1) * bin_width - 1),
            count: 0,
        })
        .collect();
    if !num_layers.is_multiple_of(bin_width) || num_layers == 0 {
        let start = full * bin_width;
        bins.push(HistogramBin { label: format!("{start}+"), start, end: None, count: 0 });
    }
    let mut undiverged_count = 0;
    let last = bins.len() - 1;
    for r in records {
        match r.divergence_layer {
            Some(l) => bins[(l / bin_width).min(last)].count += 1,
            None => undiverged_count += 1,
        }
    }
    Ok(DivergenceHistogram { bin_width, alpha, num_layers, bins, undiverged_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(mu: f64, sigma: f64, n: usize) -> Vec<Baseline> {
        vec![Baseline { mu, sigma }; n]
    }

    fn rec(layer: Option<usize>) -> DivergenceRecord {
        DivergenceRecord { sample_id: String::new(), divergence_layer: layer, per_layer_deviation: vec![] }
    }

    #[test]
    fn first_strict_exceedance() {
        let b = flat(1.0, 0.1, 4);
        assert_eq!(locate_divergence(&[1.0, 1.1, 1.3, 1.5], &b, 2.0), Ok(Some(2)));
        assert_eq!(locate_divergence(&[1.0, 1.1, 1.2, 0.9], &b, 2.0), Ok(None));
        assert_eq!(locate_divergence(&[9.0, 0.0, 0.0, 0.0], &b, 2.0), Ok(Some(0)));
        assert_eq!(locate_divergence(&[1.0], &b, 2.0), Err(DivergenceError::LengthMismatch { deviations: 1, baselines: 4 }));
    }

    #[test]
    fn tie_at_threshold_does_not_diverge() {
        let b = flat(1.0, 0.25, 1);
        assert_eq!(locate_divergence(&[1.5], &b, 2.0), Ok(None));
    }

    #[test]
    fn counting_example() {
        let records: Vec<_> = [0, 3, 9, 25].into_iter().map(|l| rec(Some(l))).collect();
        let h = divergence_histogram(&records, 32, 8, 2.0).unwrap();
        let labels: Vec<&str> = h.bins.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["0-7", "8-15", "16-23", "24-31"]);
        assert_eq!(h.counts(), vec![2, 1, 0, 1]);
        assert_eq!(h.peak(), Some(0));
    }

    #[test]
    fn open_last_bin_and_undiverged() {
        let records = vec![rec(Some(33)), rec(None), rec(Some(35)), rec(Some(31))];
        let h = divergence_histogram(&records, 36, 8, 1.0).unwrap();
        assert_eq!(h.bins.last().unwrap().label, "32+");
        assert_eq!(h.bins.last().unwrap().end, None);
        assert_eq!(h.counts(), vec![0, 0, 0, 1, 2]);
        assert_eq!(h.undiverged_count, 1);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn empty_records_give_zero_bins() {
        let h = divergence_histogram(&[], 32, 8, 2.0).unwrap();
        assert_eq!(h.counts(), vec![0; 4]);
        assert_eq!(h.peak(), None);
        assert_eq!(divergence_histogram(&[], 32, 0, 2.0), Err(DivergenceError::ZeroBinWidth));
    }

    proptest! {
        #[test]
        fn raising_alpha_never_diverges_earlier(
            devs in proptest::collection::vec(0.0f64..5.0, 1..40),
            mus in proptest::collection::vec(0.5f64..2.0, 40),
            sigmas in proptest::collection::vec(0.0f64..1.0, 40),
            a1 in 0.0f64..3.0, extra in 0.0f64..3.0,
        ) {
            let b: Vec<Baseline> = (0..devs.len()).map(|i| Baseline { mu: mus[i], sigma: sigmas[i] }).collect();
            let lo = locate_divergence(&devs, &b, a1).unwrap();
            let hi = locate_divergence(&devs, &b, a1 + extra).unwrap();
            if let Some(h) = hi {
                let l = lo.expect("diverged at the stricter alpha implies diverged at the looser one");
                prop_assert!(l <= h);
            }
            if let Some(l) = lo {
                prop_assert!(devs[l] > b[l].threshold(a1));
                prop_assert!((0..l).all(|i| devs[i] <= b[i].threshold(a1)));
            }
        }

        #[test]
        fn histogram_ignores_record_order(layers in proptest::collection::vec(proptest::option::of(0usize..40), 0..60)) {
            let records: Vec<_> = layers.iter().map(|&l| rec(l)).collect();
            let mut rev = records.clone();
            rev.reverse();
            let a = divergence_histogram(&records, 40, 8, 2.0).unwrap();
            prop_assert_eq!(&a, &divergence_histogram(&rev, 40, 8, 2.0).unwrap());
            prop_assert_eq!(a.total(), records.len());
        }
    }
}
