use serde::{Deserialize, Serialize};

use super::{jitter, EstimatorError, JITTER_SEED};
use crate::matrix::Matrix;
use crate::neighbors::{knn, Metric, PointSet};

/// Minimum sample count accepted by [`twonn_id`].
pub const MIN_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    pub d_int: f64,
    pub n_used: usize,
    pub discard_fraction: f64,
}

/// TwoNN intrinsic dimension.
///
/// For every point the ratio `mu = r2 / r1` of its second to first
/// nearest-neighbor distance follows `F(mu) = 1 - mu^(-d)`. The ratios are
/// sorted, the largest `discard_fraction` dropped, and `d` is the slope of
/// `-ln(1 - F_emp(mu_(i)))` against `ln mu_(i)` fitted through the origin,
/// with `F_emp(mu_(i)) = i / N`.
pub fn twonn_id(points: &Matrix, discard_fraction: f64) -> Result<IdEstimate, EstimatorError> {
    twonn_id_with_seed(points, discard_fraction, JITTER_SEED)
}

pub fn twonn_id_with_seed(points: &Matrix, discard_fraction: f64, seed: u64) -> Result<IdEstimate, EstimatorError> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(EstimatorError::InvalidDiscard(discard_fraction));
    }
    let n = points.nrows();
    if n < MIN_POINTS {
        return Err(EstimatorError::TooFewPoints { need: MIN_POINTS, got: n });
    }
    let x = jitter(points, seed);
    let ps = PointSet::new(&x, Metric::Euclidean).expect("non-empty");
    let nn = knn(&ps, &x, 2, true).expect("n >= 3");

    let mut mu = Vec::with_capacity(n);
    let mut zero = 0;
    for q in 0..n {
        let d = nn.distances_row(q);
        if d[0] == 0.0 {
            zero += 1;
        } else {
            mu.push(d[1] / d[0]);
        }
    }
    if zero > 0 {
        return Err(EstimatorError::DegenerateRatios(zero));
    }
    mu.sort_by(f64::total_cmp);

    // i/N reaches 1 at i = N, so the top ratio is always excluded
    let n_used = (((n as f64) * (1.0 - discard_fraction)).floor() as usize).min(n - 1);
    let nf = n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &m) in mu.iter().take(n_used).enumerate() {
        let x = m.ln();
        let y = -(1.0 - (i + 1) as f64 / nf).ln();
        sxy += x * y;
        sxx += x * x;
    }
    if sxx == 0.0 {
        return Err(EstimatorError::DegenerateRatios(n));
    }
    Ok(IdEstimate { d_int: sxy / sxx, n_used, discard_fraction })
}
