use serde::{Deserialize, Serialize};

use super::{jitter, EstimatorError, JITTER_SEED};
use crate::matrix::{chebyshev, Matrix};
use crate::par;
use crate::stats::digamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Mutual information in nats.
    pub mi_nats: f64,
    pub k: usize,
    pub n: usize,
}

/// KSG (first variant) mutual information between the rows of `z` and `y`.
///
/// Joint distances use the max-norm over both subspaces; `eps_i` is the
/// distance to the k-th joint neighbor, and `n_z`, `n_y` count marginal
/// points strictly closer than `eps_i`:
/// `I = psi(k) - <psi(n_z + 1) + psi(n_y + 1)> + psi(N)`.
pub fn ksg_mi(z: &Matrix, y: &Matrix, k: usize) -> Result<MiEstimate, EstimatorError> {
    ksg_mi_with_seed(z, y, k, JITTER_SEED)
}

pub fn ksg_mi_with_seed(z: &Matrix, y: &Matrix, k: usize, seed: u64) -> Result<MiEstimate, EstimatorError> {
    if k == 0 {
        return Err(EstimatorError::ZeroK);
    }
    let n = z.nrows();
    if n != y.nrows() {
        return Err(EstimatorError::LengthMismatch(n, y.nrows()));
    }
    if n <= k + 1 {
        return Err(EstimatorError::TooFewPoints { need: k + 2, got: n });
    }
    let z = jitter(z, seed);
    let y = jitter(y, seed.wrapping_add(1));

    let terms: Vec<f64> = par::map_range(n, |i| {
        let zi = z.row(i);
        let yi = y.row(i);
        let mut dz = Vec::with_capacity(n - 1);
        let mut dy = Vec::with_capacity(n - 1);
        let mut joint = Vec::with_capacity(n - 1);
        for j in (0..n).filter(|&j| j != i) {
            let a = chebyshev(zi, z.row(j));
            let b = chebyshev(yi, y.row(j));
            dz.push(a);
            dy.push(b);
            joint.push(a.max(b));
        }
        let (_, eps, _) = joint.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let nz = dz.iter().filter(|&&d| d < eps).count();
        let ny = dy.iter().filter(|&&d| d < eps).count();
        digamma(nz as f64 + 1.0).expect("positive") + digamma(ny as f64 + 1.0).expect("positive")
    });
    let avg = terms.iter().sum::<f64>() / n as f64;
    let mi = digamma(k as f64).expect("k >= 1") - avg + digamma(n as f64).expect("n >= 1");
    Ok(MiEstimate { mi_nats: mi, k, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> (Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            z.push(a);
            y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        (Matrix::column(&z), Matrix::column(&y))
    }

    #[test]
    fn argument_checks() {
        let (z, y) = gaussian_pair(10, 0.5, 1);
        assert_eq!(ksg_mi(&z, &y, 0), Err(EstimatorError::ZeroK));
        assert_eq!(ksg_mi(&z, &y, 9), Err(EstimatorError::TooFewPoints { need: 11, got: 10 }));
        let short = Matrix::column(&[1.0, 2.0]);
        assert_eq!(ksg_mi(&z, &short, 1), Err(EstimatorError::LengthMismatch(10, 2)));
    }

    #[test]
    fn moderate_correlation_near_closed_form() {
        let (z, y) = gaussian_pair(1500, 0.5, 11);
        let truth = -0.5 * (1.0f64 - 0.25).ln();
        let est = ksg_mi(&z, &y, 5).unwrap();
        assert!((est.mi_nats - truth).abs() < 0.05, "{est:?} vs {truth}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (z, y) = gaussian_pair(300, 0.7, 5);
        assert_eq!(ksg_mi(&z, &y, 5), ksg_mi(&z, &y, 5));
    }
}
