//! Statistical primitives shared by the analyses.

pub mod special;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
pub use special::{digamma, student_t_cdf, student_t_two_sided, DomainError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} samples per group, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input has zero rank variance; correlation is undefined")]
    ConstantInput,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n − 1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Population (n) standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Welch two-sample t-test result.
///
/// `dof` is `None` when both samples have zero variance; `t_stat` is then 0
/// for equal means and ±∞ otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_stat: f64,
    pub dof: Option<f64>,
    pub p_two_sided: f64,
}

impl WelchResult {
    pub fn is_degenerate(&self) -> bool {
        self.dof.is_none()
    }
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    let got = a.len().min(b.len());
    if got < 2 {
        return Err(StatsError::TooFewSamples { need: 2, got });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let diff = ma - mb;
        return Ok(if diff == 0.0 {
            WelchResult { t_stat: 0.0, dof: None, p_two_sided: 1.0 }
        } else {
            WelchResult { t_stat: diff.signum() * f64::INFINITY, dof: None, p_two_sided: 0.0 }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult { t_stat: t, dof: Some(dof), p_two_sided: student_t_two_sided(t, dof) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; the p-value uses the t approximation
/// t = ρ √((n − 2)/(1 − ρ²)) with n − 2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { need: 3, got: n });
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y)).ok_or(StatsError::ConstantInput)?;
    Ok(SpearmanResult { rho, p_value: spearman_p_value(rho, n), n })
}

pub fn spearman_p_value(rho: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    student_t_two_sided(rho * (df / denom).sqrt(), df)
}

/// Per-column z-scoring with population standard deviation.
///
/// Constant columns (std below a relative 1e-12 of the column scale) map to
/// zero and record a std of 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = x.shape();
        let nf = n as f64;
        let mut means = vec![0.0; d];
        for row in x.rows_iter() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; d];
        for row in x.rows_iter() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = var
            .iter()
            .zip(&means)
            .map(|(s, m)| {
                let sd = (s / nf).sqrt();
                if sd <= 1e-12 * m.abs().max(1e-300) || sd == 0.0 {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Self { means, stds }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.nrows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.stds) {
                *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        out
    }
}

/// Fits a [`Scaler`] on `x` and applies it.
pub fn standardize(x: &Matrix) -> (Matrix, Scaler) {
    let s = Scaler::fit(x);
    (s.transform(x), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welch_hand_example() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        // means 2 and 5, variances 1: t = -3 / sqrt(2/3)
        assert!((r.t_stat - (-3.0 / (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((r.t_stat + 3.674_234_614_174_767).abs() < 1e-9);
        assert!((r.dof.unwrap() - 4.0).abs() < 1e-12);
        assert!((r.p_two_sided - 0.021_311_641_128_756_727).abs() < 1e-9);
    }

    #[test]
    fn welch_equal_samples_and_swap() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert!((r.p_two_sided - 1.0).abs() < 1e-12);
        let a = [0.3, 1.9, 2.4, 8.0];
        let b = [4.0, 5.5, 6.1];
        let ab = welch_t(&a, &b).unwrap();
        let ba = welch_t(&b, &a).unwrap();
        assert_eq!(ab.t_stat, -ba.t_stat);
        assert_eq!(ab.dof, ba.dof);
        assert_eq!(ab.p_two_sided, ba.p_two_sided);
    }

    #[test]
    fn welch_errors_and_degenerate() {
        assert_eq!(welch_t(&[1.0], &[1.0, 2.0]), Err(StatsError::TooFewSamples { need: 2, got: 1 }));
        let r = welch_t(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!(r.is_degenerate());
        assert_eq!(r.t_stat, 0.0);
        let r = welch_t(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert!(r.is_degenerate() && r.t_stat == f64::NEG_INFINITY && r.p_two_sided == 0.0);
    }

    proptest! {
        #[test]
        fn welch_shift_and_scale(a in proptest::collection::vec(-100.0f64..100.0, 2..30),
                                 b in proptest::collection::vec(-100.0f64..100.0, 2..30),
                                 c in -1e3f64..1e3, s in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0]) {
            let base = welch_t(&a, &b).unwrap();
            prop_assume!(!base.is_degenerate());
            let shifted = welch_t(&a.iter().map(|x| x + c).collect::<Vec<_>>(), &b.iter().map(|x| x + c).collect::<Vec<_>>()).unwrap();
            prop_assert!((shifted.t_stat - base.t_stat).abs() <= 1e-6 * (1.0 + base.t_stat.abs()));
            let scaled = welch_t(&a.iter().map(|x| x * s).collect::<Vec<_>>(), &b.iter().map(|x| x * s).collect::<Vec<_>>()).unwrap();
            prop_assert!((scaled.t_stat - s.signum() * base.t_stat).abs() <= 1e-8 * (1.0 + base.t_stat.abs()));
        }

        #[test]
        fn spearman_monotone_invariance(x in proptest::collection::vec(-10.0f64..10.0, 3..40),
                                        y in proptest::collection::vec(-10.0f64..10.0, 3..40)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            if let Ok(base) = spearman(x, y) {
                let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
                let ty: Vec<f64> = y.iter().map(|v| v.exp()).collect();
                let t = spearman(&tx, &ty).unwrap();
                prop_assert!((t.rho - base.rho).abs() < 1e-12);
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                let r = spearman(x, &neg).unwrap();
                prop_assert!((r.rho + base.rho).abs() < 1e-12);
                prop_assert!(base.rho.abs() <= 1.0 && (0.0..=1.0).contains(&base.p_value));
            }
        }
    }

    #[test]
    fn spearman_basic_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFewSamples { need: 3, got: 2 }));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0]), Err(StatsError::LengthMismatch(3, 1)));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::ConstantInput));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn standardize_population_convention() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let (z, s) = standardize(&x);
        assert_eq!(z.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.stds, vec![1.0, 0.0]);
        let c = Matrix::column(&[5.0, 5.0, 5.0]);
        assert_eq!(standardize(&c).0.as_slice(), &[0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 6..60)) {
            let n = v.len() / 3;
            let x = Matrix::from_vec(n, 3, v[..n * 3].to_vec()).unwrap();
            let (z, _) = standardize(&x);
            let (zz, _) = standardize(&z);
            for (a, b) in z.as_slice().iter().zip(zz.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
