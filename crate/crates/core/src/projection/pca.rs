use nalgebra::{DMatrix, SymmetricEigen};

use super::{Method, Projection2D, ProjectionError};
use crate::matrix::Matrix;

/// Principal axes and centered scores.
#[derive(Debug, Clone)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// Components as rows (n_components × d), unit norm.
    pub components: Matrix,
    /// Variance (divisor N − 1) along each component, descending.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// N × n_components.
    pub scores: Matrix,
}

impl PcaFit {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }

    /// `mean + scores · components`.
    pub fn reconstruct(&self) -> Matrix {
        let (n, k) = self.scores.shape();
        let d = self.mean.len();
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.mean);
            for c in 0..k {
                let s = self.scores.get(i, c);
                for (o, w) in row.iter_mut().zip(self.components.row(c)) {
                    *o += s * w;
                }
            }
        }
        out
    }
}

/// Uses the d×d covariance when d ≤ N, else the N×N Gram matrix.
pub fn pca(x: &Matrix, n_components: usize) -> Result<PcaFit, ProjectionError> {
    let (n, d) = x.shape();
    if n < 3 {
        return Err(ProjectionError::TooFewPoints { need: 3, got: n });
    }
    if !x.is_finite() {
        return Err(ProjectionError::NonFinite);
    }
    let k = n_components.min(d).min(n);
    let mut mean = vec![0.0; d];
    for row in x.rows_iter() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let scale = x.max_abs().max(f64::MIN_POSITIVE);
    if total_variance.sqrt() <= 1e-12 * scale {
        return Err(ProjectionError::DegenerateRank);
    }

    let mut axes: Vec<(f64, Vec<f64>)> = if d <= n {
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        (0..d).map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect())).collect()
    } else {
        let gram = &centered * centered.transpose() / (n - 1) as f64;
        let eig = SymmetricEigen::new(gram);
        (0..n)
            .map(|c| {
                let lambda = eig.eigenvalues[c];
                let v = centered.transpose() * eig.eigenvectors.column(c);
                let norm = v.norm();
                let axis = if norm > 0.0 { (v / norm).iter().copied().collect() } else { vec![0.0; d] };
                (lambda, axis)
            })
            .collect()
    };
    axes.sort_by(|a, b| b.0.total_cmp(&a.0));
    axes.truncate(k);

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (c, (lambda, mut axis)) in axes.into_iter().enumerate() {
        let lead = axis.iter().copied().fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if lead < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.row_mut(c).copy_from_slice(&axis);
        explained_variance.push(lambda.max(0.0));
    }
    let mut scores = Matrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            let s: f64 = (0..d).map(|j| centered[(i, j)] * components.get(c, j)).sum();
            scores.set(i, c, s);
        }
    }
    Ok(PcaFit { mean, components, explained_variance, total_variance, scores })
}

pub fn pca_project(x: &Matrix) -> Result<Projection2D, ProjectionError> {
    let fit = pca(x, 2)?;
    let mut coords = Matrix::zeros(x.nrows(), 2);
    for i in 0..x.nrows() {
        for c in 0..fit.scores.ncols() {
            coords.set(i, c, fit.scores.get(i, c));
        }
    }
    Ok(Projection2D {
        coords,
        labels: Vec::new(),
        method: Method::Pca,
        params: serde_json::json!({
            "n_components": 2,
            "explained_variance_ratio": fit.explained_variance_ratio(),
        }),
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_orthonormal;

    #[test]
    fn plane_in_r10_reconstructs_exactly() {
        let q = random_orthonormal(10, 2, 4);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.11).cos());
                (0..10).map(|j| a * q.get(j, 0) + b * q.get(j, 1) + 0.5).collect()
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let fit = pca(&x, 2).unwrap();
        let r = fit.reconstruct();
        for (a, b) in r.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn wide_data_uses_gram_path() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..30).map(|j| ((i * 31 + j * 7) % 11) as f64).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let wide = pca(&x, 2).unwrap();
        let total: f64 = wide.explained_variance.iter().sum();
        assert!(total <= wide.total_variance * (1.0 + 1e-12));
        for c in 0..2 {
            let norm: f64 = wide.components.row(c).iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(pca(&x, 2).unwrap_err(), ProjectionError::DegenerateRank);
        assert!(matches!(pca(&Matrix::zeros(2, 2), 2), Err(ProjectionError::TooFewPoints { .. })));
    }

    #[test]
    fn sign_convention_makes_largest_loading_positive() {
        let x = Matrix::from_rows(&[[-3.0, 0.1], [0.0, -0.2], [3.0, 0.05], [1.0, 0.0]]).unwrap();
        let fit = pca(&x, 2).unwrap();
        for c in 0..2 {
            let row = fit.components.row(c);
            let lead = row.iter().copied().fold(0.0_f64, |b, v| if v.abs() > b.abs() { v } else { b });
            assert!(lead > 0.0);
        }
    }
}
