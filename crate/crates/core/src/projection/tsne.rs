//! Exact t-SNE with O(N²) affinities and gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Method, Projection2D, ProjectionError};
use crate::matrix::{sq_euclidean, Matrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub init_std: f64,
    /// Tolerance on `|H(P_i) − ln(perplexity)|` in the bandwidth search.
    pub entropy_tol: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_std: 1e-4,
            entropy_tol: 1e-5,
        }
    }
}

const MAX_BISECTIONS: usize = 200;

/// Row-stochastic conditional affinities `p_{j|i}` and the entropy reached
/// for each row.
pub fn conditional_probabilities(x: &Matrix, perplexity: f64, tol: f64) -> (Matrix, Vec<f64>) {
    let n = x.nrows();
    let target = perplexity.ln();
    let rows = par::map_range(n, |i| {
        let d: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { sq_euclidean(x.row(i), x.row(j)) }).collect();
        let d_min = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut p = vec![0.0; n];
        let mut entropy = 0.0;
        for _ in 0..MAX_BISECTIONS {
            // shift by the nearest distance so the largest weight is exp(0)
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                p[j] = if j == i { 0.0 } else { (-(d[j] - d_min) * beta).exp() };
                sum += p[j];
                weighted += (d[j] - d_min) * p[j];
            }
            entropy = sum.ln() + beta * weighted / sum;
            p.iter_mut().for_each(|v| *v /= sum);
            let diff = entropy - target;
            if diff.abs() < tol {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        (p, entropy)
    });
    let mut out = Matrix::zeros(n, n);
    let mut entropies = Vec::with_capacity(n);
    for (i, (p, h)) in rows.into_iter().enumerate() {
        out.row_mut(i).copy_from_slice(&p);
        entropies.push(h);
    }
    (out, entropies)
}

/// `(P + Pᵀ) / 2N`, floored at 1e-12.
pub fn joint_probabilities(conditional: &Matrix) -> Matrix {
    let n = conditional.nrows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (conditional.get(i, j) + conditional.get(j, i)) / (2.0 * n as f64);
                p.set(i, j, v.max(1e-12));
            }
        }
    }
    p
}

pub fn tsne_project(x: &Matrix, params: &TsneParams, seed: u64) -> Result<Projection2D, ProjectionError> {
    let n = x.nrows();
    let need = (3.0 * params.perplexity).ceil() as usize;
    if n < need {
        return Err(ProjectionError::PerplexityTooLarge { perplexity: params.perplexity, need, got: n });
    }
    if !x.is_finite() {
        return Err(ProjectionError::NonFinite);
    }
    let (cond, _) = conditional_probabilities(x, params.perplexity, params.entropy_tol);
    let p = joint_probabilities(&cond);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, params.init_std).expect("positive std");
    let mut y: Vec<f64> = (0..2 * n).map(|_| init.sample(&mut rng)).collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0_f64; 2 * n];

    for iter in 0..params.iterations {
        let (exaggeration, momentum) = if iter < params.exaggeration_iterations {
            (params.early_exaggeration, params.initial_momentum)
        } else {
            (1.0, params.final_momentum)
        };
        let kernel_rows = par::map_range(n, |i| {
            let (yi0, yi1) = (y[2 * i], y[2 * i + 1]);
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let (a, b) = (yi0 - y[2 * j], yi1 - y[2 * j + 1]);
                        1.0 / (1.0 + a * a + b * b)
                    }
                })
                .collect::<Vec<f64>>()
        });
        let z: f64 = kernel_rows.iter().map(|r| r.iter().sum::<f64>()).sum();
        let grads = par::map_range(n, |i| {
            let (mut g0, mut g1) = (0.0, 0.0);
            let row = &kernel_rows[i];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exaggeration * p.get(i, j) - row[j] / z) * row[j];
                g0 += w * (y[2 * i] - y[2 * j]);
                g1 += w * (y[2 * i + 1] - y[2 * j + 1]);
            }
            [4.0 * g0, 4.0 * g1]
        });
        for (t, g) in grads.iter().flatten().enumerate() {
            gains[t] = if (*g > 0.0) != (update[t] > 0.0) { gains[t] + 0.2 } else { (gains[t] * 0.8).max(0.01) };
            update[t] = momentum * update[t] - params.learning_rate * gains[t] * g;
            y[t] += update[t];
        }
        for c in 0..2 {
            let m = (0..n).map(|i| y[2 * i + c]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| y[2 * i + c] -= m);
        }
    }

    Ok(Projection2D {
        coords: Matrix::from_vec(n, 2, y).expect("2n coordinates"),
        labels: Vec::new(),
        method: Method::Tsne,
        params: serde_json::to_value(params).expect("plain struct serializes"),
        seed,
    })
}
