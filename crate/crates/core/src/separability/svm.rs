//! Soft-margin RBF-kernel SVM trained with SMO.
//!
//! Working pairs are chosen by maximal KKT violation (`i` maximizes
//! `-y_t G_t` over the up set, `j` minimizes it over the low set), lowest
//! index first on ties. Training stops once the violation gap drops below
//! the tolerance. Kernel rows are computed on demand and kept in a bounded
//! cache.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::matrix::{sq_euclidean, Matrix};

/// Kernel width rule. Serialized as `"scale"` or a bare number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "GammaRepr", try_from = "GammaRepr")]
pub enum Gamma {
    /// `1 / (d * var(X))`, var taken over all entries.
    Scale,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Rule(String),
    Value(f64),
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Scale => GammaRepr::Rule("scale".into()),
            Gamma::Value(v) => GammaRepr::Value(v),
        }
    }
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = String;

    fn try_from(r: GammaRepr) -> Result<Self, Self::Error> {
        match r {
            GammaRepr::Rule(s) => s.parse(),
            GammaRepr::Value(v) => v.to_string().parse(),
        }
    }
}

impl Gamma {
    pub fn resolve(self, x: &Matrix) -> f64 {
        match self {
            Gamma::Value(g) => g,
            Gamma::Scale => {
                let v = x.as_slice();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (x.ncols() as f64 * var)
                } else {
                    1.0
                }
            }
        }
    }
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gamma::Scale => f.write_str("scale"),
            Gamma::Value(g) => write!(f, "{g}"),
        }
    }
}

impl std::str::FromStr for Gamma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "scale" {
            return Ok(Gamma::Scale);
        }
        match s.parse::<f64>() {
            Ok(g) if g > 0.0 && g.is_finite() => Ok(Gamma::Value(g)),
            _ => Err(format!("gamma must be 'scale' or a positive number, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Gamma,
    /// Per-class cost `C * N / (2 * N_c)` when true, `C` otherwise.
    pub balanced: bool,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: Gamma::Scale, balanced: true, tol: 1e-3 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SvmError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("training data contains non-finite values")]
    NonFiniteInput,
    #[error("labels must be -1 or +1 and match the row count")]
    BadLabels,
    #[error("C must be positive")]
    BadCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Matrix,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefficients: Vec<f64>,
    pub support_labels: Vec<i8>,
    /// Decision function is `sum_i coef_i K(sv_i, x) + bias`.
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// `(negative class, positive class)` weight.
    pub class_weights: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    pub fn class_cost(&self, label: i8) -> f64 {
        if label > 0 {
            self.c * self.class_weights.1
        } else {
            self.c * self.class_weights.0
        }
    }

    pub fn decision_value(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (i, coef) in self.dual_coefficients.iter().enumerate() {
            s += coef * (-self.gamma * sq_euclidean(self.support_vectors.row(i), x)).exp();
        }
        s
    }

    pub fn predict(&self, x: &[f64]) -> i8 {
        if self.decision_value(x) > 0.0 {
            1
        } else {
            -1
        }
    }

    /// Largest box-constraint violation and `|sum_i alpha_i y_i|`.
    pub fn dual_feasibility(&self) -> (f64, f64) {
        let mut bound_violation = 0.0_f64;
        for (coef, &y) in self.dual_coefficients.iter().zip(&self.support_labels) {
            let alpha = coef * y as f64;
            let cap = self.class_cost(y);
            bound_violation = bound_violation.max(-alpha).max(alpha - cap);
        }
        (bound_violation, self.dual_coefficients.iter().sum::<f64>().abs())
    }
}

struct KernelCache<'a> {
    x: &'a Matrix,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    const BUDGET_BYTES: usize = 256 << 20;

    fn new(x: &'a Matrix, gamma: f64) -> Self {
        let n = x.nrows();
        let capacity = (Self::BUDGET_BYTES / (8 * n.max(1))).clamp(2, n.max(2));
        Self { x, gamma, rows: vec![None; n], order: VecDeque::new(), capacity }
    }

    fn ensure(&mut self, i: usize, keep: usize) {
        if self.rows[i].is_some() {
            return;
        }
        while self.order.len() >= self.capacity {
            let pos = self.order.iter().position(|&r| r != keep).expect("capacity >= 2");
            let victim = self.order.remove(pos).expect("position valid");
            self.rows[victim] = None;
        }
        let xi = self.x.row(i);
        let row = (0..self.x.nrows()).map(|k| (-self.gamma * sq_euclidean(xi, self.x.row(k))).exp()).collect();
        self.rows[i] = Some(row);
        self.order.push_back(i);
    }

    fn pair(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(i, j);
        self.ensure(j, i);
        (self.rows[i].as_deref().expect("cached"), self.rows[j].as_deref().expect("cached"))
    }
}

const TAU: f64 = 1e-12;

/// Trains on rows of `x` (expected standardized by the caller) with labels in
/// {-1, +1}.
pub fn svm_train(x: &Matrix, y: &[i8], params: &SvmParams) -> Result<SvmModel, SvmError> {
    let n = x.nrows();
    if y.len() != n || y.iter().any(|&v| v != 1 && v != -1) {
        return Err(SvmError::BadLabels);
    }
    if !(params.c > 0.0) {
        return Err(SvmError::BadCost);
    }
    if !x.is_finite() {
        return Err(SvmError::NonFiniteInput);
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SvmError::SingleClass);
    }
    let class_weights = if params.balanced {
        (n as f64 / (2.0 * n_neg as f64), n as f64 / (2.0 * n_pos as f64))
    } else {
        (1.0, 1.0)
    };
    let cost = |label: i8| if label > 0 { params.c * class_weights.1 } else { params.c * class_weights.0 };
    let upper: Vec<f64> = y.iter().map(|&v| cost(v)).collect();
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let gamma = params.gamma.resolve(x);

    let mut cache = KernelCache::new(x, gamma);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = 10_000_000usize.max(100 * n);
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |a: f64, yi: f64, c: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64, c: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -yf[t] * grad[t];
            if in_up(alpha[t], yf[t], upper[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], yf[t], upper[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ki, kj) = cache.pair(i, j);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = ki[j];
        let mut quad = ki[i] + kj[j] - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if yf[i] != yf[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        // G_t += Q_ti di + Q_tj dj with Q_ts = y_t y_s K_ts
        for t in 0..n {
            grad[t] += yf[t] * (yf[i] * ki[t] * di + yf[j] * kj[t] * dj);
        }
    }

    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = yf[t] * grad[t];
        if alpha[t] >= upper[t] {
            if yf[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if yf[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: x.select_rows(&sv),
        dual_coefficients: sv.iter().map(|&t| alpha[t] * yf[t]).collect(),
        support_labels: sv.iter().map(|&t| y[t]).collect(),
        bias: -rho,
        gamma,
        c: params.c,
        class_weights,
        iterations,
        converged,
    })
}
