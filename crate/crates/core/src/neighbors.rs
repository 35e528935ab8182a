//! Exact brute-force k-nearest-neighbor search.
//!
//! Queries are independent and run in parallel; each query scans the base set
//! in index order and keeps the `k` smallest distances, so ties go to the
//! lower index and results do not depend on how queries are partitioned.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::matrix::{chebyshev, dot, sq_euclidean, Matrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
    Chebyshev,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Chebyshev => "chebyshev",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            "chebyshev" => Ok(Metric::Chebyshev),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NeighborError {
    #[error("k = {k} exceeds the {available} available neighbors")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("row {0} has zero norm; cosine distance is undefined")]
    ZeroNormRow(usize),
    #[error("query dimension {query} does not match base dimension {base}")]
    DimensionMismatch { base: usize, query: usize },
    #[error("point set is empty")]
    EmptyBase,
}

/// Distance between two vectors under `metric`.
pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => sq_euclidean(a, b).sqrt(),
        Metric::Chebyshev => chebyshev(a, b),
        Metric::Cosine => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            cosine_from(dot(a, b), na, nb)
        }
    }
}

#[inline]
fn cosine_from(ab: f64, na: f64, nb: f64) -> f64 {
    (1.0 - ab / (na * nb)).max(0.0)
}

/// Base points plus the metric they are searched under.
#[derive(Debug, Clone)]
pub struct PointSet<'a> {
    points: &'a Matrix,
    metric: Metric,
    norms: Option<Vec<f64>>,
}

impl<'a> PointSet<'a> {
    pub fn new(points: &'a Matrix, metric: Metric) -> Result<Self, NeighborError> {
        if points.nrows() == 0 {
            return Err(NeighborError::EmptyBase);
        }
        let norms = match metric {
            Metric::Cosine => {
                let norms: Vec<f64> = points.rows_iter().map(|r| dot(r, r).sqrt()).collect();
                if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                    return Err(NeighborError::ZeroNormRow(i));
                }
                Some(norms)
            }
            _ => None,
        };
        Ok(Self { points, metric, norms })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn points(&self) -> &Matrix {
        self.points
    }

    /// Monotone surrogate for the distance (squared for euclidean), cheaper
    /// to compute and order-equivalent.
    #[inline]
    fn key(&self, q: &[f64], q_norm: f64, j: usize) -> f64 {
        let p = self.points.row(j);
        match self.metric {
            Metric::Euclidean => sq_euclidean(q, p),
            Metric::Chebyshev => chebyshev(q, p),
            Metric::Cosine => cosine_from(dot(q, p), q_norm, self.norms.as_ref().expect("cosine norms")[j]),
        }
    }

    #[inline]
    fn key_to_distance(&self, key: f64) -> f64 {
        match self.metric {
            Metric::Euclidean => key.sqrt(),
            _ => key,
        }
    }
}

/// `Q x k` neighbor indices and distances; each row sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborResult {
    pub k: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborResult {
    pub fn num_queries(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn indices_row(&self, q: usize) -> &[usize] {
        &self.indices[q * self.k..(q + 1) * self.k]
    }

    pub fn distances_row(&self, q: usize) -> &[f64] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }

    /// Mean of the first `k` distances of each query row (`k <= self.k`).
    pub fn mean_distances(&self, k: usize) -> Vec<f64> {
        assert!(k >= 1 && k <= self.k, "prefix k out of range");
        (0..self.num_queries()).map(|q| self.distances_row(q)[..k].iter().sum::<f64>() / k as f64).collect()
    }
}

/// Exact `k` nearest neighbors of each query row in `base`.
///
/// With `exclude_self`, the queries must be the base set itself (same row
/// order) and each query's own index is skipped.
pub fn knn(base: &PointSet<'_>, queries: &Matrix, k: usize, exclude_self: bool) -> Result<NeighborResult, NeighborError> {
    if k == 0 {
        return Err(NeighborError::ZeroK);
    }
    let m = base.len();
    let available = if exclude_self { m.saturating_sub(1) } else { m };
    if k > available {
        return Err(NeighborError::KTooLarge { k, available });
    }
    if queries.nrows() > 0 && queries.ncols() != base.points.ncols() {
        return Err(NeighborError::DimensionMismatch { base: base.points.ncols(), query: queries.ncols() });
    }
    let q_norms: Option<Vec<f64>> = match base.metric {
        Metric::Cosine => {
            let n: Vec<f64> = queries.rows_iter().map(|r| dot(r, r).sqrt()).collect();
            if let Some(i) = n.iter().position(|&v| v == 0.0) {
                return Err(NeighborError::ZeroNormRow(i));
            }
            Some(n)
        }
        _ => None,
    };

    let nq = queries.nrows();
    let mut indices = vec![0usize; nq * k];
    let mut distances = vec![0.0f64; nq * k];
    let rows: Vec<(Vec<usize>, Vec<f64>)> = par::map_range(nq, |q| {
        let qrow = queries.row(q);
        let qn = q_norms.as_ref().map_or(0.0, |n| n[q]);
        let skip = if exclude_self { Some(q) } else { None };
        let mut best_i: Vec<usize> = Vec::with_capacity(k);
        let mut best_d: Vec<f64> = Vec::with_capacity(k);
        for j in 0..m {
            if Some(j) == skip {
                continue;
            }
            let d = base.key(qrow, qn, j);
            if best_d.len() == k {
                // strict: an equal distance never displaces a lower index
                if d >= best_d[k - 1] {
                    continue;
                }
                best_d.pop();
                best_i.pop();
            }
            let pos = best_d.partition_point(|&x| x <= d);
            best_d.insert(pos, d);
            best_i.insert(pos, j);
        }
        (best_i, best_d.into_iter().map(|d| base.key_to_distance(d)).collect())
    });
    for (q, (bi, bd)) in rows.into_iter().enumerate() {
        indices[q * k..(q + 1) * k].copy_from_slice(&bi);
        distances[q * k..(q + 1) * k].copy_from_slice(&bd);
    }
    Ok(NeighborResult { k, indices, distances })
}
