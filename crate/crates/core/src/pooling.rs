//! Collapses a `T x d` token sequence of hidden states into one vector.
//!
//! `Attn` weights each token by `softmax_t(<z_t, z_mean> / sqrt(d))`, where
//! `z_mean` is the mean-pooled vector. This weighting is a stand-in: it is
//! parameter-free and reduces to mean pooling for identical tokens.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingStrategy {
    #[default]
    Mean,
    Last,
    Max,
    Attn,
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::Last => "last",
            PoolingStrategy::Max => "max",
            PoolingStrategy::Attn => "attn",
        })
    }
}

impl FromStr for PoolingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "last" => Ok(Self::Last),
            "max" => Ok(Self::Max),
            "attn" => Ok(Self::Attn),
            other => Err(format!("unknown pooling strategy {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PoolingError {
    #[error("token sequence is empty")]
    EmptySequence,
}

pub fn pool(tokens: &Matrix, strategy: PoolingStrategy) -> Result<Vec<f64>, PoolingError> {
    let t = tokens.nrows();
    if t == 0 {
        return Err(PoolingError::EmptySequence);
    }
    let d = tokens.ncols();
    Ok(match strategy {
        PoolingStrategy::Mean => mean_rows(tokens),
        PoolingStrategy::Last => tokens.row(t - 1).to_vec(),
        PoolingStrategy::Max => {
            let mut out = tokens.row(0).to_vec();
            for row in tokens.rows_iter().skip(1) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = o.max(v);
                }
            }
            out
        }
        PoolingStrategy::Attn => {
            let w = attention_weights(tokens);
            let mut out = vec![0.0; d];
            for (row, wt) in tokens.rows_iter().zip(&w) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += wt * v;
                }
            }
            out
        }
    })
}

fn mean_rows(tokens: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; tokens.ncols()];
    for row in tokens.rows_iter() {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let t = tokens.nrows() as f64;
    out.iter_mut().for_each(|o| *o /= t);
    out
}

/// Softmax weights used by attention pooling. Panics on an empty sequence.
pub fn attention_weights(tokens: &Matrix) -> Vec<f64> {
    let mean = mean_rows(tokens);
    let scale = (tokens.ncols().max(1) as f64).sqrt();
    let scores: Vec<f64> = tokens.rows_iter().map(|r| dot(r, &mean) / scale).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}
