//! Synthetic studies with known ground truth.
//!
//! Every generator is a pure function of its parameters and seed.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{label_exact_match, Dtype, Label, LayerMatrix, SampleMeta, Study};
use crate::deviation::DEFAULT_K_PRIME;
use crate::matrix::Matrix;
use crate::neighbors::{knn, Metric, PointSet};
use crate::pooling::PoolingStrategy;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("intrinsic dimension {intrinsic} exceeds ambient dimension {ambient}")]
    DimOrder { intrinsic: usize, ambient: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `d × m` matrix with orthonormal columns, drawn uniformly via QR of a
/// Gaussian matrix with the sign of R's diagonal folded into Q.
pub fn random_orthonormal(d: usize, m: usize, seed: u64) -> Matrix {
    assert!(m <= d, "cannot fit {m} orthonormal columns in R^{d}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, m, |_, _| gaussian(&mut rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Matrix::zeros(d, m);
    for c in 0..m {
        let sign = if r[(c, c)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            out.set(i, c, sign * q[(i, c)]);
        }
    }
    out
}

/// `n` points uniform on `[0,1]^m`, mapped into `R^d` by a random orthonormal
/// embedding (identity when `m == d`), plus isotropic Gaussian noise.
pub fn gen_manifold_cloud(m: usize, d: usize, n: usize, noise: f64, seed: u64) -> Result<Matrix, SynthError> {
    if m > d {
        return Err(SynthError::DimOrder { intrinsic: m, ambient: d });
    }
    if m == 0 || !(noise >= 0.0) {
        return Err(SynthError::BadParameter("need m >= 1 and noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed = (m < d).then(|| random_orthonormal(d, m, rng.random()));
    let mut out = Matrix::zeros(n, d);
    let mut u = vec![0.0; m];
    for i in 0..n {
        u.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let row = out.row_mut(i);
        match &embed {
            Some(q) => {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = (0..m).map(|c| q.get(j, c) * u[c]).sum();
                }
            }
            None => row.copy_from_slice(&u),
        }
        if noise > 0.0 {
            row.iter_mut().for_each(|r| *r += noise * gaussian(&mut rng));
        }
    }
    Ok(out)
}

/// Closed-form mutual information of a bivariate Gaussian, in nats.
pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

/// `n` draws of standard bivariate Gaussian `(x, y)` with correlation `rho`,
/// returned as two `n × 1` matrices.
pub fn gen_gaussian_pair(rho: f64, n: usize, seed: u64) -> Result<(Matrix, Matrix), SynthError> {
    if !(rho.abs() < 1.0) {
        return Err(SynthError::BadParameter(format!("|rho| must be < 1, got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = (gaussian(&mut rng), gaussian(&mut rng));
        x.push(a);
        y.push(rho * a + s * b);
    }
    Ok((Matrix::column(&x), Matrix::column(&y)))
}

/// Two unit-variance isotropic blobs in `R^d` whose centers are
/// `separation` apart along the first axis. The first `n_per_class` rows are
/// labeled -1, the rest +1.
pub fn gen_labeled_blobs(separation: f64, n_per_class: usize, d: usize, seed: u64) -> Result<(Matrix, Vec<i8>), SynthError> {
    if !(separation >= 0.0) || d == 0 {
        return Err(SynthError::BadParameter("need separation >= 0 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(2 * n_per_class, d);
    let mut y = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label: i8 = if i < n_per_class { -1 } else { 1 };
        let row = out.row_mut(i);
        row.iter_mut().for_each(|r| *r = gaussian(&mut rng));
        if label > 0 {
            row[0] += separation;
        }
        y.push(label);
    }
    Ok((out, y))
}

/// Layered trajectory generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayeredParams {
    pub num_layers: usize,
    pub n_correct: usize,
    pub n_error: usize,
    /// First layer at which error samples are displaced.
    pub planted_layer: usize,
    /// Displacement in units of the correct set's mean k-NN distance.
    pub delta: f64,
    pub hidden_dim: usize,
    pub noise: f64,
    pub answer_dim: usize,
}

impl Default for LayeredParams {
    fn default() -> Self {
        Self {
            num_layers: 32,
            n_correct: 300,
            n_error: 100,
            planted_layer: 12,
            delta: 10.0,
            hidden_dim: 16,
            noise: 0.02,
            answer_dim: 8,
        }
    }
}

const BASE_DIM: usize = 4;

/// Points on a flat torus `(cos u, sin u, cos v, sin v)` in the first four
/// coordinates carried through a per-layer similarity transform (growing
/// scale, a rotation that turns smoothly with depth, a drifting offset).
/// From `planted_layer` on, each error sample is pushed off the torus by
/// `delta` mean k-NN distances along its own random direction in the
/// complement coordinates. Sample order is shuffled.
pub fn gen_layered_trajectories(params: &LayeredParams, seed: u64) -> Result<Study, SynthError> {
    let p = params;
    if p.planted_layer >= p.num_layers {
        return Err(SynthError::BadParameter(format!(
            "planted layer {} must be below the layer count {}",
            p.planted_layer, p.num_layers
        )));
    }
    if !(p.delta >= 0.0) || !(p.noise >= 0.0) {
        return Err(SynthError::BadParameter("delta and noise must be non-negative".into()));
    }
    if p.hidden_dim <= BASE_DIM {
        return Err(SynthError::DimOrder { intrinsic: BASE_DIM + 1, ambient: p.hidden_dim });
    }
    if p.n_correct <= DEFAULT_K_PRIME || p.n_error == 0 {
        return Err(SynthError::BadParameter(format!(
            "need more than {DEFAULT_K_PRIME} correct samples and at least one error sample"
        )));
    }
    let d = p.hidden_dim;
    let n = p.n_correct + p.n_error;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut base = Matrix::zeros(n, d);
    for i in 0..n {
        let u = rng.random::<f64>() * std::f64::consts::TAU;
        let v = rng.random::<f64>() * std::f64::consts::TAU;
        let row = base.row_mut(i);
        row[..BASE_DIM].copy_from_slice(&[u.cos(), u.sin(), v.cos(), v.sin()]);
        row.iter_mut().for_each(|r| *r += p.noise * gaussian(&mut rng));
    }
    // rows [0, n_correct) are correct in generation order
    let correct_base = base.select_rows(&(0..p.n_correct).collect::<Vec<_>>());
    let set = PointSet::new(&correct_base, Metric::Euclidean).expect("euclidean accepts any rows");
    let nn = knn(&set, &correct_base, DEFAULT_K_PRIME, true).expect("enough correct samples");
    let knn_scale = nn.mean_distances(DEFAULT_K_PRIME).iter().sum::<f64>() / p.n_correct as f64;

    let directions: Vec<Vec<f64>> = (0..p.n_error)
        .map(|_| {
            let mut v: Vec<f64> = (BASE_DIM..d).map(|_| gaussian(&mut rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            v
        })
        .collect();

    let frame = random_orthonormal(d, d, rng.random());
    let angle_rate = 0.05;
    let offset: Vec<f64> = (0..d).map(|_| 0.1 * gaussian(&mut rng)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let answer_map: Vec<f64> = (0..p.answer_dim * BASE_DIM).map(|_| gaussian(&mut rng)).collect();
    let mut answers = Matrix::zeros(n, p.answer_dim);
    for (r, &g) in order.iter().enumerate() {
        let src = &base.row(g)[..BASE_DIM];
        for c in 0..p.answer_dim {
            let v: f64 = (0..BASE_DIM).map(|k| answer_map[c * BASE_DIM + k] * src[k]).sum();
            answers.set(r, c, v + 0.1 * gaussian(&mut rng));
        }
    }

    let mut layers = Vec::with_capacity(p.num_layers);
    let mut point = vec![0.0; d];
    let mut rotated = vec![0.0; d];
    for l in 0..p.num_layers {
        let scale = 1.0 + 0.1 * l as f64;
        let (cos, sin) = ((angle_rate * l as f64).cos(), (angle_rate * l as f64).sin());
        let mut data = Matrix::zeros(n, d);
        for (r, &g) in order.iter().enumerate() {
            point.copy_from_slice(base.row(g));
            if g >= p.n_correct && l >= p.planted_layer {
                let shift = p.delta * knn_scale;
                for (x, dir) in point[BASE_DIM..].iter_mut().zip(&directions[g - p.n_correct]) {
                    *x += shift * dir;
                }
            }
            // coordinates in the rotating frame: c = Fᵀ x, rotate pairs, back to F c
            let coords: Vec<f64> = (0..d).map(|c| (0..d).map(|j| frame.get(j, c) * point[j]).sum()).collect();
            let mut turned = coords.clone();
            for pair in 0..d / 2 {
                let (a, b) = (coords[2 * pair], coords[2 * pair + 1]);
                turned[2 * pair] = cos * a - sin * b;
                turned[2 * pair + 1] = sin * a + cos * b;
            }
            for (j, out) in rotated.iter_mut().enumerate() {
                *out = (0..d).map(|c| frame.get(j, c) * turned[c]).sum();
            }
            let row = data.row_mut(r);
            for j in 0..d {
                row[j] = scale * rotated[j] + l as f64 * offset[j];
            }
        }
        layers.push(LayerMatrix { layer_index: l, data, dtype: Dtype::F64 });
    }

    let samples = order
        .iter()
        .map(|&g| {
            let gold = format!("answer-{g}");
            let predicted = if g >= p.n_correct {
                format!("wrong-{g}")
            } else if g % 3 == 0 {
                format!("  ANSWER-{g} ")
            } else {
                gold.clone()
            };
            let label = label_exact_match(&predicted, &gold);
            debug_assert_eq!(label == Label::Error, g >= p.n_correct);
            SampleMeta {
                id: format!("s{g:05}"),
                label,
                predicted_text: Some(predicted),
                gold_text: Some(gold),
                token_count_per_layer: None,
            }
        })
        .collect();

    Ok(Study {
        name: "synth_layered".into(),
        model_name: "synthetic".into(),
        num_layers: p.num_layers,
        hidden_dim: d,
        samples,
        layers,
        answer_embeddings: Some(answers),
        token_mode: false,
        pooling: PoolingStrategy::Mean,
    })
}

/// Per-layer, per-sample token sequences whose row mean equals the pooled
/// layer vector: `tokens - 1` random perturbations plus one row cancelling
/// their sum.
pub fn token_sequences(study: &Study, tokens: usize, spread: f64, seed: u64) -> Vec<Vec<Matrix>> {
    assert!(tokens >= 1, "need at least one token per sample");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    study
        .layers
        .iter()
        .map(|layer| {
            (0..layer.data.nrows())
                .map(|i| {
                    let v = layer.data.row(i);
                    let d = v.len();
                    let mut m = Matrix::zeros(tokens, d);
                    let mut total = vec![0.0; d];
                    for t in 0..tokens - 1 {
                        for (j, x) in m.row_mut(t).iter_mut().enumerate() {
                            let e = spread * gaussian(&mut rng);
                            total[j] += e;
                            *x = v[j] + e;
                        }
                    }
                    for (j, x) in m.row_mut(tokens - 1).iter_mut().enumerate() {
                        *x = v[j] - total[j];
                    }
                    m
                })
                .collect()
        })
        .collect()
}

fn single_layer_study(name: &str, data: Matrix, labels: &[Label], answers: Option<Matrix>) -> Study {
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let gold = format!("answer-{i}");
            let predicted = if label == Label::Correct { gold.clone() } else { format!("wrong-{i}") };
            SampleMeta {
                id: format!("s{i:05}"),
                label,
                predicted_text: Some(predicted),
                gold_text: Some(gold),
                token_count_per_layer: None,
            }
        })
        .collect();
    Study {
        name: name.into(),
        model_name: "synthetic".into(),
        num_layers: 1,
        hidden_dim: data.ncols(),
        samples,
        layers: vec![LayerMatrix { layer_index: 0, data, dtype: Dtype::F64 }],
        answer_embeddings: answers,
        token_mode: false,
        pooling: PoolingStrategy::Mean,
    }
}

/// Generator choice with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SynthKind {
    ManifoldCloud { intrinsic_dim: usize, ambient_dim: usize, n: usize, noise: f64 },
    GaussianMiPair { rho: f64, n: usize },
    LabeledBlobs { separation: f64, n_per_class: usize, dim: usize },
    LayeredTrajectories(LayeredParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub kind: SynthKind,
    pub seed: u64,
}

impl SynthSpec {
    /// Builds a study. Point clouds and Gaussian pairs become one-layer
    /// studies where every sample is correct; the Gaussian pair stores `y` as
    /// the answer embedding. Blobs label the shifted blob as errors.
    pub fn generate(&self) -> Result<Study, SynthError> {
        match &self.kind {
            SynthKind::ManifoldCloud { intrinsic_dim, ambient_dim, n, noise } => {
                let x = gen_manifold_cloud(*intrinsic_dim, *ambient_dim, *n, *noise, self.seed)?;
                Ok(single_layer_study("synth_manifold_cloud", x, &vec![Label::Correct; *n], None))
            }
            SynthKind::GaussianMiPair { rho, n } => {
                let (x, y) = gen_gaussian_pair(*rho, *n, self.seed)?;
                Ok(single_layer_study("synth_gaussian_mi_pair", x, &vec![Label::Correct; *n], Some(y)))
            }
            SynthKind::LabeledBlobs { separation, n_per_class, dim } => {
                let (x, y) = gen_labeled_blobs(*separation, *n_per_class, *dim, self.seed)?;
                let labels: Vec<Label> = y.iter().map(|&v| if v > 0 { Label::Error } else { Label::Correct }).collect();
                Ok(single_layer_study("synth_labeled_blobs", x, &labels, None))
            }
            SynthKind::LayeredTrajectories(p) => gen_layered_trajectories(p, self.seed),
        }
    }
}
