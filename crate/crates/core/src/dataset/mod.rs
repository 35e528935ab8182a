//! Interchange data model: manifest + NPY tensors, study loading and the
//! correct/error partition.

pub mod npy;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::pooling::{pool, PoolingStrategy};
pub use npy::{read_tensor, write_tensor, Dtype, NpyError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Error,
}

/// Case-insensitive comparison after trimming leading/trailing Unicode
/// whitespace.
pub fn label_exact_match(predicted: &str, gold: &str) -> Label {
    if normalize_answer(predicted) == normalize_answer(gold) {
        Label::Correct
    } else {
        Label::Error
    }
}

fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_text: Option<String>,
    /// Sequence length per layer, when the study was loaded from token files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count_per_layer: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrix {
    pub layer_index: usize,
    pub data: Matrix,
    pub dtype: Dtype,
}

/// How the layer matrices were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolingField {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "last")]
    Last,
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "attn")]
    Attn,
    #[serde(rename = "none(token_mode)")]
    TokenMode,
}

impl PoolingField {
    pub fn strategy(self) -> Option<PoolingStrategy> {
        match self {
            PoolingField::Mean => Some(PoolingStrategy::Mean),
            PoolingField::Last => Some(PoolingStrategy::Last),
            PoolingField::Max => Some(PoolingStrategy::Max),
            PoolingField::Attn => Some(PoolingStrategy::Attn),
            PoolingField::TokenMode => None,
        }
    }
}

/// On-disk manifest. Tensor paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub model_name: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub pooling: PoolingField,
    pub samples: Vec<SampleMeta>,
    pub layer_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_files: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_embedding_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub name: String,
    pub model_name: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub samples: Vec<SampleMeta>,
    pub layers: Vec<LayerMatrix>,
    pub answer_embeddings: Option<Matrix>,
    /// True when layers were pooled in-core from per-token files.
    pub token_mode: bool,
    /// Pooling applied to produce `layers` (upstream or in-core).
    pub pooling: PoolingStrategy,
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("manifest schema error: {0}")]
    SchemaError(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("sample {id:?} is labeled {label:?} but exact match of its texts gives {expected:?}")]
    LabelInconsistency { id: String, label: Label, expected: Label },
    #[error("non-finite values in {}", .0.display())]
    NonFinite(PathBuf),
    #[error("layer {layer} has no {class:?} samples")]
    EmptyClass { layer: usize, class: Label },
    #[error("tensor {}: {source}", path.display())]
    Tensor { path: PathBuf, source: NpyError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Study {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let correct = self.samples.iter().filter(|s| s.label == Label::Correct).count();
        (correct, self.samples.len() - correct)
    }

    /// Fraction of correct samples.
    pub fn accuracy(&self) -> f64 {
        let (c, _) = self.class_counts();
        c as f64 / self.samples.len().max(1) as f64
    }

    /// Fails with `EmptyClass` unless both labels occur.
    pub fn require_both_classes(&self) -> Result<(), StudyError> {
        let (c, e) = self.class_counts();
        if c == 0 {
            return Err(StudyError::EmptyClass { layer: 0, class: Label::Correct });
        }
        if e == 0 {
            return Err(StudyError::EmptyClass { layer: 0, class: Label::Error });
        }
        Ok(())
    }

    /// Splits layer `layer` by label, preserving manifest order.
    ///
    /// Panics if `layer >= num_layers`.
    pub fn partition(&self, layer: usize) -> Partition {
        partition_matrix(&self.layers[layer].data, &self.labels())
    }

    /// Copy restricted to the given sample indices (kept in the given order).
    pub fn subset(&self, idx: &[usize]) -> Study {
        Study {
            name: self.name.clone(),
            model_name: self.model_name.clone(),
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerMatrix { layer_index: l.layer_index, data: l.data.select_rows(idx), dtype: l.dtype })
                .collect(),
            answer_embeddings: self.answer_embeddings.as_ref().map(|m| m.select_rows(idx)),
            token_mode: self.token_mode,
            pooling: self.pooling,
        }
    }
}

/// Rows of one layer split by label, with maps back to manifest row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub correct: Matrix,
    pub error: Matrix,
    pub correct_idx: Vec<usize>,
    pub error_idx: Vec<usize>,
}

impl Partition {
    /// Reassembles the original matrix.
    pub fn merge(&self) -> Matrix {
        let n = self.correct_idx.len() + self.error_idx.len();
        let d = self.correct.ncols().max(self.error.ncols());
        let mut out = Matrix::zeros(n, d);
        for (r, &i) in self.correct_idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.correct.row(r));
        }
        for (r, &i) in self.error_idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.error.row(r));
        }
        out
    }
}

pub fn partition_matrix(data: &Matrix, labels: &[Label]) -> Partition {
    let correct_idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Correct).collect();
    let error_idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Error).collect();
    let mut correct = data.select_rows(&correct_idx);
    let mut error = data.select_rows(&error_idx);
    // keep the column count on empty sides so callers can still inspect d
    if correct_idx.is_empty() {
        correct = Matrix::zeros(0, data.ncols());
    }
    if error_idx.is_empty() {
        error = Matrix::zeros(0, data.ncols());
    }
    Partition { correct, error, correct_idx, error_idx }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

fn load_matrix(path: &Path) -> Result<Tensor, StudyError> {
    if !path.exists() {
        return Err(StudyError::MissingFile(path.to_path_buf()));
    }
    let t = read_tensor(path).map_err(|source| StudyError::Tensor { path: path.to_path_buf(), source })?;
    if !t.matrix.is_finite() {
        return Err(StudyError::NonFinite(path.to_path_buf()));
    }
    Ok(t)
}

/// Loads and validates a study. Token-mode studies are pooled with mean pooling.
pub fn load_study(manifest_path: impl AsRef<Path>) -> Result<Study, StudyError> {
    load_study_with(manifest_path, PoolingStrategy::Mean)
}

/// Like [`load_study`]; `token_pooling` is used when the manifest is in token
/// mode and ignored otherwise.
pub fn load_study_with(manifest_path: impl AsRef<Path>, token_pooling: PoolingStrategy) -> Result<Study, StudyError> {
    let manifest_path = manifest_path.as_ref();
    if !manifest_path.exists() {
        return Err(StudyError::MissingFile(manifest_path.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| StudyError::SchemaError(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    study_from_manifest(manifest, base, token_pooling)
}

pub fn study_from_manifest(manifest: Manifest, base: &Path, token_pooling: PoolingStrategy) -> Result<Study, StudyError> {
    let Manifest { name, model_name, num_layers, hidden_dim, pooling, mut samples, layer_files, token_files, answer_embedding_file } = manifest;
    if num_layers == 0 {
        return Err(StudyError::SchemaError("num_layers must be >= 1".into()));
    }
    if hidden_dim == 0 {
        return Err(StudyError::SchemaError("hidden_dim must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(StudyError::SchemaError("samples list is empty".into()));
    }
    let mut seen = HashSet::new();
    for s in &samples {
        if !seen.insert(s.id.as_str()) {
            return Err(StudyError::SchemaError(format!("duplicate sample id {:?}", s.id)));
        }
        if let (Some(p), Some(g)) = (&s.predicted_text, &s.gold_text) {
            let expected = label_exact_match(p, g);
            if expected != s.label {
                return Err(StudyError::LabelInconsistency { id: s.id.clone(), label: s.label, expected });
            }
        }
    }
    let n = samples.len();

    let check_shape = |what: String, shape: (usize, usize), rows: usize| -> Result<(), StudyError> {
        if shape != (rows, hidden_dim) {
            return Err(StudyError::ShapeMismatch(format!("{what}: expected ({rows}, {hidden_dim}), found {shape:?}")));
        }
        Ok(())
    };

    let token_mode = pooling == PoolingField::TokenMode;
    let layers = if token_mode {
        let token_files = token_files.ok_or_else(|| StudyError::SchemaError("token mode requires token_files".into()))?;
        if token_files.len() != num_layers {
            return Err(StudyError::SchemaError(format!("token_files lists {} layers, num_layers is {num_layers}", token_files.len())));
        }
        let mut counts = vec![Vec::with_capacity(num_layers); n];
        let mut layers = Vec::with_capacity(num_layers);
        for (l, files) in token_files.iter().enumerate() {
            if files.len() != n {
                return Err(StudyError::ShapeMismatch(format!("layer {l}: {} token files for {n} samples", files.len())));
            }
            let mut pooled = Matrix::zeros(n, hidden_dim);
            let mut dtype = Dtype::F64;
            for (i, f) in files.iter().enumerate() {
                let path = resolve(base, f);
                let t = load_matrix(&path)?;
                if t.shape.1 != hidden_dim || t.shape.0 == 0 {
                    return Err(StudyError::ShapeMismatch(format!(
                        "{}: expected (T >= 1, {hidden_dim}), found {:?}",
                        path.display(),
                        t.shape
                    )));
                }
                dtype = t.dtype;
                counts[i].push(t.shape.0);
                let v = pool(&t.matrix, token_pooling).expect("non-empty sequence");
                pooled.row_mut(i).copy_from_slice(&v);
            }
            layers.push(LayerMatrix { layer_index: l, data: pooled, dtype });
        }
        for (s, c) in samples.iter_mut().zip(counts) {
            s.token_count_per_layer = Some(c);
        }
        layers
    } else {
        if layer_files.len() != num_layers {
            return Err(StudyError::SchemaError(format!("layer_files lists {} files, num_layers is {num_layers}", layer_files.len())));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for (l, f) in layer_files.iter().enumerate() {
            let path = resolve(base, f);
            let t = load_matrix(&path)?;
            check_shape(format!("layer {l} ({})", path.display()), t.shape, n)?;
            layers.push(LayerMatrix { layer_index: l, data: t.matrix, dtype: t.dtype });
        }
        layers
    };

    let answer_embeddings = match answer_embedding_file {
        Some(f) => {
            let path = resolve(base, &f);
            let t = load_matrix(&path)?;
            if t.shape.0 != n || t.shape.1 == 0 {
                return Err(StudyError::ShapeMismatch(format!(
                    "answer embeddings {}: expected ({n}, d_y >= 1), found {:?}",
                    path.display(),
                    t.shape
                )));
            }
            Some(t.matrix)
        }
        None => None,
    };

    let pooling = pooling.strategy().unwrap_or(token_pooling);
    Ok(Study { name, model_name, num_layers, hidden_dim, samples, layers, answer_embeddings, token_mode, pooling })
}

/// Options for [`write_study`].
#[derive(Debug, Clone)]
pub struct WriteOptions {
    pub dtype: Dtype,
    /// Per-layer, per-sample token sequences; when set the study is written
    /// in token mode and `layers` are not stored.
    pub tokens: Option<Vec<Vec<Matrix>>>,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self { dtype: Dtype::F32, tokens: None }
    }
}

/// Writes `study.json` plus tensor files into `dir`, returning the manifest path.
pub fn write_study(study: &Study, dir: impl AsRef<Path>, opts: &WriteOptions) -> Result<PathBuf, StudyError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let put = |m: &Matrix, rel: &str| -> Result<(), StudyError> {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_tensor(m, &path, opts.dtype).map_err(|source| StudyError::Tensor { path, source })
    };

    let (pooling, layer_files, token_files) = match &opts.tokens {
        Some(tokens) => {
            let mut files = Vec::with_capacity(tokens.len());
            for (l, per_sample) in tokens.iter().enumerate() {
                let mut row = Vec::with_capacity(per_sample.len());
                for (i, m) in per_sample.iter().enumerate() {
                    let rel = format!("tokens/layer_{l:03}/sample_{i:05}.npy");
                    put(m, &rel)?;
                    row.push(rel);
                }
                files.push(row);
            }
            (PoolingField::TokenMode, Vec::new(), Some(files))
        }
        None => {
            let mut files = Vec::with_capacity(study.layers.len());
            for l in &study.layers {
                let rel = format!("layer_{:03}.npy", l.layer_index);
                put(&l.data, &rel)?;
                files.push(rel);
            }
            let field = match study.pooling {
                PoolingStrategy::Mean => PoolingField::Mean,
                PoolingStrategy::Last => PoolingField::Last,
                PoolingStrategy::Max => PoolingField::Max,
                PoolingStrategy::Attn => PoolingField::Attn,
            };
            (field, files, None)
        }
    };
    let answer_embedding_file = match &study.answer_embeddings {
        Some(m) => {
            put(m, "answers.npy")?;
            Some("answers.npy".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        name: study.name.clone(),
        model_name: study.model_name.clone(),
        num_layers: study.num_layers,
        hidden_dim: study.hidden_dim,
        pooling,
        samples: study.samples.iter().map(|s| SampleMeta { token_count_per_layer: None, ..s.clone() }).collect(),
        layer_files,
        token_files,
        answer_embedding_file,
    };
    let path = dir.join("study.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_normalization() {
        assert_eq!(label_exact_match(" Paris ", "paris"), Label::Correct);
        assert_eq!(label_exact_match("42", "42.0"), Label::Error);
        assert_eq!(label_exact_match("", ""), Label::Correct);
        assert_eq!(label_exact_match("\u{3000}Ünïcode\t", "üNÏCODE"), Label::Correct);
        assert_eq!(label_exact_match("a b", "ab"), Label::Error);
    }

    proptest! {
        #[test]
        fn exact_match_symmetric_and_idempotent(a in "\\PC{0,12}", b in "\\PC{0,12}") {
            prop_assert_eq!(label_exact_match(&a, &b), label_exact_match(&b, &a));
            let na = normalize_answer(&a);
            prop_assert_eq!(normalize_answer(&na), na.clone());
            prop_assert_eq!(label_exact_match(&na, &b), label_exact_match(&a, &b));
        }
    }

    #[test]
    fn partition_selects_by_label() {
        let data = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let labels = [Label::Correct, Label::Error, Label::Correct];
        let p = partition_matrix(&data, &labels);
        assert_eq!(p.correct_idx, vec![0, 2]);
        assert_eq!(p.error_idx, vec![1]);
        assert_eq!(p.correct.row(1), &[2.0, 2.0]);
        assert_eq!(p.merge(), data);
    }

    #[test]
    fn partition_all_correct_has_empty_error_side() {
        let data = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap();
        let p = partition_matrix(&data, &[Label::Correct, Label::Correct]);
        assert!(p.error.is_empty());
        assert_eq!(p.error.ncols(), 2);
        assert_eq!(p.correct.nrows() + p.error.nrows(), 2);
    }

    #[test]
    fn pooling_field_names() {
        let f: PoolingField = serde_json::from_str("\"none(token_mode)\"").unwrap();
        assert_eq!(f, PoolingField::TokenMode);
        assert!(serde_json::from_str::<PoolingField>("\"median\"").is_err());
    }
}
