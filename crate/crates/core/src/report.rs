//! Run configuration, per-stage payloads and file emission.
//!
//! Payload files (`id.json`, `mi.json`, `deviation.json`, `divergence.json`,
//! `separability.json` and their CSV companions) depend only on the study and
//! the [`RunConfig`]; timings and paths go to `report.json` alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_study_with, Label, Study, StudyError};
use crate::deviation::{
    study_deviation_sweep, subsample_indices, DeviationError, LayerDeviation, StudyDeviation, StudyDeviationSummary,
    DEFAULT_K_PRIME,
};
use crate::divergence::{
    divergence_histogram, divergence_records, Baseline, DivergenceError, DivergenceHistogram, DivergenceRecord,
    DEFAULT_ALPHA, DEFAULT_BIN_WIDTH,
};
use crate::estimators::{ksg_mi, twonn_id, IdEstimate, MiEstimate};
use crate::neighbors::Metric;
use crate::par;
use crate::pooling::PoolingStrategy;
use crate::projection::{
    pca_project, tsne_project, Method, Projection2D, ProjectionError, TsneParams, UMAP_METRIC, UMAP_MIN_DIST,
    UMAP_N_NEIGHBORS, UMAP_SPREAD,
};
use crate::separability::{study_separability, Gamma, SeparabilityError, SeparabilityReport, SvmParams, DEFAULT_FOLDS};
use crate::TOOL_VERSION;

pub const DEFAULT_KSG_K: usize = 5;
pub const DEFAULT_DISCARD: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweeps {
    pub k_primes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub subsample_ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub method: Method,
    /// Defaults to the last layer.
    pub layer: Option<usize>,
    pub perplexity: f64,
    pub iterations: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { method: Method::Pca, layer: None, perplexity: 30.0, iterations: 1000 }
    }
}

/// Every knob of a run. Serialized verbatim into `config.json`; feeding
/// that file back reproduces the payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    pub k_prime: usize,
    pub alpha: f64,
    pub folds: usize,
    pub bin_width: usize,
    pub ksg_k: usize,
    pub discard_fraction: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: Gamma,
    /// Applied when the study stores per-token sequences.
    pub pooling: PoolingStrategy,
    pub metric: Metric,
    pub sweeps: Sweeps,
    pub seed: u64,
    pub formats: Vec<Format>,
    pub projection: ProjectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest_path: PathBuf::new(),
            output_dir: PathBuf::from("."),
            k_prime: DEFAULT_K_PRIME,
            alpha: DEFAULT_ALPHA,
            folds: DEFAULT_FOLDS,
            bin_width: DEFAULT_BIN_WIDTH,
            ksg_k: DEFAULT_KSG_K,
            discard_fraction: DEFAULT_DISCARD,
            c: 1.0,
            gamma: Gamma::Scale,
            pooling: PoolingStrategy::Mean,
            metric: Metric::Euclidean,
            sweeps: Sweeps::default(),
            seed: DEFAULT_SEED,
            formats: vec![Format::Json, Format::Csv],
            projection: ProjectionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: &str| Err(ReportError::Config(m.to_string()));
        if self.k_prime == 0 || self.ksg_k == 0 {
            return bad("k_prime and ksg_k must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be a finite non-negative number");
        }
        if self.bin_width == 0 {
            return bad("bin_width must be positive");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if !(self.c > 0.0) {
            return bad("C must be positive");
        }
        if self.sweeps.k_primes.contains(&0) {
            return bad("k' sweep values must be positive");
        }
        if self.sweeps.subsample_ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return bad("subsample ratios must lie in (0, 1]");
        }
        if self.sweeps.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("alpha sweep values must be finite and non-negative");
        }
        if self.formats.is_empty() {
            return bad("at least one output format is required");
        }
        Ok(())
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams { c: self.c, gamma: self.gamma, ..SvmParams::default() }
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn k_list(&self) -> Vec<usize> {
        if self.sweeps.k_primes.is_empty() {
            vec![self.k_prime]
        } else {
            self.sweeps.k_primes.clone()
        }
    }

    fn ratio_list(&self) -> Vec<f64> {
        if self.sweeps.subsample_ratios.is_empty() {
            vec![1.0]
        } else {
            self.sweeps.subsample_ratios.clone()
        }
    }

    fn alpha_list(&self) -> Vec<f64> {
        if self.sweeps.alphas.is_empty() {
            vec![self.alpha]
        } else {
            self.sweeps.alphas.clone()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Deviation(#[from] DeviationError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Separability(#[from] SeparabilityError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("layer {0} does not exist")]
    NoSuchLayer(usize),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config file {}: {source}", path.display())]
    ConfigParse { path: PathBuf, source: serde_json::Error },
}

impl ReportError {
    /// Stable machine-readable kind for error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            ReportError::Config(_) | ReportError::ConfigParse { .. } => "config",
            ReportError::Study(_) => "study",
            ReportError::Deviation(_) => "deviation",
            ReportError::Divergence(_) => "divergence",
            ReportError::Separability(_) => "separability",
            ReportError::Projection(_) => "projection",
            ReportError::NoSuchLayer(_) => "layer",
            ReportError::Io { .. } => "io",
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| ReportError::ConfigParse { path: path.into(), source })
}

pub fn load(cfg: &RunConfig) -> Result<Study, ReportError> {
    Ok(load_study_with(&cfg.manifest_path, cfg.pooling)?)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| ReportError::Io { path: parent.into(), source })?;
    }
    fs::write(path, text).map_err(|source| ReportError::Io { path: path.into(), source })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

// ---- intrinsic dimension ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerId {
    pub layer_index: usize,
    pub correct: Option<IdEstimate>,
    pub error: Option<IdEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdReport {
    pub estimator: String,
    pub discard_fraction: f64,
    pub per_layer: Vec<LayerId>,
    pub warnings: Vec<String>,
}

pub fn id_report(study: &Study, discard_fraction: f64) -> IdReport {
    let labels = study.labels();
    let per_layer = par::map_slice(&study.layers, |layer| {
        let p = crate::dataset::partition_matrix(&layer.data, &labels);
        let c = twonn_id(&p.correct, discard_fraction).map_err(|e| format!("layer {} correct: {e}", layer.layer_index));
        let e = twonn_id(&p.error, discard_fraction).map_err(|e| format!("layer {} error: {e}", layer.layer_index));
        (layer.layer_index, c, e)
    });
    let mut warnings = Vec::new();
    let per_layer = per_layer
        .into_iter()
        .map(|(layer_index, c, e)| {
            let mut keep = |r: Result<IdEstimate, String>| r.map_err(|w| warnings.push(w)).ok();
            LayerId { layer_index, correct: keep(c), error: keep(e) }
        })
        .collect();
    IdReport { estimator: "twonn".into(), discard_fraction, per_layer, warnings: dedup_warnings(warnings) }
}

fn dedup_warnings(mut w: Vec<String>) -> Vec<String> {
    const LIMIT: usize = 8;
    if w.len() > LIMIT {
        let extra = w.len() - LIMIT;
        w.truncate(LIMIT);
        w.push(format!("... {extra} more"));
    }
    w
}

// ---- mutual information ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMi {
    pub layer_index: usize,
    pub correct: Option<MiEstimate>,
    pub error: Option<MiEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub estimator: String,
    pub units: String,
    pub k: usize,
    /// Set when the study has no answer embeddings.
    pub skipped: Option<String>,
    pub per_layer: Vec<LayerMi>,
    pub warnings: Vec<String>,
}

/// KSG estimate per layer and class against the gold-answer embeddings (the
/// same target for both classes).
pub fn mi_report(study: &Study, k: usize) -> MiReport {
    let mut report = MiReport {
        estimator: "ksg1".into(),
        units: "nats".into(),
        k,
        skipped: None,
        per_layer: Vec::new(),
        warnings: Vec::new(),
    };
    let Some(answers) = &study.answer_embeddings else {
        report.skipped = Some("study has no answer embeddings".into());
        report.warnings.push("mutual information skipped: study has no answer embeddings".into());
        return report;
    };
    let labels = study.labels();
    let ans = crate::dataset::partition_matrix(answers, &labels);
    let per_layer = par::map_slice(&study.layers, |layer| {
        let p = crate::dataset::partition_matrix(&layer.data, &labels);
        let c = ksg_mi(&p.correct, &ans.correct, k).map_err(|e| format!("layer {} correct: {e}", layer.layer_index));
        let e = ksg_mi(&p.error, &ans.error, k).map_err(|e| format!("layer {} error: {e}", layer.layer_index));
        (layer.layer_index, c, e)
    });
    let mut warnings = Vec::new();
    report.per_layer = per_layer
        .into_iter()
        .map(|(layer_index, c, e)| {
            let mut keep = |r: Result<MiEstimate, String>| r.map_err(|w| warnings.push(w)).ok();
            LayerMi { layer_index, correct: keep(c), error: keep(e) }
        })
        .collect();
    report.warnings = dedup_warnings(warnings);
    report
}

// ---- deviation ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLayer {
    pub layer_index: usize,
    pub mean_error: f64,
    pub mean_correct: f64,
    pub t_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k_prime: usize,
    pub ratio: f64,
    pub num_correct: usize,
    pub num_error: usize,
    pub summary: StudyDeviationSummary,
    pub layers: Vec<SweepLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub metric: Metric,
    pub k_prime: usize,
    pub sigma_convention: String,
    pub summary: StudyDeviationSummary,
    pub layers: Vec<LayerDeviation>,
    /// One entry per (ratio, k') when a sweep was requested.
    pub sweep: Vec<SweepEntry>,
    pub warnings: Vec<String>,
}

fn sweep_entry(dev: &StudyDeviation, ratio: f64) -> SweepEntry {
    SweepEntry {
        k_prime: dev.summary.k_prime,
        ratio,
        num_correct: dev.layers.first().map_or(0, |l| l.per_correct_dist.len()),
        num_error: dev.layers.first().map_or(0, |l| l.per_error_dist.len()),
        summary: dev.summary.clone(),
        layers: dev
            .layers
            .iter()
            .map(|l| SweepLayer {
                layer_index: l.layer_index,
                mean_error: l.mean_error,
                mean_correct: l.mean_correct,
                t_stat: l.welch.map(|w| w.t_stat),
            })
            .collect(),
    }
}

/// Main deviation at `cfg.k_prime` plus any requested k'/subsample sweep.
pub fn deviation_report(study: &Study, cfg: &RunConfig) -> Result<(DeviationReport, StudyDeviation), ReportError> {
    let main = study_deviation_sweep(study, &[cfg.k_prime], cfg.metric)?.remove(0);
    let mut sweep = Vec::new();
    let swept = !cfg.sweeps.k_primes.is_empty() || !cfg.sweeps.subsample_ratios.is_empty();
    if swept {
        let ks = cfg.k_list();
        for ratio in cfg.ratio_list() {
            let results = if ratio == 1.0 {
                study_deviation_sweep(study, &ks, cfg.metric)?
            } else {
                let idx = subsample_indices(&study.labels(), ratio, cfg.seed)?;
                study_deviation_sweep(&study.subset(&idx), &ks, cfg.metric)?
            };
            sweep.extend(results.iter().map(|d| sweep_entry(d, ratio)));
        }
    }
    let mut warnings = Vec::new();
    if main.summary.avg_correct_dist >= main.summary.avg_error_dist {
        warnings.push("correct samples are on average farther from each other than error samples are from them".into());
    }
    if study.pooling == PoolingStrategy::Attn {
        warnings.push("attn pooling uses softmax(<z_t, mean z> / sqrt(d)) weights, a stand-in without a published formula".into());
    }
    let report = DeviationReport {
        metric: cfg.metric,
        k_prime: cfg.k_prime,
        sigma_convention: "population".into(),
        summary: main.summary.clone(),
        layers: main.layers.clone(),
        sweep,
        warnings,
    };
    Ok((report, main))
}

pub fn deviation_csv(report: &DeviationReport) -> String {
    let mut out = String::from("layer_index,k_prime,ratio,mean_error,mean_correct,mu_correct,sigma_correct,t_stat,dof,p_two_sided\n");
    if report.sweep.is_empty() {
        for l in &report.layers {
            let w = l.welch;
            let _ = writeln!(
                out,
                "{},{},1,{},{},{},{},{},{},{}",
                l.layer_index,
                l.k_prime,
                l.mean_error,
                l.mean_correct,
                l.mu_correct,
                l.sigma_correct,
                opt(w.map(|w| w.t_stat)),
                opt(w.and_then(|w| w.dof)),
                opt(w.map(|w| w.p_two_sided)),
            );
        }
        return out;
    }
    // grouped by (ratio, layer) so each group lists the k' sweep in order
    let mut ratios: Vec<f64> = Vec::new();
    for e in &report.sweep {
        if !ratios.contains(&e.ratio) {
            ratios.push(e.ratio);
        }
    }
    for ratio in ratios {
        let entries: Vec<&SweepEntry> = report.sweep.iter().filter(|e| e.ratio == ratio).collect();
        let n_layers = entries.first().map_or(0, |e| e.layers.len());
        for li in 0..n_layers {
            for e in &entries {
                let l = &e.layers[li];
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},,,{},,",
                    l.layer_index,
                    e.k_prime,
                    ratio,
                    l.mean_error,
                    l.mean_correct,
                    opt(l.t_stat)
                );
            }
        }
    }
    out
}

// ---- divergence ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub records: Vec<DivergenceRecord>,
    pub histogram: DivergenceHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub k_prime: usize,
    pub alpha: f64,
    pub bin_width: usize,
    pub sigma_convention: String,
    pub baselines: Vec<Baseline>,
    /// The configured alpha first, then any additional sweep values.
    pub results: Vec<AlphaResult>,
    pub warnings: Vec<String>,
}

pub fn divergence_report(study: &Study, dev: &StudyDeviation, cfg: &RunConfig) -> Result<DivergenceReport, ReportError> {
    let mut alphas = vec![cfg.alpha];
    for a in cfg.alpha_list() {
        if !alphas.contains(&a) {
            alphas.push(a);
        }
    }
    let mut results = Vec::with_capacity(alphas.len());
    let mut warnings = Vec::new();
    for alpha in alphas {
        let records = divergence_records(study, dev, alpha);
        let histogram = divergence_histogram(&records, study.num_layers, cfg.bin_width, alpha)?;
        if histogram.undiverged_count > 0 {
            warnings.push(format!(
                "alpha {alpha}: {} of {} error samples never cross the threshold",
                histogram.undiverged_count,
                records.len()
            ));
        }
        results.push(AlphaResult { alpha, records, histogram });
    }
    Ok(DivergenceReport {
        k_prime: dev.summary.k_prime,
        alpha: cfg.alpha,
        bin_width: cfg.bin_width,
        sigma_convention: "population".into(),
        baselines: crate::divergence::baselines(dev),
        results,
        warnings,
    })
}

pub fn divergence_csv(report: &DivergenceReport) -> String {
    let mut out = String::from("alpha,interval,start,end,count\n");
    for r in &report.results {
        for b in &r.histogram.bins {
            let end = b.end.map_or(String::new(), |e| e.to_string());
            let _ = writeln!(out, "{},{},{},{},{}", r.alpha, b.label, b.start, end, b.count);
        }
        let _ = writeln!(out, "{},undiverged,,,{}", r.alpha, r.histogram.undiverged_count);
    }
    out
}

// ---- separability ----

pub fn separability_report(study: &Study, cfg: &RunConfig) -> Result<SeparabilityReport, ReportError> {
    Ok(study_separability(study, cfg.folds, cfg.seed, &cfg.svm_params())?)
}

pub fn separability_csv(report: &SeparabilityReport) -> String {
    let mut out = String::from("layer_index,mean_accuracy");
    for f in 0..report.folds {
        let _ = write!(out, ",fold_{}", f + 1);
    }
    out.push('\n');
    for l in &report.per_layer {
        let _ = write!(out, "{},{}", l.layer_index, l.mean_accuracy);
        for a in &l.fold_accuracies {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    out
}

// ---- projection ----

pub fn projection(study: &Study, cfg: &ProjectionConfig, seed: u64) -> Result<(usize, Projection2D), ReportError> {
    let layer = cfg.layer.unwrap_or(study.num_layers.saturating_sub(1));
    let data = &study.layers.get(layer).ok_or(ReportError::NoSuchLayer(layer))?.data;
    let proj = match cfg.method {
        Method::Pca => pca_project(data)?,
        Method::Tsne => {
            let params = TsneParams { perplexity: cfg.perplexity, iterations: cfg.iterations, ..TsneParams::default() };
            tsne_project(data, &params, seed)?
        }
    };
    Ok((layer, proj.with_labels(study.labels())))
}

pub fn projection_csv(study: &Study, proj: &Projection2D) -> String {
    let mut out = String::from("id,label,x,y\n");
    for (i, s) in study.samples.iter().enumerate() {
        let label = match proj.labels[i] {
            Label::Correct => "correct",
            Label::Error => "error",
        };
        let _ = writeln!(out, "{},{},{},{}", s.id, label, proj.coords.get(i, 0), proj.coords.get(i, 1));
    }
    out
}

/// Parameters emitted next to the coordinates for external UMAP runs.
pub fn umap_sidecar(layer: usize, proj: &Projection2D) -> serde_json::Value {
    serde_json::json!({
        "layer": layer,
        "projection_method": proj.method,
        "projection_params": proj.params,
        "seed": proj.seed,
        "umap": {
            "n_neighbors": UMAP_N_NEIGHBORS,
            "min_dist": UMAP_MIN_DIST,
            "spread": UMAP_SPREAD,
            "metric": UMAP_METRIC,
        },
    })
}

// ---- full pipeline ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool_version: String,
    pub config: RunConfig,
    pub stages: Vec<StageTiming>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

struct Emitter<'a> {
    dir: &'a Path,
    cfg: &'a RunConfig,
    files: Vec<String>,
}

impl Emitter<'_> {
    fn put(&mut self, name: &str, text: &str) -> Result<(), ReportError> {
        write_text(&self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ReportError> {
        // JSON is always written: it is the canonical payload
        self.put(name, &to_json(value))
    }

    fn csv(&mut self, name: &str, text: impl FnOnce() -> String) -> Result<(), ReportError> {
        if self.cfg.wants(Format::Csv) {
            self.put(name, &text())?;
        }
        Ok(())
    }
}

/// Runs id, mi, deviation, divergence, separability and projection in that
/// order, writing payloads plus `config.json` and `report.json` into
/// `cfg.output_dir`.
pub fn analyze(cfg: &RunConfig) -> Result<AnalysisReport, ReportError> {
    cfg.validate()?;
    let study = load(cfg)?;
    study.require_both_classes()?;
    let mut em = Emitter { dir: &cfg.output_dir, cfg, files: Vec::new() };
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    let mut timed = |name: &str, start: Instant| stages.push(StageTiming { stage: name.into(), seconds: start.elapsed().as_secs_f64() });

    em.json("config.json", cfg)?;

    let t = Instant::now();
    let id = id_report(&study, cfg.discard_fraction);
    warnings.extend(id.warnings.iter().map(|w| format!("id: {w}")));
    em.json("id.json", &id)?;
    timed("id", t);

    let t = Instant::now();
    let mi = mi_report(&study, cfg.ksg_k);
    warnings.extend(mi.warnings.iter().map(|w| format!("mi: {w}")));
    em.json("mi.json", &mi)?;
    timed("mi", t);

    let t = Instant::now();
    let (dev_report, dev) = deviation_report(&study, cfg)?;
    warnings.extend(dev_report.warnings.iter().map(|w| format!("deviation: {w}")));
    em.json("deviation.json", &dev_report)?;
    em.csv("deviation.csv", || deviation_csv(&dev_report))?;
    timed("deviation", t);

    let t = Instant::now();
    let div = divergence_report(&study, &dev, cfg)?;
    warnings.extend(div.warnings.iter().map(|w| format!("divergence: {w}")));
    em.json("divergence.json", &div)?;
    em.csv("divergence_histogram.csv", || divergence_csv(&div))?;
    timed("divergence", t);

    let t = Instant::now();
    let sep = separability_report(&study, cfg)?;
    em.json("separability.json", &sep)?;
    em.csv("separability.csv", || separability_csv(&sep))?;
    timed("separability", t);

    let t = Instant::now();
    match projection(&study, &cfg.projection, cfg.seed) {
        Ok((layer, proj)) => {
            em.put("projection.csv", &projection_csv(&study, &proj))?;
            em.json("projection.json", &umap_sidecar(layer, &proj))?;
        }
        Err(e) => warnings.push(format!("projection skipped: {e}")),
    }
    timed("projection", t);

    let report = AnalysisReport {
        tool_version: TOOL_VERSION.into(),
        config: cfg.clone(),
        stages,
        files: em.files.clone(),
        warnings,
    };
    em.json("report.json", &report)?;
    Ok(report)
}
