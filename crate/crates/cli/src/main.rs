use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rema_core::dataset::{load_study_with, write_study, Dtype, StudyError, WriteOptions};
use rema_core::divergence::DEFAULT_ALPHA;
use rema_core::fixtures::verify_paper_tables;
use rema_core::neighbors::Metric;
use rema_core::par::with_threads;
use rema_core::pooling::PoolingStrategy;
use rema_core::projection::Method;
use rema_core::report::{self, Format, ReportError, RunConfig};
use rema_core::separability::Gamma;
use rema_core::synth::{token_sequences, LayeredParams, SynthKind, SynthSpec};

#[derive(Parser, Debug)]
#[command(name = "rema", version, about = "Geometry of correct vs. erroneous reasoning states across model layers")]
struct Cli {
    /// Worker threads; falls back to REMA_THREADS, then to the number of cores.
    #[arg(long, global = true, env = "REMA_THREADS")]
    threads: Option<usize>,

    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,

    /// Output formats for commands that write files.
    #[arg(long, global = true, value_delimiter = ',', default_value = "json,csv")]
    format: Vec<FormatArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate a study, printing a summary.
    IngestValidate(ManifestArgs),
    /// Generate a synthetic study with known ground truth.
    Synth(SynthArgs),
    /// TwoNN intrinsic dimension per layer and class.
    Id(IdArgs),
    /// KSG mutual information with the answer embeddings per layer and class.
    Mi(MiArgs),
    /// Deviation of error samples from the correct point cloud.
    Deviation(DeviationArgs),
    /// Earliest diverging layer per error sample and binned histograms.
    Divergence(DivergenceArgs),
    /// Cross-validated SVM accuracy per layer.
    Separability(SeparabilityArgs),
    /// 2-D coordinates of one layer (CSV: id,label,x,y).
    Project(ProjectArgs),
    /// Run every stage and write all reports into a directory.
    Analyze(AnalyzeArgs),
    /// Check the bundled published tables for internal consistency.
    VerifyPaperTables(VerifyArgs),
}

#[derive(Args, Debug)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Pooling applied to per-token studies.
    #[arg(long, default_value = "mean")]
    pooling: PoolingStrategy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKindArg {
    Layered,
    ManifoldCloud,
    GaussianMiPair,
    LabeledBlobs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKindArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: DtypeArg,
    #[arg(long, default_value_t = 32)]
    layers: usize,
    #[arg(long, default_value_t = 12)]
    planted: usize,
    #[arg(long, default_value_t = 10.0)]
    delta: f64,
    #[arg(long, default_value_t = 300)]
    n_correct: usize,
    #[arg(long, default_value_t = 100)]
    n_error: usize,
    #[arg(long, default_value_t = 16)]
    hidden_dim: usize,
    #[arg(long)]
    noise: Option<f64>,
    /// Store per-token sequences with this many tokens per sample.
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long, default_value_t = 2)]
    intrinsic_dim: usize,
    #[arg(long, default_value_t = 100)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 100)]
    n_per_class: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

#[derive(Args, Debug)]
struct IdArgs {
    #[command(flatten)]
    input: ManifestArgs,
    #[arg(long, default_value_t = report::DEFAULT_DISCARD)]
    discard: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MiArgs {
    #[command(flatten)]
    input: ManifestArgs,
    #[arg(long, default_value_t = report::DEFAULT_KSG_K)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DeviationArgs {
    #[command(flatten)]
    input: ManifestArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_delimiter = ',')]
    k_sweep: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    subsample: Vec<f64>,
    #[arg(long, default_value_t = report::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DivergenceArgs {
    #[command(flatten)]
    input: ManifestArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_delimiter = ',')]
    alpha_sweep: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    bin_width: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeparabilityArgs {
    #[command(flatten)]
    input: ManifestArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = report::DEFAULT_SEED)]
    seed: u64,
    #[arg(long = "C", alias = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value = "scale")]
    gamma: Gamma,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[command(flatten)]
    input: ManifestArgs,
    /// Defaults to the last layer.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value = "pca")]
    method: Method,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = report::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write `<out>.umap.json` with parameters for an external UMAP run.
    #[arg(long)]
    emit_umap_input: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Replay a previously written config.json; other flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    bin_width: Option<usize>,
    #[arg(long)]
    ksg_k: Option<usize>,
    #[arg(long)]
    discard: Option<f64>,
    #[arg(long = "C", alias = "c")]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<Gamma>,
    #[arg(long)]
    pooling: Option<PoolingStrategy>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    k_sweep: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alpha_sweep: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    subsample: Option<Vec<f64>>,
    #[arg(long)]
    projection: Option<Method>,
    #[arg(long)]
    projection_layer: Option<usize>,
    #[arg(long)]
    perplexity: Option<f64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Exit 1 when any check is flagged.
    #[arg(long)]
    strict: bool,
    /// Write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Flagged(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Report(e) => e.kind(),
            CliError::Data(_) => "data",
            CliError::Flagged(_) => "verification",
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        CliError::Report(e.into())
    }
}

fn formats(args: &[FormatArg]) -> Vec<Format> {
    args.iter()
        .map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        })
        .collect()
}

/// Writes to stdout, treating a closed pipe as end of output.
fn say(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

/// Writes JSON to `out` (stdout when absent) and CSV next to it.
fn emit<T: Serialize>(out: Option<&Path>, fmts: &[Format], value: &T, csv: Option<String>) -> Result<(), CliError> {
    let json = report::to_json(value);
    match out {
        Some(path) => {
            report::write_text(path, &json)?;
            if let (Some(text), true) = (csv, fmts.contains(&Format::Csv)) {
                report::write_text(&path.with_extension("csv"), &text)?;
            }
        }
        None => say(&json),
    }
    Ok(())
}

fn load(input: &ManifestArgs) -> Result<rema_core::Study, CliError> {
    Ok(load_study_with(&input.manifest, input.pooling)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let fmts = formats(&cli.format);
    match cli.command {
        Command::IngestValidate(a) => {
            let study = load(&a)?;
            let (correct, error) = study.class_counts();
            let summary = serde_json::json!({
                "name": study.name,
                "model_name": study.model_name,
                "num_layers": study.num_layers,
                "hidden_dim": study.hidden_dim,
                "num_samples": study.num_samples(),
                "num_correct": correct,
                "num_error": error,
                "accuracy": study.accuracy(),
                "token_mode": study.token_mode,
                "pooling": study.pooling,
                "answer_embeddings": study.answer_embeddings.as_ref().map(|m| m.ncols()),
                "warnings": Vec::<String>::new(),
            });
            say(&report::to_json(&summary));
        }
        Command::Synth(a) => synth(a)?,
        Command::Id(a) => {
            let study = load(&a.input)?;
            emit(a.out.as_deref(), &fmts, &report::id_report(&study, a.discard), None)?;
        }
        Command::Mi(a) => {
            let study = load(&a.input)?;
            let r = report::mi_report(&study, a.k);
            if let Some(reason) = &r.skipped {
                return Err(CliError::Data(format!("mutual information unavailable: {reason}")));
            }
            emit(a.out.as_deref(), &fmts, &r, None)?;
        }
        Command::Deviation(a) => {
            let study = load(&a.input)?;
            study.require_both_classes()?;
            let mut cfg = RunConfig { k_prime: a.k, metric: a.metric, seed: a.seed, ..RunConfig::default() };
            cfg.sweeps.k_primes = a.k_sweep;
            cfg.sweeps.subsample_ratios = a.subsample;
            cfg.validate()?;
            let (r, _) = report::deviation_report(&study, &cfg)?;
            emit(a.out.as_deref(), &fmts, &r, Some(report::deviation_csv(&r)))?;
        }
        Command::Divergence(a) => {
            let study = load(&a.input)?;
            study.require_both_classes()?;
            let mut cfg =
                RunConfig { k_prime: a.k, alpha: a.alpha, bin_width: a.bin_width, metric: a.metric, ..RunConfig::default() };
            cfg.sweeps.alphas = a.alpha_sweep;
            cfg.validate()?;
            let (_, dev) = report::deviation_report(&study, &cfg)?;
            let r = report::divergence_report(&study, &dev, &cfg)?;
            emit(a.out.as_deref(), &fmts, &r, Some(report::divergence_csv(&r)))?;
        }
        Command::Separability(a) => {
            let study = load(&a.input)?;
            study.require_both_classes()?;
            let cfg = RunConfig { folds: a.folds, seed: a.seed, c: a.c, gamma: a.gamma, ..RunConfig::default() };
            cfg.validate()?;
            let r = report::separability_report(&study, &cfg)?;
            emit(a.out.as_deref(), &fmts, &r, Some(report::separability_csv(&r)))?;
        }
        Command::Project(a) => {
            let study = load(&a.input)?;
            let pc = report::ProjectionConfig {
                method: a.method,
                layer: a.layer,
                perplexity: a.perplexity,
                iterations: a.iterations,
            };
            let (layer, proj) = report::projection(&study, &pc, a.seed)?;
            report::write_text(&a.out, &report::projection_csv(&study, &proj))?;
            if a.emit_umap_input {
                let side = report::umap_sidecar(layer, &proj);
                report::write_text(&a.out.with_extension("umap.json"), &report::to_json(&side))?;
            }
        }
        Command::Analyze(a) => {
            let cfg = analyze_config(a, fmts)?;
            let r = report::analyze(&cfg)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::VerifyPaperTables(a) => {
            let r = verify_paper_tables().map_err(|e| CliError::Data(e.to_string()))?;
            for c in &r.checks {
                say(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FLAG" }, c.name, c.detail));
            }
            if let Some(out) = &a.out {
                report::write_text(out, &report::to_json(&r))?;
            }
            if a.strict && !r.all_passed() {
                let flagged: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(CliError::Flagged(format!("flagged checks: {}", flagged.join(", "))));
            }
        }
    }
    Ok(())
}

fn analyze_config(a: AnalyzeArgs, fmts: Vec<Format>) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => report::load_config(path)?,
        None => RunConfig { formats: fmts, ..RunConfig::default() },
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.manifest_path, a.manifest);
    set!(cfg.output_dir, a.out);
    set!(cfg.k_prime, a.k);
    set!(cfg.alpha, a.alpha);
    set!(cfg.folds, a.folds);
    set!(cfg.bin_width, a.bin_width);
    set!(cfg.ksg_k, a.ksg_k);
    set!(cfg.discard_fraction, a.discard);
    set!(cfg.c, a.c);
    set!(cfg.gamma, a.gamma);
    set!(cfg.pooling, a.pooling);
    set!(cfg.metric, a.metric);
    set!(cfg.seed, a.seed);
    set!(cfg.sweeps.k_primes, a.k_sweep);
    set!(cfg.sweeps.alphas, a.alpha_sweep);
    set!(cfg.sweeps.subsample_ratios, a.subsample);
    set!(cfg.projection.method, a.projection);
    set!(cfg.projection.perplexity, a.perplexity);
    if a.projection_layer.is_some() {
        cfg.projection.layer = a.projection_layer;
    }
    Ok(cfg)
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let kind = match a.kind {
        SynthKindArg::Layered => SynthKind::LayeredTrajectories(LayeredParams {
            num_layers: a.layers,
            n_correct: a.n_correct,
            n_error: a.n_error,
            planted_layer: a.planted,
            delta: a.delta,
            hidden_dim: a.hidden_dim,
            noise: a.noise.unwrap_or(LayeredParams::default().noise),
            ..LayeredParams::default()
        }),
        SynthKindArg::ManifoldCloud => SynthKind::ManifoldCloud {
            intrinsic_dim: a.intrinsic_dim,
            ambient_dim: a.ambient_dim,
            n: a.n,
            noise: a.noise.unwrap_or(0.0),
        },
        SynthKindArg::GaussianMiPair => SynthKind::GaussianMiPair { rho: a.rho, n: a.n },
        SynthKindArg::LabeledBlobs => {
            SynthKind::LabeledBlobs { separation: a.separation, n_per_class: a.n_per_class, dim: a.dim }
        }
    };
    let spec = SynthSpec { kind, seed: a.seed };
    let study = spec.generate().map_err(|e| CliError::Data(e.to_string()))?;
    let dtype = match a.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    let tokens = a.tokens.map(|t| token_sequences(&study, t.max(1), 0.1, a.seed.wrapping_add(1)));
    let manifest = write_study(&study, &a.out, &WriteOptions { dtype, tokens })?;
    report::write_text(&a.out.join("synth_spec.json"), &report::to_json(&spec))?;
    say(&format!("{}\n", manifest.display()));
    Ok(())
}

fn fail(error_json: bool, kind: &str, message: &str) {
    if error_json {
        let v = serde_json::json!({ "error": { "kind": kind, "message": message } });
        eprintln!("{v}");
    } else {
        eprintln!("error: {message}");
    }
}

fn main() -> ExitCode {
    let error_json = std::env::args().any(|a| a == "--error-json");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if error_json {
                fail(true, "usage", e.to_string().trim());
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };
    let (threads, error_json) = (cli.threads, cli.error_json);
    match with_threads(threads, move || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(error_json, e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}
