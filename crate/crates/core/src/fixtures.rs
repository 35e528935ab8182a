//! Published summary tables shipped as CSV, and checks of their internal
//! consistency (derived columns, monotonicity and ordering claims).

use serde::{Deserialize, Serialize};

use crate::stats::{spearman, SpearmanResult};

/// Two-decimal rounding of the ratio plus two-decimal rounding of the
/// published value.
pub const REL_DEV_SLACK: f64 = 0.01;
pub const PUBLISHED_SPEARMAN: f64 = 0.598;
pub const SPEARMAN_RANGE: (f64, f64) = (0.50, 0.70);

const DEVIATION_SUMMARY: &str = include_str!("../fixtures/deviation_summary.csv");
const POOLING_ABLATION: &str = include_str!("../fixtures/pooling_ablation.csv");
const LARGE_MODELS: &str = include_str!("../fixtures/large_models.csv");
const K_SWEEP: &str = include_str!("../fixtures/k_sweep.csv");
const SUBSAMPLE: &str = include_str!("../fixtures/subsample.csv");
const ALPHA_SWEEP: &str = include_str!("../fixtures/alpha_sweep.csv");

#[derive(Debug, thiserror::Error)]
#[error("fixture {name}: {source}")]
pub struct FixtureError {
    pub name: &'static str,
    #[source]
    pub source: csv::Error,
}

fn parse<T: for<'de> Deserialize<'de>>(name: &'static str, text: &str) -> Result<Vec<T>, FixtureError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| FixtureError { name, source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub model: String,
    pub task: String,
    /// Percent.
    pub accuracy: Option<f64>,
    pub avg_error_dist: f64,
    pub avg_correct_dist: f64,
    pub rel_dev: Option<f64>,
    pub t_stat: Option<f64>,
    pub source: String,
}

#[derive(Debug, Deserialize)]
struct SummaryRecord {
    model: String,
    task: String,
    #[allow(dead_code)]
    modality: String,
    accuracy: f64,
    avg_error_dist: f64,
    avg_correct_dist: f64,
    rel_dev: f64,
    t_stat: f64,
    source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingRow {
    pub model: String,
    pub task: String,
    pub pooling: String,
    pub avg_error_dist: f64,
    pub avg_correct_dist: f64,
    pub t_stat: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeModelRow {
    pub model: String,
    pub task: String,
    pub avg_error_dist: f64,
    pub avg_correct_dist: f64,
    pub t_stat: f64,
    pub group: String,
    pub source: String,
}

/// Per-layer averages at `k' = 5, 10, 15, 20`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub layer: usize,
    pub correct_k5: f64,
    pub correct_k10: f64,
    pub correct_k15: f64,
    pub correct_k20: f64,
    pub error_k5: f64,
    pub error_k10: f64,
    pub error_k15: f64,
    pub error_k20: f64,
    pub source: String,
}

impl KSweepRow {
    pub const K_PRIMES: [usize; 4] = [5, 10, 15, 20];

    pub fn correct(&self) -> [f64; 4] {
        [self.correct_k5, self.correct_k10, self.correct_k15, self.correct_k20]
    }

    pub fn error(&self) -> [f64; 4] {
        [self.error_k5, self.error_k10, self.error_k15, self.error_k20]
    }
}

/// Per-layer averages with 50%, 70% and 100% of the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleRow {
    pub layer: usize,
    pub correct_r50: f64,
    pub correct_r70: f64,
    pub correct_r100: f64,
    pub error_r50: f64,
    pub error_r70: f64,
    pub error_r100: f64,
    pub source: String,
}

/// Divergence-point counts per 8-layer interval at two thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub interval: String,
    pub start: usize,
    pub end: Option<usize>,
    pub ai2d_alpha1: usize,
    pub ai2d_alpha2: usize,
    pub mathvista_alpha1: usize,
    pub mathvista_alpha2: usize,
    pub source: String,
}

pub fn deviation_summary() -> Result<Vec<PublishedRow>, FixtureError> {
    Ok(parse::<SummaryRecord>("deviation_summary", DEVIATION_SUMMARY)?
        .into_iter()
        .map(|r| PublishedRow {
            model: r.model,
            task: r.task,
            accuracy: Some(r.accuracy),
            avg_error_dist: r.avg_error_dist,
            avg_correct_dist: r.avg_correct_dist,
            rel_dev: Some(r.rel_dev),
            t_stat: Some(r.t_stat),
            source: r.source,
        })
        .collect())
}

pub fn pooling_ablation() -> Result<Vec<PoolingRow>, FixtureError> {
    parse("pooling_ablation", POOLING_ABLATION)
}

pub fn large_models() -> Result<Vec<LargeModelRow>, FixtureError> {
    parse("large_models", LARGE_MODELS)
}

pub fn k_sweep() -> Result<Vec<KSweepRow>, FixtureError> {
    parse("k_sweep", K_SWEEP)
}

pub fn subsample() -> Result<Vec<SubsampleRow>, FixtureError> {
    parse("subsample", SUBSAMPLE)
}

pub fn alpha_sweep() -> Result<Vec<AlphaSweepRow>, FixtureError> {
    parse("alpha_sweep", ALPHA_SWEEP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResidual {
    pub model: String,
    pub task: String,
    pub published: f64,
    pub recomputed: f64,
    pub residual: f64,
    pub within_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub slack: f64,
    pub rows: Vec<RowResidual>,
    /// Over rows carrying both accuracy and relative deviation.
    pub spearman: Option<SpearmanResult>,
}

impl ConsistencyReport {
    pub fn flagged(&self) -> Vec<&RowResidual> {
        self.rows.iter().filter(|r| !r.within_slack).collect()
    }
}

/// Recomputes `err / corr − 1` for each row carrying a published relative
/// deviation and the rank correlation against accuracy.
pub fn verify_fixture_consistency(rows: &[PublishedRow]) -> ConsistencyReport {
    let residuals = rows
        .iter()
        .filter_map(|r| {
            let published = r.rel_dev?;
            let recomputed = r.avg_error_dist / r.avg_correct_dist - 1.0;
            let residual = (recomputed - published).abs();
            Some(RowResidual {
                model: r.model.clone(),
                task: r.task.clone(),
                published,
                recomputed,
                residual,
                within_slack: residual <= REL_DEV_SLACK,
            })
        })
        .collect();
    let (acc, rel): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.accuracy?, r.rel_dev?))).unzip();
    ConsistencyReport { slack: REL_DEV_SLACK, rows: residuals, spearman: spearman(&acc, &rel).ok() }
}

fn non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

/// Layers whose correct or error distances decrease somewhere along the sweep.
pub fn k_sweep_violations(rows: &[KSweepRow]) -> Vec<usize> {
    rows.iter().filter(|r| !(non_decreasing(&r.correct()) && non_decreasing(&r.error()))).map(|r| r.layer).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperTablesReport {
    pub consistency: ConsistencyReport,
    pub checks: Vec<CheckOutcome>,
}

impl PaperTablesReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail }
}

/// Runs every fixture check.
pub fn verify_paper_tables() -> Result<PaperTablesReport, FixtureError> {
    let summary = deviation_summary()?;
    let consistency = verify_fixture_consistency(&summary);
    let mut checks = Vec::new();

    let flagged = consistency.flagged();
    checks.push(outcome(
        "rel_dev_recomputation",
        flagged.is_empty(),
        if flagged.is_empty() {
            format!("{} rows within {REL_DEV_SLACK}", consistency.rows.len())
        } else {
            flagged
                .iter()
                .map(|r| {
                    format!("{} {}: recomputed {:.4} vs published {:.2}", r.model, r.task, r.recomputed, r.published)
                })
                .collect::<Vec<_>>()
                .join("; ")
        },
    ));

    let (lo, hi) = SPEARMAN_RANGE;
    checks.push(match &consistency.spearman {
        Some(s) => outcome(
            "spearman_accuracy_rel_dev",
            (lo..=hi).contains(&s.rho),
            format!("rho = {:.4} (p = {:.2e}, n = {}), published {PUBLISHED_SPEARMAN}", s.rho, s.p_value, s.n),
        ),
        None => outcome("spearman_accuracy_rel_dev", false, "not computable".into()),
    });

    let sweep = k_sweep()?;
    let bad = k_sweep_violations(&sweep);
    checks.push(outcome(
        "k_sweep_monotone",
        bad.is_empty() && !sweep.is_empty(),
        format!("{} layers, decreasing at {:?}", sweep.len(), bad),
    ));

    let pooling = pooling_ablation()?;
    let bad: Vec<String> = pooling
        .iter()
        .filter(|r| !(r.avg_error_dist > r.avg_correct_dist))
        .map(|r| format!("{} {} {}", r.model, r.task, r.pooling))
        .collect();
    checks.push(outcome("pooling_error_exceeds_correct", bad.is_empty(), format!("{} rows, failing {:?}", pooling.len(), bad)));

    let large = large_models()?;
    let bad: Vec<String> =
        large.iter().filter(|r| !(r.avg_error_dist > r.avg_correct_dist)).map(|r| r.model.clone()).collect();
    checks.push(outcome("large_models_error_exceeds_correct", bad.is_empty(), format!("{} rows, failing {:?}", large.len(), bad)));

    let alpha = alpha_sweep()?;
    let sum = |f: fn(&AlphaSweepRow) -> usize| alpha.iter().map(f).sum::<usize>();
    let (a1, a2) = (sum(|r| r.ai2d_alpha1), sum(|r| r.ai2d_alpha2));
    let (m1, m2) = (sum(|r| r.mathvista_alpha1), sum(|r| r.mathvista_alpha2));
    checks.push(outcome(
        "alpha_stricter_detects_fewer",
        a2 <= a1 && m2 <= m1,
        format!("AI2D {a1} -> {a2}, MathVista {m1} -> {m2}"),
    ));

    let sub = subsample()?;
    let bad: Vec<usize> = sub
        .iter()
        .filter(|r| !(r.correct_r50 > r.error_r50 && r.correct_r70 > r.error_r70 && r.correct_r100 > r.error_r100))
        .map(|r| r.layer)
        .collect();
    checks.push(outcome(
        "subsample_sign_stable",
        bad.is_empty() && !sub.is_empty(),
        format!("{} layers keep correct > error at every ratio, exceptions {:?}", sub.len(), bad),
    ));

    Ok(PaperTablesReport { consistency, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse_with_expected_sizes() {
        assert_eq!(deviation_summary().unwrap().len(), 27);
        assert_eq!(pooling_ablation().unwrap().len(), 12);
        assert_eq!(large_models().unwrap().len(), 6);
        assert_eq!(k_sweep().unwrap().len(), 36);
        assert_eq!(subsample().unwrap().len(), 36);
        assert_eq!(alpha_sweep().unwrap().len(), 5);
    }

    #[test]
    fn published_examples() {
        let rows = deviation_summary().unwrap();
        let report = verify_fixture_consistency(&rows);
        let find = |m: &str, t: &str| report.rows.iter().find(|r| r.model == m && r.task == t).unwrap();
        let llama = find("Llama3.2 (11B)", "SNLI-VE");
        assert!((llama.recomputed - 0.593_406_593).abs() < 1e-6 && llama.within_slack);
        let llava = find("LLaVA-OneVision (7B)", "GPQA");
        assert!((llava.recomputed - 0.233_162_283).abs() < 1e-6 && llava.within_slack);
    }

    #[test]
    fn exactly_one_summary_row_exceeds_slack() {
        let report = verify_fixture_consistency(&deviation_summary().unwrap());
        let flagged = report.flagged();
        assert_eq!(flagged.len(), 1);
        assert_eq!((flagged[0].model.as_str(), flagged[0].task.as_str()), ("Qwen2.5-VL (3B)", "MathVista"));
        assert!((flagged[0].recomputed - 0.577_798).abs() < 1e-5);
    }

    #[test]
    fn recomputed_spearman_matches_published() {
        let report = verify_fixture_consistency(&deviation_summary().unwrap());
        let s = report.spearman.unwrap();
        assert_eq!(s.n, 27);
        assert!((s.rho - PUBLISHED_SPEARMAN).abs() < 0.001, "{}", s.rho);
        assert!(s.p_value < 0.01);
    }

    #[test]
    fn aggregate_checks() {
        let report = verify_paper_tables().unwrap();
        for name in [
            "spearman_accuracy_rel_dev",
            "k_sweep_monotone",
            "pooling_error_exceeds_correct",
            "large_models_error_exceeds_correct",
            "alpha_stricter_detects_fewer",
            "subsample_sign_stable",
        ] {
            assert!(report.check(name).unwrap().passed, "{name}");
        }
        assert!(!report.check("rel_dev_recomputation").unwrap().passed);
        assert!(!report.all_passed());
    }

    #[test]
    fn monotonicity_check_detects_a_decrease() {
        let mut rows = k_sweep().unwrap();
        rows[3].error_k15 = rows[3].error_k5 - 1.0;
        assert_eq!(k_sweep_violations(&rows), vec![3]);
    }
}
