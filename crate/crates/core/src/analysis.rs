//! Advantage detectors over the sensitivity matrix.
//!
//! A benchmark advantage compares one model's sensitivities on a benchmark
//! with its sensitivities on every other benchmark; a model advantage
//! compares one model with all other models on a fixed benchmark. Both use
//! Mann-Whitney U with a Bonferroni correction over the subjects tested.
//! A flag marks a distributional deviation, not proof of contamination.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensitivity::SensitivityRecord;
use crate::stats::{bonferroni, mann_whitney_u, median, paired_t_test, pearson, StatsError, TestResult};

/// Cells smaller than this are reported as underpowered and not tested.
pub const MIN_CELL: usize = 5;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// model -> benchmark -> per-sample mean sensitivities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    cells: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl SensitivityMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: &[SensitivityRecord]) -> Self {
        let mut m = Self::new();
        for r in records {
            m.push(&r.model, &r.benchmark, r.mean_sensitivity);
        }
        m
    }

    pub fn push(&mut self, model: &str, benchmark: &str, value: f64) {
        self.cells
            .entry(model.to_string())
            .or_default()
            .entry(benchmark.to_string())
            .or_default()
            .push(value);
    }

    /// Replaces a whole cell.
    pub fn set(&mut self, model: &str, benchmark: &str, values: Vec<f64>) {
        self.cells
            .entry(model.to_string())
            .or_default()
            .insert(benchmark.to_string(), values);
    }

    pub fn models(&self) -> Vec<String> {
        self.cells.keys().cloned().collect()
    }

    /// Union of benchmarks over all models.
    pub fn benchmarks(&self) -> Vec<String> {
        let all: BTreeSet<&String> = self.cells.values().flat_map(|b| b.keys()).collect();
        all.into_iter().cloned().collect()
    }

    /// `None` for an absent or empty cell.
    pub fn cell(&self, model: &str, benchmark: &str) -> Option<&[f64]> {
        self.cells
            .get(model)?
            .get(benchmark)
            .map(Vec::as_slice)
            .filter(|v| !v.is_empty())
    }

    /// Applies `f` to every value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in out.cells.values_mut().flat_map(|b| b.values_mut()).flatten() {
            *v = f(*v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    BenchmarkAdvantage,
    ModelAdvantage,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::BenchmarkAdvantage => "benchmark_advantage",
            Scope::ModelAdvantage => "model_advantage",
        })
    }
}

/// Higher sensitivity suggests memorization or a knowledge gap; lower
/// suggests robust generalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Higher,
    Lower,
    None,
}

impl Direction {
    fn of(effect: f64) -> Self {
        if effect > 0.0 {
            Direction::Higher
        } else if effect < 0.0 {
            Direction::Lower
        } else {
            Direction::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Subject against everything else pooled.
    #[default]
    PooledComplement,
    /// Every unordered pair of subjects.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub scope: Scope,
    /// The fixed model (benchmark advantage) or benchmark (model advantage).
    pub context: String,
    pub subject: String,
    pub baseline: String,
    pub statistic: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub direction: Direction,
    /// Median of the subject minus median of the baseline.
    pub effect: f64,
    pub n_subject: usize,
    pub n_baseline: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    NoData,
    Underpowered { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub scope: Scope,
    pub context: String,
    pub subject: String,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub findings: Vec<Finding>,
    pub skipped: Vec<Skipped>,
}

impl DetectorReport {
    pub fn flagged(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.flagged)
    }

    pub fn extend(&mut self, other: DetectorReport) {
        self.findings.extend(other.findings);
        self.skipped.extend(other.skipped);
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("model `{model}` has data on {found} benchmark(s); at least 2 benchmarks required")]
    TooFewBenchmarks { model: String, found: usize },
    #[error("benchmark `{benchmark}` has data for {found} model(s); at least 2 models required")]
    TooFewModels { benchmark: String, found: usize },
    #[error("correlation needs at least 2 models, got {0}")]
    TooFewModelsForCorrelation(usize),
    #[error("no data for model `{model}` on benchmark `{benchmark}`")]
    MissingCell { model: String, benchmark: String },
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("no model has data in both categories")]
    NoCommonModels,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn check_alpha(alpha: f64) -> Result<(), AnalysisError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::Alpha(alpha))
    }
}

struct Test<'a> {
    subject: &'a str,
    baseline: String,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn detect(
    scope: Scope,
    context: &str,
    groups: &[(String, Option<&[f64]>)],
    alpha: f64,
    mode: BaselineMode,
) -> Result<DetectorReport, AnalysisError> {
    let mut report = DetectorReport::default();
    let mut testable: Vec<(&str, &[f64])> = Vec::new();
    for (name, values) in groups {
        match values {
            None => report.skipped.push(Skipped {
                scope,
                context: context.to_string(),
                subject: name.clone(),
                reason: SkipReason::NoData,
            }),
            Some(v) if v.len() < MIN_CELL => report.skipped.push(Skipped {
                scope,
                context: context.to_string(),
                subject: name.clone(),
                reason: SkipReason::Underpowered { n: v.len() },
            }),
            Some(v) => testable.push((name, v)),
        }
    }
    let present: Vec<(&str, &[f64])> = groups.iter().filter_map(|(n, v)| v.map(|v| (n.as_str(), v))).collect();

    let mut tests = Vec::new();
    match mode {
        BaselineMode::PooledComplement => {
            for &(subject, x) in &testable {
                let others: Vec<&str> = present.iter().map(|p| p.0).filter(|n| *n != subject).collect();
                let y: Vec<f64> = present
                    .iter()
                    .filter(|(n, _)| *n != subject)
                    .flat_map(|(_, v)| v.iter().copied())
                    .collect();
                if y.len() < MIN_CELL {
                    continue;
                }
                tests.push(Test {
                    subject,
                    baseline: format!("pooled: {}", others.join(", ")),
                    x: x.to_vec(),
                    y,
                });
            }
        }
        BaselineMode::AllPairs => {
            for (i, &(a, x)) in testable.iter().enumerate() {
                for &(b, y) in &testable[i + 1..] {
                    tests.push(Test {
                        subject: a,
                        baseline: b.to_string(),
                        x: x.to_vec(),
                        y: y.to_vec(),
                    });
                }
            }
        }
    }

    let mut raw = Vec::with_capacity(tests.len());
    let mut stats = Vec::with_capacity(tests.len());
    for t in &tests {
        let r: TestResult = mann_whitney_u(&t.x, &t.y)?;
        raw.push(r.p_value);
        stats.push(r.statistic);
    }
    let adjusted = bonferroni(&raw);
    for (i, t) in tests.into_iter().enumerate() {
        let effect = median(&t.x)? - median(&t.y)?;
        report.findings.push(Finding {
            scope,
            context: context.to_string(),
            subject: t.subject.to_string(),
            baseline: t.baseline,
            statistic: stats[i],
            raw_p: raw[i],
            adjusted_p: adjusted[i],
            direction: Direction::of(effect),
            effect,
            n_subject: t.x.len(),
            n_baseline: t.y.len(),
            flagged: adjusted[i] < alpha,
        });
    }
    report.findings.sort_by(|a, b| a.adjusted_p.total_cmp(&b.adjusted_p));
    Ok(report)
}

/// Does `model` behave differently on one benchmark than on the rest?
pub fn benchmark_advantage(
    model: &str,
    matrix: &SensitivityMatrix,
    alpha: f64,
    mode: BaselineMode,
) -> Result<DetectorReport, AnalysisError> {
    check_alpha(alpha)?;
    let groups: Vec<(String, Option<&[f64]>)> =
        matrix.benchmarks().into_iter().map(|b| { let c = matrix.cell(model, &b); (b, c) }).collect();
    let found = groups.iter().filter(|g| g.1.is_some()).count();
    if found < 2 {
        return Err(AnalysisError::TooFewBenchmarks {
            model: model.to_string(),
            found,
        });
    }
    detect(Scope::BenchmarkAdvantage, model, &groups, alpha, mode)
}

/// Does one model behave differently from the others on `benchmark`?
pub fn model_advantage(
    benchmark: &str,
    matrix: &SensitivityMatrix,
    alpha: f64,
    mode: BaselineMode,
) -> Result<DetectorReport, AnalysisError> {
    check_alpha(alpha)?;
    let groups: Vec<(String, Option<&[f64]>)> =
        matrix.models().into_iter().map(|m| { let c = matrix.cell(&m, benchmark); (m, c) }).collect();
    let found = groups.iter().filter(|g| g.1.is_some()).count();
    if found < 2 {
        return Err(AnalysisError::TooFewModels {
            benchmark: benchmark.to_string(),
            found,
        });
    }
    detect(Scope::ModelAdvantage, benchmark, &groups, alpha, mode)
}

/// Both detectors over every model and benchmark that qualifies. Models
/// or benchmarks that cannot be tested are listed as skipped.
pub fn detect_all(matrix: &SensitivityMatrix, alpha: f64, mode: BaselineMode) -> Result<DetectorReport, AnalysisError> {
    check_alpha(alpha)?;
    let mut report = DetectorReport::default();
    for model in matrix.models() {
        match benchmark_advantage(&model, matrix, alpha, mode) {
            Ok(r) => report.extend(r),
            Err(AnalysisError::TooFewBenchmarks { .. }) => report.skipped.push(Skipped {
                scope: Scope::BenchmarkAdvantage,
                context: model.clone(),
                subject: model,
                reason: SkipReason::NoData,
            }),
            Err(e) => return Err(e),
        }
    }
    for benchmark in matrix.benchmarks() {
        match model_advantage(&benchmark, matrix, alpha, mode) {
            Ok(r) => report.extend(r),
            Err(AnalysisError::TooFewModels { .. }) => report.skipped.push(Skipped {
                scope: Scope::ModelAdvantage,
                context: benchmark.clone(),
                subject: benchmark,
                reason: SkipReason::NoData,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub benchmarks: Vec<String>,
    pub models: Vec<String>,
    /// `r[i][j]` between benchmarks `i` and `j`; `None` when undefined.
    pub r: Vec<Vec<Option<f64>>>,
}

impl CorrelationTable {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.benchmarks.iter().position(|x| x == a)?;
        let j = self.benchmarks.iter().position(|x| x == b)?;
        self.r[i][j]
    }
}

fn medians_for(matrix: &SensitivityMatrix, benchmark: &str, models: &[String]) -> Result<Vec<f64>, AnalysisError> {
    models
        .iter()
        .map(|m| {
            let cell = matrix.cell(m, benchmark).ok_or_else(|| AnalysisError::MissingCell {
                model: m.clone(),
                benchmark: benchmark.to_string(),
            })?;
            Ok(median(cell)?)
        })
        .collect()
}

/// Pearson correlation between benchmarks over per-model median
/// sensitivities.
pub fn cross_benchmark_correlation(
    matrix: &SensitivityMatrix,
    models: &[String],
    benchmarks: &[String],
) -> Result<CorrelationTable, AnalysisError> {
    if models.len() < 2 {
        return Err(AnalysisError::TooFewModelsForCorrelation(models.len()));
    }
    let medians: Vec<Vec<f64>> = benchmarks
        .iter()
        .map(|b| medians_for(matrix, b, models))
        .collect::<Result<_, _>>()?;
    let r = medians
        .iter()
        .map(|a| medians.iter().map(|b| pearson(a, b).ok()).collect())
        .collect();
    Ok(CorrelationTable {
        benchmarks: benchmarks.to_vec(),
        models: models.to_vec(),
        r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryComparison {
    pub models: Vec<String>,
    pub medians_a: Vec<f64>,
    pub medians_b: Vec<f64>,
    pub result: TestResult,
}

/// Paired t-test over models: each model contributes its median
/// sensitivity pooled over category A and over category B.
pub fn category_comparison(
    matrix: &SensitivityMatrix,
    category_a: &[String],
    category_b: &[String],
) -> Result<CategoryComparison, AnalysisError> {
    let pooled = |model: &str, cat: &[String]| -> Vec<f64> {
        cat.iter()
            .filter_map(|b| matrix.cell(model, b))
            .flatten()
            .copied()
            .collect()
    };
    let mut models = Vec::new();
    let mut medians_a = Vec::new();
    let mut medians_b = Vec::new();
    for model in matrix.models() {
        let (a, b) = (pooled(&model, category_a), pooled(&model, category_b));
        if a.is_empty() || b.is_empty() {
            continue;
        }
        medians_a.push(median(&a)?);
        medians_b.push(median(&b)?);
        models.push(model);
    }
    if models.is_empty() {
        return Err(AnalysisError::NoCommonModels);
    }
    let result = paired_t_test(&medians_a, &medians_b)?;
    Ok(CategoryComparison {
        models,
        medians_a,
        medians_b,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(matrix: &mut SensitivityMatrix, model: &str, bench: &str, values: &[f64]) {
        matrix.set(model, bench, values.to_vec());
    }

    fn spread(base: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| base + 0.01 * i as f64).collect()
    }

    #[test]
    fn identical_benchmarks_never_flag() {
        let mut m = SensitivityMatrix::new();
        cell(&mut m, "a", "x", &spread(0.2, 10));
        cell(&mut m, "a", "y", &spread(0.2, 10));
        let r = benchmark_advantage("a", &m, 0.05, BaselineMode::PooledComplement).unwrap();
        assert_eq!(r.findings.len(), 2);
        assert!(r.flagged().next().is_none());
        assert!(r.findings.iter().all(|f| f.adjusted_p >= f.raw_p));
    }

    #[test]
    fn separated_benchmark_flags_higher() {
        let mut m = SensitivityMatrix::new();
        cell(&mut m, "a", "hot", &spread(0.7, 10));
        for b in ["c1", "c2", "c3"] {
            cell(&mut m, "a", b, &spread(0.1, 10));
        }
        let r = benchmark_advantage("a", &m, 0.05, BaselineMode::PooledComplement).unwrap();
        let top = &r.findings[0];
        assert_eq!(top.subject, "hot");
        assert!(top.flagged);
        assert_eq!(top.direction, Direction::Higher);
        assert_eq!(top.n_baseline, 30);
        assert!((top.adjusted_p - (top.raw_p * 4.0).min(1.0)).abs() < 1e-15);
        assert!(top.baseline.starts_with("pooled: "));
    }

    #[test]
    fn empty_and_small_cells_are_skipped() {
        let mut m = SensitivityMatrix::new();
        cell(&mut m, "a", "x", &spread(0.2, 10));
        cell(&mut m, "b", "x", &spread(0.3, 10));
        cell(&mut m, "c", "x", &spread(0.3, 3));
        cell(&mut m, "a", "y", &spread(0.2, 10));
        let r = model_advantage("x", &m, 0.05, BaselineMode::PooledComplement).unwrap();
        assert_eq!(r.findings.len(), 2);
        assert_eq!(
            r.skipped[0].reason,
            SkipReason::Underpowered { n: 3 }
        );
        let r = model_advantage("y", &m, 0.05, BaselineMode::PooledComplement);
        assert_eq!(
            r,
            Err(AnalysisError::TooFewModels {
                benchmark: "y".into(),
                found: 1
            })
        );
        let r = benchmark_advantage("b", &m, 0.05, BaselineMode::PooledComplement);
        assert!(matches!(r, Err(AnalysisError::TooFewBenchmarks { found: 1, .. })));

        let all = detect_all(&m, 0.05, BaselineMode::PooledComplement).unwrap();
        assert!(all
            .skipped
            .iter()
            .any(|s| s.subject == "b" && s.scope == Scope::BenchmarkAdvantage));
    }

    #[test]
    fn model_with_empty_cell_reported_no_data() {
        let mut m = SensitivityMatrix::new();
        cell(&mut m, "a", "x", &spread(0.2, 10));
        cell(&mut m, "b", "x", &spread(0.2, 10));
        cell(&mut m, "c", "y", &spread(0.2, 10));
        let r = model_advantage("x", &m, 0.05, BaselineMode::PooledComplement).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].subject, "c");
        assert_eq!(r.skipped[0].reason, SkipReason::NoData);
    }

    #[test]
    fn all_pairs_mode_tests_each_pair_once() {
        let mut m = SensitivityMatrix::new();
        for (i, b) in ["x", "y", "z"].iter().enumerate() {
            cell(&mut m, "a", b, &spread(0.1 * i as f64, 8));
        }
        let r = benchmark_advantage("a", &m, 0.05, BaselineMode::AllPairs).unwrap();
        assert_eq!(r.findings.len(), 3);
        for f in &r.findings {
            assert!((f.adjusted_p - (f.raw_p * 3.0).min(1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_alpha_rejected() {
        let m = SensitivityMatrix::new();
        assert_eq!(
            benchmark_advantage("a", &m, 0.0, BaselineMode::default()),
            Err(AnalysisError::Alpha(0.0))
        );
    }

    // per-model medians: x = [.1,.2,.3,.4], y = [.2,.4,.6,.8], z = [.4,.1,.3,.2]
    fn correlation_fixture() -> SensitivityMatrix {
        let mut m = SensitivityMatrix::new();
        let x = [0.1, 0.2, 0.3, 0.4];
        let y = [0.2, 0.4, 0.6, 0.8];
        let z = [0.4, 0.1, 0.3, 0.2];
        for (i, model) in ["m0", "m1", "m2", "m3"].iter().enumerate() {
            cell(&mut m, model, "x", &[x[i] - 0.05, x[i], x[i] + 0.05]);
            cell(&mut m, model, "y", &[y[i]]);
            cell(&mut m, model, "z", &[z[i], z[i]]);
        }
        m
    }

    #[test]
    fn correlation_table_matches_hand_computation() {
        let m = correlation_fixture();
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let t = cross_benchmark_correlation(&m, &m.models(), &names(&["x", "y", "z"])).unwrap();
        assert!((t.get("x", "x").unwrap() - 1.0).abs() < 1e-12);
        assert!((t.get("x", "y").unwrap() - 1.0).abs() < 1e-12);
        // x vs z: deviations (-1.5,-.5,.5,1.5) and (1.5,-1.5,.5,-.5) over 5 and 5: -2/5
        assert!((t.get("x", "z").unwrap() + 0.4).abs() < 1e-12);
        assert!((t.get("z", "y").unwrap() + 0.4).abs() < 1e-12);
    }

    #[test]
    fn correlation_undefined_and_missing() {
        let mut m = correlation_fixture();
        for model in ["m0", "m1", "m2", "m3"] {
            cell(&mut m, model, "flat", &[0.5]);
        }
        let names = vec!["x".to_string(), "flat".to_string()];
        let t = cross_benchmark_correlation(&m, &m.models(), &names).unwrap();
        assert_eq!(t.get("x", "flat"), None);
        m.set("m0", "x", vec![]);
        assert!(matches!(
            cross_benchmark_correlation(&m, &m.models(), &names),
            Err(AnalysisError::MissingCell { .. })
        ));
        assert!(cross_benchmark_correlation(&m, &["m0".to_string()], &names).is_err());
    }

    #[test]
    fn category_comparison_cases() {
        let m = correlation_fixture();
        let a = vec!["x".to_string()];
        assert_eq!(
            category_comparison(&m, &a, &a),
            Err(AnalysisError::Stats(StatsError::DegeneratePairing))
        );
        let mut shifted = SensitivityMatrix::new();
        let noise = [0.01, -0.02, 0.015, -0.005, 0.0, 0.02];
        for (i, e) in noise.iter().enumerate() {
            let model = format!("m{i}");
            let base = 0.1 + 0.05 * i as f64;
            cell(&mut shifted, &model, "a", &[base]);
            cell(&mut shifted, &model, "b", &[base + 0.3 + e]);
        }
        let c = category_comparison(&shifted, &["a".to_string()], &["b".to_string()]).unwrap();
        assert!(c.result.p_value < 0.01);
        assert!(c.result.statistic < 0.0);

        let two = {
            let mut t = SensitivityMatrix::new();
            cell(&mut t, "p", "a", &[0.1]);
            cell(&mut t, "p", "b", &[0.5]);
            cell(&mut t, "q", "a", &[0.2]);
            cell(&mut t, "q", "b", &[0.4]);
            t
        };
        let c = category_comparison(&two, &["a".to_string()], &["b".to_string()]).unwrap();
        assert_eq!(c.result.n_per_group, vec![2, 2]);
        assert!(c.result.p_value > 0.05);
    }

    #[test]
    fn monotone_transform_keeps_flags() {
        let mut m = SensitivityMatrix::new();
        cell(&mut m, "a", "hot", &spread(0.5, 12));
        cell(&mut m, "a", "c1", &spread(0.38, 12));
        cell(&mut m, "a", "c2", &spread(0.1, 12));
        let before = benchmark_advantage("a", &m, 0.05, BaselineMode::default()).unwrap();
        let after = benchmark_advantage("a", &m.map_values(|v| (3.0 * v).exp()), 0.05, BaselineMode::default()).unwrap();
        let flags = |r: &DetectorReport| r.findings.iter().map(|f| (f.subject.clone(), f.flagged, f.raw_p)).collect::<Vec<_>>();
        assert_eq!(flags(&before), flags(&after));
    }
}
