//! Summary tables, findings and boxplots.
//!
//! Everything here is a pure function of the records and the run
//! metadata, so re-rendering the same inputs is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{cross_benchmark_correlation, detect_all, AnalysisError, BaselineMode, CorrelationTable, DetectorReport, SensitivityMatrix};
use crate::datamodel::{RunConfig, SamplingConfig, TaskKind};
use crate::sensitivity::SensitivityRecord;
use crate::stats::{descriptive, Summary};

pub const REPORT_SCHEMA: u32 = 1;

const SAMPLING_NOTE: &str = "the protocol's top_k of 0.5 is applied as nucleus sampling, top_p = 0.5";

/// Written as `run.json` next to the records: every effective setting of
/// the run under its protocol name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub levels: u32,
    pub samples: u32,
    pub repeats: u32,
    pub seed: u64,
    pub temperature: f64,
    pub nucleus: f64,
    pub max_tokens: u32,
    pub alpha: f64,
    pub max_concurrency: usize,
    pub sampling_note: String,
    pub endpoints: Vec<String>,
    pub benchmarks: Vec<String>,
    /// Driver-level settings (cache directory, overrides, templates).
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
    pub records: usize,
    pub failures: usize,
}

impl RunManifest {
    pub fn new(config: &RunConfig, sampling: &SamplingConfig, alpha: f64) -> Self {
        RunManifest {
            schema: REPORT_SCHEMA,
            levels: config.pr_max,
            samples: config.ans_max,
            repeats: config.repeats,
            seed: config.seed,
            temperature: sampling.temperature,
            nucleus: sampling.nucleus,
            max_tokens: sampling.max_tokens,
            alpha,
            max_concurrency: config.max_concurrency,
            sampling_note: SAMPLING_NOTE.into(),
            endpoints: Vec::new(),
            benchmarks: Vec::new(),
            settings: BTreeMap::new(),
            records: 0,
            failures: 0,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            pr_max: self.levels,
            ans_max: self.samples,
            repeats: self.repeats,
            seed: self.seed,
            max_concurrency: self.max_concurrency,
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            temperature: self.temperature,
            nucleus: self.nucleus,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunManifest>,
    pub alpha: f64,
    pub baseline: BaselineMode,
    pub quantiles: String,
    pub sampling_note: String,
    pub category_pairing: String,
}

impl RunMetadata {
    pub fn new(run: Option<RunManifest>, alpha: f64, baseline: BaselineMode) -> Self {
        RunMetadata {
            schema: REPORT_SCHEMA,
            run,
            alpha,
            baseline,
            quantiles: "linear interpolation between order statistics (type 7)".into(),
            sampling_note: SAMPLING_NOTE.into(),
            category_pairing: "one pair per model: median sensitivity over each category".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub benchmark: String,
    pub task: TaskKind,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub summaries: Vec<SummaryRow>,
    pub detectors: DetectorReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<CorrelationTable>,
    pub notes: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to summarize")]
    Empty,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Groups records by (model, benchmark), summarizes each group and runs
/// the detectors.
pub fn summarize(records: &[SensitivityRecord], metadata: RunMetadata) -> Result<ReportBundle, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut groups: BTreeMap<(&str, &str), (TaskKind, Vec<f64>)> = BTreeMap::new();
    for r in records {
        groups
            .entry((&r.model, &r.benchmark))
            .or_insert_with(|| (r.task, Vec::new()))
            .1
            .push(r.mean_sensitivity);
    }
    let summaries = groups
        .into_iter()
        .map(|((model, benchmark), (task, values))| SummaryRow {
            model: model.to_string(),
            benchmark: benchmark.to_string(),
            task,
            summary: descriptive(&values).expect("non-empty finite group"),
        })
        .collect();

    let matrix = SensitivityMatrix::from_records(records);
    let detectors = detect_all(&matrix, metadata.alpha, metadata.baseline)?;
    let mut notes = Vec::new();
    let models = matrix.models();
    let benchmarks = matrix.benchmarks();
    let correlations = if models.len() < 2 || benchmarks.len() < 2 {
        notes.push("correlations need at least 2 models and 2 benchmarks".into());
        None
    } else {
        match cross_benchmark_correlation(&matrix, &models, &benchmarks) {
            Ok(t) => Some(t),
            Err(AnalysisError::MissingCell { model, benchmark }) => {
                notes.push(format!("correlations omitted: no data for {model} on {benchmark}"));
                None
            }
            Err(e) => return Err(e.into()),
        }
    };
    for s in &detectors.skipped {
        notes.push(format!("{} `{}` / `{}`: {:?}", s.scope, s.context, s.subject, s.reason));
    }
    Ok(ReportBundle {
        metadata,
        summaries,
        detectors,
        correlations,
        notes,
    })
}

/// Fixed column order: model, benchmark, task, n, min, q1, median, q3,
/// max, mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub model: String,
    pub benchmark: String,
    pub task: TaskKind,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl From<&SummaryRow> for CsvRow {
    fn from(r: &SummaryRow) -> Self {
        CsvRow {
            model: r.model.clone(),
            benchmark: r.benchmark.clone(),
            task: r.task,
            n: r.summary.n,
            min: r.summary.min,
            q1: r.summary.q1,
            median: r.summary.median,
            q3: r.summary.q3,
            max: r.summary.max,
            mean: r.summary.mean,
        }
    }
}

pub fn export_csv(bundle: &ReportBundle, path: &Path) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &bundle.summaries {
        w.serialize(CsvRow::from(row))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

const PALETTE: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

const BOX_W: f64 = 24.0;
const BOX_GAP: f64 = 8.0;
const GROUP_GAP: f64 = 32.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 40.0;
const PLOT_H: f64 = 300.0;
const BOTTOM: f64 = 80.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One grouped boxplot (benchmarks along x, one box per model) for the
/// rows of a single task.
pub fn render_svg(task: TaskKind, rows: &[&SummaryRow]) -> String {
    let mut benchmarks: BTreeMap<&str, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        benchmarks.entry(&r.benchmark).or_default().push(r);
    }
    let models: Vec<&str> = {
        let mut m: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let color = |model: &str| PALETTE[models.iter().position(|m| *m == model).unwrap_or(0) % PALETTE.len()];

    let lo = rows.iter().map(|r| r.summary.min).fold(0.0, f64::min).max(-1.0);
    let hi = rows.iter().map(|r| r.summary.max).fold(1.0, f64::max).min(1.0);
    let y = |v: f64| TOP + (hi - v.clamp(lo, hi)) / (hi - lo) * PLOT_H;

    let groups_w: f64 = benchmarks
        .values()
        .map(|g| g.len() as f64 * (BOX_W + BOX_GAP) - BOX_GAP)
        .sum::<f64>()
        + GROUP_GAP * (benchmarks.len() as f64 + 1.0);
    let width = LEFT + groups_w + 140.0;
    let height = TOP + PLOT_H + BOTTOM;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20.00" font-size="14" text-anchor="middle">Perturbation sensitivity: {}</text>"#,
        width / 2.0,
        task
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    let mut tick = (lo * 4.0).ceil() / 4.0;
    while tick <= hi + 1e-9 {
        let ty = y(tick);
        let _ = writeln!(
            s,
            r##"<line class="tick" x1="{:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#dddddd"/>"##,
            LEFT,
            LEFT + groups_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.2}</text>"#,
            LEFT - 6.0,
            ty + 4.0
        );
        tick += 0.25;
    }
    let _ = writeln!(
        s,
        r#"<text x="16.00" y="{:.2}" text-anchor="middle" transform="rotate(-90 16.00 {:.2})">sensitivity</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );

    let mut x = LEFT + GROUP_GAP;
    for (bench, group) in &benchmarks {
        let start = x;
        let mut group = group.clone();
        group.sort_by(|a, b| a.model.cmp(&b.model));
        for r in group {
            let m = &r.summary;
            let cx = x + BOX_W / 2.0;
            let c = color(&r.model);
            let _ = writeln!(
                s,
                r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                y(m.max),
                y(m.min)
            );
            for v in [m.min, m.max] {
                let _ = writeln!(
                    s,
                    r#"<line class="cap" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                    cx - BOX_W / 4.0,
                    y(v),
                    cx + BOX_W / 4.0,
                    y(v)
                );
            }
            let _ = writeln!(
                s,
                r#"<rect class="box" x="{x:.2}" y="{:.2}" width="{BOX_W:.2}" height="{:.2}" fill="{c}" stroke="black"><title>{} / {}: median {:.2}, n {}</title></rect>"#,
                y(m.q3),
                y(m.q1) - y(m.q3),
                escape(&r.model),
                escape(bench),
                m.median,
                m.n
            );
            let _ = writeln!(
                s,
                r#"<line class="median" x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
                y(m.median),
                x + BOX_W,
                y(m.median)
            );
            x += BOX_W + BOX_GAP;
        }
        x -= BOX_GAP;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (start + x) / 2.0,
            TOP + PLOT_H + 18.0,
            escape(bench)
        );
        x += GROUP_GAP;
    }

    let lx = LEFT + groups_w + 16.0;
    for (i, model) in models.iter().enumerate() {
        let ly = TOP + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect class="legend" x="{lx:.2}" y="{ly:.2}" width="10.00" height="10.00" fill="{}"/>"#,
            color(model)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 14.0,
            ly + 9.0,
            escape(model)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `boxplots_<task>.svg` for every task present; returns the paths.
pub fn render_boxplots(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut by_task: BTreeMap<TaskKind, Vec<&SummaryRow>> = BTreeMap::new();
    for r in &bundle.summaries {
        by_task.entry(r.task).or_default().push(r);
    }
    let mut paths = Vec::new();
    for (task, rows) in by_task {
        let path = dir.join(format!("boxplots_{task}.svg"));
        fs::write(&path, render_svg(task, &rows)).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

/// `report.csv`, `findings.jsonl`, `summary.json` and the boxplots.
pub fn write_report(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join("report.csv");
    export_csv(bundle, &csv_path)?;
    written.push(csv_path);

    let findings_path = dir.join("findings.jsonl");
    let mut f = fs::File::create(&findings_path).map_err(io_err(&findings_path))?;
    for finding in &bundle.detectors.findings {
        let line = serde_json::to_string(finding).expect("finding serializes");
        writeln!(f, "{line}").map_err(io_err(&findings_path))?;
    }
    written.push(findings_path);

    let summary_path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(bundle).expect("bundle serializes");
    json.push('\n');
    fs::write(&summary_path, json).map_err(io_err(&summary_path))?;
    written.push(summary_path);

    written.extend(render_boxplots(bundle, dir)?);
    Ok(written)
}
