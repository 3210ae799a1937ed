//! Per-sample sensitivity: perturb the input over a ladder of levels, query
//! the model at every level, grade the answers and take the largest drop
//! between consecutive levels.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{BenchmarkSample, RunConfig, SamplingConfig, TaskKind};
use crate::grading::{perf, GradeError, Grader, GraderKind, TestRunner};
use crate::modelclient::{ClientError, ModelClient, ModelEndpoint, TemplateSet};
use crate::perturbation::{perturb, LadderRequest, ParaphraseProvider, PerturbError, PerturbationKind};
use crate::seed::repeat_seed;

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Error, PartialEq)]
#[error("performance series needs at least 2 levels, got {0}")]
pub struct SeriesTooShort(pub usize);

/// Largest drop `score[k] - score[k + 1]`. Negative when every step
/// improves; not clamped.
pub fn sensitivity_from_perf(series: &[f64]) -> Result<f64, SeriesTooShort> {
    if series.len() < 2 {
        return Err(SeriesTooShort(series.len()));
    }
    Ok(series
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub schema: u32,
    pub sample_id: String,
    pub benchmark: String,
    pub model: String,
    pub task: TaskKind,
    pub kind: PerturbationKind,
    pub grader: GraderKind,
    pub repeat_sensitivities: Vec<f64>,
    pub mean_sensitivity: f64,
    pub perf_series: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Grade(#[from] GradeError),
    #[error(transparent)]
    Series(#[from] SeriesTooShort),
}

#[derive(Debug, Error)]
#[error("sample `{sample_id}` on `{model}`: {source}")]
pub struct SampleFailure {
    pub sample_id: String,
    pub model: String,
    #[source]
    pub source: EvalError,
}

/// Everything shared by all samples in a run.
#[derive(Clone)]
pub struct Evaluator<'a> {
    pub client: &'a ModelClient,
    pub config: &'a RunConfig,
    pub sampling: &'a SamplingConfig,
    pub templates: &'a TemplateSet,
    pub provider: Option<&'a dyn ParaphraseProvider>,
    /// Forces one perturbation kind instead of resolving it per input.
    pub kind: Option<PerturbationKind>,
    pub fallback_word_noise: bool,
    /// Forces one grader instead of the task default.
    pub grader: Option<GraderKind>,
    pub runner: Option<Arc<dyn TestRunner>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(client: &'a ModelClient, config: &'a RunConfig, sampling: &'a SamplingConfig, templates: &'a TemplateSet) -> Self {
        Evaluator {
            client,
            config,
            sampling,
            templates,
            provider: None,
            kind: None,
            fallback_word_noise: false,
            grader: None,
            runner: None,
        }
    }

    pub fn kind_for(&self, sample: &BenchmarkSample) -> Result<PerturbationKind, PerturbError> {
        let kind = match self.kind {
            Some(k) => k,
            None => PerturbationKind::resolve(sample.input_kind, self.provider.is_some(), self.fallback_word_noise)?,
        };
        if !kind.accepts(sample.input_kind) {
            return Err(PerturbError::IncompatibleKind {
                kind,
                input: sample.input_kind,
            });
        }
        Ok(kind)
    }

    pub fn grader_for(&self, sample: &BenchmarkSample) -> Grader {
        let kind = self.grader.unwrap_or_else(|| GraderKind::default_for(sample.task));
        let grader = Grader::new(kind, sample.language);
        match &self.runner {
            Some(r) => grader.with_runner(r.clone()),
            None => grader,
        }
    }

    /// Performance at every level for one repeat.
    pub fn perf_series(
        &self,
        sample: &BenchmarkSample,
        endpoint: &ModelEndpoint,
        kind: PerturbationKind,
        repeat: u32,
    ) -> Result<Vec<f64>, EvalError> {
        let ladder = perturb(
            &LadderRequest {
                sample_id: &sample.id,
                input: &sample.input,
                kind,
                pr_max: self.config.pr_max,
                seed: repeat_seed(self.config.seed, repeat),
                language: sample.language,
            },
            self.provider,
        )?;
        let template = self.templates.get(sample.task);
        let grader = self.grader_for(sample);
        let tests = sample.tests.as_deref().unwrap_or(&[]);
        ladder
            .levels
            .iter()
            .map(|text| {
                let prompt = template.render(text);
                let outputs = self
                    .client
                    .complete(endpoint, &prompt, self.sampling, self.config.ans_max as usize, repeat)?;
                Ok(perf(&outputs.outputs, &sample.reference, tests, &grader)?)
            })
            .collect()
    }

    /// All repeats for one sample; any failed repeat fails the record.
    pub fn evaluate_sample(&self, sample: &BenchmarkSample, endpoint: &ModelEndpoint) -> Result<SensitivityRecord, SampleFailure> {
        self.evaluate_inner(sample, endpoint).map_err(|source| SampleFailure {
            sample_id: sample.id.clone(),
            model: endpoint.name.clone(),
            source,
        })
    }

    fn evaluate_inner(&self, sample: &BenchmarkSample, endpoint: &ModelEndpoint) -> Result<SensitivityRecord, EvalError> {
        let kind = self.kind_for(sample)?;
        let mut perf_series = Vec::with_capacity(self.config.repeats as usize);
        let mut repeat_sensitivities = Vec::with_capacity(self.config.repeats as usize);
        for repeat in 0..self.config.repeats {
            let series = self.perf_series(sample, endpoint, kind, repeat)?;
            repeat_sensitivities.push(sensitivity_from_perf(&series)?);
            perf_series.push(series);
        }
        let mean_sensitivity = repeat_sensitivities.iter().sum::<f64>() / repeat_sensitivities.len() as f64;
        Ok(SensitivityRecord {
            schema: RECORD_SCHEMA,
            sample_id: sample.id.clone(),
            benchmark: sample.benchmark.clone(),
            model: endpoint.name.clone(),
            task: sample.task,
            kind,
            grader: self.grader_for(sample).kind,
            repeat_sensitivities,
            mean_sensitivity,
            perf_series,
        })
    }

    /// One record per (sample, endpoint) in sample-major order. Failures
    /// are collected rather than aborting the batch.
    pub fn run_benchmark(&self, samples: &[BenchmarkSample], endpoints: &[ModelEndpoint]) -> BenchmarkRun {
        let jobs: Vec<(&BenchmarkSample, &ModelEndpoint)> =
            samples.iter().flat_map(|s| endpoints.iter().map(move |e| (s, e))).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.max_concurrency.max(1))
            .build()
            .expect("thread pool");
        let results: Vec<Result<SensitivityRecord, SampleFailure>> =
            pool.install(|| jobs.par_iter().map(|(s, e)| self.evaluate_sample(s, e)).collect());
        let mut run = BenchmarkRun::default();
        for r in results {
            match r {
                Ok(record) => run.records.push(record),
                Err(failure) => run.failures.push(failure),
            }
        }
        run
    }
}

#[derive(Debug, Default)]
pub struct BenchmarkRun {
    pub records: Vec<SensitivityRecord>,
    pub failures: Vec<SampleFailure>,
}

#[derive(Debug, Error)]
pub enum RecordIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("records line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("records line {line}: unsupported schema {found}")]
    Schema { line: usize, found: u32 },
}

pub fn write_records(records: &[SensitivityRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SensitivityRecord>, RecordIoError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SensitivityRecord =
            serde_json::from_str(&line).map_err(|source| RecordIoError::Malformed { line: i + 1, source })?;
        if record.schema != RECORD_SCHEMA {
            return Err(RecordIoError::Schema {
                line: i + 1,
                found: record.schema,
            });
        }
        records.push(record);
    }
    Ok(records)
}
