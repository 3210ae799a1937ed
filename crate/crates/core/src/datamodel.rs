//! Shared domain types and the line-delimited benchmark format.
//!
//! A benchmark file holds one JSON object per line. Keys other than the
//! known fields are kept in [`BenchmarkSample::metadata`] so that a
//! load/serialize cycle does not lose information.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    CodeGeneration,
    TestGeneration,
    ProgramRepair,
    VulnerabilityDetection,
    CodeSummarization,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::CodeGeneration,
        TaskKind::TestGeneration,
        TaskKind::ProgramRepair,
        TaskKind::VulnerabilityDetection,
        TaskKind::CodeSummarization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::CodeGeneration => "code_generation",
            TaskKind::TestGeneration => "test_generation",
            TaskKind::ProgramRepair => "program_repair",
            TaskKind::VulnerabilityDetection => "vulnerability_detection",
            TaskKind::CodeSummarization => "code_summarization",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    NaturalLanguage,
    Code,
}

/// Source-language tag. Unknown tags are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Java,
    C,
    Cpp,
    Javascript,
    Go,
    Text,
}

impl Language {
    pub fn as_str(&self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Java => "java",
            Language::C => "c",
            Language::Cpp => "cpp",
            Language::Javascript => "javascript",
            Language::Go => "go",
            Language::Text => "text",
        }
    }

    pub fn is_code(&self) -> bool {
        !matches!(self, Language::Text)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "python" => Ok(Language::Python),
            "java" => Ok(Language::Java),
            "c" => Ok(Language::C),
            "cpp" => Ok(Language::Cpp),
            "javascript" => Ok(Language::Javascript),
            "go" => Ok(Language::Go),
            "text" => Ok(Language::Text),
            other => Err(format!("unsupported language tag `{other}`")),
        }
    }
}

/// A test attached to a sample for execution grading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestDescriptor {
    pub cmd: String,
    pub expect: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub id: String,
    pub benchmark: String,
    pub task: TaskKind,
    pub input_kind: InputKind,
    pub language: Language,
    pub input: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<TestDescriptor>>,
    #[serde(flatten)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    EmptyInput,
    EmptyReference,
    CodeWithoutLanguage,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::EmptyId => "id empty",
            Violation::EmptyInput => "input empty",
            Violation::EmptyReference => "reference empty",
            Violation::CodeWithoutLanguage => "code input requires a source language, got \"text\"",
        })
    }
}

/// Checks the per-sample invariants. Violations are returned as data.
pub fn validate_sample(sample: &BenchmarkSample) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if sample.id.is_empty() {
        violations.push(Violation::EmptyId);
    }
    if sample.input.is_empty() {
        violations.push(Violation::EmptyInput);
    }
    if sample.reference.is_empty() {
        violations.push(Violation::EmptyReference);
    }
    if sample.input_kind == InputKind::Code && !sample.language.is_code() {
        violations.push(Violation::CodeWithoutLanguage);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: invalid sample `{id}`: {}", join_violations(.violations))]
    Invalid {
        line: usize,
        id: String,
        violations: Vec<Violation>,
    },
    #[error("line {line}: duplicate sample id `{id}` (first seen on line {first_line})")]
    DuplicateId {
        line: usize,
        first_line: usize,
        id: String,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Vec<BenchmarkSample>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_benchmark(BufReader::new(file)).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Parses benchmark records from any reader. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn parse_benchmark(reader: impl BufRead) -> Result<Vec<BenchmarkSample>, DataError> {
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: BenchmarkSample = serde_json::from_str(&line).map_err(|source| DataError::Malformed {
            line: line_no,
            source,
        })?;
        if let Err(violations) = validate_sample(&sample) {
            return Err(DataError::Invalid {
                line: line_no,
                id: sample.id,
                violations,
            });
        }
        if let Some(&first_line) = seen.get(&sample.id) {
            return Err(DataError::DuplicateId {
                line: line_no,
                first_line,
                id: sample.id,
            });
        }
        seen.insert(sample.id.clone(), line_no);
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_benchmark(samples: &[BenchmarkSample], mut out: impl Write) -> std::io::Result<()> {
    for sample in samples {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be at least {min}, got {value}")]
    TooSmall {
        field: &'static str,
        min: u64,
        value: u64,
    },
    #[error("temperature must be non-negative, got {0}")]
    Temperature(f64),
    #[error("nucleus must lie in (0, 1], got {0}")]
    Nucleus(f64),
}

/// Protocol knobs for one sensitivity run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of perturbation levels above the original (ladder length is `pr_max + 1`).
    pub pr_max: u32,
    /// Answers sampled per prompt.
    pub ans_max: u32,
    /// Independent repetitions of the whole ladder evaluation.
    pub repeats: u32,
    pub seed: u64,
    pub max_concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pr_max: 5,
            ans_max: 3,
            repeats: 3,
            seed: 0,
            max_concurrency: 4,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("pr_max", self.pr_max as u64),
            ("ans_max", self.ans_max as u64),
            ("repeats", self.repeats as u64),
            ("max_concurrency", self.max_concurrency as u64),
        ] {
            if value < 1 {
                return Err(ConfigError::TooSmall { field, min: 1, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    /// Top-p mass. The protocol's "top_k 0.5" is read as nucleus 0.5.
    pub nucleus: f64,
    pub max_tokens: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.3,
            nucleus: 0.5,
            max_tokens: 512,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if !(self.nucleus > 0.0 && self.nucleus <= 1.0) {
            return Err(ConfigError::Nucleus(self.nucleus));
        }
        Ok(())
    }
}
