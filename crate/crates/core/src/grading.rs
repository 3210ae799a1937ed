//! Task-dependent scoring of model outputs against a reference.
//!
//! Every score is a similarity in `[0, 1]` (1 = identical), the complement
//! of a length-normalised edit distance, so a falling score means degraded
//! output.

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Language, TaskKind, TestDescriptor};
use crate::perturbation::lexer::{tokenize_code, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraderKind {
    TextSimilarity,
    CodeTokenSimilarity,
    Execution,
}

impl GraderKind {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::CodeGeneration | TaskKind::TestGeneration | TaskKind::ProgramRepair => {
                GraderKind::CodeTokenSimilarity
            }
            TaskKind::CodeSummarization | TaskKind::VulnerabilityDetection => GraderKind::TextSimilarity,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GraderKind::TextSimilarity => "text_similarity",
            GraderKind::CodeTokenSimilarity => "code_token_similarity",
            GraderKind::Execution => "execution",
        }
    }
}

impl std::str::FromStr for GraderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text_similarity" => Ok(GraderKind::TextSimilarity),
            "code_token_similarity" => Ok(GraderKind::CodeTokenSimilarity),
            "execution" => Ok(GraderKind::Execution),
            other => Err(format!("unknown grader `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("execution grading requested but no test runner is configured")]
    NoRunner,
    #[error("execution grading requested but the sample has no tests")]
    NoTests,
    #[error("no outputs to grade")]
    NoOutputs,
    #[error("test runner failed: {0}")]
    Runner(String),
}

/// Levenshtein distance over arbitrary sequences (two-row DP).
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level edit distance (Unicode scalar values).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

fn normalized_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// `1 - levenshtein / max(len)`; two empty strings score 1.
pub fn text_similarity(candidate: &str, reference: &str) -> f64 {
    let a: Vec<char> = candidate.chars().collect();
    let b: Vec<char> = reference.chars().collect();
    normalized_similarity(&a, &b)
}

/// Token texts with whitespace and comments removed, or `None` when the
/// language has no lexer.
pub fn significant_tokens(source: &str, language: Language) -> Option<Vec<String>> {
    let tokens = tokenize_code(source, language).ok()?;
    Some(
        tokens
            .into_iter()
            .filter(|t| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
            .map(|t| t.text)
            .collect(),
    )
}

/// Token-sequence similarity; falls back to [`text_similarity`] when the
/// language cannot be lexed.
pub fn code_token_similarity(candidate: &str, reference: &str, language: Language) -> f64 {
    match (significant_tokens(candidate, language), significant_tokens(reference, language)) {
        (Some(a), Some(b)) => normalized_similarity(&a, &b),
        _ => text_similarity(candidate, reference),
    }
}

/// Runs one test against one candidate output.
pub trait TestRunner: Send + Sync {
    fn passes(&self, candidate: &str, test: &TestDescriptor, language: Language) -> Result<bool, GradeError>;
}

/// Shell-command test runner.
///
/// The template may use `{candidate}` (path of a temp file holding the
/// output), `{cmd}` and `{expect}` (from the test descriptor). Exit code 0
/// is a pass; a timeout is a failure.
#[derive(Debug, Clone)]
pub struct CommandRunner {
    pub template: String,
    pub timeout: Duration,
}

fn extension(language: Language) -> &'static str {
    match language {
        Language::Python => "py",
        Language::Java => "java",
        Language::C => "c",
        Language::Cpp => "cpp",
        Language::Javascript => "js",
        Language::Go => "go",
        Language::Text => "txt",
    }
}

impl TestRunner for CommandRunner {
    fn passes(&self, candidate: &str, test: &TestDescriptor, language: Language) -> Result<bool, GradeError> {
        let mut file = tempfile::Builder::new()
            .suffix(&format!(".{}", extension(language)))
            .tempfile()
            .map_err(|e| GradeError::Runner(e.to_string()))?;
        file.write_all(candidate.as_bytes())
            .map_err(|e| GradeError::Runner(e.to_string()))?;
        let path = file.path().display().to_string();
        let script = self
            .template
            .replace("{candidate}", &format!("'{}'", path.replace('\'', r"'\''")))
            .replace("{cmd}", &test.cmd)
            .replace("{expect}", &test.expect);
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&script)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| GradeError::Runner(e.to_string()))?;
        let started = Instant::now();
        loop {
            if let Some(status) = child.try_wait().map_err(|e| GradeError::Runner(e.to_string()))? {
                return Ok(status.success());
            }
            if started.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(false);
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}

/// A grader bound to a sample's language.
#[derive(Clone)]
pub struct Grader {
    pub kind: GraderKind,
    pub language: Language,
    pub runner: Option<Arc<dyn TestRunner>>,
}

impl Grader {
    pub fn new(kind: GraderKind, language: Language) -> Self {
        Grader {
            kind,
            language,
            runner: None,
        }
    }

    pub fn with_runner(mut self, runner: Arc<dyn TestRunner>) -> Self {
        self.runner = Some(runner);
        self
    }

    /// Score of one output. Execution grading scores 1 only when every
    /// test passes.
    pub fn score(&self, output: &str, reference: &str, tests: &[TestDescriptor]) -> Result<f64, GradeError> {
        match self.kind {
            GraderKind::TextSimilarity => Ok(text_similarity(output, reference)),
            GraderKind::CodeTokenSimilarity => Ok(code_token_similarity(output, reference, self.language)),
            GraderKind::Execution => {
                let runner = self.runner.as_ref().ok_or(GradeError::NoRunner)?;
                if tests.is_empty() {
                    return Err(GradeError::NoTests);
                }
                for test in tests {
                    if !runner.passes(output, test, self.language)? {
                        return Ok(0.0);
                    }
                }
                Ok(1.0)
            }
        }
    }
}

/// Mean score over one level's outputs.
pub fn perf(outputs: &[String], reference: &str, tests: &[TestDescriptor], grader: &Grader) -> Result<f64, GradeError> {
    if outputs.is_empty() {
        return Err(GradeError::NoOutputs);
    }
    let mut total = 0.0;
    for output in outputs {
        total += grader.score(output, reference, tests)?;
    }
    Ok(total / outputs.len() as f64)
}
