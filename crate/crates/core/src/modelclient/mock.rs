//! Built-in synthetic models.
//!
//! The memorizer returns a stored reference when the input is within `r`
//! character edits of a table key and unrelated noise otherwise. The
//! generalizer degrades its answer in proportion to the bag-of-words
//! distance between the input and the nearest key.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{BenchmarkSample, Language};
use crate::grading::{code_token_similarity, levenshtein, text_similarity, GraderKind};
use crate::perturbation::bow_cosine_distance;
use crate::perturbation::lexer::{tokenize_code, TokenKind};
use crate::seed::SeedMixer;

use super::template::{PromptTemplate, TemplateSet, PLACEHOLDER};

/// Tolerance of the generalizer's constructed output.
pub const TARGET_TOLERANCE: f64 = 0.02;

const CONSTRUCTION_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorizerSpec {
    pub radius: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizerSpec {
    pub decay: f64,
}

impl Default for GeneralizerSpec {
    fn default() -> Self {
        GeneralizerSpec { decay: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockSpec {
    Memorizer(MemorizerSpec),
    Generalizer(GeneralizerSpec),
}

#[derive(Debug, Error, PartialEq)]
pub enum MockSpecError {
    #[error("unknown mock model `{0}` (expected memorizer or generalizer)")]
    UnknownModel(String),
    #[error("bad mock parameter `{0}`")]
    BadParameter(String),
    #[error("generalizer decay must lie in [0, 1], got {0}")]
    DecayOutOfRange(f64),
}

impl MockSpec {
    /// Parses the part after `mock:`, e.g. `memorizer?radius=2`.
    pub fn parse(spec: &str) -> Result<Self, MockSpecError> {
        let (model, query) = spec.split_once('?').unwrap_or((spec, ""));
        let params: Vec<(&str, &str)> = query
            .split('&')
            .filter(|p| !p.is_empty())
            .map(|p| p.split_once('=').ok_or_else(|| MockSpecError::BadParameter(p.to_string())))
            .collect::<Result<_, _>>()?;
        match model {
            "memorizer" => {
                let mut radius = 0;
                for (k, v) in params {
                    match k {
                        "radius" | "r" => {
                            radius = v.parse().map_err(|_| MockSpecError::BadParameter(format!("{k}={v}")))?
                        }
                        _ => return Err(MockSpecError::BadParameter(format!("{k}={v}"))),
                    }
                }
                Ok(MockSpec::Memorizer(MemorizerSpec { radius }))
            }
            "generalizer" => {
                let mut decay = GeneralizerSpec::default().decay;
                for (k, v) in params {
                    match k {
                        "decay" | "d" => {
                            decay = v.parse().map_err(|_| MockSpecError::BadParameter(format!("{k}={v}")))?
                        }
                        _ => return Err(MockSpecError::BadParameter(format!("{k}={v}"))),
                    }
                }
                if !(0.0..=1.0).contains(&decay) {
                    return Err(MockSpecError::DecayOutOfRange(decay));
                }
                Ok(MockSpec::Generalizer(GeneralizerSpec { decay }))
            }
            other => Err(MockSpecError::UnknownModel(other.to_string())),
        }
    }
}

/// One memorized input/reference pair.
#[derive(Debug, Clone)]
pub struct MockEntry {
    pub input: String,
    pub reference: String,
    pub grader: GraderKind,
    pub language: Language,
    pub template: PromptTemplate,
}

impl MockEntry {
    /// One entry per sample, using the task's template and default grader
    /// unless `grader` overrides it.
    pub fn from_samples(samples: &[BenchmarkSample], templates: &TemplateSet, grader: Option<GraderKind>) -> Vec<Self> {
        samples
            .iter()
            .map(|s| MockEntry {
                input: s.input.clone(),
                reference: s.reference.clone(),
                grader: grader.unwrap_or_else(|| GraderKind::default_for(s.task)),
                language: s.language,
                template: templates.get(s.task).clone(),
            })
            .collect()
    }

    fn extract<'p>(&self, prompt: &'p str) -> Option<&'p str> {
        let (head, tail) = self.template.text().split_once(PLACEHOLDER)?;
        if prompt.len() < head.len() + tail.len() {
            return None;
        }
        prompt.strip_prefix(head)?.strip_suffix(tail)
    }
}

#[derive(Debug, Clone)]
pub struct MockModel {
    spec: MockSpec,
    table: Vec<MockEntry>,
    alphabet: Vec<char>,
}

impl MockModel {
    pub fn new(spec: MockSpec, table: Vec<MockEntry>) -> Self {
        let alphabet = noise_alphabet(&table);
        MockModel { spec, table, alphabet }
    }

    pub fn spec(&self) -> MockSpec {
        self.spec
    }

    pub fn respond(&self, prompt: &str, seed: u64) -> String {
        match self.spec {
            MockSpec::Memorizer(m) => self.memorized(prompt, m.radius).unwrap_or_else(|| self.noise(seed)),
            MockSpec::Generalizer(g) => match self.nearest(prompt) {
                Some((entry, dist)) => {
                    let target = (1.0 - g.decay * dist).clamp(0.0, 1.0);
                    construct(entry, target, &self.alphabet, seed)
                }
                None => self.noise(seed),
            },
        }
    }

    fn memorized(&self, prompt: &str, radius: usize) -> Option<String> {
        let candidates: Vec<(&MockEntry, &str)> =
            self.table.iter().filter_map(|e| e.extract(prompt).map(|i| (e, i))).collect();
        if let Some((e, _)) = candidates.iter().find(|(e, i)| e.input == *i) {
            return Some(e.reference.clone());
        }
        if radius == 0 {
            return None;
        }
        candidates
            .into_iter()
            .find(|(e, i)| {
                let (a, b) = (e.input.chars().count(), i.chars().count());
                a.abs_diff(b) <= radius && levenshtein(&e.input, i) <= radius
            })
            .map(|(e, _)| e.reference.clone())
    }

    fn nearest(&self, prompt: &str) -> Option<(&MockEntry, f64)> {
        let mut best: Option<(&MockEntry, f64)> = None;
        for e in &self.table {
            let Some(input) = e.extract(prompt) else { continue };
            let d = if input == e.input { 0.0 } else { bow_cosine_distance(&e.input, input) };
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((e, d));
            }
        }
        best
    }

    fn noise(&self, seed: u64) -> String {
        let mut rng = SeedMixer::new("mock-noise").u64(seed).rng();
        let len = rng.random_range(24..=64);
        (0..len).map(|_| self.alphabet[rng.random_range(0..self.alphabet.len())]).collect()
    }
}

/// Letters used for noise and substitutions: characters that appear in no
/// reference, so every substituted position is a guaranteed mismatch.
fn noise_alphabet(table: &[MockEntry]) -> Vec<char> {
    let used: BTreeSet<char> = table.iter().flat_map(|e| e.reference.chars()).collect();
    let pick = |range: std::ops::RangeInclusive<u32>| -> Vec<char> {
        range.filter_map(char::from_u32).filter(|c| !used.contains(c)).collect()
    };
    let mut letters = pick(0x03B1..=0x03C9);
    letters.extend(pick(0x0430..=0x044F));
    if letters.len() < 8 {
        letters.extend(pick(0xE000..=0xE0FF));
    }
    letters
}

fn grade(entry: &MockEntry, output: &str) -> f64 {
    match entry.grader {
        GraderKind::CodeTokenSimilarity => code_token_similarity(output, &entry.reference, entry.language),
        _ => text_similarity(output, &entry.reference),
    }
}

/// Corrupts the reference so its graded similarity lands on `target`.
/// Substituted and appended units never match the reference, so `k`
/// substitutions plus `m` appended units over `n` give a similarity of
/// exactly `1 - (k + m) / (n + m)`. Re-lexing can shift token boundaries,
/// hence the verification loop.
fn construct(entry: &MockEntry, target: f64, alphabet: &[char], seed: u64) -> String {
    if target >= 1.0 {
        return entry.reference.clone();
    }
    let mut best: Option<(f64, String)> = None;
    for attempt in 0..CONSTRUCTION_ATTEMPTS {
        let mut rng = SeedMixer::new("mock-generalizer").u64(seed).u64(attempt).rng();
        let out = match entry.grader {
            GraderKind::CodeTokenSimilarity => substitute_tokens(entry, target, alphabet, &mut rng),
            _ => None,
        }
        .unwrap_or_else(|| substitute_chars(&entry.reference, target, alphabet, &mut rng));
        let err = (grade(entry, &out) - target).abs();
        if err <= TARGET_TOLERANCE / 2.0 {
            return out;
        }
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, out));
        }
    }
    best.expect("at least one attempt").1
}

/// Substitution and append counts whose similarity is closest to `target`,
/// preferring fewer appended units. Any edit costs at least `1/n`, so
/// targets in `(1 - 1/n, 1)` are only approximated on short references.
fn plan(n: usize, target: f64) -> (usize, usize) {
    let mut best = (0, 0, f64::INFINITY);
    for m in 0..=4 * n + 64 {
        for k in 0..=n {
            let s = 1.0 - (k + m) as f64 / (n + m) as f64;
            let err = (s - target).abs();
            if err < best.2 - 1e-12 {
                best = (k, m, err);
            }
        }
        if best.2 <= TARGET_TOLERANCE / 4.0 {
            break;
        }
    }
    (best.0, best.1)
}

fn fresh_word(alphabet: &[char], rng: &mut impl Rng) -> String {
    let len = rng.random_range(3..=6);
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

fn substitute_tokens(entry: &MockEntry, target: f64, alphabet: &[char], rng: &mut impl Rng) -> Option<String> {
    let tokens = tokenize_code(&entry.reference, entry.language).ok()?;
    let significant: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
        .map(|(i, _)| i)
        .collect();
    if significant.is_empty() {
        return None;
    }
    let (k, m) = plan(significant.len(), target);
    let chosen: BTreeSet<usize> = sample(rng, significant.len(), k).into_iter().map(|i| significant[i]).collect();
    let mut out = String::with_capacity(entry.reference.len() + 8 * k);
    for (i, t) in tokens.iter().enumerate() {
        if chosen.contains(&i) {
            // padded so the word cannot merge with its neighbours
            out.push(' ');
            out.push_str(&fresh_word(alphabet, rng));
            out.push(' ');
        } else {
            out.push_str(&t.text);
        }
    }
    for _ in 0..m {
        out.push(' ');
        out.push_str(&fresh_word(alphabet, rng));
    }
    Some(out)
}

fn substitute_chars(reference: &str, target: f64, alphabet: &[char], rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = reference.chars().collect();
    let n = chars.len();
    let (k, m) = plan(n, target);
    for i in sample(rng, n, k) {
        chars[i] = alphabet[rng.random_range(0..alphabet.len())];
    }
    for _ in 0..m {
        chars.push(alphabet[rng.random_range(0..alphabet.len())]);
    }
    chars.into_iter().collect()
}
