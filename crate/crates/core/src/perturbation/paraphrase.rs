//! Paraphrase-based perturbation: candidate ordering by bag-of-words
//! cosine distance, and the client for the paraphrase sidecar.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PerturbError;

fn bag_of_words(text: &str) -> HashMap<String, u64> {
    let mut bag = HashMap::new();
    for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        *bag.entry(word.to_lowercase()).or_insert(0) += 1;
    }
    bag
}

/// `1 - cos` between lowercase word-count vectors. Words are maximal
/// alphanumeric runs. Two empty texts are at distance 0; an empty and a
/// non-empty text at distance 1.
pub fn bow_cosine_distance(a: &str, b: &str) -> f64 {
    let (a, b) = (bag_of_words(a), bag_of_words(b));
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let dot: u64 = a.iter().map(|(w, n)| n * b.get(w).copied().unwrap_or(0)).sum();
    let norm_a: u64 = a.values().map(|n| n * n).sum();
    let norm_b: u64 = b.values().map(|n| n * n).sum();
    // sqrt of the product keeps identical bags at exactly cos = 1
    let cos = dot as f64 / ((norm_a as f64) * (norm_b as f64)).sqrt();
    (1.0 - cos).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedParaphrases {
    pub texts: Vec<String>,
    pub distances: Vec<f64>,
    /// Trailing entries that repeat the most distant candidate because the
    /// provider returned fewer than requested.
    pub padded: usize,
}

/// Keeps the `pr_max` candidates closest to `original`, nearest first.
/// Ties keep candidate order.
pub fn order_paraphrases(original: &str, candidates: &[String], pr_max: usize) -> Result<OrderedParaphrases, PerturbError> {
    if candidates.is_empty() {
        return Err(PerturbError::EmptyCandidates);
    }
    let mut scored: Vec<(f64, &String)> = candidates
        .iter()
        .map(|c| (bow_cosine_distance(original, c), c))
        .collect();
    // stable sort: equal distances stay in input order
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    scored.truncate(pr_max);
    let padded = pr_max - scored.len();
    if let Some(&last) = scored.last() {
        scored.extend(std::iter::repeat_n(last, padded));
    }
    Ok(OrderedParaphrases {
        texts: scored.iter().map(|(_, t)| (*t).clone()).collect(),
        distances: scored.iter().map(|(d, _)| *d).collect(),
        padded,
    })
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("paraphrase provider unreachable: {0}")]
    Transport(String),
    #[error("paraphrase provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed paraphrase response: {reason}; raw payload: {raw}")]
    Malformed { reason: String, raw: String },
    #[error("paraphrase provider returned {got} paraphrases, expected {expected}")]
    WrongCount { expected: usize, got: usize },
}

/// Source of paraphrase candidates.
pub trait ParaphraseProvider: Send + Sync {
    fn paraphrase(&self, text: &str, n: usize, seed: u64) -> Result<Vec<String>, ProviderError>;
}

#[derive(Debug, Serialize)]
struct ParaphraseRequest<'a> {
    text: &'a str,
    n: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct ParaphraseResponse {
    paraphrases: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct HealthResponse {
    #[serde(default)]
    ready: bool,
}

/// Client for the paraphrase sidecar (`POST /paraphrase`, `GET /health`).
pub struct HttpParaphraser {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpParaphraser {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpParaphraser {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    /// `Ok(ready)` on HTTP 200, otherwise an error.
    pub fn health(&self) -> Result<bool, ProviderError> {
        let resp = self
            .client
            .get(format!("{}/health", self.base_url))
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if status != 200 {
            return Err(ProviderError::Status { status, body });
        }
        // A bare 200 without a JSON body counts as ready.
        Ok(serde_json::from_str::<HealthResponse>(&body).map(|h| h.ready).unwrap_or(true))
    }
}

impl ParaphraseProvider for HttpParaphraser {
    fn paraphrase(&self, text: &str, n: usize, seed: u64) -> Result<Vec<String>, ProviderError> {
        let resp = self
            .client
            .post(format!("{}/paraphrase", self.base_url))
            .json(&ParaphraseRequest { text, n, seed })
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let raw = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if status != 200 {
            return Err(ProviderError::Status { status, body: raw });
        }
        let parsed: ParaphraseResponse = serde_json::from_str(&raw).map_err(|e| ProviderError::Malformed {
            reason: e.to_string(),
            raw: raw.clone(),
        })?;
        if parsed.paraphrases.len() != n {
            return Err(ProviderError::WrongCount {
                expected: n,
                got: parsed.paraphrases.len(),
            });
        }
        if parsed.paraphrases.iter().any(|p| p.trim().is_empty()) {
            return Err(ProviderError::Malformed {
                reason: "empty paraphrase".into(),
                raw,
            });
        }
        Ok(parsed.paraphrases)
    }
}

/// Provider backed by a fixed table of recorded candidates.
#[derive(Debug, Clone, Default)]
pub struct RecordedParaphraser {
    table: HashMap<String, Vec<String>>,
}

impl RecordedParaphraser {
    pub fn new(table: HashMap<String, Vec<String>>) -> Self {
        RecordedParaphraser { table }
    }
}

impl ParaphraseProvider for RecordedParaphraser {
    fn paraphrase(&self, text: &str, n: usize, _seed: u64) -> Result<Vec<String>, ProviderError> {
        let recorded = self.table.get(text).ok_or_else(|| ProviderError::Status {
            status: 404,
            body: format!("no recorded paraphrases for {text:?}"),
        })?;
        Ok(recorded.iter().cycle().take(n).cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        assert_eq!(bow_cosine_distance("a b", "a b"), 0.0);
        assert_eq!(bow_cosine_distance("a b", "c d"), 1.0);
        assert_eq!(bow_cosine_distance("a b", "a c"), 0.5);
        assert_eq!(bow_cosine_distance("", ""), 0.0);
        assert_eq!(bow_cosine_distance("", "x"), 1.0);
        assert_eq!(bow_cosine_distance("Sort THE list.", "sort the list"), 0.0);
    }

    #[test]
    fn original_ranks_first() {
        let cands = vec!["totally unrelated words".to_string(), "sort a list".to_string()];
        let ordered = order_paraphrases("sort a list", &cands, 2).unwrap();
        assert_eq!(ordered.texts[0], "sort a list");
        assert_eq!(ordered.distances[0], 0.0);
    }

    #[test]
    fn ties_keep_input_order_and_padding_repeats_last() {
        let cands = vec!["a c".to_string(), "a d".to_string()];
        let ordered = order_paraphrases("a b", &cands, 4).unwrap();
        assert_eq!(ordered.texts, ["a c", "a d", "a d", "a d"]);
        assert_eq!(ordered.padded, 2);
    }

    #[test]
    fn empty_candidates_rejected() {
        assert!(matches!(order_paraphrases("x", &[], 5), Err(PerturbError::EmptyCandidates)));
    }
}
