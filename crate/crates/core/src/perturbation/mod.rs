//! Graded input perturbation.
//!
//! A ladder holds the original input at level 0 followed by `pr_max`
//! increasingly perturbed variants. Code inputs get identifier renaming;
//! natural-language inputs get paraphrases (ordered by distance from the
//! original) or, offline, character or word noise.

pub mod lexer;
pub mod noise;
pub mod paraphrase;
pub mod rename;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{InputKind, Language};

pub use lexer::{tokenize_code, CodeToken, TokenKind, UnsupportedLanguage};
pub use noise::{char_noise, char_noise_level, word_noise};
pub use paraphrase::{
    bow_cosine_distance, order_paraphrases, HttpParaphraser, OrderedParaphrases, ParaphraseProvider, ProviderError,
    RecordedParaphraser,
};
pub use rename::{rename_identifiers, rename_identifiers_with_map, Renaming};

/// How many candidates are requested from a paraphrase provider per level.
pub const PARAPHRASE_OVERSAMPLING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    IdentifierRename,
    CharNoise,
    WordNoise,
    Paraphrase,
}

impl PerturbationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationKind::IdentifierRename => "identifier_rename",
            PerturbationKind::CharNoise => "char_noise",
            PerturbationKind::WordNoise => "word_noise",
            PerturbationKind::Paraphrase => "paraphrase",
        }
    }

    pub fn accepts(&self, input: InputKind) -> bool {
        match self {
            PerturbationKind::IdentifierRename => input == InputKind::Code,
            _ => input == InputKind::NaturalLanguage,
        }
    }

    /// Default kind for an input: renaming for code, paraphrase for prose
    /// when a provider is available, word noise when the fallback is on.
    pub fn resolve(input: InputKind, have_provider: bool, fallback_word_noise: bool) -> Result<Self, PerturbError> {
        match input {
            InputKind::Code => Ok(PerturbationKind::IdentifierRename),
            InputKind::NaturalLanguage if have_provider => Ok(PerturbationKind::Paraphrase),
            InputKind::NaturalLanguage if fallback_word_noise => Ok(PerturbationKind::WordNoise),
            InputKind::NaturalLanguage => Err(PerturbError::MissingProvider),
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identifier_rename" => Ok(PerturbationKind::IdentifierRename),
            "char_noise" => Ok(PerturbationKind::CharNoise),
            "word_noise" => Ok(PerturbationKind::WordNoise),
            "paraphrase" => Ok(PerturbationKind::Paraphrase),
            other => Err(format!(
                "unknown perturbation kind `{other}` (expected identifier_rename, char_noise, word_noise or paraphrase)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("language `{0}` is not supported for identifier renaming")]
    UnsupportedLanguage(Language),
    #[error("perturbation level {level} outside 0..={pr_max}")]
    LevelOutOfRange { level: u32, pr_max: u32 },
    #[error("paraphrase perturbation needs a provider (pass --provider-url or enable --fallback-word-noise)")]
    MissingProvider,
    #[error("perturbation `{kind}` does not apply to {input:?} input")]
    IncompatibleKind { kind: PerturbationKind, input: InputKind },
    #[error("no paraphrase candidates to order")]
    EmptyCandidates,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationLadder {
    pub sample_id: String,
    pub kind: PerturbationKind,
    pub levels: Vec<String>,
    pub seed: u64,
    /// Paraphrase ladders only: distance of each level from the original.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    /// Paraphrase ladders only: levels padded by repeating the last candidate.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub padded: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, Copy)]
pub struct LadderRequest<'a> {
    pub sample_id: &'a str,
    pub input: &'a str,
    pub kind: PerturbationKind,
    pub pr_max: u32,
    pub seed: u64,
    pub language: Language,
}

/// Builds the full ladder `levels[0..=pr_max]`.
pub fn perturb(req: &LadderRequest<'_>, provider: Option<&dyn ParaphraseProvider>) -> Result<PerturbationLadder, PerturbError> {
    if req.pr_max == 0 {
        return Err(PerturbError::LevelOutOfRange { level: 0, pr_max: 0 });
    }
    let mut ladder = PerturbationLadder {
        sample_id: req.sample_id.to_string(),
        kind: req.kind,
        levels: Vec::with_capacity(req.pr_max as usize + 1),
        seed: req.seed,
        distances: None,
        padded: 0,
    };
    match req.kind {
        PerturbationKind::IdentifierRename => {
            for level in 0..=req.pr_max {
                ladder
                    .levels
                    .push(rename_identifiers(req.input, req.language, level, req.pr_max, req.seed)?);
            }
        }
        PerturbationKind::CharNoise => {
            ladder
                .levels
                .extend((0..=req.pr_max).map(|level| char_noise_level(req.input, level, req.seed)));
        }
        PerturbationKind::WordNoise => {
            ladder
                .levels
                .extend((0..=req.pr_max).map(|level| word_noise(req.input, level, req.pr_max, req.seed)));
        }
        PerturbationKind::Paraphrase => {
            let provider = provider.ok_or(PerturbError::MissingProvider)?;
            let wanted = PARAPHRASE_OVERSAMPLING * req.pr_max as usize;
            let candidates = provider.paraphrase(req.input, wanted, req.seed)?;
            let ordered = order_paraphrases(req.input, &candidates, req.pr_max as usize)?;
            ladder.levels.push(req.input.to_string());
            ladder.levels.extend(ordered.texts);
            let mut distances = vec![0.0];
            distances.extend(ordered.distances);
            ladder.distances = Some(distances);
            ladder.padded = ordered.padded;
        }
    }
    Ok(ladder)
}
