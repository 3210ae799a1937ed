//! Character- and word-level noise for natural-language prompts.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::seed::SeedMixer;

/// Character-noise rate applied at ladder level `level`.
pub const CHAR_NOISE_RATE_PER_LEVEL: f64 = 0.02;

/// Fraction of words touched at the top level of a word-noise ladder.
pub const WORD_NOISE_MAX_FRACTION: f64 = 0.15;

/// `ceil(rate * len)`, snapping products that are integral up to rounding
/// error (`0.02 * 3 * 100` is not exactly 6 in binary floating point).
pub fn ceil_count(rate: f64, len: usize) -> usize {
    let exact = rate.clamp(0.0, 1.0) * len as f64;
    let nearest = exact.round();
    let count = if (exact - nearest).abs() < 1e-9 { nearest } else { exact.ceil() };
    (count as usize).min(len)
}

/// Number of characters changed at `level`: `ceil(0.02 * level * len)`,
/// computed in integers.
pub fn char_noise_count(len: usize, level: u32) -> usize {
    (2 * level as usize * len).div_ceil(100).min(len)
}

/// Replaces exactly `ceil(rate * len)` characters (counted as Unicode
/// scalar values) with printable ASCII characters different from the
/// originals. Positions come from a seeded permutation, so for a fixed
/// seed a lower rate changes a subset of the positions a higher rate
/// changes.
pub fn char_noise(text: &str, rate: f64, seed: u64) -> String {
    let len = text.chars().count();
    replace_chars(text, ceil_count(rate, len), seed)
}

pub fn char_noise_level(text: &str, level: u32, seed: u64) -> String {
    replace_chars(text, char_noise_count(text.chars().count(), level), seed)
}

fn replace_chars(text: &str, count: usize, seed: u64) -> String {
    if count == 0 {
        return text.to_string();
    }
    let mut chars: Vec<char> = text.chars().collect();
    let mut rng = SeedMixer::new("char_noise").u64(seed).rng();
    let mut positions: Vec<usize> = (0..chars.len()).collect();
    positions.shuffle(&mut rng);
    for &pos in &positions[..count] {
        let mut replacement = rng.random_range(0x21u8..=0x7e) as char;
        if replacement == chars[pos] {
            replacement = if replacement == '~' { '!' } else { (replacement as u8 + 1) as char };
        }
        chars[pos] = replacement;
    }
    chars.into_iter().collect()
}

/// Words touched at `level`: `ceil(level / pr_max * 0.15 * words)`, capped
/// at `words - 1` so at least one word survives.
pub fn word_noise_count(words: usize, level: u32, pr_max: u32) -> usize {
    if words == 0 || pr_max == 0 {
        return 0;
    }
    let num = level as usize * 15 * words;
    let den = pr_max as usize * 100;
    num.div_ceil(den).min(words - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordEdit {
    Drop(usize),
    /// Adjacent swap; the pair is disjoint from every other edit.
    Swap(usize, usize),
}

/// Plans word edits for a text of `words` words.
///
/// The chosen words are the first `count` of a seeded permutation. Each is
/// dropped or swapped with an unchosen, untouched neighbour (right first);
/// when no such neighbour exists it is dropped.
pub fn plan_word_noise(words: usize, level: u32, pr_max: u32, seed: u64) -> Vec<WordEdit> {
    let count = word_noise_count(words, level, pr_max);
    if count == 0 {
        return Vec::new();
    }
    let mut rng = SeedMixer::new("word_noise").u64(seed).rng();
    let mut order: Vec<usize> = (0..words).collect();
    order.shuffle(&mut rng);
    let chosen = &order[..count];
    let mut is_chosen = vec![false; words];
    for &i in chosen {
        is_chosen[i] = true;
    }
    let mut locked = vec![false; words];
    let mut edits = Vec::with_capacity(count);
    for &i in chosen {
        let want_swap = rng.random_bool(0.5);
        let partner = [i.checked_add(1).filter(|&j| j < words), i.checked_sub(1)]
            .into_iter()
            .flatten()
            .find(|&j| !is_chosen[j] && !locked[j]);
        match (want_swap, partner) {
            (true, Some(j)) => {
                locked[i] = true;
                locked[j] = true;
                edits.push(WordEdit::Swap(i.min(j), i.max(j)));
            }
            _ => {
                locked[i] = true;
                edits.push(WordEdit::Drop(i));
            }
        }
    }
    edits
}

/// Drops or swaps words deterministically. Whitespace between surviving
/// words is kept; level 0 and single-word texts are returned unchanged.
pub fn word_noise(text: &str, level: u32, pr_max: u32, seed: u64) -> String {
    let trimmed = text.trim_start();
    let prefix = &text[..text.len() - trimmed.len()];
    let mut words: Vec<&str> = Vec::new();
    let mut seps: Vec<&str> = Vec::new();
    let mut rest = trimmed;
    while !rest.is_empty() {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        words.push(&rest[..end]);
        let after = &rest[end..];
        let sep_len = after.len() - after.trim_start().len();
        seps.push(&after[..sep_len]);
        rest = &after[sep_len..];
    }

    let edits = plan_word_noise(words.len(), level, pr_max, seed);
    if edits.is_empty() {
        return text.to_string();
    }
    let mut dropped = vec![false; words.len()];
    for edit in &edits {
        match *edit {
            WordEdit::Drop(i) => dropped[i] = true,
            WordEdit::Swap(i, j) => words.swap(i, j),
        }
    }
    let kept: Vec<usize> = (0..words.len()).filter(|&i| !dropped[i]).collect();
    let trailing = seps.last().copied().unwrap_or("");
    let mut out = String::from(prefix);
    for (n, &i) in kept.iter().enumerate() {
        out.push_str(words[i]);
        if n + 1 == kept.len() {
            out.push_str(trailing);
        } else {
            out.push_str(seps[i]);
        }
    }
    out
}
