//! Synthetic program-repair samples with a closed-form perturbation
//! geometry.
//!
//! Every sample is a Python function with five identifiers that each occur
//! three times, four keyword kinds and a one-word docstring that is unique
//! to the sample. Renaming `k` of the identifiers replaces `k` words of
//! count 3 with fresh words, so the bag-of-words distance between level 0
//! and level `k` is exactly `k * LEVEL_DISTANCE`. The docstring keeps every
//! perturbed input strictly nearest to its own original.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;

use crate::datamodel::{BenchmarkSample, InputKind, Language, TaskKind};
use crate::seed::SeedMixer;

/// Squared norm of the input's word-count vector: keywords `def`, `if`,
/// `and` once and `return` twice (7), five identifiers at count 3 (45), docstring (1).
const NORM_SQ: u64 = 53;
const IDENT_COUNT: u64 = 3;

/// Bag-of-words distance added by each renamed identifier.
pub const LEVEL_DISTANCE: f64 = (IDENT_COUNT * IDENT_COUNT) as f64 / NORM_SQ as f64;

/// Generalizer decay that lowers the expected score by `per_level` at
/// every level of a synthetic ladder.
pub fn generalizer_decay(per_level: f64) -> f64 {
    per_level / LEVEL_DISTANCE
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

const RESERVED: &[&str] = &[
    "def", "if", "or", "return", "and", "not", "in", "is", "for", "del", "len", "max", "min", "sum", "abs", "map",
    "set", "zip", "int", "str", "id", "all", "any", "hex", "bin", "oct", "ord", "pow", "dir", "try", "as",
];

fn word(rng: &mut impl Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    w
}

fn render(names: &[String; 5], doc: &str, op: &str) -> String {
    let [f, a, b, c, d] = names;
    format!(
        "def {f}({a}, {b}):\n    \"\"\"{doc}\"\"\"\n    {c} = {a} + {b}\n    {d} = {c} * {a}\n    if {d} > {b}:\n        return {f}({c})\n    return {d} {op} {f}\n"
    )
}

/// `count` samples in benchmark `benchmark`, deterministic in `seed`.
/// The input has an `and` where the reference has `or`.
pub fn memorization_suite(benchmark: &str, count: usize, seed: u64) -> Vec<BenchmarkSample> {
    let mut rng = SeedMixer::new("synthetic-suite").str(benchmark).u64(seed).rng();
    let mut used: HashSet<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    let mut fresh = |rng: &mut rand_chacha::ChaCha8Rng, syllables: usize| loop {
        let w = word(rng, syllables);
        if used.insert(w.clone()) {
            return w;
        }
    };
    (0..count)
        .map(|i| {
            let names: [String; 5] = std::array::from_fn(|_| fresh(&mut rng, 2 + (i % 3)));
            let doc = format!("{}{i}", fresh(&mut rng, 3));
            BenchmarkSample {
                id: format!("{benchmark}-{i:03}"),
                benchmark: benchmark.to_string(),
                task: TaskKind::ProgramRepair,
                input_kind: InputKind::Code,
                language: Language::Python,
                input: render(&names, &doc, "and"),
                reference: render(&names, &doc, "or"),
                tests: None,
                metadata: BTreeMap::new(),
            }
        })
        .collect()
}
