//! Graded identifier renaming.
//!
//! For a source with `D` renameable identifier spellings, level `k` of
//! `pr_max` replaces `ceil(k * D / pr_max)` of them. Selection order and the
//! fresh names come from one seeded draw per `(seed, source)`, so level `k`
//! renames a prefix of what level `k + 1` renames and a spelling always gets
//! the same fresh name at every level.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::lexer::{syntax_for, tokenize_code, CodeToken, TokenKind};
use super::PerturbError;
use crate::datamodel::Language;
use crate::seed::SeedMixer;

const FRESH_NAME_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Renaming {
    pub text: String,
    /// `(original, fresh)` pairs in selection order.
    pub map: Vec<(String, String)>,
}

impl Renaming {
    /// Applies the inverse map to a renamed text, token by token.
    pub fn invert(&self, language: Language) -> Result<String, PerturbError> {
        let back: HashMap<&str, &str> = self.map.iter().map(|(o, f)| (f.as_str(), o.as_str())).collect();
        let tokens = tokenize_code(&self.text, language).map_err(|e| PerturbError::UnsupportedLanguage(e.0))?;
        Ok(substitute(&tokens, &back))
    }
}

fn substitute(tokens: &[CodeToken], map: &HashMap<&str, &str>) -> String {
    let mut out = String::new();
    for t in tokens {
        match map.get(t.text.as_str()) {
            Some(fresh) if t.kind == TokenKind::Identifier => out.push_str(fresh),
            _ => out.push_str(&t.text),
        }
    }
    out
}

fn is_member_access(text: &str) -> bool {
    matches!(text, "." | "->" | "::" | "?.")
}

/// Distinct identifier spellings that renaming may touch, in order of
/// first occurrence.
///
/// Excluded: keywords and per-language builtins, dunder names, any spelling
/// that ever appears after a member-access operator, on an import line,
/// directly after a literal (where a fresh name would merge into the
/// literal's suffix), or as a word inside a string literal.
pub fn renameable_identifiers(tokens: &[CodeToken], language: Language) -> Result<Vec<String>, PerturbError> {
    let syntax = syntax_for(language).map_err(|e| PerturbError::UnsupportedLanguage(e.0))?;
    let mut excluded: HashSet<&str> = syntax.builtins.iter().copied().collect();

    let mut prev_significant: Option<&CodeToken> = None;
    let mut prev: Option<&CodeToken> = None;
    let mut in_import = false;
    for t in tokens {
        let glued = prev.is_some_and(|p| p.kind == TokenKind::Literal);
        prev = Some(t);
        match t.kind {
            TokenKind::Whitespace => {
                if t.text.contains('\n') {
                    in_import = false;
                }
                continue;
            }
            TokenKind::Comment => continue,
            TokenKind::Keyword if syntax.import_keywords.contains(&t.text.as_str()) => in_import = true,
            TokenKind::Punctuation if t.text == ";" => in_import = false,
            TokenKind::String => {
                for word in t.text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$')) {
                    if !word.is_empty() {
                        excluded.insert(word);
                    }
                }
            }
            TokenKind::Identifier => {
                let after_member = prev_significant.is_some_and(|p| is_member_access(&p.text));
                let dunder = t.text.len() > 4 && t.text.starts_with("__") && t.text.ends_with("__");
                if after_member || in_import || dunder || glued {
                    excluded.insert(&t.text);
                }
            }
            _ => {}
        }
        prev_significant = Some(t);
    }

    let mut seen = HashSet::new();
    Ok(tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Identifier && !excluded.contains(t.text.as_str()))
        .filter(|t| seen.insert(t.text.as_str()))
        .map(|t| t.text.clone())
        .collect())
}

/// Number of spellings renamed at `level`: `ceil(level * total / pr_max)`.
pub fn renamed_count(total: usize, level: u32, pr_max: u32) -> usize {
    let num = level as usize * total;
    let den = pr_max as usize;
    num.div_ceil(den).min(total)
}

pub fn rename_identifiers(
    source: &str,
    language: Language,
    level: u32,
    pr_max: u32,
    seed: u64,
) -> Result<String, PerturbError> {
    rename_identifiers_with_map(source, language, level, pr_max, seed).map(|r| r.text)
}

pub fn rename_identifiers_with_map(
    source: &str,
    language: Language,
    level: u32,
    pr_max: u32,
    seed: u64,
) -> Result<Renaming, PerturbError> {
    if pr_max == 0 || level > pr_max {
        return Err(PerturbError::LevelOutOfRange { level, pr_max });
    }
    let tokens = tokenize_code(source, language).map_err(|e| PerturbError::UnsupportedLanguage(e.0))?;
    let plan = rename_plan(&tokens, source, language, seed)?;
    let count = renamed_count(plan.len(), level, pr_max);
    let chosen = &plan[..count];
    let map: HashMap<&str, &str> = chosen.iter().map(|(o, f)| (o.as_str(), f.as_str())).collect();
    Ok(Renaming {
        text: substitute(&tokens, &map),
        map: chosen.to_vec(),
    })
}

/// Every renameable spelling paired with its fresh name, in selection order.
fn rename_plan(
    tokens: &[CodeToken],
    source: &str,
    language: Language,
    seed: u64,
) -> Result<Vec<(String, String)>, PerturbError> {
    let syntax = syntax_for(language).map_err(|e| PerturbError::UnsupportedLanguage(e.0))?;
    let mut spellings = renameable_identifiers(tokens, language)?;
    let mut rng = SeedMixer::new("rename").u64(seed).str(source).rng();
    spellings.shuffle(&mut rng);

    let mut taken: HashSet<String> = tokens
        .iter()
        .filter(|t| matches!(t.kind, TokenKind::Identifier | TokenKind::Keyword))
        .map(|t| t.text.clone())
        .collect();
    taken.extend(syntax.keywords.iter().map(|s| s.to_string()));
    taken.extend(syntax.builtins.iter().map(|s| s.to_string()));

    let mut plan = Vec::with_capacity(spellings.len());
    for original in spellings {
        let fresh = loop {
            let candidate: String = (0..FRESH_NAME_LEN)
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect();
            if !taken.contains(&candidate) {
                break candidate;
            }
        };
        taken.insert(fresh.clone());
        plan.push((original, fresh));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADD: &str = "def add(a, b):\n    return a + b";

    fn identifiers(src: &str, lang: Language) -> Vec<String> {
        tokenize_code(src, lang)
            .unwrap()
            .into_iter()
            .filter(|t| t.kind == TokenKind::Identifier)
            .map(|t| t.text)
            .collect()
    }

    #[test]
    fn level_zero_is_identity() {
        assert_eq!(rename_identifiers(ADD, Language::Python, 0, 5, 7).unwrap(), ADD);
    }

    #[test]
    fn full_level_renames_every_spelling_consistently() {
        let r = rename_identifiers_with_map(ADD, Language::Python, 5, 5, 7).unwrap();
        let originals: HashSet<_> = r.map.iter().map(|(o, _)| o.as_str()).collect();
        assert_eq!(originals, HashSet::from(["add", "a", "b"]));
        assert!(r.text.starts_with("def "));
        assert!(r.text.contains("return "));
        for id in identifiers(&r.text, Language::Python) {
            assert_eq!(id.len(), FRESH_NAME_LEN);
            assert!(id.chars().all(|c| c.is_ascii_lowercase()));
        }
        // `a` appears twice and both occurrences get the same name
        let fresh_a = &r.map.iter().find(|(o, _)| o == "a").unwrap().1;
        assert_eq!(r.text.matches(fresh_a.as_str()).count(), 2);
        assert_eq!(r.invert(Language::Python).unwrap(), ADD);
    }

    #[test]
    fn partial_level_count() {
        let src = "def f(x, y):\n    z = x + y\n    return z";
        let r = rename_identifiers_with_map(src, Language::Python, 2, 5, 3).unwrap();
        // D = 4 (f, x, y, z); ceil(2 * 4 / 5) = 2
        assert_eq!(r.map.len(), 2);
        assert_eq!(renamed_count(4, 2, 5), 2);
        assert_eq!(renamed_count(3, 5, 5), 3);
        assert_eq!(renamed_count(0, 3, 5), 0);
    }

    #[test]
    fn levels_select_nested_prefixes() {
        let src = "int total(int n) { int acc = 0; for (int i = 0; i < n; i++) acc += i; return acc; }";
        let mut prev: Vec<(String, String)> = Vec::new();
        for level in 0..=5 {
            let r = rename_identifiers_with_map(src, Language::C, level, 5, 11).unwrap();
            assert!(r.map.starts_with(&prev));
            prev = r.map;
        }
    }

    #[test]
    fn identifier_glued_to_a_literal_is_kept() {
        // `$` ends a numeric suffix, a fresh letter name would not
        let src = "xxx3.5e-2$x";
        let r = rename_identifiers_with_map(src, Language::Java, 5, 5, 0).unwrap();
        assert_eq!(r.map.len(), 1);
        assert!(r.text.ends_with(".5e-2$x"), "{}", r.text);
        assert_eq!(tokenize_code(&r.text, Language::Java).unwrap().len(), 3);
    }

    #[test]
    fn builtins_members_imports_and_strings_untouched() {
        let src = "import math\nfrom os import path\ndef area(r):\n    name = \"r\"\n    return math.pi * r * r + len(path.sep) + name.count";
        let r = rename_identifiers_with_map(src, Language::Python, 5, 5, 1).unwrap();
        let renamed: HashSet<_> = r.map.iter().map(|(o, _)| o.as_str()).collect();
        // `r` appears as a word in a string literal, `pi`/`sep`/`count` follow `.`,
        // `math`/`os`/`path` are on import lines, `len` is a builtin.
        assert_eq!(renamed, HashSet::from(["area", "name"]));
    }

    #[test]
    fn fresh_names_avoid_existing_spellings() {
        let r = rename_identifiers_with_map(ADD, Language::Python, 5, 5, 99).unwrap();
        let fresh: HashSet<_> = r.map.iter().map(|(_, f)| f.clone()).collect();
        assert_eq!(fresh.len(), r.map.len());
        for f in &fresh {
            assert!(!["add", "a", "b", "def", "return"].contains(&f.as_str()));
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            rename_identifiers(ADD, Language::Text, 1, 5, 0),
            Err(PerturbError::UnsupportedLanguage(Language::Text))
        ));
        assert!(matches!(
            rename_identifiers(ADD, Language::Python, 6, 5, 0),
            Err(PerturbError::LevelOutOfRange { level: 6, pr_max: 5 })
        ));
    }
}
