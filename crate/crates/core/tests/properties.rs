use std::collections::HashMap;

use memoprobe_core::datamodel::Language;
use memoprobe_core::grading::{code_token_similarity, levenshtein, text_similarity};
use memoprobe_core::perturbation::noise::{char_noise_count, word_noise_count};
use memoprobe_core::perturbation::{
    char_noise_level, rename_identifiers_with_map, tokenize_code, word_noise, TokenKind,
};
use memoprobe_core::sensitivity::sensitivity_from_perf;
use memoprobe_core::stats::{mann_whitney_u, median};
use proptest::prelude::*;

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 2..12)
}

fn code_language() -> impl Strategy<Value = Language> {
    prop::sample::select(vec![
        Language::Python,
        Language::Java,
        Language::C,
        Language::Cpp,
        Language::Javascript,
        Language::Go,
    ])
}

fn code_like() -> impl Strategy<Value = String> {
    let atoms = prop::sample::select(vec![
        "x", "y1", "total", "count", "i", " ", "\n", "\t", "(", ")", "{", "}", "[", "]", ";", ",", ".", "=", "==", "+",
        "-", "*", "/", "<", ">", "!", "&&", "0", "42", "3.5e-2", "\"s\"", "'c'", "\"esc\\\"q\"", "// c\n", "/* b */",
        "# h\n", "`t`", "if", "for", "return", "def", "int", "self", "this", "$", "\\", "@", "->", "::", "#include <a.h>\n",
        "'''doc'''", "r\"raw\"", "R\"(x)\"", "\"open",
    ]);
    prop::collection::vec(atoms, 0..40).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sensitivity_translation_invariant(s in series(), c in -5.0f64..5.0) {
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let a = sensitivity_from_perf(&s).unwrap();
        let b = sensitivity_from_perf(&shifted).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_positive_homogeneous(s in series(), c in 0.01f64..10.0) {
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        let a = sensitivity_from_perf(&s).unwrap();
        let b = sensitivity_from_perf(&scaled).unwrap();
        prop_assert!((a * c - b).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_bounded_for_scores(s in series()) {
        let v = sensitivity_from_perf(&s).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn lexing_is_lossless(src in code_like(), lang in code_language()) {
        let tokens = tokenize_code(&src, lang).unwrap();
        let rebuilt: String = tokens.iter().map(|t| t.text.as_str()).collect();
        prop_assert_eq!(&rebuilt, &src);
        let mut pos = 0;
        for t in &tokens {
            prop_assert_eq!(t.span.start, pos);
            prop_assert_eq!(&src[t.span.clone()], t.text.as_str());
            pos = t.span.end;
        }
    }

    #[test]
    fn renaming_is_a_kind_preserving_bijection(src in code_like(), lang in code_language(), level in 0u32..=5, seed: u64) {
        let r = rename_identifiers_with_map(&src, lang, level, 5, seed).unwrap();
        let before = tokenize_code(&src, lang).unwrap();
        let after = tokenize_code(&r.text, lang).unwrap();
        prop_assert_eq!(before.len(), after.len());
        let map: HashMap<&str, &str> = r.map.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        for (a, b) in before.iter().zip(&after) {
            prop_assert_eq!(a.kind, b.kind);
            if a.kind == TokenKind::Identifier {
                let want = map.get(a.text.as_str()).copied().unwrap_or(a.text.as_str());
                prop_assert_eq!(b.text.as_str(), want);
            } else {
                prop_assert_eq!(&a.text, &b.text);
            }
        }
        let targets: std::collections::HashSet<&str> = map.values().copied().collect();
        prop_assert_eq!(targets.len(), map.len());
        prop_assert_eq!(r.invert(lang).unwrap(), src);
    }

    #[test]
    fn char_noise_changes_exactly_the_planned_count(text in "[ -~]{0,200}", level in 0u32..=5, seed: u64) {
        let noisy = char_noise_level(&text, level, seed);
        let a: Vec<char> = text.chars().collect();
        let b: Vec<char> = noisy.chars().collect();
        prop_assert_eq!(a.len(), b.len());
        let changed = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        prop_assert_eq!(changed, char_noise_count(a.len(), level));
    }

    #[test]
    fn char_noise_positions_are_nested(text in "[a-z ]{1,120}", seed: u64) {
        let a: Vec<char> = text.chars().collect();
        let mut previous: Vec<usize> = Vec::new();
        for level in 0..=5 {
            let b: Vec<char> = char_noise_level(&text, level, seed).chars().collect();
            let changed: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
            prop_assert!(previous.iter().all(|i| changed.contains(i)));
            previous = changed;
        }
    }

    #[test]
    fn word_noise_keeps_the_word_multiset_or_drops(text in "[a-z]{1,6}( [a-z]{1,6}){0,30}", level in 0u32..=5, seed: u64) {
        let out = word_noise(&text, level, 5, seed);
        let before: Vec<&str> = text.split_whitespace().collect();
        let after: Vec<&str> = out.split_whitespace().collect();
        prop_assert!(after.len() <= before.len());
        prop_assert!(before.len() - after.len() <= word_noise_count(before.len(), level, 5));
        let mut pool = before.clone();
        for w in &after {
            let i = pool.iter().position(|p| p == w);
            prop_assert!(i.is_some());
            pool.remove(i.unwrap());
        }
        prop_assert_eq!(word_noise(&text, level, 5, seed), out);
    }

    #[test]
    fn levenshtein_is_a_metric(a in "[a-d]{0,12}", b in "[a-d]{0,12}", c in "[a-d]{0,12}") {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        let s = text_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn code_similarity_in_unit_interval(a in code_like(), b in code_like(), lang in code_language()) {
        let s = code_token_similarity(&a, &b, lang);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(code_token_similarity(&a, &a, lang), 1.0);
    }

    #[test]
    fn mann_whitney_symmetric(x in prop::collection::vec(0.0f64..1.0, 1..15), y in prop::collection::vec(0.0f64..1.0, 1..15)) {
        let a = mann_whitney_u(&x, &y).unwrap();
        let b = mann_whitney_u(&y, &x).unwrap();
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
    }

    #[test]
    fn mann_whitney_rank_invariant(x in prop::collection::vec(-1.0f64..1.0, 1..15), y in prop::collection::vec(-1.0f64..1.0, 1..15)) {
        let f = |v: &f64| (2.0 * v).exp() + 3.0;
        let tx: Vec<f64> = x.iter().map(f).collect();
        let ty: Vec<f64> = y.iter().map(f).collect();
        let a = mann_whitney_u(&x, &y).unwrap();
        let b = mann_whitney_u(&tx, &ty).unwrap();
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn median_between_extremes(x in prop::collection::vec(-1.0f64..1.0, 1..30)) {
        let m = median(&x).unwrap();
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }
}
