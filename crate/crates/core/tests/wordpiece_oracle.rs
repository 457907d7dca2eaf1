//! WordPiece training checked against a brute-force merge simulator that
//! recounts every pair from scratch on each iteration.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use synonymy::tokenizer::{
    train_wordpiece, train_wordpiece_from_counts, WordPieceTrainer, SPECIAL_TOKENS,
};

/// Reference trainer over (word, count) with string symbols.
fn brute_force(words: &[(&str, u64)], vocab_size: usize, min_freq: u64) -> Vec<String> {
    let chars: BTreeSet<char> = words.iter().flat_map(|(w, _)| w.chars()).collect();
    let mut vocab: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    vocab.extend(chars.iter().map(|c| c.to_string()));
    vocab.extend(chars.iter().map(|c| format!("##{c}")));
    let mut segs: Vec<(Vec<String>, u64)> = words
        .iter()
        .map(|(w, c)| {
            let s = w
                .chars()
                .enumerate()
                .map(|(i, ch)| if i == 0 { ch.to_string() } else { format!("##{ch}") })
                .collect();
            (s, *c)
        })
        .collect();
    while vocab.len() < vocab_size {
        let mut sym: BTreeMap<String, u64> = BTreeMap::new();
        let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (s, c) in &segs {
            for t in s {
                *sym.entry(t.clone()).or_default() += c;
            }
            for w in s.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_default() += c;
            }
        }
        let pos = |t: &str| vocab.iter().position(|v| v == t).unwrap();
        let mut best: Option<((String, String), u64, u128)> = None;
        for ((l, r), &n) in &pairs {
            if n < min_freq {
                continue;
            }
            let d = sym[l] as u128 * sym[r] as u128;
            let better = match &best {
                None => true,
                Some(((bl, br), bn, bd)) => {
                    let lhs = n as u128 * bd;
                    let rhs = *bn as u128 * d;
                    lhs > rhs || (lhs == rhs && (pos(l), pos(r)) < (pos(bl), pos(br)))
                }
            };
            if better {
                best = Some(((l.clone(), r.clone()), n, d));
            }
        }
        let Some(((l, r), _, _)) = best else { break };
        let merged = format!("{l}{}", &r[2..]);
        if !vocab.contains(&merged) {
            vocab.push(merged.clone());
        }
        for (s, _) in segs.iter_mut() {
            let mut out = Vec::new();
            let mut i = 0;
            while i < s.len() {
                if i + 1 < s.len() && s[i] == l && s[i + 1] == r {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(s[i].clone());
                    i += 1;
                }
            }
            *s = out;
        }
    }
    vocab
}

fn train(words: &[(&str, u64)], vocab_size: usize, min_freq: u64) -> Vec<String> {
    let counts = words.iter().map(|(w, c)| (w.to_string(), *c)).collect();
    train_wordpiece_from_counts(&counts, WordPieceTrainer::new(vocab_size, min_freq))
        .unwrap()
        .tokens()
        .to_vec()
}

#[test]
fn hand_traced_corpus() {
    // Traced by hand: (a,##a) and (##a,##b) tie at 1/20, lower ids win;
    // then (##a,##b) beats (aa,##a) on ids at 1/12; then (aa,##b) at 1/12.
    let expected = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "b", "##a", "##b", "aa", "##ab", "aab",
    ];
    let lines: Vec<&str> = std::iter::repeat_n("aaab", 8).chain(std::iter::repeat_n("aab", 4)).collect();
    let vocab = train_wordpiece(lines, 12, 1).unwrap();
    assert_eq!(vocab.tokens(), expected);
    assert_eq!(brute_force(&[("aaab", 8), ("aab", 4)], 12, 1), expected);
}

#[test]
fn min_frequency_stops_training() {
    let v = train(&[("ab", 1), ("cd", 1)], 100, 2);
    assert_eq!(v.len(), 5 + 8);
}

#[test]
fn too_small_vocab_states_minimum() {
    let err = train_wordpiece(["abc"], 10, 1).unwrap_err();
    assert_eq!(
        err.to_string(),
        "vocab_size 10 is too small; the minimum for this corpus is 11"
    );
    assert!(train_wordpiece(Vec::<String>::new(), 100, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_brute_force(
        words in prop::collection::btree_map("[abc]{1,7}", 1u64..20, 1..12),
        extra in 0usize..25,
        min_freq in 1u64..4,
    ) {
        let words: Vec<(&str, u64)> = words.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        let chars: BTreeSet<char> = words.iter().flat_map(|(w, _)| w.chars()).collect();
        let size = 5 + 2 * chars.len() + extra;
        prop_assert_eq!(train(&words, size, min_freq), brute_force(&words, size, min_freq));
    }
}
