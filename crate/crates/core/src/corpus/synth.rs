use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Atom, AtomTable, CorpusError};
use crate::rng::stream_rng;

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr",
    "dr", "gl", "pl", "st", "tr", "ph", "th", "ch",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "io", "y"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "x", "m"];

const MODIFIERS: &[&str] = &[
    "acute", "chronic", "left", "right", "primary", "secondary", "severe", "mild", "upper",
    "lower", "congenital", "recurrent", "benign", "malignant", "bilateral", "juvenile",
];
const SUFFIXES: &[&str] = &[" (disorder)", " NOS", " [finding]", ", unspecified", " (procedure)"];
const SOURCES: &[&str] = &["MSH", "SNOMEDCT_US", "NCI", "MDR", "ICD10CM", "LNC"];
const FILLER: &[&str] = &[
    "the", "patient", "with", "was", "treated", "for", "and", "of", "in", "a", "study", "showed",
    "cases", "associated", "risk", "we", "observed", "among", "report", "following",
];

/// Probabilities of the lexical edits that turn a base phrase into variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Inverted "head, modifiers" word order.
    pub reorder: f64,
    /// Replace one content word by its fixed alias.
    pub substitution: f64,
    /// Append a qualifier such as "(disorder)" or "NOS".
    pub suffix: f64,
    /// Initialism of the whole phrase.
    pub abbreviation: f64,
    /// Upper/lower-case the whole string.
    pub recase: f64,
    /// Fraction of concepts built from an earlier concept by swapping or
    /// adding a modifier, giving lexically close non-synonyms.
    pub sibling: f64,
    /// Distinct content words available to base phrases.
    pub lexicon_size: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            reorder: 0.3,
            substitution: 0.45,
            suffix: 0.35,
            abbreviation: 0.03,
            recase: 0.15,
            sibling: 0.35,
            lexicon_size: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_concepts: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_concepts: 500,
            min_atoms: 2,
            max_atoms: 6,
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(CODAS.choose(rng).unwrap());
    w
}

struct Lexicon {
    words: Vec<String>,
    aliases: Vec<String>,
    /// Cumulative Zipf-like weights over `words`.
    cumulative: Vec<f64>,
}

impl Lexicon {
    fn new(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut seen: HashSet<String> = MODIFIERS.iter().chain(FILLER).map(|s| s.to_string()).collect();
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let w = pseudo_word(rng);
            if seen.insert(w.clone()) {
                return w;
            }
        };
        let words: Vec<String> = (0..size).map(|_| fresh(rng)).collect();
        let aliases: Vec<String> = (0..size).map(|_| fresh(rng)).collect();
        let mut acc = 0.0;
        let cumulative = (0..size)
            .map(|r| {
                acc += 1.0 / (r as f64 + 1.0).powf(0.7);
                acc
            })
            .collect();
        Self {
            words,
            aliases,
            cumulative,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.words.len() - 1)
    }
}

/// A base phrase: optional modifier followed by content word ids.
#[derive(Clone)]
struct Phrase {
    modifier: Option<usize>,
    content: Vec<usize>,
}

impl Phrase {
    fn render(&self, lex: &Lexicon, alias_at: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(m) = self.modifier {
            out.push(MODIFIERS[m].to_string());
        }
        for (pos, &w) in self.content.iter().enumerate() {
            if alias_at == Some(pos) {
                out.push(lex.aliases[w].clone());
            } else {
                out.push(lex.words[w].clone());
            }
        }
        out
    }
}

fn variant(phrase: &Phrase, lex: &Lexicon, noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(noise.abbreviation.clamp(0.0, 1.0)) {
        let words = phrase.render(lex, None);
        if words.len() >= 2 {
            return words.iter().filter_map(|w| w.chars().next()).collect::<String>().to_uppercase();
        }
    }
    let alias_at = rng
        .random_bool(noise.substitution.clamp(0.0, 1.0))
        .then(|| rng.random_range(0..phrase.content.len()));
    let mut words = phrase.render(lex, alias_at);
    let mut text = if words.len() >= 2 && rng.random_bool(noise.reorder.clamp(0.0, 1.0)) {
        let head = words.pop().unwrap();
        format!("{head}, {}", words.join(" "))
    } else {
        words.join(" ")
    };
    if rng.random_bool(noise.suffix.clamp(0.0, 1.0)) {
        text.push_str(SUFFIXES.choose(rng).unwrap());
    }
    if rng.random_bool(noise.recase.clamp(0.0, 1.0)) {
        text = if rng.random_bool(0.5) {
            text.to_uppercase()
        } else {
            text.to_lowercase()
        };
    } else {
        let mut chars = text.chars();
        if let Some(first) = chars.next() {
            text = first.to_uppercase().chain(chars).collect();
        }
    }
    text
}

/// Generates concept clusters whose atoms are lexical variants of a base
/// phrase. Deterministic for a given config.
pub fn synth_vocabulary(config: &SynthConfig) -> Result<AtomTable, CorpusError> {
    if config.n_concepts == 0 {
        return Err(CorpusError::InvalidSynth("n_concepts must be at least 1".into()));
    }
    if config.min_atoms == 0 || config.min_atoms > config.max_atoms {
        return Err(CorpusError::InvalidSynth(format!(
            "atoms per concept range [{}, {}] is empty",
            config.min_atoms, config.max_atoms
        )));
    }
    if config.noise.lexicon_size < 2 {
        return Err(CorpusError::InvalidSynth("lexicon_size must be at least 2".into()));
    }
    let mut rng = stream_rng(config.seed, 0x5359_4E54);
    let lex = Lexicon::new(config.noise.lexicon_size, &mut rng);
    let noise = &config.noise;

    let mut phrases: Vec<Phrase> = Vec::with_capacity(config.n_concepts);
    let mut used: HashSet<Vec<String>> = HashSet::new();
    while phrases.len() < config.n_concepts {
        let phrase = if !phrases.is_empty() && rng.random_bool(noise.sibling.clamp(0.0, 1.0)) {
            let mut p = phrases.choose(&mut rng).unwrap().clone();
            let mut m = rng.random_range(0..MODIFIERS.len());
            if p.modifier == Some(m) {
                m = (m + 1) % MODIFIERS.len();
            }
            p.modifier = Some(m);
            p
        } else {
            let n_content = rng.random_range(1..=3);
            let mut content: Vec<usize> = Vec::with_capacity(n_content);
            while content.len() < n_content {
                let w = lex.sample(&mut rng);
                if !content.contains(&w) {
                    content.push(w);
                }
            }
            let modifier = rng
                .random_bool(0.3)
                .then(|| rng.random_range(0..MODIFIERS.len()));
            Phrase { modifier, content }
        };
        // Distinct concepts must not share a canonical surface form.
        if used.insert(phrase.render(&lex, None)) {
            phrases.push(phrase);
        }
    }

    let mut atoms = Vec::new();
    for (c, phrase) in phrases.iter().enumerate() {
        let cui = format!("C{:07}", c + 1);
        let k = rng.random_range(config.min_atoms..=config.max_atoms);
        for v in 0..k {
            let text = if v == 0 {
                let words = phrase.render(&lex, None).join(" ");
                let mut chars = words.chars();
                chars.next().map(|f| f.to_uppercase().chain(chars).collect()).unwrap_or_default()
            } else {
                variant(phrase, &lex, noise, &mut rng)
            };
            atoms.push(Atom {
                aui: format!("A{:08}", atoms.len() + 1),
                cui: cui.clone(),
                text,
                source: SOURCES.choose(&mut rng).unwrap().to_string(),
            });
        }
    }
    AtomTable::new(atoms)
}

/// Literature-style sentences mixing atom strings with filler words.
pub fn synth_literature(table: &AtomTable, n_lines: usize, seed: u64) -> Vec<String> {
    let mut rng = stream_rng(seed, 0x4C49_5445);
    let atoms = table.atoms();
    (0..n_lines)
        .map(|_| {
            let len = rng.random_range(6..=16);
            let mut words: Vec<String> = Vec::with_capacity(len + 4);
            while words.len() < len {
                if !atoms.is_empty() && rng.random_bool(0.25) {
                    let a = atoms.choose(&mut rng).unwrap();
                    words.push(a.text.to_lowercase());
                } else {
                    words.push(FILLER.choose(&mut rng).unwrap().to_string());
                }
            }
            let mut line = words.join(" ");
            line.push('.');
            line
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::jaccard_text;
    use rand::Rng;

    fn config(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn atom_count_in_range() {
        let t = synth_vocabulary(&config(1)).unwrap();
        assert!((1000..=3000).contains(&t.len()), "{}", t.len());
        assert_eq!(t.concepts().len(), 500);
        for members in t.concepts().values() {
            assert!((2..=6).contains(&members.len()));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_vocabulary(&config(9)).unwrap();
        let b = synth_vocabulary(&config(9)).unwrap();
        let c = synth_vocabulary(&config(10)).unwrap();
        assert_eq!(a.atoms(), b.atoms());
        assert_ne!(a.atoms(), c.atoms());
    }

    #[test]
    fn synonyms_are_lexically_closer_than_random_pairs() {
        let t = synth_vocabulary(&config(3)).unwrap();
        let mut same = Vec::new();
        for members in t.concepts().values() {
            for (x, &i) in members.iter().enumerate() {
                for &j in &members[x + 1..] {
                    same.push(jaccard_text(&t.atom(i).text, &t.atom(j).text));
                }
            }
        }
        let mut rng = stream_rng(0, 1);
        let mut cross = Vec::new();
        while cross.len() < 10_000 {
            let i = rng.random_range(0..t.len());
            let j = rng.random_range(0..t.len());
            if t.atom(i).cui != t.atom(j).cui {
                cross.push(jaccard_text(&t.atom(i).text, &t.atom(j).text));
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&same) > mean(&cross), "{} vs {}", mean(&same), mean(&cross));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(synth_vocabulary(&SynthConfig { n_concepts: 0, ..config(0) }).is_err());
        assert!(synth_vocabulary(&SynthConfig { min_atoms: 4, max_atoms: 3, ..config(0) }).is_err());
    }

    #[test]
    fn literature_lines_are_deterministic() {
        let t = synth_vocabulary(&SynthConfig { n_concepts: 20, ..config(2) }).unwrap();
        let a = synth_literature(&t, 50, 4);
        assert_eq!(a, synth_literature(&t, 50, 4));
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|l| l.ends_with('.')));
    }
}
