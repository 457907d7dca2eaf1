use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;

use super::basic::basic_tokenize;
use super::vocab::{WordPieceVocab, CONTINUATION_PREFIX, DEFAULT_MAX_WORD_CHARS, SPECIAL_TOKENS};
use super::TokenizerError;

/// Word frequencies after basic tokenization.
pub fn count_words<I, S>(lines: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts = HashMap::new();
    for line in lines {
        for w in basic_tokenize(line.as_ref()) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Same as [`count_words`], split across the rayon pool. Summation is
/// order-independent, so the result does not depend on the thread count.
pub fn count_words_parallel<S: AsRef<str> + Sync>(lines: &[S]) -> HashMap<String, u64> {
    lines
        .par_chunks(4096)
        .map(|chunk| count_words(chunk.iter().map(|s| s.as_ref())))
        .reduce(HashMap::new, |mut a, b| {
            for (w, c) in b {
                *a.entry(w).or_insert(0) += c;
            }
            a
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordPieceTrainer {
    pub vocab_size: usize,
    pub min_pair_frequency: u64,
    pub max_word_chars: usize,
}

impl WordPieceTrainer {
    pub fn new(vocab_size: usize, min_pair_frequency: u64) -> Self {
        Self {
            vocab_size,
            min_pair_frequency,
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
        }
    }
}

pub fn train_wordpiece<I, S>(
    corpus: I,
    vocab_size: usize,
    min_pair_frequency: u64,
) -> Result<WordPieceVocab, TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    train_wordpiece_from_counts(&count_words(corpus), WordPieceTrainer::new(vocab_size, min_pair_frequency))
}

type Pair = (u32, u32);

/// Heap entry; `count / denom` is the likelihood score of merging the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    count: u64,
    denom: u128,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Exact rational comparison; ties go to the lower (left, right) ids.
        (self.count as u128 * other.denom)
            .cmp(&(other.count as u128 * self.denom))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct MergeState {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    words: Vec<Vec<u32>>,
    freqs: Vec<u64>,
    symbol_counts: Vec<u64>,
    pair_counts: HashMap<Pair, u64>,
    pair_words: HashMap<Pair, Vec<u32>>,
    symbol_pairs: Vec<HashSet<Pair>>,
    heap: BinaryHeap<Candidate>,
    min_pair_frequency: u64,
}

impl MergeState {
    fn candidate(&self, pair: Pair) -> Option<Candidate> {
        let count = *self.pair_counts.get(&pair)?;
        let denom = self.symbol_counts[pair.0 as usize] as u128 * self.symbol_counts[pair.1 as usize] as u128;
        Some(Candidate { count, denom, pair })
    }

    fn push(&mut self, pair: Pair) {
        if let Some(c) = self.candidate(pair) {
            if c.count >= self.min_pair_frequency {
                self.heap.push(c);
            }
        }
    }

    fn add_pair(&mut self, pair: Pair, delta: u64) {
        let slot = self.pair_counts.entry(pair).or_insert(0);
        if *slot == 0 {
            self.symbol_pairs[pair.0 as usize].insert(pair);
            self.symbol_pairs[pair.1 as usize].insert(pair);
        }
        *slot += delta;
    }

    fn remove_pair(&mut self, pair: Pair, delta: u64) {
        let slot = self.pair_counts.get_mut(&pair).expect("pair count underflow");
        *slot -= delta;
        if *slot == 0 {
            self.pair_counts.remove(&pair);
            self.pair_words.remove(&pair);
            self.symbol_pairs[pair.0 as usize].remove(&pair);
            self.symbol_pairs[pair.1 as usize].remove(&pair);
        }
    }

    /// Pops the best live candidate, refreshing stale entries on the way.
    fn pop_best(&mut self) -> Option<Candidate> {
        while let Some(top) = self.heap.pop() {
            match self.candidate(top.pair) {
                None => continue,
                Some(cur) if cur.count < self.min_pair_frequency => continue,
                Some(cur) if cur == top => return Some(cur),
                Some(cur) => self.heap.push(cur),
            }
        }
        None
    }

    fn rebuild_heap_if_bloated(&mut self) {
        if self.heap.len() > 4 * self.pair_counts.len() + 1_000_000 {
            let pairs: Vec<Pair> = self.pair_counts.keys().copied().collect();
            self.heap.clear();
            for p in pairs {
                self.push(p);
            }
        }
    }

    fn intern(&mut self, token: String) -> u32 {
        if let Some(&id) = self.ids.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        self.symbol_counts.push(0);
        self.symbol_pairs.push(HashSet::new());
        id
    }

    fn merge(&mut self, (left, right): Pair) {
        let merged = format!(
            "{}{}",
            self.tokens[left as usize],
            &self.tokens[right as usize][CONTINUATION_PREFIX.len()..]
        );
        let new_id = self.intern(merged);
        let mut affected = self.pair_words.remove(&(left, right)).unwrap_or_default();
        affected.sort_unstable();
        affected.dedup();

        let mut grown: HashSet<Pair> = HashSet::new();
        for w in affected {
            let word = &self.words[w as usize];
            if !word.windows(2).any(|p| p[0] == left && p[1] == right) {
                continue;
            }
            let mut merged_word = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
                    merged_word.push(new_id);
                    i += 2;
                } else {
                    merged_word.push(word[i]);
                    i += 1;
                }
            }
            let old = std::mem::replace(&mut self.words[w as usize], merged_word);
            let f = self.freqs[w as usize];
            let new = &self.words[w as usize];
            // Net change per pair within this word; pairs away from the merge
            // site cancel out.
            let mut net: HashMap<Pair, i64> = HashMap::new();
            for p in old.windows(2) {
                *net.entry((p[0], p[1])).or_insert(0) -= 1;
            }
            for p in new.windows(2) {
                *net.entry((p[0], p[1])).or_insert(0) += 1;
            }
            for &s in &old {
                self.symbol_counts[s as usize] -= f;
            }
            for &s in new {
                self.symbol_counts[s as usize] += f;
            }
            let touching: Vec<Pair> = new
                .windows(2)
                .map(|p| (p[0], p[1]))
                .filter(|p| p.0 == new_id || p.1 == new_id)
                .collect();
            let mut net: Vec<(Pair, i64)> = net.into_iter().filter(|(_, d)| *d != 0).collect();
            net.sort_unstable();
            for &(pair, d) in net.iter().filter(|(_, d)| *d < 0) {
                self.remove_pair(pair, f * (-d) as u64);
            }
            for &(pair, d) in net.iter().filter(|(_, d)| *d > 0) {
                self.add_pair(pair, f * d as u64);
                grown.insert(pair);
            }
            for pair in touching {
                self.pair_words.entry(pair).or_default().push(w);
            }
        }

        // Lower symbol counts raise the scores of every pair touching them.
        let mut refresh: BTreeSet<Pair> = grown.into_iter().collect();
        for s in [left, right] {
            refresh.extend(self.symbol_pairs[s as usize].iter().copied());
        }
        for p in refresh {
            self.push(p);
        }
        self.rebuild_heap_if_bloated();
    }
}

/// Trains a WordPiece vocabulary from word frequencies.
///
/// The vocabulary starts with the specials and, for every observed
/// character, its word-initial and `##` continuation forms. Adjacent symbol
/// pairs are then merged in order of `count(pair) / (count(left) * count(right))`
/// until `vocab_size` is reached or no pair occurs at least
/// `min_pair_frequency` times.
pub fn train_wordpiece_from_counts(
    counts: &HashMap<String, u64>,
    trainer: WordPieceTrainer,
) -> Result<WordPieceVocab, TokenizerError> {
    let mut entries: Vec<(&str, u64)> = counts
        .iter()
        .filter(|(w, c)| !w.is_empty() && **c > 0)
        .map(|(w, c)| (w.as_str(), *c))
        .collect();
    if entries.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    entries.sort_unstable();

    let alphabet: BTreeSet<char> = entries.iter().flat_map(|(w, _)| w.chars()).collect();
    let minimum = SPECIAL_TOKENS.len() + 2 * alphabet.len();
    if trainer.vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall {
            requested: trainer.vocab_size,
            minimum,
        });
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{CONTINUATION_PREFIX}{c}")));
    let ids: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut state = MergeState {
        symbol_counts: vec![0; tokens.len()],
        symbol_pairs: vec![HashSet::new(); tokens.len()],
        tokens,
        ids,
        words: Vec::new(),
        freqs: Vec::new(),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
        heap: BinaryHeap::new(),
        min_pair_frequency: trainer.min_pair_frequency.max(1),
    };

    let mut key = String::new();
    for (word, freq) in entries {
        if word.chars().count() > trainer.max_word_chars {
            continue;
        }
        let symbols: Vec<u32> = word
            .chars()
            .enumerate()
            .map(|(i, c)| {
                key.clear();
                if i > 0 {
                    key.push_str(CONTINUATION_PREFIX);
                }
                key.push(c);
                state.ids[key.as_str()]
            })
            .collect();
        let w = state.words.len() as u32;
        for &s in &symbols {
            state.symbol_counts[s as usize] += freq;
        }
        for p in symbols.windows(2) {
            state.add_pair((p[0], p[1]), freq);
            state.pair_words.entry((p[0], p[1])).or_default().push(w);
        }
        state.words.push(symbols);
        state.freqs.push(freq);
    }
    let pairs: Vec<Pair> = state.pair_counts.keys().copied().collect();
    for p in pairs {
        state.push(p);
    }

    while state.tokens.len() < trainer.vocab_size {
        let Some(best) = state.pop_best() else { break };
        state.merge(best.pair);
    }

    Ok(WordPieceVocab::from_tokens(state.tokens)?.with_max_word_chars(trainer.max_word_chars))
}
