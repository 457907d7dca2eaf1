use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::words::{jaccard, normalize_words, WordSet};
use super::{AtomTable, CorpusError};
use crate::rng::stream_rng;

pub const DEFAULT_MAX_CONCEPT_ATOMS: usize = 100;

/// Exhaustive enumeration of cross-concept pairs is used below this size.
const ENUMERATION_LIMIT: u128 = 10_000_000;

/// An unordered, labeled pair of atoms with `aui1 < aui2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomPair {
    pub aui1: String,
    pub aui2: String,
    pub synonym: bool,
}

impl AtomPair {
    /// Canonicalizes the order of the two AUIs.
    pub fn new(a: impl Into<String>, b: impl Into<String>, synonym: bool) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self { aui1: a, aui2: b, synonym }
        } else {
            Self { aui1: b, aui2: a, synonym }
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.aui1, &self.aui2)
    }

    pub fn label(&self) -> u8 {
        u8::from(self.synonym)
    }
}

/// How non-synonymous pairs are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegativeMode {
    /// Uniform over all cross-concept pairs.
    Uniform,
    /// Proportional to per-bin weights over the ten Jaccard bins
    /// `[0,0.1), [0.1,0.2), ..., [0.9,1.0]`.
    Stratified { weights: [f64; 10] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub neg_ratio: f64,
    pub mode: NegativeMode,
    pub seed: u64,
    pub max_concept_atoms: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            neg_ratio: 1.0,
            mode: NegativeMode::Uniform,
            seed: 0,
            max_concept_atoms: DEFAULT_MAX_CONCEPT_ATOMS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub part: String,
    pub fractions: [f64; 3],
    pub seed: u64,
    pub by_atom: bool,
}

/// Where a pair set came from; written next to the pair file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub generation: Option<PairConfig>,
    pub split: Option<SplitRecord>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet {
    pub pairs: Vec<AtomPair>,
    pub provenance: Provenance,
}

impl PairSet {
    pub fn new(pairs: Vec<AtomPair>, mut provenance: Provenance) -> Self {
        provenance.positives = pairs.iter().filter(|p| p.synonym).count();
        provenance.negatives = pairs.len() - provenance.positives;
        Self { pairs, provenance }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.synonym).count()
    }

    /// Checks that every label agrees with CUI equality in `table`.
    pub fn verify_labels(&self, table: &AtomTable) -> Result<(), CorpusError> {
        for p in &self.pairs {
            let same = table
                .same_concept(&p.aui1, &p.aui2)
                .ok_or_else(|| {
                    let missing = if table.get(&p.aui1).is_none() { &p.aui1 } else { &p.aui2 };
                    CorpusError::UnknownAui(missing.clone())
                })?;
            if same != p.synonym {
                return Err(CorpusError::MalformedPair {
                    line: 0,
                    reason: format!("label of ({}, {}) disagrees with concept ids", p.aui1, p.aui2),
                });
            }
        }
        Ok(())
    }
}

/// Builds synonym pairs (same concept) and sampled non-synonym pairs.
pub fn generate_pairs(table: &AtomTable, config: &PairConfig) -> Result<PairSet, CorpusError> {
    if table.is_empty() {
        return Err(CorpusError::EmptyTable);
    }
    if !config.neg_ratio.is_finite() || config.neg_ratio <= 0.0 {
        return Err(CorpusError::InvalidNegRatio(config.neg_ratio));
    }
    let positives = positive_pairs(table, config);
    let requested = (config.neg_ratio * positives.len() as f64).round() as u128;
    let available = table.cross_concept_pairs();
    if requested > available {
        return Err(CorpusError::NotEnoughNegatives {
            requested,
            available,
        });
    }
    let requested = requested as usize;
    let negatives = match &config.mode {
        NegativeMode::Uniform => uniform_negatives(table, requested, config.seed, available)?,
        NegativeMode::Stratified { weights } => {
            stratified_negatives(table, requested, weights, config.seed)?
        }
    };

    let mut pairs: Vec<AtomPair> = positives
        .into_iter()
        .map(|(i, j)| AtomPair::new(&*table.atom(i).aui, &*table.atom(j).aui, true))
        .chain(
            negatives
                .into_iter()
                .map(|(i, j)| AtomPair::new(&*table.atom(i).aui, &*table.atom(j).aui, false)),
        )
        .collect();
    pairs.sort();
    Ok(PairSet::new(
        pairs,
        Provenance {
            generation: Some(config.clone()),
            ..Provenance::default()
        },
    ))
}

/// All within-concept pairs; concepts above the cap contribute a seeded
/// sample of C(cap, 2) pairs. Each concept draws from its own stream so the
/// work can be spread across threads without changing the result.
fn positive_pairs(table: &AtomTable, config: &PairConfig) -> Vec<(usize, usize)> {
    let cap = config.max_concept_atoms.max(2);
    let concepts: Vec<&Vec<usize>> = table.concepts().values().collect();
    let shards: Vec<Vec<(usize, usize)>> = concepts
        .par_iter()
        .enumerate()
        .map(|(ordinal, members)| {
            let n = members.len();
            let total = n * n.saturating_sub(1) / 2;
            let mut out = Vec::new();
            if n <= cap {
                for a in 0..n {
                    for b in a + 1..n {
                        out.push((members[a], members[b]));
                    }
                }
            } else {
                let keep = cap * (cap - 1) / 2;
                let mut rng = stream_rng(config.seed, 0x5050_0000 + ordinal as u64);
                let mut picked = index::sample(&mut rng, total, keep).into_vec();
                picked.sort_unstable();
                for t in picked {
                    let (a, b) = decode_pair_index(t, n);
                    out.push((members[a], members[b]));
                }
            }
            out
        })
        .collect();
    shards.into_iter().flatten().collect()
}

/// Maps `t` in `0..C(n,2)` to the t-th pair `(a, b)`, `a < b`, in row order.
fn decode_pair_index(mut t: usize, n: usize) -> (usize, usize) {
    for a in 0..n {
        let row = n - a - 1;
        if t < row {
            return (a, a + 1 + t);
        }
        t -= row;
    }
    unreachable!("pair index out of range")
}

fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn uniform_negatives(
    table: &AtomTable,
    requested: usize,
    seed: u64,
    available: u128,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    let mut rng = stream_rng(seed, 0x4E45_4741);
    let n = table.len();
    let atoms = table.atoms();
    if requested == 0 {
        return Ok(Vec::new());
    }
    // Rejection sampling stalls once most of the space is taken; enumerate instead.
    if available <= ENUMERATION_LIMIT && requested as u128 * 2 > available {
        let mut all = Vec::with_capacity(available as usize);
        for i in 0..n {
            for j in i + 1..n {
                if atoms[i].cui != atoms[j].cui {
                    all.push((i, j));
                }
            }
        }
        let mut picked = index::sample(&mut rng, all.len(), requested).into_vec();
        picked.sort_unstable();
        return Ok(picked.into_iter().map(|k| all[k]).collect());
    }
    let mut seen = HashSet::with_capacity(requested);
    let mut out = Vec::with_capacity(requested);
    while out.len() < requested {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || atoms[i].cui == atoms[j].cui {
            continue;
        }
        let key = canonical(i, j);
        if seen.insert(key) {
            out.push(key);
        }
    }
    Ok(out)
}

fn bin_of(score: f64) -> usize {
    ((score * 10.0).floor() as usize).min(9)
}

fn stratum_targets(requested: usize, weights: &[f64; 10]) -> Result<[usize; 10], CorpusError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(CorpusError::InvalidStrata(format!("{weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(CorpusError::InvalidStrata("weights sum to zero".into()));
    }
    // Largest-remainder apportionment so the targets sum to `requested`.
    let exact: Vec<f64> = weights.iter().map(|w| requested as f64 * w / total).collect();
    let mut targets = [0usize; 10];
    for (t, e) in targets.iter_mut().zip(&exact) {
        *t = e.floor() as usize;
    }
    let mut rest = requested - targets.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for k in order {
        if rest == 0 {
            break;
        }
        if weights[k] > 0.0 {
            targets[k] += 1;
            rest -= 1;
        }
    }
    Ok(targets)
}

fn stratified_negatives(
    table: &AtomTable,
    requested: usize,
    weights: &[f64; 10],
    seed: u64,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    let targets = stratum_targets(requested, weights)?;
    let atoms = table.atoms();
    let words: Vec<WordSet> = atoms.iter().map(|a| normalize_words(&a.text)).collect();

    // Pairs with Jaccard >= 0.1 must share a word; collect them through an
    // inverted index and bucket by bin.
    let mut index: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ws) in words.iter().enumerate() {
        for w in ws.iter() {
            index.entry(w).or_default().push(i);
        }
    }
    let mut seen = HashSet::new();
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); 10];
    for members in index.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                if atoms[i].cui == atoms[j].cui || !seen.insert((i, j)) {
                    continue;
                }
                let bin = bin_of(jaccard(&words[i], &words[j]));
                if bin > 0 {
                    buckets[bin].push((i, j));
                }
            }
        }
    }

    let mut out = Vec::with_capacity(requested);
    let mut rng = stream_rng(seed, 0x5354_5241);
    for bin in 1..10 {
        let want = targets[bin];
        let have = &mut buckets[bin];
        if want > have.len() {
            return Err(CorpusError::NotEnoughNegatives {
                requested: want as u128,
                available: have.len() as u128,
            });
        }
        have.sort_unstable();
        let mut picked = index::sample(&mut rng, have.len(), want).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|k| have[k]));
    }

    // Bin 0 covers most of the space: rejection-sample it.
    let want = targets[0];
    let mut taken = HashSet::with_capacity(want);
    let n = atoms.len();
    let max_attempts = 50 * want as u64 + 10_000;
    let mut attempts = 0u64;
    while taken.len() < want {
        attempts += 1;
        if attempts > max_attempts {
            return Err(CorpusError::NotEnoughNegatives {
                requested: want as u128,
                available: taken.len() as u128,
            });
        }
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || atoms[i].cui == atoms[j].cui {
            continue;
        }
        let key = canonical(i, j);
        if bin_of(jaccard(&words[key.0], &words[key.1])) == 0 && taken.insert(key) {
            out.push(key);
        }
    }
    Ok(out)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes `AUI1\tAUI2\tLABEL` rows and the provenance sidecar.
pub fn write_pair_set(set: &PairSet, path: &Path) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in &set.pairs {
        writeln!(out, "{}\t{}\t{}", p.aui1, p.aui2, p.label()).map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(&set.provenance)
        .map_err(|e| CorpusError::Sidecar(e.to_string()))?;
    json.push('\n');
    fs::write(&side, json).map_err(|e| CorpusError::io(side, e))
}

/// Reads a pair file; the sidecar is optional.
pub fn read_pair_set(path: &Path) -> Result<PairSet, CorpusError> {
    let content = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, row) in content.lines().enumerate() {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedPair {
                line,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let synonym = match fields[2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(CorpusError::MalformedPair {
                    line,
                    reason: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        if fields[0] == fields[1] {
            return Err(CorpusError::MalformedPair {
                line,
                reason: "pair of an atom with itself".into(),
            });
        }
        pairs.push(AtomPair::new(fields[0], fields[1], synonym));
    }
    let side = sidecar_path(path);
    let provenance = match fs::read_to_string(&side) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| CorpusError::Sidecar(e.to_string()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Provenance::default(),
        Err(e) => return Err(CorpusError::io(side, e)),
    };
    Ok(PairSet::new(pairs, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_atom_table, Atom};

    fn table(rows: &[(&str, &str, &str)]) -> AtomTable {
        AtomTable::new(
            rows.iter()
                .map(|(a, c, t)| Atom {
                    aui: a.to_string(),
                    cui: c.to_string(),
                    text: t.to_string(),
                    source: "SRC".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn uniform(neg_ratio: f64, seed: u64) -> PairConfig {
        PairConfig {
            neg_ratio,
            seed,
            ..PairConfig::default()
        }
    }

    #[test]
    fn single_concept_has_no_negatives() {
        let t = table(&[("a", "C1", "x"), ("b", "C1", "y"), ("c", "C1", "z")]);
        assert_eq!(positive_pairs(&t, &uniform(1.0, 0)).len(), 3);
        let err = generate_pairs(&t, &uniform(1.0, 0)).unwrap_err();
        assert!(matches!(err, CorpusError::NotEnoughNegatives { requested: 3, available: 0 }));
        assert!(err.to_string().contains("at most 0"));
    }

    #[test]
    fn negative_count_follows_ratio() {
        let mut rows = vec![("a", "C1", "x"), ("b", "C1", "y"), ("c", "C1", "z")];
        let names: Vec<String> = (0..20).map(|i| format!("o{i:02}")).collect();
        for n in &names {
            rows.push((n.as_str(), n.as_str(), "w"));
        }
        let t = table(&rows);
        let t_pos = positive_pairs(&t, &uniform(2.0, 1)).len();
        let set = generate_pairs(&t, &uniform(2.0, 1)).unwrap();
        assert_eq!(set.provenance.negatives, 2 * t_pos);
        assert_eq!(set.provenance.positives, t_pos);
        set.verify_labels(&t).unwrap();
    }

    #[test]
    fn invalid_ratio_rejected() {
        let t = table(&[("a", "C1", "x"), ("b", "C2", "y")]);
        assert!(matches!(
            generate_pairs(&t, &uniform(0.0, 0)),
            Err(CorpusError::InvalidNegRatio(_))
        ));
        assert!(matches!(
            generate_pairs(&t, &uniform(-1.0, 0)),
            Err(CorpusError::InvalidNegRatio(_))
        ));
    }

    #[test]
    fn pairs_are_canonical_and_unique() {
        let t = parse_atom_table(
            "z1\tC1\tred fever\tS\na1\tC1\tfever red\tS\nm1\tC2\tblue pain\tS\nb2\tC2\tpain\tS\nq1\tC3\tgreen\tS\nq2\tC3\tgreen leaf\tS\n",
        )
        .unwrap();
        let set = generate_pairs(&t, &uniform(3.0, 9)).unwrap();
        let keys: HashSet<_> = set.pairs.iter().map(|p| (p.aui1.clone(), p.aui2.clone())).collect();
        assert_eq!(keys.len(), set.len());
        assert!(set.pairs.iter().all(|p| p.aui1 < p.aui2));
        set.verify_labels(&t).unwrap();
    }

    #[test]
    fn large_concepts_are_capped() {
        let names: Vec<String> = (0..30).map(|i| format!("a{i:02}")).collect();
        let mut rows: Vec<(&str, &str, &str)> = names.iter().map(|n| (n.as_str(), "C1", "t")).collect();
        rows.push(("x", "C2", "u"));
        let t = table(&rows);
        let config = PairConfig {
            max_concept_atoms: 10,
            ..uniform(0.1, 4)
        };
        let pos = positive_pairs(&t, &config);
        assert_eq!(pos.len(), 45);
        let unique: HashSet<_> = pos.iter().collect();
        assert_eq!(unique.len(), 45);
        assert_eq!(pos, positive_pairs(&t, &config));
    }

    #[test]
    fn decode_covers_all_pairs_in_order() {
        let n = 6;
        let decoded: Vec<_> = (0..15).map(|t| decode_pair_index(t, n)).collect();
        let mut expected = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                expected.push((a, b));
            }
        }
        assert_eq!(decoded, expected);
    }

    #[test]
    fn stratum_targets_sum_exactly() {
        let w = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let t = stratum_targets(10, &w).unwrap();
        assert_eq!(t.iter().sum::<usize>(), 10);
        assert_eq!(t[1], 0);
        assert!(stratum_targets(5, &[0.0; 10]).is_err());
    }

    #[test]
    fn stratified_mode_respects_bins() {
        let mut rows = Vec::new();
        let names: Vec<(String, String, String)> = (0..40)
            .map(|i| {
                (
                    format!("A{i:03}"),
                    format!("C{:02}", i / 2),
                    format!("base{c} mid{c} tail{}", i % 2, c = i / 2),
                )
            })
            .collect();
        for (a, c, s) in &names {
            rows.push((a.as_str(), c.as_str(), s.as_str()));
        }
        let t = table(&rows);
        let mut weights = [0.0; 10];
        weights[0] = 1.0;
        weights[2] = 1.0;
        let config = PairConfig {
            neg_ratio: 1.0,
            mode: NegativeMode::Stratified { weights },
            seed: 3,
            max_concept_atoms: 100,
        };
        let set = generate_pairs(&t, &config).unwrap();
        set.verify_labels(&t).unwrap();
        let mut per_bin = [0usize; 10];
        for p in set.pairs.iter().filter(|p| !p.synonym) {
            let j = jaccard(
                &normalize_words(t.text_of(&p.aui1).unwrap()),
                &normalize_words(t.text_of(&p.aui2).unwrap()),
            );
            per_bin[bin_of(j)] += 1;
        }
        assert_eq!(per_bin[0], 10);
        assert_eq!(per_bin[2], 10);
        assert_eq!(per_bin.iter().sum::<usize>(), 20);
    }

    #[test]
    fn files_are_deterministic() {
        let t = parse_atom_table(
            "a\tC1\tone two\tS\nb\tC1\ttwo one\tS\nc\tC2\tthree\tS\nd\tC2\tthree four\tS\ne\tC3\tfive\tS\nf\tC4\tsix\tS\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("one.tsv"), dir.path().join("two.tsv"));
        write_pair_set(&generate_pairs(&t, &uniform(2.0, 77)).unwrap(), &p1).unwrap();
        write_pair_set(&generate_pairs(&t, &uniform(2.0, 77)).unwrap(), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(
            fs::read(sidecar_path(&p1)).unwrap(),
            fs::read(sidecar_path(&p2)).unwrap()
        );
        let back = read_pair_set(&p1).unwrap();
        assert_eq!(back, generate_pairs(&t, &uniform(2.0, 77)).unwrap());
    }
}
