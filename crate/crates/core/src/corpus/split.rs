use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;

use super::pairs::SplitRecord;
use super::{AtomPair, CorpusError, PairSet, Provenance};
use crate::rng::stream_rng;

/// Train/dev/test fractions; positive and summing to 1 within 1e-9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions([f64; 3]);

impl SplitFractions {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self, CorpusError> {
        let f = [train, dev, test];
        let valid = f.iter().all(|x| x.is_finite() && *x > 0.0)
            && (f.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if valid {
            Ok(Self(f))
        } else {
            Err(CorpusError::InvalidFractions(f))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    /// Part sizes for `n` items: rounded train and dev, test takes the rest.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let train = ((n as f64 * self.0[0]).round() as usize).min(n);
        let dev = ((n as f64 * self.0[1]).round() as usize).min(n - train);
        [train, dev, n - train - dev]
    }
}

const PART_NAMES: [&str; 3] = ["train", "dev", "test"];

fn part_set(pairs: Vec<AtomPair>, source: &PairSet, f: &SplitFractions, seed: u64, part: usize, by_atom: bool) -> PairSet {
    let mut pairs = pairs;
    pairs.sort();
    PairSet::new(
        pairs,
        Provenance {
            generation: source.provenance.generation.clone(),
            split: Some(SplitRecord {
                part: PART_NAMES[part].to_string(),
                fractions: f.as_array(),
                seed,
                by_atom,
            }),
            ..Provenance::default()
        },
    )
}

/// Partitions pairs into train/dev/test by a seeded shuffle.
pub fn split_pairs(
    pairs: &PairSet,
    fractions: SplitFractions,
    seed: u64,
) -> (PairSet, PairSet, PairSet) {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut stream_rng(seed, 0x5350_4C54));
    let [n_train, n_dev, _] = fractions.sizes(pairs.len());
    let mut parts: [Vec<AtomPair>; 3] = Default::default();
    for (rank, idx) in order.into_iter().enumerate() {
        let part = if rank < n_train {
            0
        } else if rank < n_train + n_dev {
            1
        } else {
            2
        };
        parts[part].push(pairs.pairs[idx].clone());
    }
    let [a, b, c] = parts;
    (
        part_set(a, pairs, &fractions, seed, 0, false),
        part_set(b, pairs, &fractions, seed, 1, false),
        part_set(c, pairs, &fractions, seed, 2, false),
    )
}

/// Atom-disjoint variant: atoms are assigned to parts by the fractions and a
/// pair is kept only when both atoms land in the same part. Returns the
/// number of dropped pairs alongside the parts.
pub fn split_pairs_by_atom(
    pairs: &PairSet,
    fractions: SplitFractions,
    seed: u64,
) -> ((PairSet, PairSet, PairSet), usize) {
    let atoms: BTreeSet<&str> = pairs
        .pairs
        .iter()
        .flat_map(|p| [p.aui1.as_str(), p.aui2.as_str()])
        .collect();
    let mut atoms: Vec<&str> = atoms.into_iter().collect();
    atoms.shuffle(&mut stream_rng(seed, 0x4154_4F4D));
    let [n_train, n_dev, _] = fractions.sizes(atoms.len());
    let part_of: HashMap<&str, usize> = atoms
        .iter()
        .enumerate()
        .map(|(rank, a)| {
            let part = if rank < n_train {
                0
            } else if rank < n_train + n_dev {
                1
            } else {
                2
            };
            (*a, part)
        })
        .collect();
    let mut parts: [Vec<AtomPair>; 3] = Default::default();
    let mut dropped = 0;
    for p in &pairs.pairs {
        let (x, y) = (part_of[p.aui1.as_str()], part_of[p.aui2.as_str()]);
        if x == y {
            parts[x].push(p.clone());
        } else {
            dropped += 1;
        }
    }
    let [a, b, c] = parts;
    (
        (
            part_set(a, pairs, &fractions, seed, 0, true),
            part_set(b, pairs, &fractions, seed, 1, true),
            part_set(c, pairs, &fractions, seed, 2, true),
        ),
        dropped,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn pairs(n: usize) -> PairSet {
        PairSet::new(
            (0..n)
                .map(|i| AtomPair::new(format!("a{i:04}"), format!("b{i:04}"), i % 3 == 0))
                .collect(),
            Provenance::default(),
        )
    }

    #[test]
    fn ten_pairs_split_six_two_two() {
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let (a, b, c) = split_pairs(&pairs(10), f, 1);
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        assert_eq!(a.provenance.split.as_ref().unwrap().part, "train");
    }

    #[test]
    fn invalid_fractions() {
        assert!(SplitFractions::new(0.6, 0.2, 0.1).is_err());
        assert!(SplitFractions::new(0.0, 0.5, 0.5).is_err());
        assert!(SplitFractions::new(1.2, -0.1, -0.1).is_err());
        assert!(SplitFractions::new(0.6, 0.2, 0.2 + 5e-10).is_ok());
    }

    #[test]
    fn same_seed_same_assignment() {
        let f = SplitFractions::new(0.5, 0.25, 0.25).unwrap();
        let p = pairs(101);
        assert_eq!(split_pairs(&p, f, 5), split_pairs(&p, f, 5));
        assert_ne!(split_pairs(&p, f, 5).0, split_pairs(&p, f, 6).0);
    }

    #[test]
    fn atom_split_keeps_atoms_disjoint() {
        let mut v = Vec::new();
        for i in 0..30 {
            for j in i + 1..30 {
                if (i * 7 + j) % 5 == 0 {
                    v.push(AtomPair::new(format!("x{i:02}"), format!("x{j:02}"), false));
                }
            }
        }
        let set = PairSet::new(v, Provenance::default());
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let ((a, b, c), dropped) = split_pairs_by_atom(&set, f, 3);
        assert_eq!(a.len() + b.len() + c.len() + dropped, set.len());
        let atoms = |s: &PairSet| -> HashSet<String> {
            s.pairs.iter().flat_map(|p| [p.aui1.clone(), p.aui2.clone()]).collect()
        };
        assert!(atoms(&a).is_disjoint(&atoms(&c)));
        assert!(atoms(&a).is_disjoint(&atoms(&b)));
        assert!(atoms(&b).is_disjoint(&atoms(&c)));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 0usize..300, seed in any::<u64>(), t in 1u32..8, d in 1u32..8, s in 1u32..8) {
            let total = (t + d + s) as f64;
            let f = SplitFractions::new(t as f64 / total, d as f64 / total, 1.0 - (t + d) as f64 / total).unwrap();
            let p = pairs(n);
            let (a, b, c) = split_pairs(&p, f, seed);
            let sizes = [a.len(), b.len(), c.len()];
            for (size, frac) in sizes.iter().zip(f.as_array()) {
                prop_assert!((*size as f64 - n as f64 * frac).abs() <= 1.0 + 1e-9);
            }
            let mut all: Vec<_> = a.pairs.iter().chain(&b.pairs).chain(&c.pairs).cloned().collect();
            all.sort();
            let mut input = p.pairs.clone();
            input.sort();
            prop_assert_eq!(all, input);
        }
    }
}
