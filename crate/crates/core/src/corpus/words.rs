use std::collections::BTreeSet;

/// Normalized words of a term: lowercase, alphanumeric runs only, deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSet(BTreeSet<String>);

impl WordSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for WordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        WordSet(iter.into_iter().map(Into::into).collect())
    }
}

pub fn normalize_words(text: &str) -> WordSet {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

/// |a ∩ b| / |a ∪ b|, and 0 when both sets are empty.
pub fn jaccard(a: &WordSet, b: &WordSet) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.0.iter().filter(|w| large.0.contains(*w)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard_text(a: &str, b: &str) -> f64 {
    jaccard(&normalize_words(a), &normalize_words(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(words: &[&str]) -> WordSet {
        words.iter().copied().collect()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_words("Myocardial Infarction"),
            set(&["myocardial", "infarction"])
        );
        assert_eq!(normalize_words(""), WordSet::default());
        assert_eq!(
            normalize_words("Heart-attack (disorder)"),
            set(&["heart", "attack", "disorder"])
        );
        assert_eq!(normalize_words("a, A; a"), set(&["a"]));
    }

    #[test]
    fn jaccard_examples() {
        let a = set(&["heart", "attack"]);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &set(&["fever"])), 0.0);
        assert_eq!(jaccard(&a, &set(&["heart", "failure"])), 1.0 / 3.0);
        assert_eq!(jaccard(&WordSet::default(), &WordSet::default()), 0.0);
    }

    proptest! {
        #[test]
        fn jaccard_is_symmetric_and_bounded(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            let (wa, wb) = (normalize_words(&a), normalize_words(&b));
            let j = jaccard(&wa, &wb);
            prop_assert_eq!(j, jaccard(&wb, &wa));
            prop_assert!((0.0..=1.0).contains(&j));
            if !wa.is_empty() {
                prop_assert_eq!(jaccard(&wa, &wa), 1.0);
            }
        }

        #[test]
        fn normalized_words_are_clean(s in "\\PC{0,40}") {
            for w in normalize_words(&s).iter() {
                prop_assert!(!w.is_empty());
                prop_assert!(w.chars().all(char::is_alphanumeric));
                prop_assert_eq!(w.to_lowercase(), w);
            }
        }
    }
}
