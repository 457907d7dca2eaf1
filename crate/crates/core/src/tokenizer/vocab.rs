use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::basic::basic_tokenize;
use super::TokenizerError;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const NUM_SPECIAL: u32 = 5;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_MAX_WORD_CHARS: usize = 100;

/// Ordered subword vocabulary; a token's position is its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceVocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    max_word_chars: usize,
}

impl WordPieceVocab {
    /// Validates the specials layout and token uniqueness.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(TokenizerError::MalformedVocab(format!(
                "{} tokens, need at least the {} specials",
                tokens.len(),
                SPECIAL_TOKENS.len()
            )));
        }
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *special {
                return Err(TokenizerError::MalformedVocab(format!(
                    "id {i} must be {special}, found {:?}",
                    tokens[i]
                )));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(['\n', '\r']) {
                return Err(TokenizerError::MalformedVocab(format!("invalid token at id {i}")));
            }
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::MalformedVocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            ids,
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
        })
    }

    pub fn with_max_word_chars(mut self, max_word_chars: usize) -> Self {
        self.max_word_chars = max_word_chars;
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn max_word_chars(&self) -> usize {
        self.max_word_chars
    }

    /// Greedy longest-match-first segmentation of one word. A word that
    /// cannot be covered, or is longer than the limit, becomes `[UNK]`.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n_chars = bounds.len() - 1;
        if n_chars == 0 {
            return Vec::new();
        }
        if n_chars > self.max_word_chars {
            return vec![UNK_ID];
        }
        let mut pieces = Vec::new();
        let mut key = String::with_capacity(word.len() + 2);
        let mut start = 0;
        while start < n_chars {
            let mut end = n_chars;
            let mut found = None;
            while end > start {
                key.clear();
                if start > 0 {
                    key.push_str(CONTINUATION_PREFIX);
                }
                key.push_str(&word[bounds[start]..bounds[end]]);
                if let Some(&id) = self.ids.get(key.as_str()) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => return vec![UNK_ID],
            }
        }
        pieces
    }

    /// Lowercases, splits into words and punctuation, and encodes each word.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        basic_tokenize(text)
            .iter()
            .flat_map(|w| self.encode_word(w))
            .collect()
    }

    /// Joins pieces back into words, stripping continuation prefixes.
    pub fn decode_word(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter_map(|&id| self.token(id))
            .map(|t| t.strip_prefix(CONTINUATION_PREFIX).unwrap_or(t))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let body = text.strip_suffix('\n').unwrap_or(&text);
        Self::from_tokens(body.split('\n').map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(extra: &[&str]) -> WordPieceVocab {
        WordPieceVocab::from_tokens(
            SPECIAL_TOKENS
                .iter()
                .chain(extra)
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab(&["un", "##aff", "##able", "u", "##n", "##a", "##f", "##b", "##l", "##e"]);
        let ids = v.encode_word("unaffable");
        let pieces: Vec<_> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(pieces, ["un", "##aff", "##able"]);
        assert_eq!(v.decode_word(&ids), "unaffable");
    }

    #[test]
    fn whole_word_hit_and_unknown_char() {
        let v = vocab(&["fever", "f", "##e", "##v", "##r"]);
        assert_eq!(v.encode_word("fever"), vec![v.id("fever").unwrap()]);
        assert_eq!(v.encode_word("fevez"), vec![UNK_ID]);
    }

    #[test]
    fn overlong_word_is_unknown() {
        let v = vocab(&["a", "##a"]).with_max_word_chars(4);
        assert_eq!(v.encode_word("aaaa").len(), 4);
        assert_eq!(v.encode_word("aaaaa"), vec![UNK_ID]);
    }

    #[test]
    fn specials_are_validated() {
        let bad = vec!["[UNK]", "[PAD]", "[CLS]", "[SEP]", "[MASK]"];
        assert!(WordPieceVocab::from_tokens(bad.into_iter().map(String::from).collect()).is_err());
        let dup = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "a"];
        assert!(WordPieceVocab::from_tokens(dup.into_iter().map(String::from).collect()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let v = vocab(&["heart", "##s", "h", "##e"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        assert_eq!(WordPieceVocab::load(&path).unwrap(), v);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nheart\n"));
    }
}
