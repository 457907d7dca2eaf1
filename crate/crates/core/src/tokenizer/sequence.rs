use super::vocab::{WordPieceVocab, CLS_ID, PAD_ID, SEP_ID};
use super::TokenizerError;

/// Packed model input, right-padded.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// 1 for real tokens, 0 for padding.
    pub attention_mask: Vec<u8>,
    /// 0 for the first atom string (with `[CLS]` and its `[SEP]`), 1 after.
    pub segment_ids: Vec<u8>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of real (unpadded) positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 1).count()
    }

    /// The same sequence without its padding tail.
    pub fn trimmed(&self) -> TokenSequence {
        let n = self.real_len();
        TokenSequence {
            ids: self.ids[..n].to_vec(),
            attention_mask: self.attention_mask[..n].to_vec(),
            segment_ids: self.segment_ids[..n].to_vec(),
        }
    }

    /// Extends with `extra` padding positions.
    pub fn padded(&self, extra: usize) -> TokenSequence {
        let mut out = self.clone();
        out.ids.extend(std::iter::repeat_n(PAD_ID, extra));
        out.attention_mask.extend(std::iter::repeat_n(0, extra));
        out.segment_ids.extend(std::iter::repeat_n(0, extra));
        out
    }

    fn from_parts(parts: &[(&[u32], u8)], max_len: usize) -> Self {
        let mut seq = TokenSequence::default();
        for (ids, segment) in parts {
            seq.ids.extend_from_slice(ids);
            seq.segment_ids.extend(std::iter::repeat_n(*segment, ids.len()));
        }
        seq.attention_mask = vec![1; seq.ids.len()];
        let pad = max_len - seq.ids.len();
        seq.padded(pad)
    }
}

/// `[CLS] a [SEP] b [SEP]` padded to `max_len`. Over-long inputs lose
/// tokens from the end of whichever side is longer (the second on ties).
pub fn build_sp_input(
    vocab: &WordPieceVocab,
    text1: &str,
    text2: &str,
    max_len: usize,
) -> Result<TokenSequence, TokenizerError> {
    if max_len < 8 {
        return Err(TokenizerError::MaxLenTooSmall { max_len, minimum: 8 });
    }
    let mut a = vocab.encode(text1);
    let mut b = vocab.encode(text2);
    let budget = max_len - 3;
    while a.len() + b.len() > budget {
        if a.len() > b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
    Ok(TokenSequence::from_parts(
        &[(&[CLS_ID], 0), (&a, 0), (&[SEP_ID], 0), (&b, 1), (&[SEP_ID], 1)],
        max_len,
    ))
}

/// `[CLS] text [SEP]` padded to `max_len`, single segment.
pub fn build_mlm_input(
    vocab: &WordPieceVocab,
    text: &str,
    max_len: usize,
) -> Result<TokenSequence, TokenizerError> {
    if max_len < 4 {
        return Err(TokenizerError::MaxLenTooSmall { max_len, minimum: 4 });
    }
    let mut ids = vocab.encode(text);
    ids.truncate(max_len - 2);
    Ok(TokenSequence::from_parts(
        &[(&[CLS_ID], 0), (&ids, 0), (&[SEP_ID], 0)],
        max_len,
    ))
}
