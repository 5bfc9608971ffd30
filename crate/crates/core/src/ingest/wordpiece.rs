use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";

const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordToken {
    pub id: usize,
    pub text: String,
    /// Byte offsets into the tokenized text; both 0 for special tokens.
    pub char_start: usize,
    pub char_end: usize,
    pub is_special: bool,
}

impl SubwordToken {
    pub fn special(id: usize, text: &str) -> Self {
        SubwordToken {
            id,
            text: text.to_string(),
            char_start: 0,
            char_end: 0,
            is_special: true,
        }
    }
}

/// Piece list with ids given by line order.
#[derive(Debug, Clone)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Parses a newline-delimited piece list. Blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let pieces: Vec<String> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::from_pieces(pieces)
    }

    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            index.entry(p.clone()).or_insert(i);
        }
        for required in [UNK, CLS, SEP, PAD] {
            if !index.contains_key(required) {
                return Err(Error::Config(format!("vocabulary lacks {required}")));
            }
        }
        Ok(Vocab { pieces, index })
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        self.index[UNK]
    }

    pub fn special_token(&self, piece: &str) -> SubwordToken {
        SubwordToken::special(self.index[piece], piece)
    }
}

fn is_punctuation(ch: char) -> bool {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    if ch.is_ascii() {
        return ch.is_ascii_punctuation();
    }
    let re = PUNCT.get_or_init(|| Regex::new(r"^\p{P}$").expect("static regex"));
    let mut buf = [0u8; 4];
    re.is_match(ch.encode_utf8(&mut buf))
}

/// Splits text into words on whitespace, with every punctuation character
/// standing as a word of its own. Returns byte spans.
pub(crate) fn pre_tokenize(text: &str) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    for (b, ch) in text.char_indices() {
        if ch.is_whitespace() || ch.is_control() {
            if let Some(s) = start.take() {
                words.push((s, b));
            }
        } else if is_punctuation(ch) {
            if let Some(s) = start.take() {
                words.push((s, b));
            }
            words.push((b, b + ch.len_utf8()));
        } else if start.is_none() {
            start = Some(b);
        }
    }
    if let Some(s) = start {
        words.push((s, text.len()));
    }
    words
}

/// Greedy longest-match-first WordPiece tokenizer.
#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: Vocab,
}

impl WordPiece {
    pub fn new(vocab: Vocab) -> Self {
        WordPiece { vocab }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn tokenize(&self, text: &str) -> Vec<SubwordToken> {
        let mut out = Vec::new();
        for (ws, we) in pre_tokenize(text) {
            self.tokenize_word(text, ws, we, &mut out);
        }
        out
    }

    fn tokenize_word(&self, text: &str, ws: usize, we: usize, out: &mut Vec<SubwordToken>) {
        let word = &text[ws..we];
        let unk = || SubwordToken {
            id: self.vocab.unk_id(),
            text: UNK.to_string(),
            char_start: ws,
            char_end: we,
            is_special: false,
        };
        if word.chars().count() > MAX_WORD_CHARS {
            out.push(unk());
            return;
        }
        // char boundaries, including the end of the word
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(b, _)| b)
            .chain([word.len()])
            .collect();
        let mut pieces = Vec::new();
        let mut start_idx = 0;
        while start_idx + 1 < bounds.len() {
            let start = bounds[start_idx];
            let mut found = None;
            for end_idx in (start_idx + 1..bounds.len()).rev() {
                let sub = &word[start..bounds[end_idx]];
                let candidate = if start > 0 {
                    format!("{CONTINUATION}{sub}")
                } else {
                    sub.to_string()
                };
                if let Some(id) = self.vocab.id(&candidate) {
                    found = Some((end_idx, id, candidate));
                    break;
                }
            }
            let Some((end_idx, id, piece)) = found else {
                out.push(unk());
                return;
            };
            pieces.push(SubwordToken {
                id,
                text: piece,
                char_start: ws + start,
                char_end: ws + bounds[end_idx],
                is_special: false,
            });
            start_idx = end_idx;
        }
        out.extend(pieces);
    }
}

/// Convenience wrapper over [`WordPiece::tokenize`].
pub fn tokenize_subwords(text: &str, vocab: &Vocab) -> Vec<SubwordToken> {
    WordPiece::new(vocab.clone()).tokenize(text)
}
