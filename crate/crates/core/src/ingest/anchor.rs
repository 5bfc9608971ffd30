use std::collections::HashMap;

use super::Sentence;
use crate::error::{Error, Result};

/// A parsed sentence whose lexeme offsets have been moved onto a host text.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchored<S> {
    pub sentence: S,
    /// Position of the sentence in the parse file it came from.
    pub source: usize,
}

fn surface(form: &str) -> &str {
    match form {
        "``" | "''" => "\"",
        other => other,
    }
}

/// Finds parsed sentences inside question and passage texts.
///
/// Parse files list sentences in any order and may repeat them; a text is
/// covered left to right by sentences whose forms appear consecutively,
/// separated only by whitespace.
#[derive(Debug)]
pub struct SentenceIndex<'a, S> {
    sentences: &'a [S],
    by_first_form: HashMap<&'a str, Vec<usize>>,
    max_first_len: usize,
}

impl<'a, S: Sentence> SentenceIndex<'a, S> {
    pub fn new(sentences: &'a [S]) -> Self {
        let mut by_first_form: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut max_first_len = 0;
        for (i, s) in sentences.iter().enumerate() {
            if let Some(first) = s.lexemes().first() {
                let key = surface(&first.form);
                max_first_len = max_first_len.max(key.len());
                by_first_form.entry(key).or_default().push(i);
            }
        }
        SentenceIndex {
            sentences,
            by_first_form,
            max_first_len,
        }
    }

    /// Matches sentence `idx` at `at`; returns lexeme spans in `text`.
    fn try_match(&self, idx: usize, text: &str, at: usize) -> Option<Vec<(usize, usize)>> {
        let mut cursor = at;
        let mut spans = Vec::new();
        for (k, lex) in self.sentences[idx].lexemes().iter().enumerate() {
            if k > 0 {
                cursor = skip_ws(text, cursor);
            }
            let form = surface(&lex.form);
            if !text[cursor..].starts_with(form) {
                return None;
            }
            spans.push((cursor, cursor + form.len()));
            cursor += form.len();
        }
        Some(spans)
    }

    /// Covers `text` with sentences, in text order.
    pub fn cover(&self, text: &str) -> Result<Vec<Anchored<S>>> {
        let mut out = Vec::new();
        let mut cursor = skip_ws(text, 0);
        while cursor < text.len() {
            let mut best: Option<(usize, Vec<(usize, usize)>)> = None;
            let rest = &text[cursor..];
            for (b, ch) in rest.char_indices() {
                let end = b + ch.len_utf8();
                if end > self.max_first_len {
                    break;
                }
                let Some(cands) = self.by_first_form.get(&rest[..end]) else {
                    continue;
                };
                for &idx in cands {
                    if let Some(spans) = self.try_match(idx, text, cursor) {
                        let reach = spans.last().map_or(cursor, |s| s.1);
                        let better = match &best {
                            None => true,
                            Some((bi, bs)) => {
                                let breach = bs.last().map_or(cursor, |s| s.1);
                                reach > breach || (reach == breach && idx < *bi)
                            }
                        };
                        if better {
                            best = Some((idx, spans));
                        }
                    }
                }
            }
            let Some((idx, spans)) = best else {
                let snippet: String = rest.chars().take(30).collect();
                return Err(Error::Alignment(format!(
                    "no parsed sentence covers the text at byte {cursor}: {snippet:?}"
                )));
            };
            let mut sentence = self.sentences[idx].clone();
            for (lex, (s, e)) in sentence.lexemes_mut().iter_mut().zip(&spans) {
                lex.char_start = *s;
                lex.char_end = *e;
            }
            cursor = skip_ws(text, spans.last().map_or(cursor, |s| s.1));
            out.push(Anchored {
                sentence,
                source: idx,
            });
        }
        Ok(out)
    }
}

fn skip_ws(text: &str, from: usize) -> usize {
    text[from..]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map_or(text.len(), |(b, _)| from + b)
}
