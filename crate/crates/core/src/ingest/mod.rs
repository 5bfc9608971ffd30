//! Readers for QA data and syntactic parses, the subword tokenizer, and
//! alignment between subwords and parser lexemes.

mod align;
mod anchor;
mod bracketed;
mod conllu;
mod squad;
mod wordpiece;

use serde::{Deserialize, Serialize};

pub use align::{align_subwords_to_lexemes, Alignment};
pub use anchor::{Anchored, SentenceIndex};
pub use bracketed::{read_bracketed, write_bracketed, ConstituencyParse, TreeNode};
pub use conllu::{read_conllu, write_conllu, DependencyParse};
pub use squad::{read_squad, GoldAnswer, QaExample, SquadDataset};
pub use wordpiece::{tokenize_subwords, SubwordToken, Vocab, WordPiece, CLS, PAD, SEP, UNK};

/// A parser-level word. Offsets are byte offsets into the source text,
/// end exclusive; `index` is 1-based within its sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexemeToken {
    pub index: usize,
    pub form: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Anything made of lexemes whose offsets can be moved onto another text.
pub trait Sentence: Clone {
    fn lexemes(&self) -> &[LexemeToken];
    fn lexemes_mut(&mut self) -> &mut [LexemeToken];
    fn describe(&self) -> String;
}

/// Locates `forms` left to right in `text`; each form is searched from the
/// end of the previous one.
pub(crate) fn locate_forms(text: &str, forms: &[&str]) -> Option<Vec<(usize, usize)>> {
    let mut cursor = 0;
    let mut spans = Vec::with_capacity(forms.len());
    for form in forms {
        let (start, len) = find_form(text, cursor, form)?;
        spans.push((start, start + len));
        cursor = start + len;
    }
    Some(spans)
}

fn find_form(text: &str, from: usize, form: &str) -> Option<(usize, usize)> {
    if let Some(pos) = text[from..].find(form) {
        return Some((from + pos, form.len()));
    }
    // PTB-style quotes stand for a plain double quote in running text.
    if form == "``" || form == "''" {
        return text[from..].find('"').map(|pos| (from + pos, 1));
    }
    None
}

/// Lexemes built by joining forms with single spaces.
pub(crate) fn lexemes_from_forms(
    forms: &[String],
    text: Option<&str>,
) -> Option<(String, Vec<LexemeToken>)> {
    let refs: Vec<&str> = forms.iter().map(String::as_str).collect();
    let (text, spans) = match text {
        Some(t) => (t.to_string(), locate_forms(t, &refs)?),
        None => {
            let joined = refs.join(" ");
            let spans = locate_forms(&joined, &refs)?;
            (joined, spans)
        }
    };
    let lexemes = forms
        .iter()
        .zip(spans)
        .enumerate()
        .map(|(i, (form, (s, e)))| LexemeToken {
            index: i + 1,
            form: form.clone(),
            char_start: s,
            char_end: e,
        })
        .collect();
    Some((text, lexemes))
}
