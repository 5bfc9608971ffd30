use serde::{Deserialize, Serialize};

use super::{LexemeToken, SubwordToken};
use crate::error::{Error, Result};

/// For each lexeme, the ordered indices of the subwords composing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub groups: Vec<Vec<usize>>,
}

impl Alignment {
    /// Lexemes split across two or more subwords get a virtual vertex.
    pub fn needs_virtual(&self, lexeme: usize) -> bool {
        self.groups[lexeme].len() >= 2
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Shifts every subword index by `offset`.
    pub fn offset(mut self, offset: usize) -> Self {
        for g in &mut self.groups {
            for i in g.iter_mut() {
                *i += offset;
            }
        }
        self
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Maps lexemes onto the subwords whose spans intersect them.
///
/// Special subwords are skipped. Every other subword must intersect exactly
/// one lexeme and every lexeme must receive at least one subword.
pub fn align_subwords_to_lexemes(
    subwords: &[SubwordToken],
    lexemes: &[LexemeToken],
) -> Result<Alignment> {
    for pair in lexemes.windows(2) {
        if pair[1].char_start < pair[0].char_end {
            return Err(Error::Alignment(format!(
                "lexemes {:?} and {:?} overlap",
                pair[0].form, pair[1].form
            )));
        }
    }
    let mut groups = vec![Vec::new(); lexemes.len()];
    for (si, sw) in subwords.iter().enumerate() {
        if sw.is_special {
            continue;
        }
        let span = (sw.char_start, sw.char_end);
        // first lexeme ending after the subword start
        let first = lexemes.partition_point(|l| l.char_end <= sw.char_start);
        let hits: Vec<usize> = (first..lexemes.len())
            .take_while(|&li| lexemes[li].char_start < sw.char_end)
            .filter(|&li| overlaps(span, (lexemes[li].char_start, lexemes[li].char_end)))
            .collect();
        match hits.as_slice() {
            [li] => groups[*li].push(si),
            [] => {
                return Err(Error::Alignment(format!(
                    "subword {:?} at {}..{} lies in no lexeme",
                    sw.text, sw.char_start, sw.char_end
                )))
            }
            [a, b, ..] => {
                return Err(Error::Alignment(format!(
                    "subword {:?} at {}..{} straddles lexemes {:?} ({}..{}) and {:?} ({}..{})",
                    sw.text,
                    sw.char_start,
                    sw.char_end,
                    lexemes[*a].form,
                    lexemes[*a].char_start,
                    lexemes[*a].char_end,
                    lexemes[*b].form,
                    lexemes[*b].char_start,
                    lexemes[*b].char_end
                )))
            }
        }
    }
    if let Some(li) = groups.iter().position(Vec::is_empty) {
        let l = &lexemes[li];
        return Err(Error::Alignment(format!(
            "lexeme {:?} at {}..{} received no subwords",
            l.form, l.char_start, l.char_end
        )));
    }
    Ok(Alignment { groups })
}
