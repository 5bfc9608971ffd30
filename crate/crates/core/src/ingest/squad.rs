use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    /// Offset as given in the dataset: counted in Unicode scalar values.
    pub char_start: usize,
    /// The same position as a byte offset into the passage.
    pub byte_start: usize,
}

impl GoldAnswer {
    pub fn byte_end(&self) -> usize {
        self.byte_start + self.text.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    pub passage: String,
    pub gold_answers: Vec<GoldAnswer>,
    pub is_impossible: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SquadDataset {
    pub examples: Vec<QaExample>,
    /// Ids of entries dropped because an answer did not match its offset.
    pub dropped: Vec<String>,
}

#[derive(Deserialize)]
struct RawFile {
    data: Vec<RawArticle>,
}

#[derive(Deserialize)]
struct RawArticle {
    paragraphs: Vec<RawParagraph>,
}

#[derive(Deserialize)]
struct RawParagraph {
    context: String,
    qas: Vec<RawQa>,
}

#[derive(Deserialize)]
struct RawQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<RawAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Deserialize)]
struct RawAnswer {
    text: String,
    answer_start: usize,
}

fn char_to_byte(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == text.chars().count() {
        return Some(text.len());
    }
    text.char_indices().nth(char_idx).map(|(b, _)| b)
}

/// Reads SQuAD 2.0 JSON. Entries whose answers do not match the context at
/// their stated offsets are dropped and reported in [`SquadDataset::dropped`].
pub fn read_squad(json_text: &str) -> Result<SquadDataset> {
    let raw: RawFile = serde_json::from_str(json_text)?;
    let mut out = SquadDataset::default();
    for article in raw.data {
        for para in article.paragraphs {
            for qa in para.qas {
                match convert(&para.context, qa) {
                    Ok(ex) => out.examples.push(ex),
                    Err((id, why)) => {
                        log::warn!("dropping {id}: {why}");
                        out.dropped.push(id);
                    }
                }
            }
        }
    }
    if !out.dropped.is_empty() {
        log::info!(
            "dropped {} of {} entries",
            out.dropped.len(),
            out.dropped.len() + out.examples.len()
        );
    }
    Ok(out)
}

fn convert(context: &str, qa: RawQa) -> std::result::Result<QaExample, (String, String)> {
    let mut gold = Vec::new();
    if !qa.is_impossible {
        if qa.answers.is_empty() {
            return Err((qa.id, "answerable entry without answers".into()));
        }
        for a in qa.answers {
            let byte_start = char_to_byte(context, a.answer_start).ok_or_else(|| {
                (
                    qa.id.clone(),
                    format!("answer_start {} past end of context", a.answer_start),
                )
            })?;
            if context.get(byte_start..byte_start + a.text.len()) != Some(a.text.as_str()) {
                return Err((
                    qa.id,
                    format!("answer {:?} not found at offset {}", a.text, a.answer_start),
                ));
            }
            gold.push(GoldAnswer {
                text: a.text,
                char_start: a.answer_start,
                byte_start,
            });
        }
    }
    Ok(QaExample {
        id: qa.id,
        question: qa.question,
        passage: context.to_string(),
        gold_answers: gold,
        is_impossible: qa.is_impossible,
    })
}

impl QaExample {
    pub fn validate(&self) -> Result<()> {
        if self.is_impossible && !self.gold_answers.is_empty() {
            return Err(Error::Validation(format!(
                "{}: unanswerable example carries answers",
                self.id
            )));
        }
        for a in &self.gold_answers {
            if self.passage.get(a.byte_start..a.byte_end()) != Some(a.text.as_str()) {
                return Err(Error::Validation(format!(
                    "{}: answer {:?} misplaced",
                    self.id, a.text
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(qas: &str) -> String {
        format!(
            r#"{{"version": "v2.0", "data": [{{"title": "t", "paragraphs": [{{"context": "Café due to a stronger tech-oriented economy.", "qas": [{qas}]}}]}}]}}"#
        )
    }

    #[test]
    fn one_answerable_entry() {
        let ds = read_squad(&file(
            r#"{"id": "q1", "question": "What kind?", "answers": [{"text": "tech-oriented", "answer_start": 23}], "is_impossible": false}"#,
        ))
        .unwrap();
        assert_eq!(ds.examples.len(), 1);
        let ex = &ds.examples[0];
        assert!(!ex.is_impossible);
        // "Café" has a two-byte é, so bytes run one ahead of chars.
        assert_eq!(ex.gold_answers[0].byte_start, 24);
        ex.validate().unwrap();
    }

    #[test]
    fn impossible_entry_has_no_answers() {
        let ds = read_squad(&file(
            r#"{"id": "q2", "question": "Why?", "answers": [], "plausible_answers": [{"text": "x", "answer_start": 0}], "is_impossible": true}"#,
        ))
        .unwrap();
        assert!(ds.examples[0].gold_answers.is_empty());
        assert!(ds.examples[0].is_impossible);
    }

    #[test]
    fn mismatched_offset_is_dropped() {
        let ds = read_squad(&file(
            r#"{"id": "good", "question": "a?", "answers": [{"text": "economy", "answer_start": 37}], "is_impossible": false},
               {"id": "bad", "question": "b?", "answers": [{"text": "economy", "answer_start": 5}], "is_impossible": false}"#,
        ))
        .unwrap();
        assert_eq!(ds.examples.len(), 1);
        assert_eq!(ds.examples[0].id, "good");
        assert_eq!(ds.dropped, vec!["bad".to_string()]);
    }

    #[test]
    fn malformed_json_is_fatal() {
        assert!(matches!(read_squad("{\"data\": ["), Err(Error::Json(_))));
    }
}
