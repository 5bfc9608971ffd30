//! Per-example preprocessing: the `[CLS] question [SEP] passage [SEP]`
//! sequence, gold span targets, and the syntax graphs over that sequence.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::embedding::SidecarEntry;
use crate::error::{Error, Result};
use crate::graph::{build_constituency_graph, build_dependency_graph, HeteroGraph};
use crate::ingest::{
    align_subwords_to_lexemes, Alignment, ConstituencyParse, DependencyParse, QaExample, Sentence,
    SentenceIndex, SubwordToken, Vocab, WordPiece, CLS, SEP,
};
use crate::span::SpanTargets;

pub const DEFAULT_MAX_LEN: usize = 384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Dependency,
    Constituency,
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dep" | "dependency" => Ok(GraphKind::Dependency),
            "con" | "constituency" => Ok(GraphKind::Constituency),
            other => Err(Error::Config(format!(
                "unknown graph kind {other:?} (expected dep or con)"
            ))),
        }
    }
}

/// Subwords of each segment, offsets relative to that segment's text.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    pub question: Vec<SubwordToken>,
    pub passage: Vec<SubwordToken>,
}

impl Segments {
    pub fn tokenize(question: &str, passage: &str, tokenizer: &WordPiece) -> Self {
        Segments {
            question: tokenizer.tokenize(question),
            passage: tokenizer.tokenize(passage),
        }
    }

    /// Takes segments from an external tokenization whose offsets refer to
    /// `question + " " + passage`, laid out as
    /// `[CLS] question [SEP] passage [SEP]` with specials at `(0, 0)`.
    pub fn from_sidecar(
        question: &str,
        passage: &str,
        entry: &SidecarEntry,
        vocab: &Vocab,
    ) -> Result<Self> {
        if entry.pieces.len() != entry.offsets.len() {
            return Err(Error::Consistency(format!(
                "{} pieces but {} offsets",
                entry.pieces.len(),
                entry.offsets.len()
            )));
        }
        let shift = question.len() + 1;
        let mut segments = Segments {
            question: Vec::new(),
            passage: Vec::new(),
        };
        let mut specials = 0;
        for (piece, &[s, e]) in entry.pieces.iter().zip(&entry.offsets) {
            if s == 0 && e == 0 {
                specials += 1;
                continue;
            }
            let id = vocab.id(piece).unwrap_or_else(|| vocab.unk_id());
            let token = |s, e| SubwordToken {
                id,
                text: piece.clone(),
                char_start: s,
                char_end: e,
                is_special: false,
            };
            let (segment, text, s, e) = match specials {
                1 if e <= question.len() => (&mut segments.question, question, s, e),
                2 if s >= shift => (&mut segments.passage, passage, s - shift, e - shift),
                _ => {
                    return Err(Error::Consistency(format!(
                        "piece {piece:?} at {s}..{e} is outside the expected segment"
                    )))
                }
            };
            if s >= e || text.get(s..e).is_none() || segment.last().is_some_and(|p| p.char_end > s)
            {
                return Err(Error::Consistency(format!(
                    "piece {piece:?} has invalid offsets {s}..{e}"
                )));
            }
            segment.push(token(s, e));
        }
        if !(2..=3).contains(&specials) || entry.offsets.first() != Some(&[0, 0]) {
            return Err(Error::Consistency(format!(
                "expected [CLS] question [SEP] passage [SEP], found {specials} special tokens"
            )));
        }
        Ok(segments)
    }
}

/// The joint sequence after truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub subwords: Vec<SubwordToken>,
    pub question_range: Range<usize>,
    pub passage_range: Range<usize>,
    /// Passage subwords dropped by truncation.
    pub truncated: usize,
}

/// Lays out `[CLS] question [SEP] passage [SEP]`, cutting passage subwords
/// from the right until the sequence fits in `max_len`.
pub fn encode_pair(segments: &Segments, vocab: &Vocab, max_len: usize) -> Result<EncodedPair> {
    let fixed = segments.question.len() + 3;
    if fixed >= max_len {
        return Err(Error::Validation(format!(
            "question of {} subwords leaves no room for the passage within {max_len}",
            segments.question.len()
        )));
    }
    let kept = segments.passage.len().min(max_len - fixed);
    let mut subwords = Vec::with_capacity(fixed + kept);
    subwords.push(vocab.special_token(CLS));
    subwords.extend(segments.question.iter().cloned());
    let question_range = 1..subwords.len();
    subwords.push(vocab.special_token(SEP));
    let p0 = subwords.len();
    subwords.extend(segments.passage[..kept].iter().cloned());
    let passage_range = p0..subwords.len();
    subwords.push(vocab.special_token(SEP));
    Ok(EncodedPair {
        subwords,
        question_range,
        passage_range,
        truncated: segments.passage.len() - kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerLocation {
    Located(SpanTargets),
    /// The answer lies wholly or partly in the truncated region.
    Truncated,
    /// No subword overlaps the answer's offsets.
    Unrelocatable,
    Impossible,
}

/// Sequence positions of the first gold answer: the first and last passage
/// subwords overlapping its byte span.
pub fn locate_answer(
    example: &QaExample,
    segments: &Segments,
    pair: &EncodedPair,
) -> AnswerLocation {
    if example.is_impossible {
        return AnswerLocation::Impossible;
    }
    let Some(gold) = example.gold_answers.first() else {
        return AnswerLocation::Unrelocatable;
    };
    let (bs, be) = (gold.byte_start, gold.byte_end());
    let hits: Vec<usize> = segments
        .passage
        .iter()
        .enumerate()
        .filter(|(_, t)| t.char_start < be && bs < t.char_end)
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (hits.first(), hits.last()) else {
        return AnswerLocation::Unrelocatable;
    };
    if last >= pair.passage_range.len() {
        return AnswerLocation::Truncated;
    }
    let p0 = pair.passage_range.start;
    AnswerLocation::Located(SpanTargets {
        start: p0 + first,
        end: p0 + last,
    })
}

/// Anchors parsed sentences on `text` and aligns each to `subwords` (one
/// segment, offsets relative to `text`). Sentences reaching past the last
/// subword are dropped. Indices are shifted by `seq_offset`.
fn anchor_segment<S: Sentence>(
    index: &SentenceIndex<S>,
    text: &str,
    subwords: &[SubwordToken],
    seq_offset: usize,
) -> Result<(Vec<S>, Vec<Alignment>)> {
    let kept_end = subwords.last().map_or(0, |t| t.char_end);
    let mut sentences = Vec::new();
    let mut alignments = Vec::new();
    for anchored in index.cover(text)? {
        let lexemes = anchored.sentence.lexemes();
        let (Some(first), Some(last)) = (lexemes.first(), lexemes.last()) else {
            continue;
        };
        let (s0, e0) = (first.char_start, last.char_end);
        if e0 > kept_end {
            log::debug!(
                "{}: dropped, extends past the truncated sequence",
                anchored.sentence.describe()
            );
            continue;
        }
        let lo = subwords.partition_point(|t| t.char_end <= s0);
        let hi = subwords.partition_point(|t| t.char_start < e0);
        if let Some(t) = subwords[lo..hi]
            .iter()
            .find(|t| t.char_start < s0 || t.char_end > e0)
        {
            return Err(Error::Alignment(format!(
                "subword {:?} at {}..{} straddles the boundary of {} ({s0}..{e0})",
                t.text,
                t.char_start,
                t.char_end,
                anchored.sentence.describe()
            )));
        }
        let alignment = align_subwords_to_lexemes(&subwords[lo..hi], lexemes)
            .map_err(|e| Error::Alignment(format!("{}: {e}", anchored.sentence.describe())))?;
        alignments.push(alignment.offset(seq_offset + lo));
        sentences.push(anchored.sentence);
    }
    Ok((sentences, alignments))
}

/// Parse corpora available for graph building.
#[derive(Debug, Default)]
pub struct ParseIndex<'a> {
    pub dependency: Option<SentenceIndex<'a, DependencyParse>>,
    pub constituency: Option<SentenceIndex<'a, ConstituencyParse>>,
}

/// Everything training and evaluation need for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub question: String,
    pub passage: String,
    pub gold_answers: Vec<String>,
    pub is_impossible: bool,
    pub subwords: Vec<SubwordToken>,
    pub question_range: Range<usize>,
    pub passage_range: Range<usize>,
    pub targets: SpanTargets,
    /// False when the gold answer could not be placed on the sequence.
    pub trainable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependency: Option<HeteroGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constituency: Option<HeteroGraph>,
}

impl ExampleRecord {
    pub fn graph(&self, kind: GraphKind) -> Option<&HeteroGraph> {
        match kind {
            GraphKind::Dependency => self.dependency.as_ref(),
            GraphKind::Constituency => self.constituency.as_ref(),
        }
    }

    /// Positions that may host a span boundary: `[CLS]` and the passage.
    pub fn answer_mask(&self) -> Vec<bool> {
        (0..self.subwords.len())
            .map(|i| i == 0 || self.passage_range.contains(&i))
            .collect()
    }

    /// Answer text for a decoded span.
    pub fn answer_text(&self, span: crate::span::BestSpan) -> Result<String> {
        crate::span::extract_answer_text(span, &self.subwords, &self.passage)
    }

    /// Offsets sidecar entry for this record's sequence.
    pub fn sidecar_entry(&self) -> SidecarEntry {
        let shift = self.question.len() + 1;
        let offsets = self
            .subwords
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.is_special {
                    [0, 0]
                } else if self.passage_range.contains(&i) {
                    [t.char_start + shift, t.char_end + shift]
                } else {
                    [t.char_start, t.char_end]
                }
            })
            .collect();
        SidecarEntry {
            pieces: self.subwords.iter().map(|t| t.text.clone()).collect(),
            offsets,
        }
    }
}

/// Builds the record for `example`, including whichever graphs `parses`
/// allows.
pub fn build_record(
    example: &QaExample,
    segments: &Segments,
    vocab: &Vocab,
    parses: &ParseIndex<'_>,
    max_len: usize,
) -> Result<ExampleRecord> {
    let pair = encode_pair(segments, vocab, max_len)?;
    let (targets, trainable) = match locate_answer(example, segments, &pair) {
        AnswerLocation::Located(t) => (t, true),
        AnswerLocation::Impossible => (SpanTargets::NO_ANSWER, true),
        AnswerLocation::Truncated => {
            log::info!(
                "{}: answer truncated away; training as no answer",
                example.id
            );
            (SpanTargets::NO_ANSWER, true)
        }
        AnswerLocation::Unrelocatable => {
            log::warn!(
                "{}: gold answer cannot be placed on subwords; excluded from training",
                example.id
            );
            (SpanTargets::NO_ANSWER, false)
        }
    };
    let kept_passage = &segments.passage[..pair.passage_range.len()];
    let q = pair.question_range.start;
    let p = pair.passage_range.start;

    let dependency = match &parses.dependency {
        Some(index) => {
            let (mut sents, mut als) =
                anchor_segment(index, &example.question, &segments.question, q)?;
            let (ps, pa) = anchor_segment(index, &example.passage, kept_passage, p)?;
            sents.extend(ps);
            als.extend(pa);
            Some(build_dependency_graph(&pair.subwords, &als, &sents)?)
        }
        None => None,
    };
    let constituency = match &parses.constituency {
        Some(index) => {
            let (mut sents, mut als) =
                anchor_segment(index, &example.question, &segments.question, q)?;
            let (ps, pa) = anchor_segment(index, &example.passage, kept_passage, p)?;
            sents.extend(ps);
            als.extend(pa);
            Some(build_constituency_graph(&pair.subwords, &als, &sents)?)
        }
        None => None,
    };

    Ok(ExampleRecord {
        id: example.id.clone(),
        question: example.question.clone(),
        passage: example.passage.clone(),
        gold_answers: example
            .gold_answers
            .iter()
            .map(|g| g.text.clone())
            .collect(),
        is_impossible: example.is_impossible,
        subwords: pair.subwords,
        question_range: pair.question_range,
        passage_range: pair.passage_range,
        targets,
        trainable,
        dependency,
        constituency,
    })
}
