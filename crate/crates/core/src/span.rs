//! Start/end span scoring over token vertices, the cross-entropy objective
//! and answer decoding.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SubwordToken;
use crate::tensor::{softmax_in_place, Matrix};

pub const DEFAULT_MAX_SPAN_LEN: usize = 30;
pub const DEFAULT_NULL_THRESHOLD: f64 = 1.0;

/// Linear start and end scorers, each `d × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeadParams {
    pub start: Matrix,
    pub end: Matrix,
}

impl SpanHeadParams {
    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        SpanHeadParams {
            start: Matrix::xavier(dim, 1, dim, 1, rng),
            end: Matrix::xavier(dim, 1, dim, 1, rng),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SpanHeadParams {
            start: Matrix::zeros(dim, 1),
            end: Matrix::zeros(dim, 1),
        }
    }
}

/// Gold start and end sequence positions; `(0, 0)` marks no answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanTargets {
    pub start: usize,
    pub end: usize,
}

impl SpanTargets {
    pub const NO_ANSWER: SpanTargets = SpanTargets { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::Validation(format!(
                "span start {start} after end {end}"
            )));
        }
        Ok(SpanTargets { start, end })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BestSpan {
    Span { start: usize, end: usize },
    NoAnswer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub start_probs: Vec<f64>,
    pub end_probs: Vec<f64>,
    pub best_span: BestSpan,
    pub answer_text: String,
    /// `ln(null score) - ln(best span score)`; positive favours no answer.
    pub null_margin: f64,
}

/// Start and end logits for every sequence position; positions with
/// `mask[i] == false` get `-inf`.
pub fn span_logits(
    h_tokens: &Matrix,
    params: &SpanHeadParams,
    mask: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mask.len() != h_tokens.rows() {
        return Err(Error::Shape {
            op: "span_logits",
            lhs: h_tokens.shape(),
            rhs: (mask.len(), 1),
        });
    }
    let masked = |m: Matrix| -> Vec<f64> {
        m.into_vec()
            .into_iter()
            .zip(mask)
            .map(|(v, &keep)| if keep { v } else { f64::NEG_INFINITY })
            .collect()
    };
    Ok((
        masked(h_tokens.matmul(&params.start)?),
        masked(h_tokens.matmul(&params.end)?),
    ))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

fn log_softmax_at(logits: &[f64], target: usize) -> Result<f64> {
    let Some(&t) = logits.get(target).filter(|v| v.is_finite()) else {
        return Err(Error::Contract(format!(
            "target position {target} is not eligible"
        )));
    };
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    Ok(t - max - z.ln())
}

/// `-(log p_start[start] + log p_end[end])` for one example.
pub fn span_loss(start_logits: &[f64], end_logits: &[f64], targets: SpanTargets) -> Result<f64> {
    Ok(-(log_softmax_at(start_logits, targets.start)? + log_softmax_at(end_logits, targets.end)?))
}

/// Best legal span inside `passage`.
///
/// Candidates are `i ≤ j < i + max_span_len`, both in `passage`, scored by
/// `start_probs[i] · end_probs[j]`; the earliest start wins ties, then the
/// shortest span. The answer is dropped in favour of no answer when
/// `start_probs[0] · end_probs[0]` exceeds the best score times
/// `null_threshold`.
pub fn decode_span(
    start_probs: &[f64],
    end_probs: &[f64],
    passage: Range<usize>,
    max_span_len: usize,
    null_threshold: f64,
) -> SpanPrediction {
    let n = start_probs.len().min(end_probs.len());
    let passage = passage.start.max(1)..passage.end.min(n);
    let mut best: Option<(usize, usize, f64)> = None;
    for i in passage.clone() {
        let stop = passage.end.min(i.saturating_add(max_span_len));
        for (j, end) in end_probs.iter().enumerate().take(stop).skip(i) {
            let score = start_probs[i] * end;
            if best.is_none_or(|(_, _, b)| score > b) {
                best = Some((i, j, score));
            }
        }
    }
    let null = match (start_probs.first(), end_probs.first()) {
        (Some(s), Some(e)) => s * e,
        _ => 0.0,
    };
    let (best_span, null_margin) = match best {
        Some((i, j, score)) => {
            let margin = null.ln() - score.ln();
            if null > score * null_threshold {
                (BestSpan::NoAnswer, margin)
            } else {
                (BestSpan::Span { start: i, end: j }, margin)
            }
        }
        None => (BestSpan::NoAnswer, f64::INFINITY),
    };
    SpanPrediction {
        start_probs: start_probs.to_vec(),
        end_probs: end_probs.to_vec(),
        best_span,
        answer_text: String::new(),
        null_margin,
    }
}

/// Passage text from the first subword's start to the last subword's end.
///
/// Subword offsets are relative to `passage`.
pub fn extract_answer_text(
    span: BestSpan,
    subwords: &[SubwordToken],
    passage: &str,
) -> Result<String> {
    let BestSpan::Span { start, end } = span else {
        return Ok(String::new());
    };
    let (Some(first), Some(last)) = (subwords.get(start), subwords.get(end)) else {
        return Err(Error::Validation(format!(
            "span ({start}, {end}) outside the sequence"
        )));
    };
    if first.is_special || last.is_special {
        return Err(Error::Validation(format!(
            "span ({start}, {end}) touches a special token"
        )));
    }
    passage
        .get(first.char_start..last.char_end)
        .map(str::to_string)
        .ok_or_else(|| {
            Error::Validation(format!(
                "offsets {}..{} outside the passage",
                first.char_start, last.char_end
            ))
        })
}
