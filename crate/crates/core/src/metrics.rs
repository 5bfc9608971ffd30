//! SQuAD exact match and token F1, following the official v2.0 evaluator.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());

/// Python's `str.split()` separators: Unicode whitespace plus the ASCII
/// information separators.
fn is_split_char(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles
        .split(is_split_char)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split(is_split_char)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn exact(gold: &str, pred: &str) -> f64 {
    if normalize_answer(gold) == normalize_answer(pred) {
        1.0
    } else {
        0.0
    }
}

fn f1(gold: &str, pred: &str) -> f64 {
    let gold_toks = tokens(gold);
    let pred_toks = tokens(pred);
    if gold_toks.is_empty() || pred_toks.is_empty() {
        return if gold_toks == pred_toks { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_toks {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in &pred_toks {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            same += 1;
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = 1.0 * same as f64 / pred_toks.len() as f64;
    let recall = 1.0 * same as f64 / gold_toks.len() as f64;
    (2.0 * precision * recall) / (precision + recall)
}

/// Exact match (0 or 1) and F1 of `prediction`, maximised over golds.
///
/// Golds that normalize to nothing are ignored; if none remain the question
/// counts as unanswerable and only an empty prediction scores.
pub fn em_f1<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> (f64, f64) {
    let mut golds: Vec<&str> = gold_answers
        .iter()
        .map(AsRef::as_ref)
        .filter(|g| !normalize_answer(g).is_empty())
        .collect();
    if golds.is_empty() {
        golds.push("");
    }
    let em = golds
        .iter()
        .map(|g| exact(g, prediction))
        .fold(f64::NEG_INFINITY, f64::max);
    let f = golds
        .iter()
        .map(|g| f1(g, prediction))
        .fold(f64::NEG_INFINITY, f64::max);
    (em, f)
}

/// Aggregate scores in percent, with the official report's key names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub exact: f64,
    pub f1: f64,
    pub total: usize,
    #[serde(
        rename = "HasAns_exact",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub has_ans_exact: Option<f64>,
    #[serde(rename = "HasAns_f1", skip_serializing_if = "Option::is_none", default)]
    pub has_ans_f1: Option<f64>,
    #[serde(
        rename = "HasAns_total",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub has_ans_total: Option<usize>,
    #[serde(
        rename = "NoAns_exact",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub no_ans_exact: Option<f64>,
    #[serde(rename = "NoAns_f1", skip_serializing_if = "Option::is_none", default)]
    pub no_ans_f1: Option<f64>,
    #[serde(
        rename = "NoAns_total",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub no_ans_total: Option<usize>,
}

/// One scored question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub exact: f64,
    pub f1: f64,
    pub has_answer: bool,
}

fn percent(values: impl Iterator<Item = f64>, total: usize) -> f64 {
    100.0 * values.sum::<f64>() / total as f64
}

impl EvalResult {
    /// Sums in the given order, as the official evaluator sums in question
    /// order.
    pub fn aggregate(scores: &[Scored]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Validation("cannot evaluate an empty set".into()));
        }
        let total = scores.len();
        let has: Vec<&Scored> = scores.iter().filter(|s| s.has_answer).collect();
        let no: Vec<&Scored> = scores.iter().filter(|s| !s.has_answer).collect();
        let part = |subset: &[&Scored]| {
            if subset.is_empty() {
                (None, None, None)
            } else {
                (
                    Some(percent(subset.iter().map(|s| s.exact), subset.len())),
                    Some(percent(subset.iter().map(|s| s.f1), subset.len())),
                    Some(subset.len()),
                )
            }
        };
        let (has_ans_exact, has_ans_f1, has_ans_total) = part(&has);
        let (no_ans_exact, no_ans_f1, no_ans_total) = part(&no);
        Ok(EvalResult {
            exact: percent(scores.iter().map(|s| s.exact), total),
            f1: percent(scores.iter().map(|s| s.f1), total),
            total,
            has_ans_exact,
            has_ans_f1,
            has_ans_total,
            no_ans_exact,
            no_ans_f1,
            no_ans_total,
        })
    }
}

/// Scores `(prediction, golds)` pairs in order. A question is answerable
/// when any gold normalizes to a non-empty string.
pub fn evaluate_predictions<S: AsRef<str>>(items: &[(String, Vec<S>)]) -> Result<EvalResult> {
    let scores: Vec<Scored> = items
        .iter()
        .map(|(pred, golds)| {
            let (exact, f1) = em_f1(pred, golds);
            let has_answer = golds
                .iter()
                .any(|g| !normalize_answer(g.as_ref()).is_empty());
            Scored {
                exact,
                f1,
                has_answer,
            }
        })
        .collect();
    EvalResult::aggregate(&scores)
}
