use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::model::Model;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::features::ExampleRecord;
use crate::metrics::{em_f1, EvalResult, Scored};

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Predictions {
    pub answers: BTreeMap<String, String>,
    /// `ln(null score) - ln(best span score)` per example.
    pub null_odds: BTreeMap<String, f64>,
}

/// Predicts every record. Records that cannot be trained on are answered
/// with the empty string.
pub fn predict_all(
    model: &Model,
    records: &[ExampleRecord],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
) -> Result<Predictions> {
    let outputs: Vec<(String, f64)> = records
        .par_iter()
        .map(|r| {
            if !r.trainable {
                return Ok((String::new(), f64::INFINITY));
            }
            let emb = provider.embed(&r.id, &r.subwords)?;
            let p = model.predict(r, &emb, config)?;
            Ok((p.answer_text, p.null_margin))
        })
        .collect::<Result<_>>()?;
    let mut out = Predictions::default();
    for (r, (answer, odds)) in records.iter().zip(outputs) {
        out.answers.insert(r.id.clone(), answer);
        out.null_odds.insert(r.id.clone(), odds);
    }
    Ok(out)
}

/// Scores predictions against the records' golds in record order.
pub fn score(records: &[ExampleRecord], predictions: &Predictions) -> Result<EvalResult> {
    if records.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty set".into()));
    }
    let scores = records
        .iter()
        .map(|r| {
            let pred = predictions
                .answers
                .get(&r.id)
                .ok_or_else(|| Error::Validation(format!("no prediction for {}", r.id)))?;
            let (exact, f1) = em_f1(pred, &r.gold_answers);
            let has_answer = r
                .gold_answers
                .iter()
                .any(|g| !crate::metrics::normalize_answer(g).is_empty());
            Ok(Scored {
                exact,
                f1,
                has_answer,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalResult::aggregate(&scores)
}

pub fn evaluate(
    model: &Model,
    records: &[ExampleRecord],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
) -> Result<(EvalResult, Predictions)> {
    if records.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty set".into()));
    }
    let predictions = predict_all(model, records, provider, config)?;
    Ok((score(records, &predictions)?, predictions))
}
