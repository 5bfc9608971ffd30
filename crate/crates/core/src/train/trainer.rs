use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adamw::{AdamW, AdamWConfig};
use super::config::RunConfig;
use super::model::Model;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::features::ExampleRecord;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean batch loss of each step.
    pub step_losses: Vec<f64>,
    /// Mean example loss over each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn steps(&self) -> usize {
        self.step_losses.len()
    }
}

pub fn embed_all(
    records: &[ExampleRecord],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Matrix>> {
    records
        .par_iter()
        .map(|r| provider.embed(&r.id, &r.subwords))
        .collect()
}

/// Trains from a seeded initialization.
///
/// Each epoch visits the trainable records in a seeded shuffled order.
/// Per-example gradients of a batch may be computed in parallel; they are
/// summed in batch order and divided by the batch size, so results do not
/// depend on thread scheduling.
pub fn train(
    records: &[ExampleRecord],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<(Model, TrainReport)> {
    config.validate()?;
    let usable: Vec<&ExampleRecord> = records.iter().filter(|r| r.trainable).collect();
    if usable.is_empty() {
        return Err(Error::Config("no trainable examples".into()));
    }
    if provider.dim() != config.dim {
        return Err(Error::Config(format!(
            "embedding width {} differs from model width {}",
            provider.dim(),
            config.dim
        )));
    }
    let owned: Vec<ExampleRecord> = usable.iter().map(|r| (*r).clone()).collect();
    let embeddings = embed_all(&owned, provider)?;
    let mut model = Model::init(config, &owned)?;
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        &model.shapes(),
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..owned.len()).collect();

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| report.steps() >= m) {
                break 'epochs;
            }
            let results: Vec<(f64, Vec<Matrix>)> = batch
                .par_iter()
                .map(|&i| model.loss_and_gradients(&owned[i], &embeddings[i], config))
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut sum: Vec<Matrix> = model
                .shapes()
                .iter()
                .map(|&(r, c)| Matrix::zeros(r, c))
                .collect();
            let mut loss = 0.0;
            for (l, grads) in &results {
                loss += l;
                for (acc, g) in sum.iter_mut().zip(grads) {
                    acc.add_assign(g)?;
                }
            }
            let grads: Vec<Matrix> = sum.into_iter().map(|g| g.scale(scale)).collect();
            let mut params = model.tensors_mut();
            opt.step(&mut params, &grads)?;
            epoch_total += loss;
            report.step_losses.push(loss * scale);
        }
        let mean = epoch_total / owned.len() as f64;
        report.epoch_losses.push(mean);
        log::info!("epoch {} mean loss {mean:.6}", epoch + 1);
        on_epoch(epoch, mean);
    }
    Ok((model, report))
}

/// Mean loss of `model` over the trainable records.
pub fn mean_loss(
    model: &Model,
    records: &[ExampleRecord],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
) -> Result<f64> {
    let usable: Vec<&ExampleRecord> = records.iter().filter(|r| r.trainable).collect();
    if usable.is_empty() {
        return Err(Error::Config("no trainable examples".into()));
    }
    let losses: Vec<f64> = usable
        .par_iter()
        .map(|r| {
            let emb = provider.embed(&r.id, &r.subwords)?;
            let mut tape = crate::tensor::Tape::new();
            let fwd = model.forward_on_tape(&mut tape, r, &emb, config, true)?;
            Ok(tape.value(fwd.loss.expect("requested"))[(0, 0)])
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
