//! Optimization, the training loop and evaluation.

mod adamw;
mod config;
mod eval;
mod model;
mod trainer;

pub use adamw::{AdamW, AdamWConfig};
pub use config::RunConfig;
pub use eval::{evaluate, predict_all, score, Predictions};
pub use model::{Forward, Model};
pub use trainer::{embed_all, mean_loss, train, TrainReport};
