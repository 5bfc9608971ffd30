//! Fixtures shared by the benchmarks.

use syhgt_core::embedding::{EmbeddingProvider, StubEmbeddings};
use syhgt_core::features::{ExampleRecord, GraphKind};
use syhgt_core::hgt::{init_vertex_states, GraphContext};
use syhgt_core::synthetic::{generate, SyntheticCorpus};
use syhgt_core::train::{Model, RunConfig};
use syhgt_core::{Matrix, Result};

/// Synthetic corpus of `count` examples, one in four unanswerable.
pub fn corpus(count: usize) -> SyntheticCorpus {
    generate(count, 4, 11)
}

/// A model, one record and everything a forward pass over it needs.
pub struct Workload {
    pub config: RunConfig,
    pub model: Model,
    pub record: ExampleRecord,
    pub embeddings: Matrix,
    pub context: GraphContext,
    pub initial_states: Matrix,
}

impl Workload {
    pub fn new(kind: GraphKind, dim: usize, heads: usize) -> Result<Self> {
        let records = corpus(8).records()?;
        let config = RunConfig {
            graph_kind: kind,
            dim,
            heads,
            ..RunConfig::desk()
        };
        let model = Model::init(&config, &records)?;
        let record = records.into_iter().next().expect("corpus is non-empty");
        let embeddings = StubEmbeddings { dim, seed: 0 }.embed(&record.id, &record.subwords)?;
        let graph = record.graph(kind).expect("corpus builds both graph kinds");
        let context = GraphContext::new(graph, &model.registry)?;
        let initial_states = init_vertex_states(graph, &embeddings, &model.labels)?;
        Ok(Workload {
            config,
            model,
            record,
            embeddings,
            context,
            initial_states,
        })
    }
}
