use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::ExampleRecord;
use crate::graph::{EdgeTypeRegistry, HeteroGraph, VertexKind};
use crate::hgt::{
    register_stack, stack_on_tape, Checkpoint, CheckpointHeader, GraphContext, HgtStack, InitPlan,
    LabelTable, TensorInfo,
};
use crate::span::{decode_span, softmax, SpanHeadParams, SpanPrediction};
use crate::tensor::{finite_difference_check, FdReport, Matrix, Tape, Var};

/// Every learned tensor of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub registry: EdgeTypeRegistry,
    pub labels: LabelTable,
    pub stack: HgtStack,
    pub head: SpanHeadParams,
}

/// Leaves and outputs of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Parameter leaves in [`Model::tensors`] order.
    pub params: Vec<Var>,
    pub start_logits: Var,
    pub end_logits: Var,
    pub loss: Option<Var>,
}

fn graph_of<'a>(record: &'a ExampleRecord, config: &RunConfig) -> Result<&'a HeteroGraph> {
    record.graph(config.graph_kind).ok_or_else(|| {
        Error::Validation(format!(
            "example {} has no {:?} graph",
            record.id, config.graph_kind
        ))
    })
}

impl Model {
    /// Fresh parameters sized for the edge types and constituent labels of
    /// `records`.
    pub fn init(config: &RunConfig, records: &[ExampleRecord]) -> Result<Self> {
        config.validate()?;
        let graphs = records
            .iter()
            .map(|r| graph_of(r, config))
            .collect::<Result<Vec<_>>>()?;
        let registry = EdgeTypeRegistry::from_graphs(graphs.iter().copied());
        let labels: BTreeSet<String> = graphs
            .iter()
            .flat_map(|g| g.vertices())
            .filter(|v| v.kind == VertexKind::Constituent)
            .map(|v| v.label.clone())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let stack = HgtStack::init(
            config.dim,
            config.heads,
            config.layers,
            registry.len(),
            &mut rng,
        )?;
        let labels = LabelTable::init(labels, config.dim, &mut rng);
        let head = SpanHeadParams::init(config.dim, &mut rng);
        Ok(Model {
            registry,
            labels,
            stack,
            head,
        })
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = self.stack.tensors();
        out.push(("label_table".into(), &self.labels.table));
        out.push(("span.start".into(), &self.head.start));
        out.push(("span.end".into(), &self.head.end));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.stack.tensors_mut();
        out.push(&mut self.labels.table);
        out.push(&mut self.head.start);
        out.push(&mut self.head.end);
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|(_, m)| m.shape()).collect()
    }

    /// Records embeddings → vertex states → layers → span logits (and the
    /// loss when `with_loss`). `embeddings` stay constant.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        record: &ExampleRecord,
        embeddings: &Matrix,
        config: &RunConfig,
        with_loss: bool,
    ) -> Result<Forward> {
        let graph = graph_of(record, config)?;
        if embeddings.rows() != record.subwords.len() || embeddings.cols() != self.stack.dim {
            return Err(Error::Shape {
                op: "model_forward",
                lhs: embeddings.shape(),
                rhs: (record.subwords.len(), self.stack.dim),
            });
        }
        let ctx = GraphContext::new(graph, &self.registry)?;
        let plan = InitPlan::new(graph, &self.labels)?;

        let layers = register_stack(tape, &self.stack, true);
        let table = tape.param(self.labels.table.clone());
        let w_start = tape.param(self.head.start.clone());
        let w_end = tape.param(self.head.end.clone());
        let mut params: Vec<Var> = layers.iter().flat_map(|l| l.all()).collect();
        params.extend([table, w_start, w_end]);

        let tokens = tape.constant(embeddings.clone());
        let h0 = plan.on_tape(tape, tokens, table)?;
        let h = stack_on_tape(tape, &ctx, h0, &layers, self.stack.heads)?;
        let token_states = tape.gather_rows(h, &graph.token_vertices())?;
        let start_logits = tape.matmul(token_states, w_start)?;
        let end_logits = tape.matmul(token_states, w_end)?;
        let loss = if with_loss {
            let mask = record.answer_mask();
            let ls = tape.softmax_cross_entropy(start_logits, &mask, record.targets.start)?;
            let le = tape.softmax_cross_entropy(end_logits, &mask, record.targets.end)?;
            Some(tape.add(ls, le)?)
        } else {
            None
        };
        Ok(Forward {
            params,
            start_logits,
            end_logits,
            loss,
        })
    }

    /// Loss and parameter gradients for one example.
    pub fn loss_and_gradients(
        &self,
        record: &ExampleRecord,
        embeddings: &Matrix,
        config: &RunConfig,
    ) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let fwd = self.forward_on_tape(&mut tape, record, embeddings, config, true)?;
        let loss = fwd.loss.expect("requested");
        let mut grads = tape.backward(loss)?;
        let g = fwd
            .params
            .iter()
            .map(|&p| {
                let shape = tape.value(p).shape();
                grads
                    .take(p)
                    .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
            })
            .collect();
        Ok((tape.value(loss).scalar().expect("1x1 loss"), g))
    }

    /// Start and end distributions decoded into a span with its text.
    pub fn predict(
        &self,
        record: &ExampleRecord,
        embeddings: &Matrix,
        config: &RunConfig,
    ) -> Result<SpanPrediction> {
        let mut tape = Tape::new();
        let fwd = self.forward_on_tape(&mut tape, record, embeddings, config, false)?;
        let mask = record.answer_mask();
        let masked = |v: Var| -> Vec<f64> {
            tape.value(v)
                .as_slice()
                .iter()
                .zip(&mask)
                .map(|(&x, &keep)| if keep { x } else { f64::NEG_INFINITY })
                .collect()
        };
        let start = softmax(&masked(fwd.start_logits));
        let end = softmax(&masked(fwd.end_logits));
        let mut pred = decode_span(
            &start,
            &end,
            record.passage_range.clone(),
            config.max_span_len,
            config.null_threshold,
        );
        pred.answer_text = record.answer_text(pred.best_span)?;
        Ok(pred)
    }

    /// Finite-difference check of the full loss against every parameter.
    pub fn grad_check(
        &self,
        record: &ExampleRecord,
        embeddings: &Matrix,
        config: &RunConfig,
        eps: f64,
    ) -> Result<FdReport> {
        let mut tape = Tape::new();
        let fwd = self.forward_on_tape(&mut tape, record, embeddings, config, true)?;
        finite_difference_check(&mut tape, &fwd.params, fwd.loss.expect("requested"), eps)
    }

    pub fn to_checkpoint(&self, config: &RunConfig) -> Result<Checkpoint> {
        let (infos, tensors): (Vec<_>, Vec<_>) = self
            .tensors()
            .into_iter()
            .map(|(name, m)| {
                (
                    TensorInfo {
                        name,
                        rows: m.rows(),
                        cols: m.cols(),
                    },
                    m.clone(),
                )
            })
            .unzip();
        Ok(Checkpoint {
            header: CheckpointHeader {
                config: serde_json::to_value(config)?,
                dim: self.stack.dim,
                heads: self.stack.heads,
                layers: self.stack.layers.len(),
                vertex_kinds: VertexKind::ALL.iter().map(|k| format!("{k:?}")).collect(),
                edge_types: self.registry.clone(),
                labels: self.labels.labels().to_vec(),
                tensors: infos,
            },
            tensors,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<(Self, RunConfig)> {
        let h = ckpt.header;
        let config: RunConfig = serde_json::from_value(h.config)
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        if (config.dim, config.heads, config.layers) != (h.dim, h.heads, h.layers) {
            return Err(Error::Format(
                "checkpoint header disagrees with its config".into(),
            ));
        }
        let kinds: Vec<String> = VertexKind::ALL.iter().map(|k| format!("{k:?}")).collect();
        if h.vertex_kinds != kinds {
            return Err(Error::Format(format!(
                "unexpected vertex kinds {:?}",
                h.vertex_kinds
            )));
        }
        let names: Vec<&str> = h.tensors.iter().map(|t| t.name.as_str()).collect();
        let mut it = ckpt.tensors.into_iter();
        let stack = HgtStack::from_tensors(h.dim, h.heads, h.layers, h.edge_types.len(), &mut it)?;
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {what}")))
        };
        let table = next("label table")?;
        let start = next("span start weights")?;
        let end = next("span end weights")?;
        if it.next().is_some() {
            return Err(Error::Format(
                "checkpoint has unexpected extra tensors".into(),
            ));
        }
        if table.cols() != h.dim || start.shape() != (h.dim, 1) || end.shape() != (h.dim, 1) {
            return Err(Error::Format(
                "span head or label table has the wrong shape".into(),
            ));
        }
        let model = Model {
            registry: h.edge_types,
            labels: LabelTable::from_parts(h.labels, table)?,
            stack,
            head: SpanHeadParams { start, end },
        };
        let expected: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
        if expected
            .iter()
            .map(String::as_str)
            .ne(names.iter().copied())
        {
            return Err(Error::Format(
                "checkpoint tensor names do not match the model layout".into(),
            ));
        }
        Ok((model, config))
    }
}
