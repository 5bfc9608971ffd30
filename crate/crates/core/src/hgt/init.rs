use super::params::LabelTable;
use crate::error::{Error, Result};
use crate::graph::{Direction, EdgeCategory, HeteroGraph, VertexKind};
use crate::tensor::{Matrix, Tape, Var};

/// Index plan for assembling initial vertex states from token embeddings
/// and the constituent label table.
#[derive(Debug, Clone, PartialEq)]
pub struct InitPlan {
    /// Sequence positions averaged into each token or lexeme vertex, in
    /// vertex id order.
    word_groups: Vec<Vec<usize>>,
    /// Label table row of each constituent vertex, in vertex id order.
    label_rows: Vec<usize>,
    /// Row of `[words; constituents]` that becomes each vertex.
    order: Vec<usize>,
    sequence_len: usize,
}

impl InitPlan {
    pub fn new(graph: &HeteroGraph, labels: &LabelTable) -> Result<Self> {
        let mut subwords: Vec<Vec<usize>> = vec![Vec::new(); graph.vertex_count()];
        let vertices = graph.vertices();
        for e in graph.edges() {
            if e.kind.category == EdgeCategory::Morphology && e.kind.direction == Direction::Forward
            {
                let pos = vertices[e.src].seq_pos.ok_or_else(|| {
                    Error::Validation(format!("morphology edge from non-token vertex {}", e.src))
                })?;
                subwords[e.dst].push(pos);
            }
        }
        let mut word_groups = Vec::new();
        let mut label_rows = Vec::new();
        let mut slots = Vec::with_capacity(vertices.len());
        for v in vertices {
            match v.kind {
                VertexKind::Token => {
                    slots.push((false, word_groups.len()));
                    word_groups.push(vec![v.seq_pos.expect("validated token vertex")]);
                }
                VertexKind::Lexeme => {
                    let mut group = std::mem::take(&mut subwords[v.id]);
                    if group.is_empty() {
                        return Err(Error::Validation(format!(
                            "lexeme vertex {} has no subwords",
                            v.id
                        )));
                    }
                    group.sort_unstable();
                    slots.push((false, word_groups.len()));
                    word_groups.push(group);
                }
                VertexKind::Constituent => {
                    slots.push((true, label_rows.len()));
                    label_rows.push(labels.row_of(&v.label));
                }
            }
        }
        let n_words = word_groups.len();
        let order = slots
            .into_iter()
            .map(|(constituent, i)| if constituent { n_words + i } else { i })
            .collect();
        let sequence_len = word_groups
            .iter()
            .flatten()
            .map(|&p| p + 1)
            .max()
            .unwrap_or(0);
        Ok(InitPlan {
            word_groups,
            label_rows,
            order,
            sequence_len,
        })
    }

    /// Records the assembly on `tape`. Gradients flow into both the token
    /// embeddings and the label table.
    pub fn on_tape(&self, tape: &mut Tape, tokens: Var, table: Var) -> Result<Var> {
        let rows = tape.value(tokens).rows();
        if rows < self.sequence_len {
            return Err(Error::Shape {
                op: "init_vertex_states",
                lhs: tape.value(tokens).shape(),
                rhs: (self.sequence_len, tape.value(tokens).cols()),
            });
        }
        let words = tape.mean_rows(tokens, self.word_groups.clone())?;
        let stacked = if self.label_rows.is_empty() {
            words
        } else {
            let constituents = tape.gather_rows(table, &self.label_rows)?;
            tape.concat_rows(&[words, constituents])?
        };
        tape.gather_rows(stacked, &self.order)
    }
}

/// Initial `N × d` states: token rows copied from `token_embeddings`,
/// lexeme rows the mean of their subword rows, constituent rows looked up
/// by label.
pub fn init_vertex_states(
    graph: &HeteroGraph,
    token_embeddings: &Matrix,
    labels: &LabelTable,
) -> Result<Matrix> {
    let plan = InitPlan::new(graph, labels)?;
    let mut tape = Tape::new();
    let tokens = tape.constant(token_embeddings.clone());
    let table = tape.constant(labels.table.clone());
    let out = plan.on_tape(&mut tape, tokens, table)?;
    Ok(tape.value(out).clone())
}
