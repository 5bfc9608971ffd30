use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::VertexKind;
use crate::tensor::Matrix;

/// Weights of one heterogeneous graph transformer layer.
///
/// Vertex-kind projections are `d × d` and indexed by
/// [`VertexKind::index`]. Edge-type projections are `d × d/H`: head `k`
/// uses rows `k·d/H .. (k+1)·d/H`, a `d/H × d/H` block. `log_mu` holds the
/// logarithm of the per-(edge type, head) prior, which keeps the prior
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HgtLayerParams {
    pub query: Vec<Matrix>,
    pub key: Vec<Matrix>,
    pub message: Vec<Matrix>,
    pub output: Vec<Matrix>,
    pub attention: Vec<Matrix>,
    pub edge_message: Vec<Matrix>,
    pub log_mu: Matrix,
}

impl HgtLayerParams {
    /// Xavier-uniform weights and a prior of exactly 1.
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        heads: usize,
        edge_types: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_dims(dim, heads)?;
        let dk = dim / heads;
        let per_kind = |rng: &mut R| -> Vec<Matrix> {
            VertexKind::ALL
                .iter()
                .map(|_| Matrix::xavier(dim, dim, dim, dim, rng))
                .collect()
        };
        let query = per_kind(rng);
        let key = per_kind(rng);
        let message = per_kind(rng);
        let output = per_kind(rng);
        let per_edge = |rng: &mut R| -> Vec<Matrix> {
            (0..edge_types)
                .map(|_| Matrix::xavier(dim, dk, dk, dk, rng))
                .collect()
        };
        let attention = per_edge(rng);
        let edge_message = per_edge(rng);
        Ok(HgtLayerParams {
            query,
            key,
            message,
            output,
            attention,
            edge_message,
            log_mu: Matrix::zeros(edge_types, heads),
        })
    }

    pub fn mu(&self) -> Matrix {
        self.log_mu.map(f64::exp)
    }

    pub fn edge_type_count(&self) -> usize {
        self.attention.len()
    }

    pub fn heads(&self) -> usize {
        self.log_mu.cols()
    }

    pub fn dim(&self) -> usize {
        self.query[0].rows()
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (name, group) in [
            ("query", &self.query),
            ("key", &self.key),
            ("message", &self.message),
            ("output", &self.output),
        ] {
            for (kind, m) in VertexKind::ALL.iter().zip(group) {
                out.push((format!("{name}.{kind:?}"), m));
            }
        }
        for (name, group) in [
            ("attention", &self.attention),
            ("edge_message", &self.edge_message),
        ] {
            for (r, m) in group.iter().enumerate() {
                out.push((format!("{name}.{r}"), m));
            }
        }
        out.push(("log_mu".into(), &self.log_mu));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.extend(self.query.iter_mut());
        out.extend(self.key.iter_mut());
        out.extend(self.message.iter_mut());
        out.extend(self.output.iter_mut());
        out.extend(self.attention.iter_mut());
        out.extend(self.edge_message.iter_mut());
        out.push(&mut self.log_mu);
        out
    }

    /// Shape template used to rebuild parameters from a flat tensor list.
    fn zeros(dim: usize, heads: usize, edge_types: usize) -> Self {
        let dk = dim / heads;
        let kinds = || vec![Matrix::zeros(dim, dim); VertexKind::ALL.len()];
        HgtLayerParams {
            query: kinds(),
            key: kinds(),
            message: kinds(),
            output: kinds(),
            attention: vec![Matrix::zeros(dim, dk); edge_types],
            edge_message: vec![Matrix::zeros(dim, dk); edge_types],
            log_mu: Matrix::zeros(edge_types, heads),
        }
    }
}

pub fn check_dims(dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || dim == 0 || !dim.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "dimension {dim} must be a positive multiple of the head count {heads}"
        )));
    }
    Ok(())
}

/// `L` layers sharing dimension and head count. The nonlinearity is ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct HgtStack {
    pub dim: usize,
    pub heads: usize,
    pub layers: Vec<HgtLayerParams>,
}

impl HgtStack {
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        heads: usize,
        layers: usize,
        edge_types: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_dims(dim, heads)?;
        let layers = (0..layers)
            .map(|_| HgtLayerParams::init(dim, heads, edge_types, rng))
            .collect::<Result<_>>()?;
        Ok(HgtStack { dim, heads, layers })
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, p)| {
                p.tensors()
                    .into_iter()
                    .map(move |(n, m)| (format!("layer{l}.{n}"), m))
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(HgtLayerParams::tensors_mut)
            .collect()
    }

    /// Rebuilds a stack from tensors in [`tensors`](Self::tensors) order.
    pub fn from_tensors(
        dim: usize,
        heads: usize,
        layers: usize,
        edge_types: usize,
        tensors: &mut impl Iterator<Item = Matrix>,
    ) -> Result<Self> {
        check_dims(dim, heads)?;
        let mut stack = HgtStack {
            dim,
            heads,
            layers: (0..layers)
                .map(|_| HgtLayerParams::zeros(dim, heads, edge_types))
                .collect(),
        };
        for slot in stack.tensors_mut() {
            let m = tensors
                .next()
                .ok_or_else(|| Error::Format("checkpoint ended before all layer tensors".into()))?;
            if m.shape() != slot.shape() {
                return Err(Error::Format(format!(
                    "tensor shape {:?} does not match expected {:?}",
                    m.shape(),
                    slot.shape()
                )));
            }
            *slot = m;
        }
        Ok(stack)
    }
}

/// Learned initial states for constituent vertices, one row per category
/// label. Row 0 is shared by every label not in the table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    pub table: Matrix,
}

pub const UNKNOWN_LABEL: &str = "<unk>";

impl LabelTable {
    pub fn init<R: Rng + ?Sized>(
        labels: impl IntoIterator<Item = String>,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut all: Vec<String> = vec![UNKNOWN_LABEL.to_string()];
        let mut sorted: Vec<String> = labels.into_iter().filter(|l| l != UNKNOWN_LABEL).collect();
        sorted.sort();
        sorted.dedup();
        all.extend(sorted);
        let table = Matrix::xavier(all.len(), dim, all.len(), dim, rng);
        Self::from_parts(all, table).expect("consistent by construction")
    }

    pub fn from_parts(labels: Vec<String>, table: Matrix) -> Result<Self> {
        if labels.len() != table.rows() || labels.first().map(String::as_str) != Some(UNKNOWN_LABEL)
        {
            return Err(Error::Format(
                "label table must start with the unknown label and match row count".into(),
            ));
        }
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(LabelTable {
            labels,
            index,
            table,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Row for `label`, falling back to the shared unknown row.
    pub fn row_of(&self, label: &str) -> usize {
        match self.index.get(label) {
            Some(&i) => i,
            None => {
                log::debug!("constituent label {label:?} not in table; using {UNKNOWN_LABEL}");
                0
            }
        }
    }
}
