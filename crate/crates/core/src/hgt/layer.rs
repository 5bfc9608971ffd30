use super::params::{HgtLayerParams, HgtStack};
use crate::error::{Error, Result};
use crate::graph::{EdgeTypeRegistry, HeteroGraph};
use crate::tensor::{Matrix, Tape, Var};

/// Index arrays a layer needs, derived once per graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphContext {
    pub vertex_count: usize,
    /// Vertex kind index per vertex.
    pub kinds: Vec<usize>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge_types: Vec<usize>,
    /// Vertices with at least one in-edge, ascending.
    pub targets: Vec<usize>,
    pub target_kinds: Vec<usize>,
}

impl GraphContext {
    pub fn new(graph: &HeteroGraph, registry: &EdgeTypeRegistry) -> Result<Self> {
        let kinds = graph.vertices().iter().map(|v| v.kind.index()).collect();
        let edge_types = registry.edge_types(graph).ok_or_else(|| {
            Error::Validation("graph contains an edge type missing from the registry".into())
        })?;
        let edges = graph
            .edges()
            .iter()
            .zip(edge_types)
            .map(|(e, t)| (e.src, e.dst, t))
            .collect::<Vec<_>>();
        Self::from_edges(kinds, &edges)
    }

    /// Builds a context from vertex kinds and `(src, dst, edge type)` triples.
    pub fn from_edges(kinds: Vec<usize>, edges: &[(usize, usize, usize)]) -> Result<Self> {
        let n = kinds.len();
        if let Some(&(s, d, _)) = edges.iter().find(|(s, d, _)| *s >= n || *d >= n) {
            return Err(Error::Validation(format!(
                "edge {s}->{d} out of range for {n} vertices"
            )));
        }
        let mut has_in = vec![false; n];
        for &(_, d, _) in edges {
            has_in[d] = true;
        }
        let targets: Vec<usize> = (0..n).filter(|&v| has_in[v]).collect();
        let target_kinds = targets.iter().map(|&t| kinds[t]).collect();
        Ok(GraphContext {
            vertex_count: n,
            src: edges.iter().map(|e| e.0).collect(),
            dst: edges.iter().map(|e| e.1).collect(),
            edge_types: edges.iter().map(|e| e.2).collect(),
            kinds,
            targets,
            target_kinds,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }
}

/// Tape handles for one layer's parameters, in
/// [`HgtLayerParams::tensors_mut`] order.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub query: Vec<Var>,
    pub key: Vec<Var>,
    pub message: Vec<Var>,
    pub output: Vec<Var>,
    pub attention: Vec<Var>,
    pub edge_message: Vec<Var>,
    pub log_mu: Var,
}

impl LayerVars {
    pub fn register(tape: &mut Tape, p: &HgtLayerParams, trainable: bool) -> Self {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        LayerVars {
            query: p.query.iter().map(&mut leaf).collect(),
            key: p.key.iter().map(&mut leaf).collect(),
            message: p.message.iter().map(&mut leaf).collect(),
            output: p.output.iter().map(&mut leaf).collect(),
            attention: p.attention.iter().map(&mut leaf).collect(),
            edge_message: p.edge_message.iter().map(&mut leaf).collect(),
            log_mu: leaf(&p.log_mu),
        }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut v = Vec::new();
        v.extend(&self.query);
        v.extend(&self.key);
        v.extend(&self.message);
        v.extend(&self.output);
        v.extend(&self.attention);
        v.extend(&self.edge_message);
        v.push(self.log_mu);
        v
    }
}

pub fn register_stack(tape: &mut Tape, stack: &HgtStack, trainable: bool) -> Vec<LayerVars> {
    stack
        .layers
        .iter()
        .map(|p| LayerVars::register(tape, p, trainable))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct LayerTrace {
    pub output: Var,
    /// `E × H` attention weights; absent when the graph has no edges.
    pub attention: Option<Var>,
}

/// Block indicator: entry `(j, k)` is 1 when feature `j` belongs to head `k`.
fn head_indicator(dim: usize, heads: usize) -> Matrix {
    let dk = dim / heads;
    let mut m = Matrix::zeros(dim, heads);
    for j in 0..dim {
        m[(j, j / dk)] = 1.0;
    }
    m
}

/// Records one layer on `tape`.
///
/// For every edge `s → t` of type `r` and head `k`, the score is
/// `μ[r,k] · (K_s W^A_r,k) · Q_t / sqrt(d/H)`; scores are normalized by a
/// softmax over all in-edges of `t`. Messages `(h_s W^M_{c_s}) W^M_r,k` are
/// summed with those weights, heads concatenated, projected by `W^C_{c_t}`,
/// passed through ReLU and added to `h_t`. Rows without in-edges are
/// copied unchanged.
pub fn layer_on_tape(
    tape: &mut Tape,
    ctx: &GraphContext,
    h: Var,
    vars: &LayerVars,
    heads: usize,
) -> Result<LayerTrace> {
    let (n, dim) = tape.value(h).shape();
    if n != ctx.vertex_count {
        return Err(Error::Shape {
            op: "hgt_layer_forward",
            lhs: (n, dim),
            rhs: (ctx.vertex_count, dim),
        });
    }
    if ctx.edge_count() == 0 {
        return Ok(LayerTrace {
            output: h,
            attention: None,
        });
    }
    let dk = dim / heads;

    let q = tape.typed_matmul(h, &ctx.kinds, &vars.query, 1)?;
    let k = tape.typed_matmul(h, &ctx.kinds, &vars.key, 1)?;
    let m = tape.typed_matmul(h, &ctx.kinds, &vars.message, 1)?;

    let q_e = tape.gather_rows(q, &ctx.dst)?;
    let k_e = tape.gather_rows(k, &ctx.src)?;
    let m_e = tape.gather_rows(m, &ctx.src)?;

    let k_a = tape.typed_matmul(k_e, &ctx.edge_types, &vars.attention, heads)?;
    let prod = tape.mul(k_a, q_e)?;
    let indicator = tape.constant(head_indicator(dim, heads));
    let raw = tape.matmul(prod, indicator)?;
    let log_mu_e = tape.gather_rows(vars.log_mu, &ctx.edge_types)?;
    let mu_e = tape.exp(log_mu_e)?;
    let weighted = tape.mul(raw, mu_e)?;
    let scores = tape.scale(weighted, 1.0 / (dk as f64).sqrt())?;
    let attention = tape.segment_softmax(scores, &ctx.dst)?;

    let spread = tape.constant(head_indicator(dim, heads).transpose());
    let attention_full = tape.matmul(attention, spread)?;
    let messages = tape.typed_matmul(m_e, &ctx.edge_types, &vars.edge_message, heads)?;
    let contributions = tape.mul(attention_full, messages)?;
    let aggregated = tape.scatter_add_rows(contributions, &ctx.dst, n)?;

    let agg_targets = tape.gather_rows(aggregated, &ctx.targets)?;
    let projected = tape.typed_matmul(agg_targets, &ctx.target_kinds, &vars.output, 1)?;
    let activated = tape.relu(projected)?;
    let output = tape.add_rows_at(h, activated, &ctx.targets)?;
    Ok(LayerTrace {
        output,
        attention: Some(attention),
    })
}

pub fn stack_on_tape(
    tape: &mut Tape,
    ctx: &GraphContext,
    h0: Var,
    layers: &[LayerVars],
    heads: usize,
) -> Result<Var> {
    layers.iter().try_fold(h0, |h, vars| {
        Ok(layer_on_tape(tape, ctx, h, vars, heads)?.output)
    })
}

fn check_layer(params: &HgtLayerParams, ctx: &GraphContext, h: &Matrix) -> Result<()> {
    if h.cols() != params.dim() {
        return Err(Error::Shape {
            op: "hgt_layer_forward",
            lhs: h.shape(),
            rhs: (ctx.vertex_count, params.dim()),
        });
    }
    if let Some(&t) = ctx
        .edge_types
        .iter()
        .find(|&&t| t >= params.edge_type_count())
    {
        return Err(Error::Validation(format!(
            "edge type {t} has no parameters ({} types)",
            params.edge_type_count()
        )));
    }
    Ok(())
}

/// One layer without recording gradients.
pub fn hgt_layer_forward(
    ctx: &GraphContext,
    h_prev: &Matrix,
    params: &HgtLayerParams,
) -> Result<Matrix> {
    Ok(layer_with_attention(ctx, h_prev, params)?.0)
}

/// One layer's output together with its `E × H` attention weights.
pub fn layer_with_attention(
    ctx: &GraphContext,
    h_prev: &Matrix,
    params: &HgtLayerParams,
) -> Result<(Matrix, Option<Matrix>)> {
    check_layer(params, ctx, h_prev)?;
    let mut tape = Tape::new();
    let vars = LayerVars::register(&mut tape, params, false);
    let h = tape.constant(h_prev.clone());
    let trace = layer_on_tape(&mut tape, ctx, h, &vars, params.heads())?;
    Ok((
        tape.value(trace.output).clone(),
        trace.attention.map(|a| tape.value(a).clone()),
    ))
}

/// Folds [`hgt_layer_forward`] over every layer of the stack.
pub fn hgt_stack_forward(ctx: &GraphContext, h0: &Matrix, stack: &HgtStack) -> Result<Matrix> {
    stack
        .layers
        .iter()
        .try_fold(h0.clone(), |h, p| hgt_layer_forward(ctx, &h, p))
}
