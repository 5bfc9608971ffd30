//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use syhgt_core::hgt::{GraphContext, HgtLayerParams};
use syhgt_core::span::BestSpan;
use syhgt_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Random mixed-kind graph with at most `max_vertices` vertices, no
/// self-loops, no duplicate typed edges, and usually a few isolated
/// vertices.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    max_vertices: usize,
    edge_types: usize,
) -> (Vec<usize>, Vec<(usize, usize, usize)>) {
    let n = rng.random_range(2..=max_vertices);
    let kinds: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let mut candidates = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d {
                for r in 0..edge_types {
                    candidates.push((s, d, r));
                }
            }
        }
    }
    candidates.shuffle(rng);
    let m = rng.random_range(1..=(2 * n).min(candidates.len()));
    let mut edges = candidates[..m].to_vec();
    edges.sort_unstable();
    (kinds, edges)
}

pub fn random_context(
    rng: &mut ChaCha8Rng,
    max_vertices: usize,
    edge_types: usize,
) -> GraphContext {
    let (kinds, edges) = random_graph(rng, max_vertices, edge_types);
    GraphContext::from_edges(kinds, &edges).unwrap()
}

/// Random layer parameters, with a non-trivial prior so the prior enters
/// every comparison.
pub fn random_layer(
    dim: usize,
    heads: usize,
    edge_types: usize,
    rng: &mut ChaCha8Rng,
) -> HgtLayerParams {
    let mut p = HgtLayerParams::init(dim, heads, edge_types, rng).unwrap();
    for v in p.log_mu.as_mut_slice() {
        *v = rng.random_range(-0.5..0.5);
    }
    p
}

fn row_times(v: &[f64], w: &Matrix, row_offset: usize, cols: std::ops::Range<usize>) -> Vec<f64> {
    cols.map(|c| {
        v.iter()
            .enumerate()
            .map(|(i, x)| x * w[(row_offset + i, c)])
            .sum()
    })
    .collect()
}

/// Edge-by-edge, head-by-head re-implementation of one layer.
pub fn brute_force_layer(ctx: &GraphContext, h: &Matrix, p: &HgtLayerParams) -> Matrix {
    let dim = h.cols();
    let heads = p.log_mu.cols();
    let dk = dim / heads;
    let full = |v: &[f64], w: &Matrix| row_times(v, w, 0, 0..dim);
    let mut out = h.clone();
    for t in 0..ctx.vertex_count {
        let in_edges: Vec<usize> = (0..ctx.edge_count()).filter(|&e| ctx.dst[e] == t).collect();
        if in_edges.is_empty() {
            continue;
        }
        let q_t = full(h.row(t), &p.query[ctx.kinds[t]]);
        let mut agg = vec![0.0; dim];
        for k in 0..heads {
            let block = k * dk..(k + 1) * dk;
            let mut scores = Vec::new();
            let mut messages = Vec::new();
            for &e in &in_edges {
                let (s, r) = (ctx.src[e], ctx.edge_types[e]);
                let k_s = full(h.row(s), &p.key[ctx.kinds[s]]);
                let ka = row_times(&k_s[block.clone()], &p.attention[r], k * dk, 0..dk);
                let dot: f64 = ka.iter().zip(&q_t[block.clone()]).map(|(a, b)| a * b).sum();
                scores.push(p.log_mu[(r, k)].exp() * dot / (dk as f64).sqrt());
                let m_s = full(h.row(s), &p.message[ctx.kinds[s]]);
                messages.push(row_times(
                    &m_s[block.clone()],
                    &p.edge_message[r],
                    k * dk,
                    0..dk,
                ));
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (w, msg) in exps.iter().zip(&messages) {
                for (j, m) in msg.iter().enumerate() {
                    agg[k * dk + j] += w / z * m;
                }
            }
        }
        let projected = full(&agg, &p.output[ctx.kinds[t]]);
        for (j, v) in projected.iter().enumerate() {
            out[(t, j)] = h[(t, j)] + v.max(0.0);
        }
    }
    out
}

pub const ECONOMY_CONLLU: &str = "# sent_id = economy
# text = due to a stronger tech-oriented economy
1\tdue\t_\tIN\t_\t_\t0\troot\t_\t_
2\tto\t_\tIN\t_\t_\t1\tpcomp\t_\t_
3\ta\t_\tDT\t_\t_\t7\tdet\t_\t_
4\tstronger\t_\tJJR\t_\t_\t7\tamod\t_\t_
5\ttech\t_\tNN\t_\t_\t6\tamod\t_\t_
6\t-oriented\t_\tJJ\t_\t_\t7\tnpadvmod\t_\t_
7\teconomy\t_\tNN\t_\t_\t1\tpobj\t_\t_

";

pub const TRANSPORT_TREE: &str = "(NP (NP (NN transport) (NNS appliances)) (PP (JJ such) (IN as) (NP (NP (NN railway) (NNS locomotives)) (NP (NNS ships)) (NP (NNS steamboats)) (CC and) (NP (NN road) (NNS vehicles)))))";

/// One subword per lexeme, so every word vertex is a token vertex.
pub fn unsplit_subwords(
    lexemes: &[syhgt_core::ingest::LexemeToken],
) -> (
    Vec<syhgt_core::ingest::SubwordToken>,
    syhgt_core::ingest::Alignment,
) {
    let subwords = lexemes
        .iter()
        .enumerate()
        .map(|(i, l)| syhgt_core::ingest::SubwordToken {
            id: 10 + i,
            text: l.form.clone(),
            char_start: l.char_start,
            char_end: l.char_end,
            is_special: false,
        })
        .collect();
    let groups = (0..lexemes.len()).map(|i| vec![i]).collect();
    (subwords, syhgt_core::ingest::Alignment { groups })
}

pub fn economy_graph() -> syhgt_core::graph::HeteroGraph {
    let parses = syhgt_core::ingest::read_conllu(ECONOMY_CONLLU).unwrap();
    let (subwords, alignment) = unsplit_subwords(&parses[0].lexemes);
    syhgt_core::graph::build_dependency_graph(&subwords, &[alignment], &parses).unwrap()
}

pub fn transport_graph() -> syhgt_core::graph::HeteroGraph {
    let trees = syhgt_core::ingest::read_bracketed(TRANSPORT_TREE).unwrap();
    let (subwords, alignment) = unsplit_subwords(&trees[0].lexemes);
    syhgt_core::graph::build_constituency_graph(&subwords, &[alignment], &trees).unwrap()
}

/// Decision by listing every legal pair and sorting.
pub fn exhaustive_decode(
    start: &[f64],
    end: &[f64],
    passage: Range<usize>,
    max_len: usize,
    threshold: f64,
) -> (BestSpan, f64) {
    let mut pairs = Vec::new();
    for i in passage.clone() {
        for j in passage.clone() {
            if i >= 1 && i <= j && j - i < max_len {
                pairs.push((start[i] * end[j], i, j));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then((a.2 - a.1).cmp(&(b.2 - b.1)))
    });
    let null = start[0] * end[0];
    match pairs.first() {
        None => (BestSpan::NoAnswer, f64::INFINITY),
        Some(&(score, i, j)) => {
            let margin = null.ln() - score.ln();
            if null > score * threshold {
                (BestSpan::NoAnswer, margin)
            } else {
                (BestSpan::Span { start: i, end: j }, margin)
            }
        }
    }
}

/// Probabilities over `n` positions; coarse ones make ties likely.
fn random_probs(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            if coarse {
                rng.random_range(0..3) as f64
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let z: f64 = raw.iter().sum();
    if z == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    raw.iter().map(|v| v / z).collect()
}

pub struct Fixture {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub passage: Range<usize>,
    pub max_len: usize,
    pub threshold: f64,
}

pub fn decode_fixture(seed: u64) -> Fixture {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=40);
    let coarse = seed.is_multiple_of(2);
    let lo = rng.random_range(0..n);
    let hi = rng.random_range(lo..=n);
    Fixture {
        start: random_probs(&mut rng, n, coarse),
        end: random_probs(&mut rng, n, coarse),
        passage: lo..hi,
        max_len: rng.random_range(1..=12),
        threshold: [0.0, 0.5, 1.0, 2.0, 10.0][rng.random_range(0..5)],
    }
}
