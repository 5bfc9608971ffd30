//! Acceptance report: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Run with `cargo test -p syhgt-core --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use serde_json::Value;

use common::*;
use syhgt_core::embedding::{
    decode_embeddings, encode_embeddings, load_embeddings, write_embeddings, EmbeddingProvider,
    EmbeddingRecord, StubEmbeddings,
};
use syhgt_core::features::GraphKind;
use syhgt_core::graph::{Direction, EdgeCategory, VertexKind};
use syhgt_core::hgt::{
    decode_checkpoint, encode_checkpoint, hgt_layer_forward, layer_with_attention, read_checkpoint,
    write_checkpoint, GraphContext,
};
use syhgt_core::metrics::{em_f1, evaluate_predictions};
use syhgt_core::span::decode_span;
use syhgt_core::synthetic::{generate, toy_record};
use syhgt_core::train::{evaluate, mean_loss, train, Model, RunConfig};
use syhgt_core::Matrix;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const DIM: usize = 8;
const HEADS: usize = 2;
const TYPES: usize = 3;

fn scale_statement() -> Outcome {
    Ok("full-size SQuAD 2.0 scores need a fine-tuned pretrained encoder over ~130k examples and are not \
        reproduced at desk scale; the property checks below stand in for them"
        .into())
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let record = toy_record().map_err(|e| e.to_string())?;
    let graph = record
        .graph(GraphKind::Constituency)
        .ok_or("toy record lacks a constituency graph")?;
    let kinds: Vec<usize> = VertexKind::ALL
        .iter()
        .map(|&k| graph.count_kind(k))
        .collect();
    ensure(
        graph.vertex_count() == 12 && kinds.iter().all(|&c| c > 0),
        || format!("graph kinds {kinds:?}"),
    )?;
    let config = RunConfig {
        graph_kind: GraphKind::Constituency,
        dim: DIM,
        heads: HEADS,
        layers: 2,
        seed: 3,
        ..RunConfig::desk()
    };
    let model = Model::init(&config, std::slice::from_ref(&record)).map_err(|e| e.to_string())?;
    let emb = StubEmbeddings { dim: DIM, seed: 1 }
        .embed(&record.id, &record.subwords)
        .map_err(|e| e.to_string())?;
    let report = model
        .grad_check(&record, &emb, &config, 1e-6)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "max relative error {:.2e} over {} entries in {:.2?}",
        report.max_relative_error, report.entries_checked, elapsed
    );
    ensure(
        report.max_relative_error < 1e-5 && elapsed < Duration::from_secs(60),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn attention_contract() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = rng(400 + seed);
        let ctx = random_context(&mut rng, 20, TYPES);
        let p = random_layer(DIM, HEADS, TYPES, &mut rng);
        let h = normal_matrix(ctx.vertex_count, DIM, &mut rng);
        let att = layer_with_attention(&ctx, &h, &p)
            .map_err(|e| e.to_string())?
            .1
            .ok_or("no edges")?;
        for &t in &ctx.targets {
            for k in 0..HEADS {
                let s: f64 = (0..ctx.edge_count())
                    .filter(|&e| ctx.dst[e] == t)
                    .map(|e| att[(e, k)])
                    .sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    let detail = format!("100 graphs, worst |sum - 1| = {worst:.1e}");
    ensure(worst <= 1e-12, || detail.clone())?;
    Ok(detail)
}

fn brute_force_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let mut rng = rng(seed);
        let ctx = random_context(&mut rng, 20, TYPES);
        let p = random_layer(DIM, HEADS, TYPES, &mut rng);
        let h = normal_matrix(ctx.vertex_count, DIM, &mut rng);
        let got = hgt_layer_forward(&ctx, &h, &p).map_err(|e| e.to_string())?;
        worst = worst.max(got.max_abs_diff(&brute_force_layer(&ctx, &h, &p)));
    }
    let detail = format!("50 graphs, worst difference {worst:.1e}");
    ensure(worst <= 1e-12, || detail.clone())?;
    Ok(detail)
}

fn permutation_and_isolation() -> Outcome {
    let mut worst_perm = 0.0f64;
    let mut isolated_rows = 0;
    for seed in 0..50 {
        let mut rng = rng(100 + seed);
        let (kinds, edges) = random_graph(&mut rng, 20, TYPES);
        let n = kinds.len();
        let p = random_layer(DIM, HEADS, TYPES, &mut rng);
        let h = normal_matrix(n, DIM, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut pkinds = vec![0; n];
        let mut ph = Matrix::zeros(n, DIM);
        for v in 0..n {
            pkinds[perm[v]] = kinds[v];
            ph.row_mut(perm[v]).copy_from_slice(h.row(v));
        }
        let pedges: Vec<_> = edges
            .iter()
            .map(|&(s, d, r)| (perm[s], perm[d], r))
            .collect();
        let ctx = GraphContext::from_edges(kinds, &edges).map_err(|e| e.to_string())?;
        let out = hgt_layer_forward(&ctx, &h, &p).map_err(|e| e.to_string())?;
        let pctx = GraphContext::from_edges(pkinds, &pedges).map_err(|e| e.to_string())?;
        let pout = hgt_layer_forward(&pctx, &ph, &p).map_err(|e| e.to_string())?;
        for v in 0..n {
            for j in 0..DIM {
                worst_perm = worst_perm.max((out[(v, j)] - pout[(perm[v], j)]).abs());
            }
            if !ctx.targets.contains(&v) {
                isolated_rows += 1;
                let same = out
                    .row(v)
                    .iter()
                    .zip(h.row(v))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                ensure(same, || format!("seed {seed}: isolated vertex {v} changed"))?;
            }
        }
    }
    let detail = format!("50 graphs, worst permuted difference {worst_perm:.1e}, {isolated_rows} isolated rows bit-identical");
    ensure(worst_perm <= 1e-12, || detail.clone())?;
    Ok(detail)
}

fn graph_fidelity() -> Outcome {
    let dep = economy_graph();
    let words = dep
        .vertices()
        .iter()
        .filter(|v| v.kind != VertexKind::Constituent)
        .count();
    let mut labels: Vec<String> = dep
        .edges()
        .iter()
        .filter(|e| e.kind.direction == Direction::Forward)
        .filter_map(|e| e.kind.category.relation().map(str::to_string))
        .collect();
    labels.sort();
    let mut want = vec!["pcomp", "pobj", "det", "amod", "amod", "npadvmod"];
    want.sort();
    ensure(words == 7, || format!("{words} word vertices"))?;
    ensure(labels == want, || format!("labels {labels:?}"))?;

    let con = transport_graph();
    let fan_in = con
        .vertices()
        .iter()
        .filter(|v| v.kind == VertexKind::Constituent && v.label == "NP")
        .map(|v| {
            con.edges()
                .iter()
                .filter(|e| {
                    e.dst == v.id
                        && e.kind.category == EdgeCategory::Constituency
                        && e.kind.direction == Direction::Forward
                })
                .count()
        })
        .max()
        .unwrap_or(0);
    ensure(fan_in == 5, || format!("largest NP fan-in {fan_in}"))?;
    Ok(format!(
        "7 word vertices, labels {labels:?}; NP with {fan_in} child edges"
    ))
}

fn overfit() -> Outcome {
    let records = generate(16, 0, 7).records().map_err(|e| e.to_string())?;
    let config = RunConfig {
        graph_kind: GraphKind::Dependency,
        dim: 32,
        layers: 2,
        heads: 4,
        batch_size: 4,
        epochs: 50,
        max_steps: Some(200),
        lr: 1e-3,
        seed: 0,
        ..RunConfig::desk()
    };
    let provider = StubEmbeddings { dim: 32, seed: 0 };
    let start = Instant::now();
    let run = || -> Result<_, String> {
        let (model, report) =
            train(&records, &provider, &config, &mut |_, _| {}).map_err(|e| e.to_string())?;
        let bytes = encode_checkpoint(&model.to_checkpoint(&config).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        Ok((model, report, bytes))
    };
    let (model, report, first) = run()?;
    let elapsed = start.elapsed();
    let (_, _, second) = run()?;
    let (result, _) = evaluate(&model, &records, &provider, &config).map_err(|e| e.to_string())?;
    let loss = mean_loss(&model, &records, &provider, &config).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} steps, training EM {:.2}, mean loss {loss:.4}, {:.2?} per run, checkpoints identical: {}",
        report.steps(),
        result.exact,
        elapsed,
        first == second
    );
    let pass = report.steps() == 200
        && result.exact == 100.0
        && loss < 0.05
        && elapsed < Duration::from_secs(300)
        && first == second;
    ensure(pass, || detail.clone())?;
    Ok(detail)
}

fn metrics_parity() -> Outcome {
    let fx: Value = serde_json::from_str(include_str!("fixtures/squad_metrics.json"))
        .map_err(|e| e.to_string())?;
    let cases = fx["cases"].as_array().ok_or("fixture has no cases")?;
    let golds = |c: &Value| -> Vec<String> {
        c["golds"]
            .as_array()
            .unwrap()
            .iter()
            .map(|g| g.as_str().unwrap().to_string())
            .collect()
    };
    let mut two_thirds = false;
    for c in cases {
        let pred = c["prediction"].as_str().unwrap();
        let (em, f1) = em_f1(pred, &golds(c));
        ensure(
            em.to_bits() == c["exact_bits"].as_u64().unwrap()
                && f1.to_bits() == c["f1_bits"].as_u64().unwrap(),
            || format!("case {} differs: {em} {f1}", c["id"]),
        )?;
        if pred == "tech-oriented economy" && golds(c) == ["tech-oriented"] {
            two_thirds = (f1 - 2.0 / 3.0).abs() < 1e-15;
        }
    }
    ensure(two_thirds, || "the 2/3-F1 case is missing or wrong".into())?;
    let items: Vec<(String, Vec<String>)> = cases
        .iter()
        .map(|c| (c["prediction"].as_str().unwrap().to_string(), golds(c)))
        .collect();
    let ours = serde_json::to_value(evaluate_predictions(&items).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for (key, want) in fx["report"].as_object().ok_or("fixture has no report")? {
        let same = match want.get("bits") {
            Some(bits) => ours[key].as_f64().map(f64::to_bits) == bits.as_u64(),
            None => &ours[key] == want,
        };
        ensure(same, || format!("report key {key} differs"))?;
    }
    Ok(format!(
        "{} cases and the aggregate report bit-identical",
        cases.len()
    ))
}

fn decode_oracle() -> Outcome {
    for seed in 0..200 {
        let f = decode_fixture(seed);
        let got = decode_span(&f.start, &f.end, f.passage.clone(), f.max_len, f.threshold);
        let (span, margin) =
            exhaustive_decode(&f.start, &f.end, f.passage.clone(), f.max_len, f.threshold);
        let same_margin =
            got.null_margin == margin || (got.null_margin.is_nan() && margin.is_nan());
        ensure(got.best_span == span && same_margin, || {
            format!("fixture {seed} differs")
        })?;
    }
    Ok("200 fixtures (n <= 40) equal to exhaustive search".into())
}

fn file_formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = rng(12);
    let records: Vec<EmbeddingRecord> = (0..3)
        .map(|i| {
            let m = normal_matrix(2 + i, 6, &mut rng).map(|v| v as f32 as f64);
            EmbeddingRecord {
                id: format!("r{i}"),
                values: m,
                tokens: None,
            }
        })
        .collect();
    let path = dir.path().join("e.bin");
    write_embeddings(&path, 6, &records).map_err(|e| e.to_string())?;
    let loaded = load_embeddings(&path).map_err(|e| e.to_string())?;
    for r in &records {
        ensure(loaded.get(&r.id) == Some(&r.values), || {
            format!("embedding {} changed", r.id)
        })?;
    }
    let bytes = encode_embeddings(6, &records).map_err(|e| e.to_string())?;
    ensure(
        (0..bytes.len()).all(|cut| decode_embeddings(&bytes[..cut]).is_err()),
        || "a truncated embedding file was accepted".into(),
    )?;

    let corpus = generate(3, 0, 1).records().map_err(|e| e.to_string())?;
    let config = RunConfig {
        epochs: 1,
        ..RunConfig::desk()
    };
    let (model, _) = train(
        &corpus,
        &StubEmbeddings { dim: 32, seed: 0 },
        &config,
        &mut |_, _| {},
    )
    .map_err(|e| e.to_string())?;
    let ckpt = model.to_checkpoint(&config).map_err(|e| e.to_string())?;
    let cpath = dir.path().join("m.ckpt");
    write_checkpoint(&cpath, &ckpt).map_err(|e| e.to_string())?;
    let back = read_checkpoint(&cpath).map_err(|e| e.to_string())?;
    ensure(back == ckpt, || "checkpoint changed on round trip".into())?;
    let (restored, _) = Model::from_checkpoint(back).map_err(|e| e.to_string())?;
    ensure(restored == model, || "restored model differs".into())?;
    let cbytes = encode_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    ensure(
        (0..cbytes.len()).all(|cut| decode_checkpoint(&cbytes[..cut]).is_err()),
        || "a truncated checkpoint was accepted".into(),
    )?;
    Ok(format!(
        "embeddings and checkpoint identical after write/load; all {} + {} truncated prefixes rejected",
        bytes.len(),
        cbytes.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("benchmark-scale statement", scale_statement),
        ("gradient suite", gradient_suite),
        ("attention contract", attention_contract),
        ("brute-force oracle equivalence", brute_force_equivalence),
        (
            "permutation invariance and isolated-vertex identity",
            permutation_and_isolation,
        ),
        ("graph construction fidelity", graph_fidelity),
        ("overfit", overfit),
        ("metrics parity", metrics_parity),
        ("decode oracle", decode_oracle),
        ("file-format round trips", file_formats),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
