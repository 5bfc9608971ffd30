//! `syhgt`: build graphs, train, evaluate and gradient-check from the shell.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.
//! `SYHGT_LOG` (error, info, debug) sets the log level.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use syhgt_core::embedding::{load_embeddings, EmbeddingProvider, SidecarEntry, StubEmbeddings};
use syhgt_core::features::{
    build_record, ExampleRecord, GraphKind, ParseIndex, Segments, DEFAULT_MAX_LEN,
};
use syhgt_core::graph::export_dot;
use syhgt_core::hgt::{read_checkpoint, write_checkpoint};
use syhgt_core::ingest::{
    read_bracketed, read_conllu, read_squad, SentenceIndex, Vocab, WordPiece,
};
use syhgt_core::synthetic::toy_record;
use syhgt_core::train::{evaluate, train, Model, RunConfig};
use syhgt_core::{Error, Result};

/// Seed of the stub encoder used by `train --stub` and by `eval` without
/// `--embeddings`.
const STUB_SEED: u64 = 0;

const MANIFEST: &str = "manifest.json";

const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(
    name = "syhgt",
    version,
    about = "Syntax-informed heterogeneous graph transformer for extractive QA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize examples, align them to parses and write one graph record per example.
    BuildGraph(BuildGraph),
    /// Train the graph transformer and span head, writing a checkpoint.
    #[command(after_help = DESK_HELP)]
    Train(TrainArgs),
    /// Predict answers for a graph directory and score them.
    Eval(EvalArgs),
    /// Compare analytic and numeric gradients of the full model on a toy example.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("parses").required(true).multiple(true))]
struct BuildGraph {
    /// SQuAD 2.0 JSON file.
    #[arg(long)]
    squad: PathBuf,
    /// CoNLL-U dependency parses covering every question and passage.
    #[arg(long, group = "parses")]
    conllu: Option<PathBuf>,
    /// Bracketed constituency trees, one per line.
    #[arg(long, group = "parses")]
    trees: Option<PathBuf>,
    /// WordPiece vocabulary, one piece per line.
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write a Graphviz file per graph.
    #[arg(long)]
    dot: bool,
    /// Offsets sidecar of an embedding export; its tokenization replaces ours.
    #[arg(long)]
    offsets: Option<PathBuf>,
}

const DESK_HELP: &str = "Defaults are the full-scale settings for a fine-tuned 768-wide encoder. \
With the frozen stub encoder on small corpora use --stub --dim 32 --lr 1e-3 --batch 4.";

#[derive(Args)]
#[command(group = clap::ArgGroup::new("encoder").required(true))]
struct TrainArgs {
    #[arg(long)]
    graphs: PathBuf,
    /// Graph kind: dep or con.
    #[arg(long)]
    graph_kind: GraphKind,
    /// Embedding file written by the exporter.
    #[arg(long, group = "encoder")]
    embeddings: Option<PathBuf>,
    /// Deterministic unit-norm embeddings instead of an encoder.
    #[arg(long, group = "encoder")]
    stub: bool,
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2e-5)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 7)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Score report.
    #[arg(long)]
    out: PathBuf,
    /// Answer per example id.
    #[arg(long)]
    predictions: PathBuf,
    /// Embedding file; the stub encoder is used when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn build_graph(args: BuildGraph) -> Result<()> {
    let vocab = Vocab::from_text(&read_text(&args.vocab)?)?;
    let examples = read_squad(&read_text(&args.squad)?)?.examples;
    let deps = args
        .conllu
        .as_deref()
        .map(read_text)
        .transpose()?
        .map(|t| read_conllu(&t))
        .transpose()?;
    let trees = args
        .trees
        .as_deref()
        .map(read_text)
        .transpose()?
        .map(|t| read_bracketed(&t))
        .transpose()?;
    let sidecar: Option<HashMap<String, SidecarEntry>> = match &args.offsets {
        Some(p) => Some(serde_json::from_str(&read_text(p)?)?),
        None => None,
    };
    let parses = ParseIndex {
        dependency: deps.as_deref().map(SentenceIndex::new),
        constituency: trees.as_deref().map(SentenceIndex::new),
    };
    let tokenizer = WordPiece::new(vocab.clone());
    fs::create_dir_all(&args.out)?;

    let mut files = Vec::new();
    let mut skipped = Vec::new();
    for ex in &examples {
        let segments = match sidecar.as_ref().map(|s| s.get(&ex.id)) {
            Some(Some(entry)) => Segments::from_sidecar(&ex.question, &ex.passage, entry, &vocab)?,
            Some(None) => {
                return Err(Error::Consistency(format!(
                    "offsets sidecar has no entry for {:?}",
                    ex.id
                )))
            }
            None => Segments::tokenize(&ex.question, &ex.passage, &tokenizer),
        };
        let record = match build_record(ex, &segments, &vocab, &parses, DEFAULT_MAX_LEN) {
            Ok(r) => r,
            Err(e @ (Error::Alignment(_) | Error::Construction(_) | Error::Consistency(_))) => {
                log::warn!("{}: skipped: {e}", ex.id);
                skipped.push(ex.id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let stem = format!("{:05}", files.len());
        write_json(&args.out.join(format!("{stem}.json")), &record)?;
        if args.dot {
            for (kind, graph) in [("dep", &record.dependency), ("con", &record.constituency)] {
                if let Some(g) = graph {
                    fs::write(args.out.join(format!("{stem}.{kind}.dot")), export_dot(g))?;
                }
            }
        }
        files.push(format!("{stem}.json"));
    }
    log::info!("wrote {} records, skipped {}", files.len(), skipped.len());
    write_json(
        &args.out.join(MANIFEST),
        &json!({"records": files, "skipped": skipped.len(), "skipped_ids": skipped}),
    )
}

fn load_records(dir: &Path) -> Result<Vec<ExampleRecord>> {
    let manifest: serde_json::Value = serde_json::from_str(&read_text(&dir.join(MANIFEST))?)?;
    let names = manifest["records"].as_array().ok_or_else(|| {
        Error::Format(format!("{}: no records list", dir.join(MANIFEST).display()))
    })?;
    names
        .iter()
        .map(|n| {
            let name = n
                .as_str()
                .ok_or_else(|| Error::Format("record name is not a string".into()))?;
            Ok(serde_json::from_str(&read_text(&dir.join(name))?)?)
        })
        .collect()
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = RunConfig {
        graph_kind: args.graph_kind,
        layers: args.layers,
        heads: args.heads,
        dim: args.dim,
        batch_size: args.batch,
        epochs: args.epochs,
        lr: args.lr,
        seed: args.seed,
        ..RunConfig::full_scale()
    };
    config.validate()?;
    let records = load_records(&args.graphs)?;
    let provider: Box<dyn EmbeddingProvider> = match &args.embeddings {
        Some(path) => Box::new(load_embeddings(path)?),
        None => Box::new(StubEmbeddings {
            dim: args.dim,
            seed: STUB_SEED,
        }),
    };
    let (model, report) = train(&records, provider.as_ref(), &config, &mut |epoch, loss| {
        log::info!("epoch {}: mean loss {loss:.6}", epoch + 1);
    })?;
    write_checkpoint(&args.out, &model.to_checkpoint(&config)?)?;
    println!(
        "{}",
        json!({"steps": report.steps(), "final_epoch_loss": report.epoch_losses.last(), "checkpoint": args.out})
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let (model, config) = Model::from_checkpoint(read_checkpoint(&args.ckpt)?)?;
    let records = load_records(&args.graphs)?;
    let provider: Box<dyn EmbeddingProvider> = match &args.embeddings {
        Some(path) => Box::new(load_embeddings(path)?),
        None => Box::new(StubEmbeddings {
            dim: config.dim,
            seed: STUB_SEED,
        }),
    };
    let (result, predictions) = evaluate(&model, &records, provider.as_ref(), &config)?;
    write_json(&args.out, &result)?;
    write_json(&args.predictions, &predictions.answers)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> Result<()> {
    let record = toy_record()?;
    let mut worst = 0.0f64;
    for kind in [GraphKind::Dependency, GraphKind::Constituency] {
        let config = RunConfig {
            graph_kind: kind,
            dim: 8,
            heads: 2,
            layers: 2,
            seed: args.seed,
            ..RunConfig::desk()
        };
        let model = Model::init(&config, std::slice::from_ref(&record))?;
        let emb = StubEmbeddings {
            dim: config.dim,
            seed: args.seed,
        }
        .embed(&record.id, &record.subwords)?;
        let report = model.grad_check(&record, &emb, &config, 1e-6)?;
        println!(
            "{}",
            json!({"graph_kind": kind, "max_relative_error": report.max_relative_error, "entries": report.entries_checked})
        );
        worst = worst.max(report.max_relative_error);
    }
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "gradient check failed: relative error {worst:e} >= {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SYHGT_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::BuildGraph(a) => build_graph(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
