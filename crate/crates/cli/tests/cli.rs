use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use syhgt_core::synthetic::generate;

fn syhgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syhgt"))
        .args(args)
        .env("SYHGT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Corpus {
    dir: tempfile::TempDir,
}

impl Corpus {
    fn new(count: usize, unanswerable_every: usize, seed: u64) -> Self {
        let corpus = generate(count, unanswerable_every, seed);
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("squad.json"), &corpus.squad_json).unwrap();
        fs::write(dir.path().join("parses.conllu"), &corpus.conllu).unwrap();
        fs::write(dir.path().join("trees.txt"), &corpus.trees).unwrap();
        fs::write(dir.path().join("vocab.txt"), &corpus.vocab).unwrap();
        Corpus { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn build(&self, out: &str, extra: &[&str]) -> Output {
        let (squad, conllu, trees, vocab, out) = (
            self.path("squad.json"),
            self.path("parses.conllu"),
            self.path("trees.txt"),
            self.path("vocab.txt"),
            self.path(out),
        );
        let mut args = vec![
            "build-graph",
            "--squad",
            &squad,
            "--conllu",
            &conllu,
            "--trees",
            &trees,
            "--vocab",
            &vocab,
            "--out",
            &out,
        ];
        args.extend(extra);
        syhgt(&args)
    }

    fn train(&self, graphs: &str, kind: &str, ckpt: &str) -> Output {
        let (graphs, ckpt) = (self.path(graphs), self.path(ckpt));
        syhgt(&[
            "train",
            "--graphs",
            &graphs,
            "--graph-kind",
            kind,
            "--stub",
            "--dim",
            "16",
            "--layers",
            "1",
            "--heads",
            "2",
            "--lr",
            "1e-3",
            "--batch",
            "4",
            "--epochs",
            "2",
            "--seed",
            "3",
            "--out",
            &ckpt,
        ])
    }
}

#[test]
fn build_train_eval_round_trip() {
    let c = Corpus::new(8, 4, 1);
    let out = c.build("graphs", &["--dot"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(Path::new(&c.path("graphs/manifest.json")));
    assert_eq!(manifest["records"].as_array().unwrap().len(), 8);
    assert_eq!(manifest["skipped"], 0);
    assert!(Path::new(&c.path("graphs/00000.dep.dot")).exists());
    assert!(Path::new(&c.path("graphs/00007.con.dot")).exists());

    for kind in ["dep", "con"] {
        let ckpt = format!("{kind}.ckpt");
        let out = c.train("graphs", kind, &ckpt);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["steps"], 4);

        let (graphs, ckpt, report, preds) = (
            c.path("graphs"),
            c.path(&ckpt),
            c.path("report.json"),
            c.path("pred.json"),
        );
        let out = syhgt(&[
            "eval",
            "--graphs",
            &graphs,
            "--ckpt",
            &ckpt,
            "--out",
            &report,
            "--predictions",
            &preds,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let report = read_json(Path::new(&report));
        assert_eq!(report["total"], 8);
        assert_eq!(report["HasAns_total"], 6);
        assert_eq!(report["NoAns_total"], 2);
        assert!((0.0..=100.0).contains(&report["exact"].as_f64().unwrap()));
        assert!(report["f1"].as_f64().unwrap() >= report["exact"].as_f64().unwrap());
        assert_eq!(read_json(Path::new(&preds)).as_object().unwrap().len(), 8);
    }
}

#[test]
fn training_is_reproducible() {
    let c = Corpus::new(4, 0, 2);
    assert_eq!(code(&c.build("graphs", &[])), 0);
    assert_eq!(code(&c.train("graphs", "con", "a.ckpt")), 0);
    assert_eq!(code(&c.train("graphs", "con", "b.ckpt")), 0);
    assert_eq!(
        fs::read(c.path("a.ckpt")).unwrap(),
        fs::read(c.path("b.ckpt")).unwrap()
    );
}

#[test]
fn offsets_sidecar_reproduces_the_built_records() {
    let c = Corpus::new(5, 2, 4);
    assert_eq!(code(&c.build("plain", &[])), 0);
    let records: Vec<syhgt_core::features::ExampleRecord> = (0..5)
        .map(|i| {
            serde_json::from_value(read_json(Path::new(&c.path(&format!("plain/{i:05}.json")))))
                .unwrap()
        })
        .collect();
    let sidecar: HashMap<_, _> = records
        .iter()
        .map(|r| (r.id.clone(), r.sidecar_entry()))
        .collect();
    fs::write(
        c.path("offsets.json"),
        serde_json::to_vec(&sidecar).unwrap(),
    )
    .unwrap();
    let offsets = c.path("offsets.json");
    assert_eq!(code(&c.build("aligned", &["--offsets", &offsets])), 0);
    for i in 0..5 {
        let name = format!("{i:05}.json");
        assert_eq!(
            fs::read(c.path(&format!("plain/{name}"))).unwrap(),
            fs::read(c.path(&format!("aligned/{name}"))).unwrap()
        );
    }
}

#[test]
fn gradcheck_passes_and_reports_both_kinds() {
    let out = syhgt(&["gradcheck", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    for l in lines {
        assert!(l["max_relative_error"].as_f64().unwrap() < 1e-5);
        assert!(l["entries"].as_u64().unwrap() > 1000);
    }
}

#[test]
fn missing_input_file_exits_with_io_code() {
    let c = Corpus::new(1, 0, 0);
    fs::remove_file(c.path("squad.json")).unwrap();
    let out = c.build("graphs", &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("squad.json"));

    let missing: PathBuf = c.dir.path().join("nowhere");
    let m = missing.to_str().unwrap();
    let out = syhgt(&[
        "eval",
        "--graphs",
        m,
        "--ckpt",
        m,
        "--out",
        m,
        "--predictions",
        m,
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_input_exits_with_validation_code() {
    let c = Corpus::new(1, 0, 0);
    fs::write(c.path("squad.json"), "{\"data\": 3}").unwrap();
    assert_eq!(code(&c.build("graphs", &[])), 1);

    let c = Corpus::new(1, 0, 0);
    fs::write(c.path("trees.txt"), "(S (NN cat)\n").unwrap();
    assert_eq!(code(&c.build("graphs", &[])), 1);

    let c = Corpus::new(2, 0, 0);
    fs::write(c.path("ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(code(&c.build("graphs", &[])), 0);
    let (graphs, ckpt, out) = (c.path("graphs"), c.path("ckpt"), c.path("r.json"));
    assert_eq!(
        code(&syhgt(&[
            "eval",
            "--graphs",
            &graphs,
            "--ckpt",
            &ckpt,
            "--out",
            &out,
            "--predictions",
            &out
        ])),
        1
    );
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    let c = Corpus::new(2, 0, 0);
    assert_eq!(code(&c.build("graphs", &[])), 0);
    let (graphs, ckpt) = (c.path("graphs"), c.path("x.ckpt"));
    let base = ["train", "--graphs", &graphs, "--stub", "--out", &ckpt];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend(extra);
        code(&syhgt(&a))
    };
    assert_eq!(with(&["--graph-kind", "tree"]), 1);
    assert_eq!(
        with(&["--graph-kind", "dep", "--dim", "30", "--heads", "4"]),
        1
    );
    assert_eq!(
        with(&["--graph-kind", "dep", "--batch", "0", "--dim", "8"]),
        1
    );
    assert_eq!(code(&syhgt(&["build-graph", "--squad", "x"])), 1);
    assert_eq!(code(&syhgt(&["--help"])), 0);
}

#[test]
fn help_documents_the_desk_overrides() {
    let out = syhgt(&["train", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("--stub --dim 32 --lr 1e-3 --batch 4"),
        "{text}"
    );
}
