//! Seeded toy corpora in the on-disk input formats, for self-contained
//! runs: every passage holds one sentence where a sentinel word precedes
//! the answer.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::Result;
use crate::features::{build_record, ExampleRecord, ParseIndex, Segments, DEFAULT_MAX_LEN};
use crate::ingest::{
    read_bracketed, read_squad, QaExample, SentenceIndex, Vocab, WordPiece, CLS, PAD, SEP, UNK,
};

pub const SENTINEL: &str = "zork";

const DETERMINERS: &[&str] = &["the", "a"];
const NOUNS: &[&str] = &[
    "cat", "dog", "bird", "river", "tree", "stone", "city", "ship", "road", "farmer",
];
const SPLIT_NOUNS: &[(&str, &str, &str)] = &[
    ("steamboats", "steam", "##boats"),
    ("railways", "rail", "##ways"),
    ("locomotives", "loco", "##motives"),
];
const ADJECTIVES: &[&str] = &["red", "old", "small", "quiet"];
const VERBS: &[&str] = &["saw", "crossed", "found", "moved"];
const INTRANSITIVE: &[&str] = &["stood", "ran", "slept", "waited"];

/// Input files for a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub squad_json: String,
    pub conllu: String,
    pub trees: String,
    pub vocab: String,
}

struct Word<'a> {
    form: &'a str,
    pos: &'a str,
    head: usize,
    rel: &'a str,
}

fn conllu_block(out: &mut String, sent_id: &str, words: &[Word]) {
    let text: Vec<&str> = words.iter().map(|w| w.form).collect();
    let _ = writeln!(out, "# sent_id = {sent_id}");
    let _ = writeln!(out, "# text = {}", text.join(" "));
    for (i, w) in words.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
            i + 1,
            w.form,
            w.pos,
            w.head,
            w.rel
        );
    }
    out.push('\n');
}

pub fn vocab_text() -> String {
    let mut pieces: Vec<&str> = vec![PAD, UNK, CLS, SEP, ".", "?", "what", SENTINEL];
    pieces.extend(DETERMINERS);
    pieces.extend(NOUNS);
    pieces.extend(ADJECTIVES);
    pieces.extend(VERBS);
    pieces.extend(INTRANSITIVE);
    for (_, a, b) in SPLIT_NOUNS {
        pieces.push(a);
        pieces.push(b);
    }
    pieces.join("\n") + "\n"
}

/// `count` examples; every `unanswerable_every`-th one (if nonzero) has
/// no sentinel sentence and is marked impossible.
pub fn generate(count: usize, unanswerable_every: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conllu = String::new();
    let mut trees = String::new();
    let mut qas = Vec::new();
    let mut paragraphs = Vec::new();
    for i in 0..count {
        let det = *DETERMINERS.choose(&mut rng).unwrap();
        let n1 = *NOUNS.choose(&mut rng).unwrap();
        let verb = *VERBS.choose(&mut rng).unwrap();
        let det2 = *DETERMINERS.choose(&mut rng).unwrap();
        let adj = *ADJECTIVES.choose(&mut rng).unwrap();
        let n2 = *NOUNS.choose(&mut rng).unwrap();
        let answer = if rng.random_bool(0.3) {
            SPLIT_NOUNS.choose(&mut rng).unwrap().0
        } else {
            *NOUNS.choose(&mut rng).unwrap()
        };
        let v2 = *INTRANSITIVE.choose(&mut rng).unwrap();
        let impossible = unanswerable_every > 0 && (i + 1) % unanswerable_every == 0;

        let first = [
            Word {
                form: det,
                pos: "DT",
                head: 2,
                rel: "det",
            },
            Word {
                form: n1,
                pos: "NN",
                head: 3,
                rel: "nsubj",
            },
            Word {
                form: verb,
                pos: "VBD",
                head: 0,
                rel: "root",
            },
            Word {
                form: det2,
                pos: "DT",
                head: 6,
                rel: "det",
            },
            Word {
                form: adj,
                pos: "JJ",
                head: 6,
                rel: "amod",
            },
            Word {
                form: n2,
                pos: "NN",
                head: 3,
                rel: "obj",
            },
            Word {
                form: ".",
                pos: ".",
                head: 3,
                rel: "punct",
            },
        ];
        let first_text = format!("{det} {n1} {verb} {det2} {adj} {n2} .");
        let first_tree = format!(
            "(S (NP (DT {det}) (NN {n1})) (VP (VBD {verb}) (NP (DT {det2}) (JJ {adj}) (NN {n2}))) (. .))"
        );
        let (second_words, second_text, second_tree) = if impossible {
            (
                vec![
                    Word {
                        form: det,
                        pos: "DT",
                        head: 2,
                        rel: "det",
                    },
                    Word {
                        form: answer,
                        pos: "NN",
                        head: 3,
                        rel: "nsubj",
                    },
                    Word {
                        form: v2,
                        pos: "VBD",
                        head: 0,
                        rel: "root",
                    },
                    Word {
                        form: ".",
                        pos: ".",
                        head: 3,
                        rel: "punct",
                    },
                ],
                format!("{det} {answer} {v2} ."),
                format!("(S (NP (DT {det}) (NN {answer})) (VP (VBD {v2})) (. .))"),
            )
        } else {
            (
                vec![
                    Word {
                        form: SENTINEL,
                        pos: "SYM",
                        head: 2,
                        rel: "mark",
                    },
                    Word {
                        form: answer,
                        pos: "NN",
                        head: 3,
                        rel: "nsubj",
                    },
                    Word {
                        form: v2,
                        pos: "VBD",
                        head: 0,
                        rel: "root",
                    },
                    Word {
                        form: ".",
                        pos: ".",
                        head: 3,
                        rel: "punct",
                    },
                ],
                format!("{SENTINEL} {answer} {v2} ."),
                format!("(S (NP (SYM {SENTINEL}) (NN {answer})) (VP (VBD {v2})) (. .))"),
            )
        };
        let answer_first = rng.random_bool(0.5);
        let passage = if answer_first {
            format!("{second_text} {first_text}")
        } else {
            format!("{first_text} {second_text}")
        };
        let answer_start = if answer_first {
            0
        } else {
            first_text.len() + 1
        } + SENTINEL.len()
            + 1;

        conllu_block(&mut conllu, &format!("s{i}a"), &first);
        conllu_block(&mut conllu, &format!("s{i}b"), &second_words);
        let question_words = [
            Word {
                form: "what",
                pos: "WP",
                head: 2,
                rel: "nsubj",
            },
            Word {
                form: v2,
                pos: "VBD",
                head: 0,
                rel: "root",
            },
            Word {
                form: "?",
                pos: ".",
                head: 2,
                rel: "punct",
            },
        ];
        conllu_block(&mut conllu, &format!("q{i}"), &question_words);
        let _ = writeln!(trees, "{first_tree}");
        let _ = writeln!(trees, "{second_tree}");
        let _ = writeln!(trees, "(SBARQ (WHNP (WP what)) (SQ (VP (VBD {v2}))) (. ?))");

        let id = format!("syn{i:04}");
        let qa = if impossible {
            json!({"id": id, "question": format!("what {v2} ?"), "answers": [], "is_impossible": true})
        } else {
            json!({
                "id": id,
                "question": format!("what {v2} ?"),
                "answers": [{"text": answer, "answer_start": answer_start}],
                "is_impossible": false
            })
        };
        qas.push(qa.clone());
        paragraphs.push(json!({"context": passage, "qas": [qa]}));
    }
    let squad =
        json!({"version": "v2.0", "data": [{"title": "synthetic", "paragraphs": paragraphs}]});
    SyntheticCorpus {
        squad_json: serde_json::to_string_pretty(&squad).expect("static json"),
        conllu,
        trees,
        vocab: vocab_text(),
    }
}

impl SyntheticCorpus {
    /// Runs the full preprocessing pipeline, building both graph kinds.
    pub fn records(&self) -> Result<Vec<ExampleRecord>> {
        let vocab = Vocab::from_text(&self.vocab)?;
        let deps = crate::ingest::read_conllu(&self.conllu)?;
        let trees = read_bracketed(&self.trees)?;
        let examples = read_squad(&self.squad_json)?.examples;
        records_from(&examples, &vocab, &deps, &trees)
    }
}

fn records_from(
    examples: &[QaExample],
    vocab: &Vocab,
    deps: &[crate::ingest::DependencyParse],
    trees: &[crate::ingest::ConstituencyParse],
) -> Result<Vec<ExampleRecord>> {
    let tokenizer = WordPiece::new(vocab.clone());
    let parses = ParseIndex {
        dependency: Some(SentenceIndex::new(deps)),
        constituency: Some(SentenceIndex::new(trees)),
    };
    examples
        .iter()
        .map(|ex| {
            let segments = Segments::tokenize(&ex.question, &ex.passage, &tokenizer);
            build_record(ex, &segments, vocab, &parses, DEFAULT_MAX_LEN)
        })
        .collect()
}

/// Two-sentence example whose constituency graph has 12 vertices of all
/// three kinds: 7 tokens, 1 lexeme, 4 constituents.
pub fn toy_record() -> Result<ExampleRecord> {
    let vocab = Vocab::from_text(&vocab_text())?;
    let trees = read_bracketed("(WP what)\n(S (NNS steamboats) (VBD stood))\n")?;
    let deps = crate::ingest::read_conllu(
        "1\twhat\t_\t_\t_\t_\t0\troot\t_\t_\n\n1\tsteamboats\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\tstood\t_\t_\t_\t_\t0\troot\t_\t_\n\n",
    )?;
    let squad = json!({"data": [{"paragraphs": [{"context": "steamboats stood", "qas": [{
        "id": "toy", "question": "what",
        "answers": [{"text": "steamboats", "answer_start": 0}], "is_impossible": false
    }]}]}]});
    let examples = read_squad(&squad.to_string())?.examples;
    Ok(records_from(&examples, &vocab, &deps, &trees)?.remove(0))
}
