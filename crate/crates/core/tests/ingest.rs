use proptest::prelude::*;

use syhgt_core::ingest::{
    align_subwords_to_lexemes, read_conllu, tokenize_subwords, write_conllu, DependencyParse,
    LexemeToken, Vocab, CLS, PAD, SEP, UNK,
};

fn vocab() -> Vocab {
    let pieces = [
        PAD, UNK, CLS, SEP, "a", "b", "ab", "ba", "abc", "##a", "##b", "##c", "##bc", "c", "-",
        ".", "é", "##é",
    ];
    Vocab::from_pieces(pieces.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("a"),
            Just("b"),
            Just("c"),
            Just("d"),
            Just("é"),
            Just("-"),
            Just("."),
            Just("’"),
            Just(" "),
            Just("\t"),
            Just("\u{a0}"),
            Just("\u{1f}"),
        ],
        0..40,
    )
    .prop_map(|parts| parts.concat())
}

/// Bytes of characters that belong to some word.
fn word_bytes(text: &str) -> Vec<bool> {
    let mut covered = vec![false; text.len()];
    for (b, ch) in text.char_indices() {
        if !ch.is_whitespace() && !ch.is_control() {
            covered[b..b + ch.len_utf8()]
                .iter_mut()
                .for_each(|c| *c = true);
        }
    }
    covered
}

proptest! {
    #[test]
    fn subwords_tile_word_spans(text in text_strategy()) {
        let toks = tokenize_subwords(&text, &vocab());
        let mut covered = vec![false; text.len()];
        let mut last_end = 0;
        for t in &toks {
            prop_assert!(!t.is_special);
            prop_assert!(t.char_start < t.char_end);
            prop_assert!(t.char_start >= last_end, "overlap at {}", t.char_start);
            last_end = t.char_end;
            covered[t.char_start..t.char_end].iter_mut().for_each(|c| *c = true);
        }
        prop_assert_eq!(covered, word_bytes(&text));
    }

    #[test]
    fn alignment_is_a_partition(forms in proptest::collection::vec("[abcdé.-]{1,6}", 1..12)) {
        let text = forms.join(" ");
        let mut lexemes = Vec::new();
        let mut at = 0;
        for (i, f) in forms.iter().enumerate() {
            lexemes.push(LexemeToken { index: i + 1, form: f.clone(), char_start: at, char_end: at + f.len() });
            at += f.len() + 1;
        }
        let subwords = tokenize_subwords(&text, &vocab());
        let alignment = align_subwords_to_lexemes(&subwords, &lexemes).unwrap();
        let mut seen: Vec<usize> = alignment.groups.iter().flatten().copied().collect();
        prop_assert_eq!(seen.len(), subwords.iter().filter(|s| !s.is_special).count());
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), subwords.len());
        for (li, group) in alignment.groups.iter().enumerate() {
            for &si in group {
                prop_assert!(subwords[si].char_start >= lexemes[li].char_start);
                prop_assert!(subwords[si].char_end <= lexemes[li].char_end);
            }
        }
    }

    #[test]
    fn conllu_round_trip_and_acyclic(parents in proptest::collection::vec(any::<prop::sample::Index>(), 1..15)) {
        // lexeme i+1 attaches to an earlier lexeme, or to the root for the first
        let n = parents.len();
        let heads: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { parents[i].index(i) + 1 }).collect();
        let forms: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let text = forms.join(" ");
        let mut at = 0;
        let lexemes = forms
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let l = LexemeToken { index: i + 1, form: f.clone(), char_start: at, char_end: at + f.len() };
                at += f.len() + 1;
                l
            })
            .collect();
        let relations = (0..n).map(|i| if i == 0 { "root".to_string() } else { format!("rel{}", i % 3) }).collect();
        let parse = DependencyParse { sent_id: Some("s".into()), text, lexemes, heads, relations };
        let back = read_conllu(&write_conllu(std::slice::from_ref(&parse))).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0].heads, &parse.heads);
        prop_assert_eq!(&back[0].relations, &parse.relations);
        for start in 1..=n {
            let mut at = start;
            let mut steps = 0;
            while at != 0 {
                at = back[0].heads[at - 1];
                steps += 1;
                prop_assert!(steps <= n);
            }
        }
    }
}

#[test]
fn cyclic_heads_are_rejected() {
    let text = "1\ta\t_\t_\t_\t_\t2\tx\t_\t_\n2\tb\t_\t_\t_\t_\t1\ty\t_\t_\n3\tc\t_\t_\t_\t_\t0\troot\t_\t_\n";
    assert!(read_conllu(text).is_err());
}

#[test]
fn unknown_word_is_one_unk_piece() {
    let toks = tokenize_subwords("dd ab", &vocab());
    assert_eq!(toks[0].text, UNK);
    assert_eq!((toks[0].char_start, toks[0].char_end), (0, 2));
    assert_eq!(toks[1].text, "ab");
}
