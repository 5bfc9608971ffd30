use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{lexemes_from_forms, LexemeToken, Sentence};
use crate::error::{Error, Result};

/// One dependency-parsed sentence. `heads[i]` is the 1-based index of the
/// governor of lexeme `i + 1`, or 0 for the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyParse {
    pub sent_id: Option<String>,
    pub text: String,
    pub lexemes: Vec<LexemeToken>,
    pub heads: Vec<usize>,
    pub relations: Vec<String>,
}

impl DependencyParse {
    pub fn len(&self) -> usize {
        self.lexemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexemes.is_empty()
    }

    /// Index (0-based) of the root lexeme.
    pub fn root(&self) -> Option<usize> {
        self.heads.iter().position(|&h| h == 0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lexemes.len();
        let name = self.describe();
        if self.heads.len() != n || self.relations.len() != n {
            return Err(Error::Validation(format!(
                "{name}: column arrays disagree in length"
            )));
        }
        let roots = self.heads.iter().filter(|&&h| h == 0).count();
        if roots != 1 {
            return Err(Error::Validation(format!(
                "{name}: expected exactly one root, found {roots}"
            )));
        }
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(Error::Validation(format!(
                    "{name}: head {h} of token {} is out of range 0..={n}",
                    i + 1
                )));
            }
            if h == i + 1 {
                return Err(Error::Validation(format!("{name}: token {h} heads itself")));
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while self.heads[cur] != 0 {
                cur = self.heads[cur] - 1;
                steps += 1;
                if steps > n {
                    return Err(Error::Validation(format!(
                        "{name}: head chain from token {} does not reach the root",
                        start + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Sentence for DependencyParse {
    fn lexemes(&self) -> &[LexemeToken] {
        &self.lexemes
    }

    fn lexemes_mut(&mut self) -> &mut [LexemeToken] {
        &mut self.lexemes
    }

    fn describe(&self) -> String {
        match &self.sent_id {
            Some(id) => format!("sentence {id}"),
            None => format!("sentence {:?}", self.text),
        }
    }
}

#[derive(Default)]
struct Block {
    first_line: usize,
    sent_id: Option<String>,
    text: Option<String>,
    forms: Vec<String>,
    heads: Vec<usize>,
    relations: Vec<String>,
}

/// Reads CoNLL-U text into one parse per sentence block.
pub fn read_conllu(text: &str) -> Result<Vec<DependencyParse>> {
    let mut out = Vec::new();
    let mut block = Block::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block, &mut out)?;
            continue;
        }
        if block.forms.is_empty() && block.first_line == 0 {
            block.first_line = line_no;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("text =") {
                block.text = Some(v.trim().to_string());
            } else if let Some(v) = comment.strip_prefix("sent_id =") {
                block.sent_id = Some(v.trim().to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                format!("line {line_no}"),
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        // multiword ranges and empty nodes
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| {
            Error::parse(
                format!("line {line_no}"),
                format!("bad token index {:?}", cols[0]),
            )
        })?;
        if id != block.forms.len() + 1 {
            return Err(Error::parse(
                format!("line {line_no}"),
                format!("token index {id} out of sequence"),
            ));
        }
        let head: usize = cols[6].parse().map_err(|_| {
            Error::parse(format!("line {line_no}"), format!("bad head {:?}", cols[6]))
        })?;
        block.forms.push(cols[1].to_string());
        block.heads.push(head);
        block.relations.push(cols[7].to_string());
    }
    flush(&mut block, &mut out)?;
    Ok(out)
}

fn flush(block: &mut Block, out: &mut Vec<DependencyParse>) -> Result<()> {
    let b = std::mem::take(block);
    if b.forms.is_empty() {
        return Ok(());
    }
    let label = b
        .sent_id
        .clone()
        .unwrap_or_else(|| format!("starting at line {}", b.first_line));
    let (text, lexemes) = lexemes_from_forms(&b.forms, b.text.as_deref()).ok_or_else(|| {
        Error::Validation(format!(
            "sentence {label}: forms cannot be located in its # text"
        ))
    })?;
    let parse = DependencyParse {
        sent_id: b.sent_id,
        text,
        lexemes,
        heads: b.heads,
        relations: b.relations,
    };
    parse.validate().map_err(|e| match e {
        Error::Validation(msg) if parse.sent_id.is_none() => {
            Error::Validation(format!("{msg} (block {label})"))
        }
        other => other,
    })?;
    out.push(parse);
    Ok(())
}

/// Minimal CoNLL-U writer: index, form, head and relation columns, the rest
/// left as `_`.
pub fn write_conllu(parses: &[DependencyParse]) -> String {
    let mut s = String::new();
    for p in parses {
        if let Some(id) = &p.sent_id {
            let _ = writeln!(s, "# sent_id = {id}");
        }
        let _ = writeln!(s, "# text = {}", p.text);
        for (i, lex) in p.lexemes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                lex.form,
                p.heads[i],
                p.relations[i]
            );
        }
        s.push('\n');
    }
    s
}
