use serde::{Deserialize, Serialize};

use super::{lexemes_from_forms, LexemeToken, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        label: String,
        children: Vec<TreeNode>,
    },
    /// 0-based index into the sentence's lexemes.
    Leaf { lexeme: usize },
}

impl TreeNode {
    /// A preterminal is an internal node whose only child is a leaf.
    pub fn is_preterminal(&self) -> bool {
        matches!(self, TreeNode::Internal { children, .. }
            if matches!(children.as_slice(), [TreeNode::Leaf { .. }]))
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            TreeNode::Internal { label, .. } => Some(label),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn children(&self) -> &[TreeNode] {
        match self {
            TreeNode::Internal { children, .. } => children,
            TreeNode::Leaf { .. } => &[],
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            TreeNode::Internal { children, .. } => {
                1 + children.iter().map(TreeNode::internal_count).sum::<usize>()
            }
            TreeNode::Leaf { .. } => 0,
        }
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            TreeNode::Internal { children, .. } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
            TreeNode::Leaf { lexeme } => out.push(*lexeme),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstituencyParse {
    pub text: String,
    pub lexemes: Vec<LexemeToken>,
    pub root: TreeNode,
}

impl ConstituencyParse {
    pub fn validate(&self) -> Result<()> {
        let mut leaves = Vec::new();
        self.root.collect_leaves(&mut leaves);
        if leaves != (0..self.lexemes.len()).collect::<Vec<_>>() {
            return Err(Error::Validation(format!(
                "{}: leaves are not in lexeme order",
                self.describe()
            )));
        }
        check_node(&self.root, &self.describe())
    }
}

fn check_node(node: &TreeNode, name: &str) -> Result<()> {
    let TreeNode::Internal { label, children } = node else {
        return Err(Error::Validation(format!("{name}: bare leaf at tree root")));
    };
    if children.is_empty() {
        return Err(Error::Validation(format!(
            "{name}: node {label} has no children"
        )));
    }
    let leaf_children = children
        .iter()
        .filter(|c| matches!(c, TreeNode::Leaf { .. }))
        .count();
    if leaf_children > 0 && children.len() > 1 {
        return Err(Error::Validation(format!(
            "{name}: node {label} mixes words with phrases; words need a POS preterminal"
        )));
    }
    for c in children {
        if matches!(c, TreeNode::Internal { .. }) {
            check_node(c, name)?;
        }
    }
    Ok(())
}

impl Sentence for ConstituencyParse {
    fn lexemes(&self) -> &[LexemeToken] {
        &self.lexemes
    }

    fn lexemes_mut(&mut self) -> &mut [LexemeToken] {
        &mut self.lexemes
    }

    fn describe(&self) -> String {
        format!("tree {:?}", self.text)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

/// Raw S-expression before leaves are numbered.
enum Sexp<'a> {
    List(Vec<Sexp<'a>>),
    Atom(&'a str),
}

fn lex(line: &str) -> Vec<(usize, Token<'_>)> {
    let mut out = Vec::new();
    let mut atom_start: Option<usize> = None;
    let mut atom_char = 0;
    for (char_pos, (byte, ch)) in line.char_indices().enumerate() {
        let delim = ch == '(' || ch == ')' || ch.is_whitespace();
        if delim {
            if let Some(s) = atom_start.take() {
                out.push((atom_char, Token::Atom(&line[s..byte])));
            }
            match ch {
                '(' => out.push((char_pos, Token::Open)),
                ')' => out.push((char_pos, Token::Close)),
                _ => {}
            }
        } else if atom_start.is_none() {
            atom_start = Some(byte);
            atom_char = char_pos;
        }
    }
    if let Some(s) = atom_start {
        out.push((atom_char, Token::Atom(&line[s..])));
    }
    out
}

struct SexpParser<'a> {
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
    end: usize,
    line_no: usize,
}

impl<'a> SexpParser<'a> {
    fn error(&self, at: usize, msg: &str) -> Error {
        Error::parse(format!("line {} position {at}", self.line_no), msg)
    }

    fn parse_list(&mut self) -> Result<Sexp<'a>> {
        // caller consumed the opening paren
        let mut items = Vec::new();
        loop {
            let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
                return Err(self.error(self.end, "unbalanced parentheses: missing ')'"));
            };
            self.pos += 1;
            match tok {
                Token::Close => return Ok(Sexp::List(items)),
                Token::Open => items.push(self.parse_list()?),
                Token::Atom(a) => items.push(Sexp::Atom(a)),
            }
        }
    }
}

fn unescape(word: &str) -> &str {
    match word {
        "-LRB-" => "(",
        "-RRB-" => ")",
        "-LSB-" => "[",
        "-RSB-" => "]",
        "-LCB-" => "{",
        "-RCB-" => "}",
        other => other,
    }
}

fn escape(word: &str) -> &str {
    match word {
        "(" => "-LRB-",
        ")" => "-RRB-",
        other => other,
    }
}

fn build(sexp: Sexp<'_>, forms: &mut Vec<String>, name: &str) -> Result<TreeNode> {
    match sexp {
        Sexp::Atom(word) => {
            forms.push(unescape(word).to_string());
            Ok(TreeNode::Leaf {
                lexeme: forms.len() - 1,
            })
        }
        Sexp::List(items) => {
            let mut iter = items.into_iter().peekable();
            match iter.peek() {
                Some(Sexp::Atom(_)) => {
                    let Some(Sexp::Atom(label)) = iter.next() else {
                        unreachable!()
                    };
                    let children = iter
                        .map(|c| build(c, forms, name))
                        .collect::<Result<Vec<_>>>()?;
                    if children.is_empty() {
                        return Err(Error::Validation(format!(
                            "{name}: node {label} has no children"
                        )));
                    }
                    Ok(TreeNode::Internal {
                        label: label.to_string(),
                        children,
                    })
                }
                // Unlabeled wrapper such as the outer "( (S ...) )".
                Some(Sexp::List(_)) => {
                    let mut rest: Vec<Sexp<'_>> = iter.collect();
                    if rest.len() != 1 {
                        return Err(Error::Validation(format!(
                            "{name}: unlabeled bracket with {} children",
                            rest.len()
                        )));
                    }
                    build(rest.pop().unwrap(), forms, name)
                }
                None => Err(Error::Validation(format!("{name}: empty bracket pair"))),
            }
        }
    }
}

/// Reads Penn-Treebank bracketed trees, one per non-empty line.
pub fn read_bracketed(text: &str) -> Result<Vec<ConstituencyParse>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let tokens = lex(line);
        let end = line.chars().count();
        let mut parser = SexpParser {
            tokens,
            pos: 0,
            end,
            line_no,
        };
        let sexp = match parser.tokens.first().cloned() {
            Some((_, Token::Open)) => {
                parser.pos = 1;
                parser.parse_list()?
            }
            Some((at, _)) => return Err(parser.error(at, "tree must start with '('")),
            None => continue,
        };
        if let Some((at, _)) = parser.tokens.get(parser.pos) {
            return Err(parser.error(*at, "unbalanced parentheses: trailing input after tree"));
        }
        let name = format!("tree on line {line_no}");
        let mut forms = Vec::new();
        let root = build(sexp, &mut forms, &name)?;
        if matches!(root, TreeNode::Leaf { .. }) {
            return Err(Error::Validation(format!(
                "{name}: bare word is not a tree"
            )));
        }
        let (text, lexemes) = lexemes_from_forms(&forms, None)
            .ok_or_else(|| Error::Validation(format!("{name}: cannot lay out forms")))?;
        let parse = ConstituencyParse {
            text,
            lexemes,
            root,
        };
        parse
            .validate()
            .map_err(|e| Error::Validation(format!("{name}: {e}")))?;
        out.push(parse);
    }
    Ok(out)
}

/// Renders trees back to one bracketed line each.
pub fn write_bracketed(parses: &[ConstituencyParse]) -> String {
    fn render(node: &TreeNode, lexemes: &[LexemeToken], out: &mut String) {
        match node {
            TreeNode::Leaf { lexeme } => out.push_str(escape(&lexemes[*lexeme].form)),
            TreeNode::Internal { label, children } => {
                out.push('(');
                out.push_str(label);
                for c in children {
                    out.push(' ');
                    render(c, lexemes, out);
                }
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    for p in parses {
        render(&p.root, &p.lexemes, &mut s);
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRANSPORT: &str = "(NP (NP (NN transport) (NNS appliances)) (PP (JJ such) (IN as) (NP (NP (NN railway) (NNS locomotives)) (NP (NNS ships)) (NP (NNS steamboats)) (CC and) (NP (NN road) (NNS vehicles)))))";

    #[test]
    fn two_preterminals() {
        let trees = read_bracketed("(NP (JJ such) (IN as))").unwrap();
        assert_eq!(trees.len(), 1);
        let root = &trees[0].root;
        assert_eq!(root.label(), Some("NP"));
        assert_eq!(root.children().len(), 2);
        assert!(root.children().iter().all(TreeNode::is_preterminal));
        assert_eq!(trees[0].text, "such as");
    }

    #[test]
    fn transport_fragment() {
        let tree = &read_bracketed(TRANSPORT).unwrap()[0];
        let pp = &tree.root.children()[1];
        assert_eq!(pp.label(), Some("PP"));
        let inner = &pp.children()[2];
        assert_eq!(inner.label(), Some("NP"));
        let labels: Vec<_> = inner
            .children()
            .iter()
            .map(|c| c.label().unwrap())
            .collect();
        assert_eq!(labels, vec!["NP", "NP", "NP", "CC", "NP"]);
        assert_eq!(tree.lexemes.len(), 11);
    }

    #[test]
    fn unbalanced_reports_position() {
        match read_bracketed("((").unwrap_err() {
            Error::Parse { location, .. } => {
                assert!(location.ends_with("position 2"), "{location}")
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_bracketed("(NP (NN a)))"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn childless_node_is_rejected() {
        assert!(matches!(
            read_bracketed("(NP (DT a) (VP))"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn escaped_brackets_and_outer_wrapper() {
        let t = &read_bracketed("( (S (-LRB- -LRB-) (NN x) (-RRB- -RRB-)) )").unwrap()[0];
        assert_eq!(t.root.label(), Some("S"));
        let forms: Vec<_> = t.lexemes.iter().map(|l| l.form.as_str()).collect();
        assert_eq!(forms, vec!["(", "x", ")"]);
    }

    #[test]
    fn writer_round_trip() {
        let trees = read_bracketed(TRANSPORT).unwrap();
        assert_eq!(write_bracketed(&trees).trim(), TRANSPORT);
    }
}
