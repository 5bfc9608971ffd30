use super::{EdgeCategory, HeteroGraph, VertexKind};
use crate::error::{Error, Result};
use crate::ingest::{
    Alignment, ConstituencyParse, DependencyParse, Sentence, SubwordToken, TreeNode,
};

/// Token vertices for the whole sequence, one per subword, ids equal to
/// sequence positions.
fn token_layer(subwords: &[SubwordToken]) -> HeteroGraph {
    let mut g = HeteroGraph::new();
    for (pos, sw) in subwords.iter().enumerate() {
        g.add_vertex(VertexKind::Token, sw.text.clone(), Some(pos));
    }
    g
}

/// Adds the word vertices of one sentence and returns their ids, one per
/// lexeme: the lone token vertex for unsplit words, a new lexeme vertex with
/// morphology edges for split ones.
fn word_layer<S: Sentence>(
    g: &mut HeteroGraph,
    subwords: &[SubwordToken],
    alignment: &Alignment,
    sentence: &S,
    claimed: &mut [bool],
) -> Result<Vec<usize>> {
    let lexemes = sentence.lexemes();
    if alignment.len() != lexemes.len() {
        return Err(Error::Construction(format!(
            "{}: alignment covers {} of {} lexemes",
            sentence.describe(),
            alignment.len(),
            lexemes.len()
        )));
    }
    let mut words = Vec::with_capacity(lexemes.len());
    for (lex, group) in lexemes.iter().zip(&alignment.groups) {
        if group.is_empty() {
            return Err(Error::Construction(format!(
                "{}: lexeme {:?} has no subwords",
                sentence.describe(),
                lex.form
            )));
        }
        for &pos in group {
            if pos >= subwords.len() || subwords[pos].is_special {
                return Err(Error::Construction(format!(
                    "{}: lexeme {:?} aligned to invalid position {pos}",
                    sentence.describe(),
                    lex.form
                )));
            }
            if std::mem::replace(&mut claimed[pos], true) {
                return Err(Error::Construction(format!(
                    "{}: subword at position {pos} claimed by two lexemes",
                    sentence.describe()
                )));
            }
        }
        if let [only] = group.as_slice() {
            words.push(*only);
        } else {
            let lv = g.add_vertex(VertexKind::Lexeme, lex.form.clone(), None);
            for &pos in group {
                g.add_edge_pair(pos, lv, EdgeCategory::Morphology);
            }
            words.push(lv);
        }
    }
    Ok(words)
}

fn check_counts(alignments: usize, sentences: usize) -> Result<()> {
    if alignments != sentences {
        return Err(Error::Construction(format!(
            "{alignments} alignments for {sentences} sentences"
        )));
    }
    Ok(())
}

/// Dependency graph over the sequence `subwords`.
///
/// `alignments[k]` maps the lexemes of `parses[k]` to sequence positions.
/// Each non-root relation yields a forward edge from the dependent's word
/// vertex to its head's word vertex, plus the reverse mate.
pub fn build_dependency_graph(
    subwords: &[SubwordToken],
    alignments: &[Alignment],
    parses: &[DependencyParse],
) -> Result<HeteroGraph> {
    check_counts(alignments.len(), parses.len())?;
    let mut g = token_layer(subwords);
    let mut claimed = vec![false; subwords.len()];
    for (parse, alignment) in parses.iter().zip(alignments) {
        parse.validate()?;
        let words = word_layer(&mut g, subwords, alignment, parse, &mut claimed)?;
        for (i, (&head, rel)) in parse.heads.iter().zip(&parse.relations).enumerate() {
            if head == 0 {
                log::debug!(
                    "{}: root {:?} ({rel})",
                    parse.describe(),
                    parse.lexemes[i].form
                );
                continue;
            }
            g.add_edge_pair(
                words[i],
                words[head - 1],
                EdgeCategory::Dependency(rel.clone()),
            );
        }
    }
    Ok(g)
}

/// Constituency graph over the sequence `subwords`.
///
/// Every internal tree node, preterminals included, becomes a constituent
/// vertex. Word vertices link to their preterminal with part-of-speech
/// edges; every non-root constituent links to its parent with a
/// constituency edge. All edges come with reverse mates.
pub fn build_constituency_graph(
    subwords: &[SubwordToken],
    alignments: &[Alignment],
    trees: &[ConstituencyParse],
) -> Result<HeteroGraph> {
    check_counts(alignments.len(), trees.len())?;
    let mut g = token_layer(subwords);
    let mut claimed = vec![false; subwords.len()];
    for (tree, alignment) in trees.iter().zip(alignments) {
        let leaves = count_leaves(&tree.root);
        if leaves != tree.lexemes.len() || leaves != alignment.len() {
            return Err(Error::Construction(format!(
                "{}: {leaves} leaves for {} lexemes ({} aligned)",
                tree.describe(),
                tree.lexemes.len(),
                alignment.len()
            )));
        }
        let words = word_layer(&mut g, subwords, alignment, tree, &mut claimed)?;
        add_constituents(&mut g, &tree.root, None, &words, &tree.describe())?;
    }
    Ok(g)
}

fn count_leaves(node: &TreeNode) -> usize {
    match node {
        TreeNode::Leaf { .. } => 1,
        TreeNode::Internal { children, .. } => children.iter().map(count_leaves).sum(),
    }
}

fn add_constituents(
    g: &mut HeteroGraph,
    node: &TreeNode,
    parent: Option<usize>,
    words: &[usize],
    name: &str,
) -> Result<()> {
    let TreeNode::Internal { label, children } = node else {
        return Err(Error::Construction(format!(
            "{name}: word without a preterminal"
        )));
    };
    if children.is_empty() {
        return Err(Error::Construction(format!(
            "{name}: constituent {label} has no children"
        )));
    }
    let id = g.add_vertex(VertexKind::Constituent, label.clone(), None);
    if let Some(p) = parent {
        g.add_edge_pair(id, p, EdgeCategory::Constituency);
    }
    if let [TreeNode::Leaf { lexeme }] = children.as_slice() {
        let word = *words
            .get(*lexeme)
            .ok_or_else(|| Error::Construction(format!("{name}: leaf {lexeme} out of range")))?;
        g.add_edge_pair(word, id, EdgeCategory::PartOfSpeech);
        return Ok(());
    }
    for child in children {
        add_constituents(g, child, Some(id), words, name)?;
    }
    Ok(())
}
