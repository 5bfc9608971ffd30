use std::fmt::Write as _;

use super::{Direction, EdgeCategory, HeteroGraph, VertexKind};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Graphviz rendering. Reverse edges are left out.
pub fn export_dot(graph: &HeteroGraph) -> String {
    let mut s = String::from("digraph G {\n");
    for v in graph.vertices() {
        let shape = match v.kind {
            VertexKind::Token => "box",
            VertexKind::Lexeme => "ellipse",
            VertexKind::Constituent => "hexagon",
        };
        let _ = writeln!(s, "  {} [shape={shape}, label={}];", v.id, quote(&v.label));
    }
    for e in graph.edges() {
        if e.kind.direction == Direction::Reverse {
            continue;
        }
        let label = match &e.kind.category {
            EdgeCategory::Dependency(rel) => format!("Dependency:{rel}"),
            other => other.name().to_string(),
        };
        let _ = writeln!(s, "  {} -> {} [label={}];", e.src, e.dst, quote(&label));
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph() {
        assert_eq!(export_dot(&HeteroGraph::new()), "digraph G {\n}\n");
    }

    #[test]
    fn one_morphology_edge() {
        let mut g = HeteroGraph::new();
        let a = g.add_vertex(VertexKind::Token, "a", Some(0));
        let l = g.add_vertex(VertexKind::Lexeme, "a\"b", None);
        g.add_edge_pair(a, l, EdgeCategory::Morphology);
        let dot = export_dot(&g);
        let edge_lines: Vec<_> = dot.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(edge_lines, vec!["  0 -> 1 [label=\"Morphology\"];"]);
        assert!(dot.contains(r#"label="a\"b""#));
    }
}
