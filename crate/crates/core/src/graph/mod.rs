//! Typed graphs over the encoder sequence: token, lexeme and constituent
//! vertices joined by morphology, dependency, part-of-speech and
//! constituency edges, each in a forward and a reverse direction.

mod build;
mod dot;
mod registry;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{build_constituency_graph, build_dependency_graph};
pub use dot::export_dot;
pub use registry::{EdgeTypeRegistry, UNKNOWN_RELATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKind {
    Token,
    Lexeme,
    Constituent,
}

impl VertexKind {
    pub const ALL: [VertexKind; 3] = [
        VertexKind::Token,
        VertexKind::Lexeme,
        VertexKind::Constituent,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeCategory {
    Morphology,
    Dependency(String),
    PartOfSpeech,
    Constituency,
}

impl EdgeCategory {
    pub fn name(&self) -> &'static str {
        match self {
            EdgeCategory::Morphology => "Morphology",
            EdgeCategory::Dependency(_) => "Dependency",
            EdgeCategory::PartOfSpeech => "PartOfSpeech",
            EdgeCategory::Constituency => "Constituency",
        }
    }

    pub fn relation(&self) -> Option<&str> {
        match self {
            EdgeCategory::Dependency(label) => Some(label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// An edge type: one element of the set the per-edge-type parameters are
/// indexed by.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKind {
    pub category: EdgeCategory,
    pub direction: Direction,
}

impl EdgeKind {
    pub fn new(category: EdgeCategory, direction: Direction) -> Self {
        EdgeKind {
            category,
            direction,
        }
    }

    pub fn forward(category: EdgeCategory) -> Self {
        Self::new(category, Direction::Forward)
    }

    pub fn mate(&self) -> EdgeKind {
        EdgeKind::new(self.category.clone(), self.direction.flip())
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.category {
            EdgeCategory::Dependency(l) => write!(f, "Dependency:{l}/{:?}", self.direction),
            other => write!(f, "{}/{:?}", other.name(), self.direction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
    pub label: String,
    pub seq_pos: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct HeteroGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl HeteroGraph {
    pub fn new() -> Self {
        HeteroGraph::default()
    }

    /// Assembles and validates a graph from parts.
    pub fn from_parts(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let g = HeteroGraph { vertices, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn add_vertex(
        &mut self,
        kind: VertexKind,
        label: impl Into<String>,
        seq_pos: Option<usize>,
    ) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            id,
            kind,
            label: label.into(),
            seq_pos,
        });
        id
    }

    /// Adds a forward edge and its reverse mate.
    pub fn add_edge_pair(&mut self, src: usize, dst: usize, category: EdgeCategory) {
        self.edges.push(Edge {
            src,
            dst,
            kind: EdgeKind::new(category.clone(), Direction::Forward),
        });
        self.edges.push(Edge {
            src: dst,
            dst: src,
            kind: EdgeKind::new(category, Direction::Reverse),
        });
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn count_kind(&self, kind: VertexKind) -> usize {
        self.vertices.iter().filter(|v| v.kind == kind).count()
    }

    /// Token vertex ids ordered by sequence position.
    pub fn token_vertices(&self) -> Vec<usize> {
        let mut toks: Vec<(usize, usize)> = self
            .vertices
            .iter()
            .filter_map(|v| v.seq_pos.map(|p| (p, v.id)))
            .collect();
        toks.sort_unstable();
        toks.into_iter().map(|(_, id)| id).collect()
    }

    /// Ids of edges whose target is each vertex.
    pub fn in_neighborhoods(&self) -> Vec<Vec<usize>> {
        let mut n = vec![Vec::new(); self.vertices.len()];
        for (ei, e) in self.edges.iter().enumerate() {
            n[e.dst].push(ei);
        }
        n
    }

    /// Relabels vertex ids: vertex `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<HeteroGraph> {
        if perm.len() != self.vertices.len() {
            return Err(Error::Validation(
                "permutation length differs from vertex count".into(),
            ));
        }
        let mut vertices = self.vertices.clone();
        for v in &mut vertices {
            v.id = perm[v.id];
        }
        vertices.sort_by_key(|v| v.id);
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                kind: e.kind.clone(),
            })
            .collect();
        HeteroGraph::from_parts(vertices, edges)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i {
                return Err(Error::Validation(format!(
                    "vertex ids not dense: position {i} holds id {}",
                    v.id
                )));
            }
            if (v.kind == VertexKind::Token) != v.seq_pos.is_some() {
                return Err(Error::Validation(format!(
                    "vertex {i}: only token vertices carry a sequence position"
                )));
            }
        }
        let n = self.vertices.len();
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Validation(format!(
                    "edge {}->{} out of range (n = {n})",
                    e.src, e.dst
                )));
            }
            if !seen.insert((e.src, e.dst, &e.kind)) {
                return Err(Error::Validation(format!(
                    "duplicate edge {}->{} {}",
                    e.src, e.dst, e.kind
                )));
            }
        }
        for e in &self.edges {
            if !seen.contains(&(e.dst, e.src, &e.kind.mate())) {
                return Err(Error::Validation(format!(
                    "edge {}->{} {} has no mate",
                    e.src, e.dst, e.kind
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphJson::from(self)).expect("graph json is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GraphJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexJson {
    pub id: usize,
    pub kind: VertexKind,
    pub label: String,
    pub seq_pos: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeJson {
    pub src: usize,
    pub dst: usize,
    pub category: String,
    pub label: Option<String>,
    pub direction: Direction,
}

/// Stable on-disk layout of a [`HeteroGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: Vec<VertexJson>,
    pub edges: Vec<EdgeJson>,
}

impl From<&HeteroGraph> for GraphJson {
    fn from(g: &HeteroGraph) -> Self {
        GraphJson {
            vertices: g
                .vertices
                .iter()
                .map(|v| VertexJson {
                    id: v.id,
                    kind: v.kind,
                    label: v.label.clone(),
                    seq_pos: v.seq_pos,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| EdgeJson {
                    src: e.src,
                    dst: e.dst,
                    category: e.kind.category.name().to_string(),
                    label: e.kind.category.relation().map(str::to_string),
                    direction: e.kind.direction,
                })
                .collect(),
        }
    }
}

impl From<HeteroGraph> for GraphJson {
    fn from(g: HeteroGraph) -> Self {
        GraphJson::from(&g)
    }
}

impl TryFrom<GraphJson> for HeteroGraph {
    type Error = Error;

    fn try_from(raw: GraphJson) -> Result<Self> {
        let vertices = raw
            .vertices
            .into_iter()
            .map(|v| Vertex {
                id: v.id,
                kind: v.kind,
                label: v.label,
                seq_pos: v.seq_pos,
            })
            .collect();
        let edges = raw
            .edges
            .into_iter()
            .map(|e| {
                let category = match (e.category.as_str(), e.label) {
                    ("Morphology", None) => EdgeCategory::Morphology,
                    ("PartOfSpeech", None) => EdgeCategory::PartOfSpeech,
                    ("Constituency", None) => EdgeCategory::Constituency,
                    ("Dependency", Some(l)) => EdgeCategory::Dependency(l),
                    (c, l) => {
                        return Err(Error::Validation(format!(
                            "unknown edge category {c:?} with label {l:?}"
                        )))
                    }
                };
                Ok(Edge {
                    src: e.src,
                    dst: e.dst,
                    kind: EdgeKind::new(category, e.direction),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HeteroGraph::from_parts(vertices, edges)
    }
}
