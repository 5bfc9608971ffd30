use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Direction, EdgeCategory, EdgeKind, HeteroGraph};

/// Stand-in relation for dependency labels never seen during training.
pub const UNKNOWN_RELATION: &str = "<unk>";

/// Dense numbering of edge types.
///
/// Always contains both directions of the structural categories and of the
/// unknown-relation fallback, plus every dependency label observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<EdgeKind>", into = "Vec<EdgeKind>")]
pub struct EdgeTypeRegistry {
    kinds: Vec<EdgeKind>,
    index: HashMap<EdgeKind, usize>,
}

impl EdgeTypeRegistry {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a HeteroGraph>) -> Self {
        let mut set: BTreeSet<EdgeKind> = BTreeSet::new();
        for category in [
            EdgeCategory::Morphology,
            EdgeCategory::PartOfSpeech,
            EdgeCategory::Constituency,
            EdgeCategory::Dependency(UNKNOWN_RELATION.to_string()),
        ] {
            set.insert(EdgeKind::new(category.clone(), Direction::Forward));
            set.insert(EdgeKind::new(category, Direction::Reverse));
        }
        for g in graphs {
            for e in g.edges() {
                set.insert(e.kind.clone());
            }
        }
        set.into_iter().collect::<Vec<_>>().into()
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[EdgeKind] {
        &self.kinds
    }

    pub fn get(&self, kind: &EdgeKind) -> Option<usize> {
        self.index.get(kind).copied()
    }

    /// Like [`get`](Self::get), mapping unseen dependency labels onto the
    /// unknown relation of the same direction.
    pub fn resolve(&self, kind: &EdgeKind) -> Option<usize> {
        self.get(kind).or_else(|| match &kind.category {
            EdgeCategory::Dependency(label) => {
                log::debug!("unseen dependency relation {label:?}");
                self.get(&EdgeKind::new(
                    EdgeCategory::Dependency(UNKNOWN_RELATION.to_string()),
                    kind.direction,
                ))
            }
            _ => None,
        })
    }

    /// Type index of every edge of `graph`.
    pub fn edge_types(&self, graph: &HeteroGraph) -> Option<Vec<usize>> {
        graph
            .edges()
            .iter()
            .map(|e| self.resolve(&e.kind))
            .collect()
    }
}

impl From<Vec<EdgeKind>> for EdgeTypeRegistry {
    fn from(kinds: Vec<EdgeKind>) -> Self {
        let index = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        EdgeTypeRegistry { kinds, index }
    }
}

impl From<EdgeTypeRegistry> for Vec<EdgeKind> {
    fn from(r: EdgeTypeRegistry) -> Self {
        r.kinds
    }
}
