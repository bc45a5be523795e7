use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid node id {0:?}: expected `N` followed by a positive integer")]
    InvalidNodeId(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("edge {from} -> {to} references undeclared node {missing}")]
    UndeclaredEndpoint { from: String, to: String, missing: String },
    #[error("{what} must be nonempty, single-line and free of surrounding whitespace: {text:?}")]
    InvalidText { what: &'static str, text: String },
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
}

/// A node identifier of the form `N<k>` with `k` a positive integer written
/// without leading zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if Self::is_valid(&value) {
            Ok(Self(value))
        } else {
            Err(GraphError::InvalidNodeId(value))
        }
    }

    pub fn from_index(k: u64) -> Self {
        assert!(k > 0, "node indices start at 1");
        Self(format!("N{k}"))
    }

    pub fn is_valid(s: &str) -> bool {
        let Some(digits) = s.strip_prefix('N') else {
            return false;
        };
        let bytes = digits.as_bytes();
        !bytes.is_empty() && bytes[0] != b'0' && bytes.iter().all(u8::is_ascii_digit)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NodeId {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

fn check_text(what: &'static str, text: &str) -> Result<(), GraphError> {
    let ok = !text.is_empty()
        && text.trim() == text
        && !text.contains('\n')
        && !text.contains('\r');
    if ok {
        Ok(())
    } else {
        Err(GraphError::InvalidText { what, text: text.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub description: String,
}

impl Node {
    pub fn new(id: NodeId, description: impl Into<String>) -> Result<Self, GraphError> {
        let description = description.into();
        check_text("node description", &description)?;
        Ok(Self { id, description })
    }

    /// The node's line in the text formats, without a newline.
    pub fn line(&self) -> String {
        format!("{}: {}", self.id, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub relation: String,
}

impl Edge {
    pub fn new(source: NodeId, target: NodeId, relation: impl Into<String>) -> Result<Self, GraphError> {
        let relation = relation.into();
        check_text("edge relation", &relation)?;
        Ok(Self { source, target, relation })
    }

    pub fn line(&self) -> String {
        format!("{} -> {}: {}", self.source, self.target, self.relation)
    }
}

/// Ordered nodes and edges. Node ids are unique and every edge endpoint
/// names a node of the same graph. Edges form a list, so duplicates are
/// allowed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl MemoryGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut seen = HashSet::with_capacity(nodes.len());
        for node in &nodes {
            check_text("node description", &node.description)?;
            if !seen.insert(node.id.as_str()) {
                return Err(GraphError::DuplicateNode(node.id.to_string()));
            }
        }
        for edge in &edges {
            check_text("edge relation", &edge.relation)?;
            for endpoint in [&edge.source, &edge.target] {
                if !seen.contains(endpoint.as_str()) {
                    return Err(GraphError::UndeclaredEndpoint {
                        from: edge.source.to_string(),
                        to: edge.target.to_string(),
                        missing: endpoint.to_string(),
                    });
                }
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id.as_str() == id)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Node>, Vec<Edge>) {
        (self.nodes, self.edges)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSubgraph {
    pub graph: MemoryGraph,
    confidence: f64,
}

impl EvidenceSubgraph {
    pub fn new(graph: MemoryGraph, confidence: f64) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GraphError::ConfidenceOutOfRange(confidence));
        }
        Ok(Self { graph, confidence })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// Canonical `[EVIDENCE_SUBGRAPH]` document.
    pub fn to_text(&self) -> String {
        super::text::emit_unchecked(&self.graph, super::EmitMode::Evidence, Some(self.confidence))
    }
}
