use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::model::{EvidenceSubgraph, MemoryGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UnknownNode,
    DescriptionMismatch,
    UnknownEdge,
    RelationMismatch,
    DanglingEndpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// The offending line as it appears in the subgraph document.
    pub element: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub accepted: bool,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Checks that every node of `sub` exists in `full` with the same id and
/// description, and every edge with the same source, target and relation.
///
/// Comparison is exact string equality. Edge membership is existence only:
/// repeating an edge in `sub` is fine as long as `full` has it once.
pub fn verify_subset(sub: &EvidenceSubgraph, full: &MemoryGraph) -> VerificationReport {
    verify_graph_subset(&sub.graph, full)
}

fn verify_graph_subset(sub: &MemoryGraph, full: &MemoryGraph) -> VerificationReport {
    let descriptions: HashMap<&str, &str> = full
        .nodes()
        .iter()
        .map(|n| (n.id.as_str(), n.description.as_str()))
        .collect();
    let pairs: HashSet<(&str, &str)> = full
        .edges()
        .iter()
        .map(|e| (e.source.as_str(), e.target.as_str()))
        .collect();
    let triples: HashSet<(&str, &str, &str)> = full
        .edges()
        .iter()
        .map(|e| (e.source.as_str(), e.target.as_str(), e.relation.as_str()))
        .collect();

    let mut violations = Vec::new();
    for node in sub.nodes() {
        match descriptions.get(node.id.as_str()) {
            None => violations.push(Violation { kind: ViolationKind::UnknownNode, element: node.line() }),
            Some(desc) if *desc != node.description => {
                violations.push(Violation { kind: ViolationKind::DescriptionMismatch, element: node.line() })
            }
            Some(_) => {}
        }
    }
    for edge in sub.edges() {
        let (s, t, r) = (edge.source.as_str(), edge.target.as_str(), edge.relation.as_str());
        let kind = if !descriptions.contains_key(s) || !descriptions.contains_key(t) {
            Some(ViolationKind::DanglingEndpoint)
        } else if !pairs.contains(&(s, t)) {
            Some(ViolationKind::UnknownEdge)
        } else if !triples.contains(&(s, t, r)) {
            Some(ViolationKind::RelationMismatch)
        } else {
            None
        };
        if let Some(kind) = kind {
            violations.push(Violation { kind, element: edge.line() });
        }
    }
    VerificationReport { accepted: violations.is_empty(), violations }
}
