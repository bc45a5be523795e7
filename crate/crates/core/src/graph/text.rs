use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::model::{Edge, EvidenceSubgraph, MemoryGraph, Node, NodeId};

pub const FULL_HEADER: &str = "[FULL_GRAPH]";
pub const EVIDENCE_HEADER: &str = "[EVIDENCE_SUBGRAPH]";
pub const NODES_MARKER: &str = "<NODES>";
pub const EDGES_MARKER: &str = "<EDGES>";
pub const CONFIDENCE_MARKER: &str = "[CONFIDENCE]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingHeader,
    MissingNodesMarker,
    MissingEdgesMarker,
    MalformedNodeLine,
    MalformedEdgeLine,
    InvalidNodeId,
    DuplicateNode,
    UndeclaredNode,
    EdgeBeforeEdgesMarker,
    UnexpectedLine,
    MissingConfidence,
    InvalidConfidence,
    ConfidenceOutOfRange,
}

/// A parse failure with the 1-based line number it was detected on.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind:?}: {detail}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
    pub detail: String,
}

impl ParseError {
    fn new(line: usize, kind: ParseErrorKind, detail: impl Into<String>) -> Self {
        Self { line, kind, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitMode {
    Full,
    Evidence,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmitError {
    #[error("evidence documents need a confidence value")]
    MissingConfidence,
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
}

pub fn parse_full_graph(text: &str) -> Result<MemoryGraph, ParseError> {
    let (graph, confidence) = parse_document(text, FULL_HEADER, false)?;
    debug_assert!(confidence.is_none());
    Ok(graph)
}

pub fn parse_evidence(text: &str) -> Result<EvidenceSubgraph, ParseError> {
    let (graph, confidence) = parse_document(text, EVIDENCE_HEADER, true)?;
    let confidence = confidence.expect("evidence parse always yields a confidence");
    Ok(EvidenceSubgraph::new(graph, confidence).expect("range checked during parse"))
}

/// Writes the canonical document for `graph`.
pub fn emit(graph: &MemoryGraph, mode: EmitMode, confidence: Option<f64>) -> Result<String, EmitError> {
    if mode == EmitMode::Evidence {
        match confidence {
            None => return Err(EmitError::MissingConfidence),
            Some(c) if !(0.0..=1.0).contains(&c) => return Err(EmitError::ConfidenceOutOfRange(c)),
            Some(_) => {}
        }
    }
    Ok(emit_unchecked(graph, mode, confidence))
}

pub(crate) fn emit_unchecked(graph: &MemoryGraph, mode: EmitMode, confidence: Option<f64>) -> String {
    let mut out = String::new();
    out.push_str(match mode {
        EmitMode::Full => FULL_HEADER,
        EmitMode::Evidence => EVIDENCE_HEADER,
    });
    out.push('\n');
    out.push_str(NODES_MARKER);
    out.push('\n');
    for node in graph.nodes() {
        let _ = writeln!(out, "{}: {}", node.id, node.description);
    }
    out.push_str(EDGES_MARKER);
    out.push('\n');
    for edge in graph.edges() {
        let _ = writeln!(out, "{} -> {}: {}", edge.source, edge.target, edge.relation);
    }
    if mode == EmitMode::Evidence {
        out.push_str(CONFIDENCE_MARKER);
        out.push('\n');
        let _ = writeln!(out, "{}", format_confidence(confidence.unwrap_or(1.0)));
    }
    out
}

/// Shortest round-tripping decimal form, always with a fractional part or
/// exponent (`1.0`, `0.85`, `1e-7`).
pub(crate) fn format_confidence(c: f64) -> String {
    format!("{c:?}")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Header,
    NodesMarker,
    Nodes,
    Edges,
    Confidence,
    Done,
}

fn is_marker(line: &str) -> bool {
    matches!(line, FULL_HEADER | EVIDENCE_HEADER | NODES_MARKER | EDGES_MARKER | CONFIDENCE_MARKER)
}

fn parse_document(
    text: &str,
    header: &str,
    evidence: bool,
) -> Result<(MemoryGraph, Option<f64>), ParseError> {
    use ParseErrorKind::*;

    let mut section = Section::Header;
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut declared: HashSet<String> = HashSet::new();
    let mut confidence = None;
    let mut last_line = 0;

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        last_line = lineno;
        match section {
            Section::Header => {
                if line != header {
                    return Err(ParseError::new(lineno, MissingHeader, format!("expected {header}, found {line:?}")));
                }
                section = Section::NodesMarker;
            }
            Section::NodesMarker => {
                if line != NODES_MARKER {
                    return Err(ParseError::new(lineno, MissingNodesMarker, format!("expected {NODES_MARKER}, found {line:?}")));
                }
                section = Section::Nodes;
            }
            Section::Nodes => {
                if line == EDGES_MARKER {
                    section = Section::Edges;
                    continue;
                }
                if is_marker(line) {
                    return Err(ParseError::new(lineno, UnexpectedLine, format!("marker {line} inside {NODES_MARKER}")));
                }
                if let Some((lhs, _)) = line.split_once(" -> ") {
                    if NodeId::is_valid(lhs) {
                        return Err(ParseError::new(lineno, EdgeBeforeEdgesMarker, line));
                    }
                }
                let Some((id, description)) = line.split_once(": ") else {
                    return Err(ParseError::new(lineno, MalformedNodeLine, line));
                };
                let id = NodeId::new(id).map_err(|e| ParseError::new(lineno, InvalidNodeId, e.to_string()))?;
                let description = description.trim();
                if description.is_empty() {
                    return Err(ParseError::new(lineno, MalformedNodeLine, line));
                }
                if !declared.insert(id.as_str().to_string()) {
                    return Err(ParseError::new(lineno, DuplicateNode, id.to_string()));
                }
                let node = Node::new(id, description)
                    .map_err(|e| ParseError::new(lineno, MalformedNodeLine, e.to_string()))?;
                nodes.push(node);
            }
            Section::Edges => {
                if evidence && line == CONFIDENCE_MARKER {
                    section = Section::Confidence;
                    continue;
                }
                if is_marker(line) {
                    return Err(ParseError::new(lineno, UnexpectedLine, format!("marker {line} inside {EDGES_MARKER}")));
                }
                edges.push(parse_edge_line(line, lineno, &declared)?);
            }
            Section::Confidence => {
                let value: f64 = line
                    .parse()
                    .map_err(|_| ParseError::new(lineno, InvalidConfidence, line))?;
                if !value.is_finite() {
                    return Err(ParseError::new(lineno, InvalidConfidence, line));
                }
                if !(0.0..=1.0).contains(&value) {
                    return Err(ParseError::new(lineno, ConfidenceOutOfRange, line));
                }
                confidence = Some(value);
                section = Section::Done;
            }
            Section::Done => {
                return Err(ParseError::new(lineno, UnexpectedLine, line));
            }
        }
    }

    let eof = last_line + 1;
    match section {
        Section::Header => return Err(ParseError::new(eof, MissingHeader, "empty document")),
        Section::NodesMarker => {
            return Err(ParseError::new(eof, MissingNodesMarker, "document ends before <NODES>"))
        }
        Section::Nodes => return Err(ParseError::new(eof, MissingEdgesMarker, "document ends before <EDGES>")),
        Section::Edges if evidence => {
            return Err(ParseError::new(eof, MissingConfidence, "document ends before [CONFIDENCE]"))
        }
        Section::Confidence => return Err(ParseError::new(eof, MissingConfidence, "no value after [CONFIDENCE]")),
        Section::Edges | Section::Done => {}
    }

    // Ids and endpoints were checked line by line above.
    let graph = MemoryGraph::new(nodes, edges).map_err(|e| ParseError::new(eof, UndeclaredNode, e.to_string()))?;
    Ok((graph, confidence))
}

fn parse_edge_line(line: &str, lineno: usize, declared: &HashSet<String>) -> Result<Edge, ParseError> {
    use ParseErrorKind::*;
    let Some((source, rest)) = line.split_once(" -> ") else {
        return Err(ParseError::new(lineno, MalformedEdgeLine, line));
    };
    let Some((target, relation)) = rest.split_once(": ") else {
        return Err(ParseError::new(lineno, MalformedEdgeLine, line));
    };
    let relation = relation.trim();
    if relation.is_empty() {
        return Err(ParseError::new(lineno, MalformedEdgeLine, line));
    }
    let source = NodeId::new(source).map_err(|e| ParseError::new(lineno, InvalidNodeId, e.to_string()))?;
    let target = NodeId::new(target).map_err(|e| ParseError::new(lineno, InvalidNodeId, e.to_string()))?;
    for endpoint in [&source, &target] {
        if !declared.contains(endpoint.as_str()) {
            return Err(ParseError::new(lineno, UndeclaredNode, endpoint.to_string()));
        }
    }
    Edge::new(source, target, relation).map_err(|e| ParseError::new(lineno, MalformedEdgeLine, e.to_string()))
}
