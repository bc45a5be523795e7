//! Memory graphs, evidence subgraphs and their external formats.
//!
//! Two line-oriented documents are supported. A full graph:
//!
//! ```text
//! [FULL_GRAPH]
//! <NODES>
//! N1: description
//! <EDGES>
//! N1 -> N2: relation
//! ```
//!
//! and an evidence subgraph, which adds a trailing confidence section:
//!
//! ```text
//! [EVIDENCE_SUBGRAPH]
//! <NODES>
//! N1: description
//! <EDGES>
//! N1 -> N2: relation
//! [CONFIDENCE]
//! 0.85
//! ```
//!
//! Both are bit-exact contracts: [`emit`] writes the canonical form and
//! [`parse_full_graph`] / [`parse_evidence`] read it back unchanged.

mod linear;
mod model;
mod text;
mod verify;

pub use linear::{
    delinearize, delinearize_parts, edge_tokens, linearize, node_tokens, split_words,
    GraphTokenSequence, LinearizeError,
};
pub use model::{Edge, EvidenceSubgraph, GraphError, MemoryGraph, Node, NodeId};
pub use text::{
    emit, parse_evidence, parse_full_graph, EmitError, EmitMode, ParseError, ParseErrorKind,
    CONFIDENCE_MARKER, EDGES_MARKER, EVIDENCE_HEADER, FULL_HEADER, NODES_MARKER,
};
pub(crate) use text::format_confidence;
pub use verify::{verify_subset, VerificationReport, Violation, ViolationKind};
