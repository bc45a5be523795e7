//! Plug-and-play agent memory retrieval over a unified memory space.
//!
//! The crate is organized the same way data flows through the engine:
//!
//! - [`graph`]: memory graphs and evidence subgraphs, their strict text
//!   formats, the subset verifier and the token linearization.
//! - [`space`]: paradigm registry, synthetic paradigm encoders and the
//!   feed-forward alignment modules that project memory states into the
//!   unified space.
//! - [`align`]: contrastive alignment of a target paradigm against the frozen
//!   anchor module.
//! - [`retriever`]: the generative subgraph retriever, its distillation
//!   objective and grammar/subset constrained decoding.
//! - [`fusion`]: max-pool fusion of aligned memories and fused retrieval.
//! - [`metrics`]: answer-quality and memory-efficiency metrics.
//! - [`harness`]: corpora, synthetic data, checkpoints, configuration and the
//!   end-to-end pipeline stages driven by the CLI.

pub mod align;
pub mod fusion;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod retriever;
pub mod seed;
pub mod space;
pub mod tensor;

pub use graph::{
    delinearize, emit, linearize, parse_evidence, parse_full_graph, verify_subset, Edge,
    EmitMode, EvidenceSubgraph, GraphTokenSequence, MemoryGraph, Node, NodeId, VerificationReport,
    Violation, ViolationKind,
};
pub use retriever::vocab::{Vocabulary, VocabMode};
pub use space::{AlignmentModule, MemoryState, ParadigmId, ParadigmRegistry, UnifiedVector};
