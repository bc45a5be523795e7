//! Max-pool fusion of aligned memories and retrieval from the fused vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EvidenceSubgraph, MemoryGraph};
use crate::retriever::{generate_subgraph, QueryEmbedding, RetrieverError, RetrieverModel, Vocabulary};
use crate::seed::fnv1a64_extend;
use crate::space::{align_forward, AlignmentModule, MemoryState, ParadigmId, SpaceError, UnifiedVector};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("nothing to fuse")]
    Empty,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("no alignment module for paradigm {0}")]
    MissingModule(ParadigmId),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
}

/// One fused input: its paradigm, when known, and a digest of its source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub paradigm: Option<ParadigmId>,
    /// FNV-1a of the source values' little-endian bits, as 16 hex digits.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedMemory {
    pub values: UnifiedVector,
    pub provenance: Vec<Provenance>,
}

fn digest(values: &[f64]) -> String {
    let h = values.iter().fold(0xcbf2_9ce4_8422_2325, |h, v| fnv1a64_extend(h, &v.to_le_bytes()));
    format!("{h:016x}")
}

fn max_pool(vectors: &[&[f64]]) -> Result<Vec<f64>, FusionError> {
    let first = vectors.first().ok_or(FusionError::Empty)?;
    let mut out = first.to_vec();
    for (index, v) in vectors.iter().enumerate().skip(1) {
        if v.len() != out.len() {
            return Err(FusionError::DimensionMismatch { index, expected: out.len(), found: v.len() });
        }
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            if x > *o {
                *o = x;
            }
        }
    }
    Ok(out)
}

/// Elementwise maximum of `vectors`.
pub fn fuse_max(vectors: &[UnifiedVector]) -> Result<FusedMemory, FusionError> {
    let slices: Vec<&[f64]> = vectors.iter().map(|v| v.values()).collect();
    let values = UnifiedVector(max_pool(&slices)?);
    let provenance = vectors.iter().map(|v| Provenance { paradigm: None, digest: digest(v.values()) }).collect();
    Ok(FusedMemory { values, provenance })
}

/// Projects each state with its paradigm's module and fuses the results.
/// Several states may share a paradigm.
pub fn fuse_states(
    states: &[MemoryState],
    modules: &BTreeMap<ParadigmId, AlignmentModule>,
) -> Result<FusedMemory, FusionError> {
    if states.is_empty() {
        return Err(FusionError::Empty);
    }
    let mut aligned = Vec::with_capacity(states.len());
    for s in states {
        let module = modules.get(&s.paradigm).ok_or_else(|| FusionError::MissingModule(s.paradigm.clone()))?;
        aligned.push(align_forward(module, s)?);
    }
    let mut fused = fuse_max(&aligned)?;
    for (p, s) in fused.provenance.iter_mut().zip(states) {
        *p = Provenance { paradigm: Some(s.paradigm.clone()), digest: digest(&s.raw) };
    }
    Ok(fused)
}

/// Fuses `states` and decodes an evidence subgraph of `full_graph` from the
/// fused vector.
pub fn retrieve_fused(
    states: &[MemoryState],
    modules: &BTreeMap<ParadigmId, AlignmentModule>,
    retriever: &RetrieverModel,
    vocab: &Vocabulary,
    full_graph: &MemoryGraph,
    q: &QueryEmbedding,
    max_len: usize,
) -> Result<EvidenceSubgraph, FusionError> {
    let fused = fuse_states(states, modules)?;
    Ok(generate_subgraph(retriever, vocab, full_graph, q, &fused.values, max_len)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uv(v: &[f64]) -> UnifiedVector {
        UnifiedVector(v.to_vec())
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(fuse_max(&[uv(&[1.0, 2.0]), uv(&[3.0, 0.0])]).unwrap().values, uv(&[3.0, 2.0]));
        assert_eq!(fuse_max(&[uv(&[-1.0, -2.0]), uv(&[-3.0, -1.0])]).unwrap().values, uv(&[-1.0, -1.0]));
        let single = fuse_max(&[uv(&[0.5, -7.0])]).unwrap();
        assert_eq!(single.values, uv(&[0.5, -7.0]));
        assert_eq!(single.provenance.len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(fuse_max(&[]), Err(FusionError::Empty)));
        assert!(matches!(
            fuse_max(&[uv(&[1.0]), uv(&[1.0, 2.0])]),
            Err(FusionError::DimensionMismatch { index: 1, expected: 1, found: 2 })
        ));
        let state = MemoryState { paradigm: ParadigmId::unregistered("latent-sim"), raw: vec![0.0] };
        assert!(matches!(fuse_states(&[state], &BTreeMap::new()), Err(FusionError::MissingModule(_))));
    }

    #[test]
    fn provenance_keeps_every_input() {
        let f = fuse_max(&[uv(&[1.0]), uv(&[1.0]), uv(&[0.0])]).unwrap();
        assert_eq!(f.provenance.len(), 3);
        assert_eq!(f.provenance[0], f.provenance[1]);
        assert_ne!(f.provenance[0], f.provenance[2]);
    }
}
