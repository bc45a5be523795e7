//! The unified memory space and the maps into it.
//!
//! Heterogeneous memory systems are simulated by [`ParadigmRegistry`]: each
//! paradigm is a fixed random nonlinear encoder of a shared per-instance
//! content vector. An [`AlignmentModule`] projects a paradigm's raw state into
//! the unified space of dimension `D_s`.

mod module;
mod paradigm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use module::{align_forward, align_gradients, Activation, AlignGrads, AlignmentModule};
pub use paradigm::{
    encode_state, segment_range, InstanceContent, MemoryState, ParadigmEntry, ParadigmId, ParadigmRegistry,
    DEFAULT_PARADIGMS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("paradigm {0:?} is already registered")]
    DuplicateParadigm(String),
    #[error("paradigm {0:?} is not registered")]
    UnknownParadigm(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("segment {index} is out of range for {count} segments")]
    MaskOutOfRange { index: usize, count: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A point in the unified memory space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedVector(pub Vec<f64>);

impl UnifiedVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(SpaceError::NonFinite("unified vector"))
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}
