//! Generative subgraph retriever: a small recurrent token model conditioned
//! on a query embedding and a unified memory vector, trained by distillation
//! against a smoothed gold teacher and decoded under graph constraints.

pub mod decode;
pub mod distill;
pub mod model;
pub mod query;
pub mod train;
pub mod vocab;

use thiserror::Error;

use crate::graph::{LinearizeError, ViolationKind};

pub use decode::{generate_subgraph, generate_tokens};
pub use distill::{distill_loss, teacher_distribution, DistillConfig, DistillLoss};
pub use model::{RetrieverDims, RetrieverModel, SequenceForward};
pub use query::{QueryEmbedder, QueryEmbedding};
pub use train::{train_retriever, DistillInstance, DistillReport};
pub use vocab::{TokenId, VocabMode, Vocabulary};

#[derive(Debug, Error)]
pub enum RetrieverError {
    #[error("token id {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { token: vocab::TokenId, vocab: usize },
    #[error("{what} has dimension {found}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("prefix must start with <bos>")]
    MissingBos,
    #[error("step {step} is out of range for a sequence of {len} tokens")]
    StepOutOfRange { step: usize, len: usize },
    #[error("step counts differ: teacher {teacher}, student {student}, gold {gold}")]
    LengthMismatch { teacher: usize, student: usize, gold: usize },
    #[error("teacher distribution at step {step} sums to {sum}")]
    NotNormalized { step: usize, sum: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("instance {id}: gold subgraph fails verification ({kinds:?})")]
    Unverified { id: String, kinds: Vec<ViolationKind> },
    #[error("instance {id}: {msg}")]
    Instance { id: String, msg: String },
    #[error("parameter shape: {0}")]
    Shape(String),
    #[error("no legal token at decoding step {0}")]
    DeadEnd(usize),
    #[error("decoding reached max_len {0} without <eos>")]
    MaxLenExhausted(usize),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
}
