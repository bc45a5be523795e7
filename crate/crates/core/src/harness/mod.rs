//! Corpus I/O, synthetic data, configuration, checkpoints and the stage
//! functions the command-line tool calls.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod synth;

pub use corpus::{load_corpus, parse_corpus, write_corpus, CorpusError, CorpusInstance};
pub use synth::{generate_synthetic_corpus, SynthError, SynthParams, World};
