//! Each chapter of the guide in `book/src` becomes the doc comment of a module
//! here, so `cargo test --doc` compiles and runs its listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("../../../book/src/unified_space.md")]
pub mod unified_space {}
#[doc = include_str!("../../../book/src/retriever.md")]
pub mod retriever {}
#[doc = include_str!("../../../book/src/fusion_metrics.md")]
pub mod fusion_metrics {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
