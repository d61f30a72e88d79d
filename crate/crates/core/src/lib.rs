//! Hyperbolic collaborative filtering with LLM-derived hierarchies.
//!
//! The crate covers the full path from raw reviews to evaluated rankings:
//!
//! - [`corpus`]: rating filter, k-core pruning, 8:1:1 split, tag graph.
//! - [`augment`]: item/user prompts, response parsing, text encoders, with
//!   offline mocks.
//! - [`geometry`]: hyperboloid and Poincaré kernels.
//! - [`model`]: tangent-space ID embeddings, mean propagation, margin and
//!   contrastive losses with exact gradients.
//! - [`moe`]: softmax-gated mixture of affine experts that maps semantic
//!   embeddings into the collaborative tangent space.
//! - [`pipeline`]: the two-phase trainer (MoE against a frozen model, then
//!   joint user-item / tag-item / contrastive training).
//! - [`eval`]: Recall/NDCG, long-tail groups, convergence accounting, Ward
//!   linkage.
//! - [`cli`]: the `hyperrec` command-line front end.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod moe;
pub mod optim;
pub mod pipeline;

pub use error::{Error, Result};
