//! Reference hyperbolic collaborative-filtering model.
//!
//! ID embeddings are tangent vectors at the hyperboloid origin. A forward
//! pass sums parameter-free mean-propagation layers in the tangent space and
//! maps the result onto the manifold with `exp0`. Items are ranked for a user
//! by negative (squared) hyperbolic distance.
//!
//! Every loss here returns exact gradients. They are expressed either with
//! respect to the ambient coordinates of the manifold points (the
//! `*_accumulate` functions used by the trainer) or with respect to the
//! aggregated tangent rows (the public loss functions).

mod graph;
mod loss;
mod sampling;
mod table;

pub use graph::{aggregate, aggregate_backward, forward, Adjacency, Representation};
pub use loss::{
    contrastive_loss, margin_loss, score, ContrastiveOutcome, MarginOutcome, MarginSpec,
};
pub(crate) use loss::{contrastive_accumulate, margin_accumulate};
pub use sampling::sample_negative;
pub use table::{EmbeddingTable, Role};

/// Default number of propagation layers.
pub const DEFAULT_LAYERS: usize = 2;

/// Default std of Gaussian-initialized ID embeddings.
pub const INIT_STD: f64 = 0.1;
