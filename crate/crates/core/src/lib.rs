//! Decentralized online gradient descent over a fixed communication graph.
//!
//! Every node of an undirected network holds a local model. Each round it
//! suffers a loss on a freshly revealed sample, computes the gradient at its
//! current model, then replaces its model by a weighted average of its
//! neighbors' models (weights from a doubly stochastic mixing matrix) minus a
//! gradient step. This crate contains the pure parts of that pipeline:
//!
//! - [`topology`]: ring, complete, disconnected, random k-out and
//!   Watts–Strogatz graphs.
//! - [`mixing`]: doubly stochastic mixing matrices, Sinkhorn balancing and
//!   the spectral quantity `rho = ||W - 11^T/n||_2`.
//! - [`losses`]: the L2-regularized logistic loss and its gradient.
//! - [`datagen`]: counter-based synthetic streams mixing adversarial and
//!   stochastic feature components.
//! - [`ingest`]: LIBSVM parsing, normalization, k-means and the
//!   stochastic/adversarial split of a real dataset into node streams.
//! - [`engine`]: the decentralized round, the centralized and local
//!   baselines, and the closed-form learning rate.
//! - [`metrics`]: average loss, consensus error, static regret against the
//!   offline comparator, empirical constants and the regret bound.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, configuration and
//! the thread pool live in the `dogsim` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod datagen;
pub mod engine;
pub mod fmt;
pub mod ingest;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod mixing;
pub mod rng;
pub mod topology;

pub use datagen::SyntheticSpec;
pub use engine::{Algorithm, Executor, NetworkState, RunArtifact, RunConfig, SampleSource, Sequential};
pub use ingest::{Dataset, NodeStreams};
pub use linalg::Matrix;
pub use losses::{LabeledSample, LossSpec};
pub use metrics::{BoundParams, MetricsRecord};
pub use mixing::{MixingMatrix, MixingScheme};
pub use topology::{Graph, TopologyKind};
