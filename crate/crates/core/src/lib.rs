//! Differentially private synthetic data with plausible deniability.
//!
//! The crate learns a Bayesian-network generative model from a categorical
//! dataset under differential privacy, transforms real seed records into
//! synthetic candidates, and releases only candidates that pass a
//! plausible-deniability privacy test. The [`oracle`] module computes exact
//! release probabilities on small universes and checks the differential
//! privacy bound of the randomized test against them.
//!
//! Module map:
//!
//! * [`data`]: schema, CSV ingestion, bucketization, dataset partitioning.
//! * [`structure`]: noisy entropies and greedy correlation-based feature
//!   selection producing an acyclic dependency graph.
//! * [`params`]: lazily learned, noised Dirichlet-multinomial conditional tables.
//! * [`synthesis`]: seed-based synthesis and generation probabilities.
//! * [`privacy`]: privacy tests and the release mechanism.
//! * [`accounting`]: (ε, δ) budget arithmetic.
//! * [`oracle`]: exact verification on enumerable universes.
//! * [`metrics`]: total-variation distances and model error.
//! * [`cli`]: configuration, artifacts and the `pdsynth` subcommands.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod cli;
pub mod data;
mod error;
pub mod kv;
pub mod metrics;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod privacy;
pub mod structure;
pub mod synthesis;

pub use error::{Error, Result};
