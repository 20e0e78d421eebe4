//! Unified action-data toolkit for end-effector manipulation corpora.
//!
//! The crate turns heterogeneous robot demonstration data into one training
//! representation and provides the numerics around it:
//!
//! - [`rotation`]: SO(3) conversions between Euler angles, quaternions,
//!   rotation matrices, and canonical rotation vectors.
//! - [`model`]: the episode/frame domain types, validation, and corpus
//!   manifests.
//! - [`schema`] / [`ingest`]: action-layout descriptors and conversion of
//!   raw source documents into episode records.
//! - [`clean`]: the filtering pipeline (instruction, subtask alignment,
//!   visual statistics, action plausibility).
//! - [`standardize`]: absolute-pose to delta-action conversion, single-arm
//!   padding into the dual-arm layout, chunking, and normalization.
//! - [`shard`]: the binary chunk-shard codec and its JSON sidecar manifest.
//! - [`sampler`]: stratified trajectory sampling with concentration
//!   diagnostics (Gini, Lorenz, coverage, rank-probability).
//! - [`aml`]: a flow-matching action model trained to predict the clean
//!   action chunk, with a velocity-prediction baseline, analytic gradients,
//!   and a binary checkpoint format.
//! - [`rng`]: counter-based deterministic randomness keyed by
//!   `(seed, stream, counter)`; every randomized path in the crate draws
//!   through it so identical configurations reproduce bitwise.

pub mod aml;
pub mod clean;
pub mod ingest;
pub mod model;
pub mod rng;
pub mod rotation;
pub mod sampler;
pub mod schema;
pub mod shard;
pub mod standardize;
pub mod toy;
