//! Quality metrics for unpaired image-to-image translation output.
//!
//! The crate evaluates how convincing generator output is relative to real
//! imagery, tracked per training epoch:
//!
//! - [`ingest`]: dataset manifests, image decoding, and preprocessing.
//! - [`embed`]: pluggable embedders (ONNX model or seeded projection) that
//!   turn tiles into feature matrices, plus a binary feature cache.
//! - [`metrics`]: Fréchet distance between Gaussian fits (FID/FRD), cosine
//!   embedding distance (CRD), and a round-trip L1 estimator.
//! - [`cst`]: a classifier two-sample test built on a from-scratch random
//!   forest, scored by repeated cross-validated log loss.
//! - [`analysis`]: PCA pair-plot exports with kernel density curves,
//!   band-wise L1 artifact maps, and per-epoch metric series with trend
//!   statistics.
//! - [`fixtures`]: deterministic synthetic data generators and brute-force
//!   oracles used by the test suite.
//!
//! All randomness flows through the counter-based generator in [`rng`], so
//! every result is a pure function of its inputs and seeds.

pub mod analysis;
pub mod cst;
pub mod embed;
pub mod fixtures;
pub mod ingest;
pub mod metrics;
pub mod rng;
