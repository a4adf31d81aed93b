//! Clustering toolkit built around multi-prototype sampling followed by convex
//! merging of the prototypes (MCKM), together with K-Means, K-Means++,
//! split-merge K-Means and convex-clustering baselines, external validity
//! metrics, synthetic generators and an experiment harness.
//!
//! Numerical routines are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the usual double-precision instantiation.

pub mod cm;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kmeans;
pub mod metrics;
pub mod mps;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod smkm;

pub use dataset::{Dataset, Partition};
pub use error::{Error, Result};
pub use kmeans::{LloydConfig, LloydResult, PrototypeSet, Provenance};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type PrototypeSet64 = PrototypeSet<f64>;
pub type PrototypeSet32 = PrototypeSet<f32>;
