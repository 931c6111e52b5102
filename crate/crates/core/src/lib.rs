//! Clustering, motif discovery, forecasting and lifecycle staging for
//! per-entity weekly purchase series.
//!
//! The pipeline runs in the following order:
//!
//! 1. [`ingest`] parses a transaction log and buckets it into ISO weeks.
//! 2. [`distances`] builds pairwise dissimilarity matrices under ten measures.
//! 3. [`clustering`] partitions each matrix (hierarchical, PAM, fuzzy c-medoids).
//! 4. [`validity`] scores the scheme grid and selects the winner.
//! 5. [`embed`] lays the population out in 2-D with t-SNE.
//! 6. [`motif`] mines repeated subsequences from cluster centroids.
//! 7. [`forecast`] fits ARIMA models to centroids and predicts ahead.
//! 8. [`lifecycle`] stages every cluster and renders the CLV-FEM report.
//!
//! [`pipeline`] wires these together behind the `tsclv` binary.

pub mod clustering;
pub mod distances;
pub mod embed;
mod error;
pub mod forecast;
pub mod ingest;
pub mod lifecycle;
pub mod motif;
pub mod pipeline;
pub mod rng;
pub mod svg;
pub mod validity;

pub use error::{Error, Result};
