//! Locating overlapping marks in binarized scatter images.
//!
//! Each connected foreground region is explained as the union of `n` marks
//! of one marker type, drawn at the centroids of an `n`-cluster k-means
//! partition of the region's pixels. The `(n, marker)` pair minimizing a
//! symmetric-difference loss with count and size priors is found by an
//! adaptive simulated annealing.
//!
//! The crate also ships a synthetic benchmark generator, the
//! assignment-cost (ACB) score and a Gaussian-filter peak-picking baseline.

pub mod annealer;
pub mod assignment;
pub mod baseline;
pub mod benchgen;
pub mod clustering;
pub mod error;
pub mod locator;
pub mod metric;
pub mod objective;
pub mod par;
pub mod raster;
pub mod revis;
pub mod seed;

pub use error::{Error, Result};
