//! Cluster counts for multiplex images from dense bins of a learned embedding.
//!
//! A stacked sparse autoencoder maps every pixel of a multiplex image into the
//! unit cube `[0, 1]^3`. Because the bottleneck is sigmoid-bounded the cube can
//! be split into a fixed grid of bins for any input. Bins that hold far more
//! points than the bulk of the grid (upper-fence outliers of the bin counts)
//! mark dense regions, and their number is used as the cluster count for
//! k-means on the embedding.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, timing and the
//! command-line interface live in the `emdens` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autoencoder;
pub mod clustering;
pub mod data;
pub mod density;
mod error;
pub mod evaluation;
mod matrix;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::Matrix;
