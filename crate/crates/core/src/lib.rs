//! Core algorithms for fitting and validating Huff gravity market-share models
//! against transactional patronage data.
//!
//! Everything here is pure computation over in-memory collections and builds
//! without `std` (an allocator is required). File formats, the synthetic city
//! generator and the command line live in the `huffval` crate.
//!
//! The main pieces:
//!
//! - [`data`]: transaction/customer/merchant records, filtering, the
//!   district × category partition and visit-count matrices.
//! - [`geo`]: great-circle distances and the customer anchor policy.
//! - [`huff`]: utilities, choice probabilities, the correlation objective and
//!   the two estimators (swarm and log-linear).
//! - [`optimize`]: a seeded global-best particle swarm over a box.
//! - [`indicators`]: district diversity and inequality features.
//! - [`regress`]: standardized OLS with coefficient inference.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod geo;
pub mod huff;
pub mod indicators;
mod linalg;
pub mod mobility;
pub mod optimize;
pub mod regress;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

/// Shared, cheaply clonable identifier (customer, merchant, district, category).
pub type Id = alloc::sync::Arc<str>;
