//! Std companion to `huffval-core`: CSV ingestion and export, the synthetic
//! city generator, run configuration, and the batch pipeline behind the
//! `huffval` command line.

pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
