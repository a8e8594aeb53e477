//! k-mer somatic-candidate pipeline on a simulated disaggregated NVMe fabric.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloom;
pub mod error;
pub mod fabric;
pub mod kmer;
pub mod kv;
pub mod memext;
pub mod orchestrator;
pub mod stages;
pub mod synth;
pub mod traceanalysis;

pub use error::{Error, Result};
