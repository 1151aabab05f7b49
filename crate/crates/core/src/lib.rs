pub mod allele_stats;
pub mod error;
pub mod measure;
pub mod partitions;
pub mod poisson;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod wf_sim;
pub mod wreath;

pub use error::{EsfError, Result};
