//! Byzantine-robust mean aggregation and attacks on it.
//!
//! The crate provides weak coordinate-wise aggregators, spectral strong
//! aggregators (a thresholded meta-loop with FILTERING or NO-REGRET steps and
//! its chunked high-dimensional realization), a DnC aggregator, attacks that
//! exploit chunking to accumulate bias across dimensions, a planted instance
//! linking robust aggregation to maximum-variance directions, synthetic data
//! generators and an experiment harness.
//!
//! All randomness flows from explicit `u64` seeds, and parallel code paths
//! return results identical to sequential execution.

pub mod aggregators;
pub mod attacks;
pub mod datagen;
pub mod error;
pub mod format;
pub mod harness;
pub mod linalg;
pub mod reduction;
pub mod rng;

pub use aggregators::{
    chunked_aggregate, meta_aggregate, AggregateReport, AggregationOutcome, Aggregator, ChunkPlan, ChunkedOutcome,
    Subroutine, ThresholdConfig, DEFAULT_K,
};
pub use attacks::{AttackConfig, CorruptionReport, Knowledge};
pub use datagen::VarianceProfile;
pub use error::{Error, Result};
pub use harness::ExperimentSpec;
pub use linalg::{EigenPair, PowerIteration, SampleSet, WeightVector};
pub use reduction::EcInstance;
