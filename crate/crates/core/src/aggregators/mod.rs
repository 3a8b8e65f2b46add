//! Robust mean aggregators: weak coordinate-wise baselines, the spectral
//! meta-loop with its FILTERING and NO-REGRET steps, the chunked realization for
//! high dimensions, the DnC aggregator and a brute-force subset oracle.

mod chunked;
mod dnc;
mod meta;
mod oracle;
mod weak;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use chunked::{chunked_aggregate, ChunkOutcome, ChunkPlan, ChunkedOutcome};
pub use dnc::{dnc_aggregate, default_dims_sampled, DncOutcome};
pub use meta::{
    filtering_step, kl_project_capped_simplex, meta_aggregate, no_regret_step, AggregationOutcome, Subroutine,
};
pub use oracle::{oracle_subset_aggregate, OracleOutcome, ORACLE_MAX_N};
pub use weak::{coordinate_median, coordinate_trimmed_mean, krum};

use crate::error::{Error, Result};
use crate::linalg::{sample_mean, SampleSet};

/// The default threshold multiplier `k = √20`.
pub const DEFAULT_K: f64 = 4.472_135_954_999_58;

/// Number of corrupted samples `⌈n·ε⌉`, robust to products such as
/// `0.1 * 30 = 3.0000000000000004`.
pub fn corrupted_count(n: usize, eps: f64) -> usize {
    let raw = (n as f64 * eps - 1e-9).ceil();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(n)
    }
}

pub(crate) fn check_fraction(eps: f64) -> Result<()> {
    if (0.0..0.5).contains(&eps) {
        Ok(())
    } else {
        Err(Error::invalid(format!("corruption fraction must lie in [0, 0.5), got {eps}")))
    }
}

/// The variance threshold `ξ = k·σ_max²` used by the spectral aggregators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdConfig {
    sigma_max_sq: f64,
    k: f64,
    xi: f64,
}

impl ThresholdConfig {
    pub const MAX_K: f64 = 9.0;

    /// Builds a threshold with `√20 ≤ k ≤ 9` and `σ_max² > 0`.
    pub fn new(sigma_max_sq: f64, k: f64) -> Result<Self> {
        if !(sigma_max_sq.is_finite() && sigma_max_sq > 0.0) {
            return Err(Error::invalid(format!("sigma_max_sq must be positive and finite, got {sigma_max_sq}")));
        }
        if !(DEFAULT_K * (1.0 - 1e-12)..=Self::MAX_K).contains(&k) {
            return Err(Error::invalid(format!("k must lie in [sqrt(20), 9], got {k}")));
        }
        Ok(Self { sigma_max_sq, k, xi: k * sigma_max_sq })
    }

    pub fn with_default_k(sigma_max_sq: f64) -> Result<Self> {
        Self::new(sigma_max_sq, DEFAULT_K)
    }

    pub fn sigma_max_sq(&self) -> f64 {
        self.sigma_max_sq
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// Aggregator selection used by the harness and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregator {
    Mean,
    Median,
    TrimmedMean,
    Krum,
    Filtering,
    NoRegret,
    Dnc,
}

impl Aggregator {
    pub const ALL: [Aggregator; 7] = [
        Aggregator::Mean,
        Aggregator::Median,
        Aggregator::TrimmedMean,
        Aggregator::Krum,
        Aggregator::Filtering,
        Aggregator::NoRegret,
        Aggregator::Dnc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
            Aggregator::TrimmedMean => "trimmed",
            Aggregator::Krum => "krum",
            Aggregator::Filtering => "filtering",
            Aggregator::NoRegret => "noregret",
            Aggregator::Dnc => "dnc",
        }
    }

    /// Runs the aggregator. Spectral aggregators are chunked with chunk size `m`;
    /// the others see the full dimension.
    pub fn run(self, y: &SampleSet, eps: f64, cfg: &ThresholdConfig, m: usize, seed: u64) -> Result<AggregateReport> {
        let plain = |mean: Vec<f64>| AggregateReport { mean, chunks: Vec::new() };
        match self {
            Aggregator::Mean => sample_mean(y, None).map(plain),
            Aggregator::Median => Ok(plain(coordinate_median(y))),
            Aggregator::TrimmedMean => coordinate_trimmed_mean(y, eps).map(plain),
            Aggregator::Krum => krum(y, eps).map(plain),
            Aggregator::Dnc => dnc_aggregate(y, eps, default_dims_sampled(y.d()), seed).map(|o| plain(o.mean)),
            Aggregator::Filtering | Aggregator::NoRegret => {
                let sub = if self == Aggregator::Filtering { Subroutine::Filtering } else { Subroutine::NoRegret };
                let out = chunked_aggregate(y, m, eps, cfg, sub, seed)?;
                Ok(AggregateReport { mean: out.mean, chunks: out.chunks })
            }
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Aggregator::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown aggregator `{s}`")))
    }
}

/// Output of [`Aggregator::run`]: the aggregate and, for chunked spectral
/// aggregators, one diagnostic record per chunk.
#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub mean: Vec<f64>,
    pub chunks: Vec<ChunkOutcome>,
}
