use crate::aggregators::{check_fraction, ThresholdConfig};
use crate::error::{Error, Result};
use crate::linalg::{sample_mean, spectral_norm, PowerIteration, SampleSet, WeightVector};

/// Largest `n` accepted by [`oracle_subset_aggregate`].
pub const ORACLE_MAX_N: usize = 20;

/// Result of the exhaustive subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub mean: Vec<f64>,
    /// Indices of the chosen subset, ascending.
    pub subset: Vec<usize>,
    pub spectral_norm: f64,
    /// True when the chosen subset satisfies the threshold `ξ`.
    pub within_threshold: bool,
}

/// Enumerates every subset of size `⌈(1−ε)n⌉` and returns the mean of the one
/// whose covariance has the smallest spectral norm. When that norm is within
/// `ξ` the subset is among those satisfying the threshold; otherwise it is the
/// best available fallback.
pub fn oracle_subset_aggregate(y: &SampleSet, eps: f64, cfg: &ThresholdConfig) -> Result<OracleOutcome> {
    check_fraction(eps)?;
    let n = y.n();
    if n > ORACLE_MAX_N {
        return Err(Error::invalid(format!("subset oracle supports n <= {ORACLE_MAX_N}, got {n}")));
    }
    let size = ((1.0 - eps) * n as f64 - 1e-9).ceil().max(1.0) as u32;
    let power = PowerIteration::default();
    let uniform = WeightVector::uniform(size as usize);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() != size {
            continue;
        }
        let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let norm = spectral_norm(&y.select_rows(&subset)?, &uniform, &power, 0)?;
        if best.as_ref().is_none_or(|(b, _)| norm < *b) {
            best = Some((norm, subset));
        }
    }
    let (norm, subset) = best.expect("at least one subset exists");
    Ok(OracleOutcome {
        mean: sample_mean(&y.select_rows(&subset)?, None)?,
        within_threshold: norm <= cfg.xi(),
        spectral_norm: norm,
        subset,
    })
}
