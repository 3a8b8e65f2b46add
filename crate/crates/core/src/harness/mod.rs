//! End-to-end experiments: bias-versus-dimension sweeps, the DnC strength
//! sweep and a federated logistic regression simulation under attack.

pub mod logistic;
mod spec;
mod sweep;
mod train;

pub use spec::{
    AttackKind, ExperimentKind, ExperimentSpec, KnowledgeKind, ProfileKind, ProfileScope, ThresholdMode,
};
pub use sweep::{bias_sweep, dnc_beta_sweep, DncSweepRecord, SweepOutput, SweepRow, SweepTrial};
pub use train::{train_sim, TrainSimResult};

use crate::aggregators::ChunkPlan;
use crate::error::{Error, Result};

/// Predicted bias of the threshold-hiding attack against a chunked spectral
/// aggregator: `√(ε·c)·√(ξ/(ε + (1−ε)²))` with `c` the number of chunks.
pub fn theoretical_bias(eps: f64, d: usize, m: usize, xi: f64) -> Result<f64> {
    let chunks = ChunkPlan::new(d, m)?.len() as f64;
    Ok((eps * chunks).sqrt() * (xi / (eps + (1.0 - eps).powi(2))).sqrt())
}

/// Least-squares line with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ a + b·x` with the centered `R²`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    Error::check_dim(xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::invalid("a line fit needs at least two points"));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("a line fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Least squares through the origin `y ≈ b·x` with the uncentered `R²`.
pub fn linear_fit_through_origin(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    Error::check_dim(xs.len(), ys.len())?;
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("a line fit needs a nonzero x value"));
    }
    let slope = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept: 0.0, r_squared })
}
