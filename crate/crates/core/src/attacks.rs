//! Poisoning attacks on robust aggregators: the dimension-exploiting attack
//! that hides inside the variance threshold (single chunk, chunked, full or
//! partial knowledge), the binary-direction attack on DnC, a sign-flip baseline
//! and the bias metric.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregators::{check_fraction, corrupted_count, ChunkPlan, DEFAULT_K};
use crate::error::{Error, Result};
use crate::linalg::{norm, normalize, sample_mean, SampleSet};
use crate::rng::Stream;

/// What the attacker can observe of the benign samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Knowledge {
    Full,
    /// Only the listed benign samples are visible.
    Partial(Vec<usize>),
}

/// How the attacker sets the benign variance `σ_max²` in the magnitude formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    /// `σ_max² = ξ/√20`.
    FromXi,
    Explicit(f64),
}

/// Which samples are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSelection {
    /// The first `⌈n·ε⌉` indices.
    First,
    /// A seeded uniformly random subset of size `⌈n·ε⌉`.
    Random,
}

/// Parameters of the threshold-hiding attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub eps: f64,
    /// Variance threshold the defender applies per chunk.
    pub xi: f64,
    pub knowledge: Knowledge,
    /// Slack `δ ≥ 0` subtracted as `δ·σ/√n` from the magnitude.
    pub delta: f64,
    pub sigma_rule: SigmaRule,
    pub selection: IndexSelection,
}

impl AttackConfig {
    /// Full knowledge, `δ = 0`, `σ_max² = ξ/√20`, first indices corrupted.
    pub fn new(eps: f64, xi: f64) -> Self {
        Self {
            eps,
            xi,
            knowledge: Knowledge::Full,
            delta: 0.0,
            sigma_rule: SigmaRule::FromXi,
            selection: IndexSelection::First,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::invalid(format!("attack fraction must lie in (0, 0.5), got {}", self.eps)));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::invalid(format!("xi must be positive, got {}", self.xi)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::invalid(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if let Knowledge::Partial(visible) = &self.knowledge {
            if visible.is_empty() || visible.iter().any(|&i| i >= n) {
                return Err(Error::invalid("visible sample set must be nonempty and in range"));
            }
        }
        Ok(())
    }

    fn sigma_sq(&self, xi: f64) -> f64 {
        match self.sigma_rule {
            SigmaRule::FromXi => xi / DEFAULT_K,
            SigmaRule::Explicit(s) => s,
        }
    }
}

/// Summary of a corruption run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorruptionReport {
    pub corrupted_indices: Vec<usize>,
    /// Magnitude `z` used in each chunk.
    pub per_chunk_z: Vec<f64>,
    /// Distance between the mean of the corrupted set and the benign mean.
    pub achieved_bias: f64,
    /// Chunks whose visible mean was zero, so the first axis was used as the
    /// attack direction.
    pub axis_fallback_chunks: Vec<usize>,
}

/// Magnitude of the corruption along the mean direction:
/// `√((ξ − σ²)/(ε² + ε(1−ε)²)) − μ_s`, shrunk towards zero by `δ·σ/√n`.
pub fn corruption_magnitude(xi: f64, sigma_sq: f64, eps: f64, mu_s: f64, delta: f64, n: usize) -> Result<f64> {
    if !(sigma_sq >= 0.0 && xi > sigma_sq) {
        return Err(Error::invalid(format!("no variance headroom: xi={xi}, sigma_sq={sigma_sq}")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("fraction must lie in (0, 0.5), got {eps}")));
    }
    if n == 0 || delta < 0.0 {
        return Err(Error::invalid("magnitude needs n >= 1 and delta >= 0"));
    }
    let base = ((xi - sigma_sq) / (eps * eps + eps * (1.0 - eps).powi(2))).sqrt() - mu_s;
    let slack = delta * sigma_sq.sqrt() / (n as f64).sqrt();
    Ok(base.signum() * (base.abs() - slack).max(0.0))
}

fn select_indices(n: usize, eps: f64, selection: IndexSelection, seed: u64) -> Vec<usize> {
    let k = corrupted_count(n, eps);
    match selection {
        IndexSelection::First => (0..k).collect(),
        IndexSelection::Random => Stream::new(seed).sample_indices(n, k),
    }
}

/// Corruption vector `μ̂ − ŝ·z` for one chunk, the magnitude and whether the
/// axis fallback was used.
fn chunk_corruption(part: &SampleSet, cfg: &AttackConfig, xi: f64) -> Result<(Vec<f64>, f64, bool)> {
    let mu = match &cfg.knowledge {
        Knowledge::Full => sample_mean(part, None)?,
        Knowledge::Partial(visible) => sample_mean(&part.select_rows(visible)?, None)?,
    };
    let (dir, fallback) = match normalize(&mu) {
        Some(s) => (s, false),
        None => {
            let mut e1 = vec![0.0; part.d()];
            e1[0] = 1.0;
            (e1, true)
        }
    };
    let z = corruption_magnitude(xi, cfg.sigma_sq(xi), cfg.eps, 0.0, cfg.delta, part.n())?;
    let corrupted = mu.iter().zip(&dir).map(|(m, s)| m - s * z).collect();
    Ok((corrupted, z, fallback))
}

/// The attack on a single chunk: the `⌈n·ε⌉` selected samples are moved to
/// `μ̂ − ŝ·z` with `ŝ = μ̂/‖μ̂‖`.
pub fn hidra_corrupt(x: &SampleSet, cfg: &AttackConfig, seed: u64) -> Result<(SampleSet, CorruptionReport)> {
    hidra_corrupt_chunked(x, x.d(), cfg, None, seed)
}

/// The attack applied independently to every chunk of width `m`, with the same
/// corrupted indices in each chunk. Every chunk uses `cfg.xi` unless a
/// per-chunk threshold list is given.
pub fn hidra_corrupt_chunked(
    x: &SampleSet,
    m: usize,
    cfg: &AttackConfig,
    chunk_xi: Option<&[f64]>,
    seed: u64,
) -> Result<(SampleSet, CorruptionReport)> {
    cfg.validate(x.n())?;
    let plan = ChunkPlan::new(x.d(), m)?;
    if let Some(list) = chunk_xi {
        Error::check_dim(plan.len(), list.len())?;
    }
    let indices = select_indices(x.n(), cfg.eps, cfg.selection, seed);
    let pieces = plan
        .ranges()
        .par_iter()
        .enumerate()
        .map(|(i, range)| {
            let xi = chunk_xi.map_or(cfg.xi, |list| list[i]);
            chunk_corruption(&x.columns(range.clone())?, cfg, xi)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut corruption = Vec::with_capacity(x.d());
    let mut per_chunk_z = Vec::with_capacity(plan.len());
    let mut axis_fallback_chunks = Vec::new();
    for (i, (vector, z, fallback)) in pieces.into_iter().enumerate() {
        corruption.extend(vector);
        per_chunk_z.push(z);
        if fallback {
            axis_fallback_chunks.push(i);
        }
    }
    let mut y = x.clone();
    for &i in &indices {
        y.set_row(i, &corruption)?;
    }
    let achieved_bias = measure_bias(x, &sample_mean(&y, None)?)?;
    Ok((y, CorruptionReport { corrupted_indices: indices, per_chunk_z, achieved_bias, axis_fallback_chunks }))
}

/// Replaces the first `⌈n·ε⌉` samples by `−scale·μ̂`.
pub fn sign_flip_baseline(x: &SampleSet, eps: f64, scale: f64) -> Result<SampleSet> {
    check_fraction(eps)?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let flipped: Vec<f64> = sample_mean(x, None)?.iter().map(|m| -scale * m).collect();
    let mut y = x.clone();
    for i in 0..corrupted_count(x.n(), eps) {
        y.set_row(i, &flipped)?;
    }
    Ok(y)
}

/// Details of a [`dnc_binary_attack`] run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DncAttackReport {
    /// Index of the single sample placed along the first binary direction.
    pub b1_index: usize,
    /// Indices of the samples placed along the complementary direction.
    pub b2_indices: Vec<usize>,
    /// The random binary vector `b₁`.
    pub b1: Vec<f64>,
    /// Mean distance of the benign samples from their mean.
    pub avg_norm: f64,
}

/// Attack on DnC with complementary binary directions: one sample at
/// `μ̂ + β‖avg‖·b̂₁`, the remaining `⌈n·ε⌉ − 1` at `μ̂ + cβ‖avg‖·b̂₂` where
/// `b₂ = 1 − b₁`.
pub fn dnc_binary_attack(
    x: &SampleSet,
    eps: f64,
    beta: f64,
    c: f64,
    seed: u64,
) -> Result<(SampleSet, DncAttackReport)> {
    check_fraction(eps)?;
    let (n, d) = (x.n(), x.d());
    if d < 2 {
        return Err(Error::invalid("binary attack needs d >= 2 so both directions are nonempty"));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid(format!("beta must be nonnegative, got {beta}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("c must lie in (0, 1), got {c}")));
    }
    let k = corrupted_count(n, eps);
    if k == 0 {
        return Err(Error::invalid("binary attack needs at least one corrupted sample"));
    }
    let mut stream = Stream::new(seed);
    let b1 = loop {
        let draw: Vec<f64> = (0..d).map(|_| if stream.coin() { 1.0 } else { 0.0 }).collect();
        let ones = draw.iter().filter(|&&b| b == 1.0).count();
        if ones > 0 && ones < d {
            break draw;
        }
    };
    let b2: Vec<f64> = b1.iter().map(|b| 1.0 - b).collect();
    let (u1, u2) = (normalize(&b1).expect("nonempty"), normalize(&b2).expect("nonempty"));

    let mu = sample_mean(x, None)?;
    let avg_norm = x
        .rows()
        .map(|row| norm(&row.iter().zip(&mu).map(|(a, m)| a - m).collect::<Vec<_>>()))
        .sum::<f64>()
        / n as f64;
    let lone: Vec<f64> = mu.iter().zip(&u1).map(|(m, u)| m + beta * avg_norm * u).collect();
    let group: Vec<f64> = mu.iter().zip(&u2).map(|(m, u)| m + c * beta * avg_norm * u).collect();
    let mut y = x.clone();
    y.set_row(0, &lone)?;
    for i in 1..k {
        y.set_row(i, &group)?;
    }
    Ok((y, DncAttackReport { b1_index: 0, b2_indices: (1..k).collect(), b1, avg_norm }))
}

/// `‖aggregate − mean(X_benign)‖₂`.
pub fn measure_bias(x_benign: &SampleSet, aggregate: &[f64]) -> Result<f64> {
    Error::check_dim(x_benign.d(), aggregate.len())?;
    let mu = sample_mean(x_benign, None)?;
    Ok(aggregate.iter().zip(&mu).map(|(a, m)| (a - m).powi(2)).sum::<f64>().sqrt())
}
