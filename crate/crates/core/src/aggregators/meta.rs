use serde::Serialize;

use crate::aggregators::{check_fraction, corrupted_count, ThresholdConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, sample_mean, top_eigenpair, PowerIteration, SampleSet, WeightVector};
use crate::rng::derive_seed;

/// Weights below this value are treated as zero.
const ZERO_WEIGHT: f64 = 1e-15;

/// Outlier-removal step applied by the meta-loop while the weighted covariance
/// exceeds the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Subroutine {
    Filtering,
    NoRegret,
}

/// Result of [`meta_aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationOutcome {
    pub mean: Vec<f64>,
    pub weights: WeightVector,
    /// Number of outlier-removal steps performed.
    pub iterations: usize,
    /// Spectral norm of the weighted covariance under the final weights.
    pub final_spectral_norm: f64,
    /// True when the final spectral norm is within the threshold.
    pub converged: bool,
    /// True when a step could not make progress and the loop stopped early.
    pub degenerate: bool,
    /// True when some power iteration hit its iteration cap.
    pub eigen_warning: bool,
}

/// Projection scores `τᵢ = ⟨yᵢ − μ_w, v⟩²`.
fn projection_scores(y: &SampleSet, w: &WeightVector, v: &[f64]) -> Result<Vec<f64>> {
    let mu = sample_mean(y, Some(w))?;
    let shift = dot(&mu, v);
    Ok(y.rows().map(|row| (dot(row, v) - shift).powi(2)).collect())
}

/// Largest score among samples that still carry weight.
fn active_max(scores: &[f64], w: &WeightVector) -> f64 {
    scores
        .iter()
        .zip(w.as_slice())
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(s, _)| *s)
        .fold(0.0, f64::max)
}

fn renormalize(mut raw: Vec<f64>) -> Result<WeightVector> {
    raw.iter_mut().filter(|x| **x < ZERO_WEIGHT).for_each(|x| *x = 0.0);
    WeightVector::normalized(raw)
}

fn filter_with_direction(y: &SampleSet, w: &WeightVector, v: &[f64]) -> Result<WeightVector> {
    let scores = projection_scores(y, w, v)?;
    let tau_max = active_max(&scores, w);
    let all_extreme = scores
        .iter()
        .zip(w.as_slice())
        .all(|(&s, &wi)| wi == 0.0 || s == tau_max);
    if tau_max == 0.0 || all_extreme {
        return Ok(w.clone());
    }
    let raw = scores
        .iter()
        .zip(w.as_slice())
        .map(|(&s, &wi)| if wi == 0.0 { 0.0 } else { wi * (1.0 - s / tau_max) })
        .collect();
    renormalize(raw)
}

fn max_active_distance_sq(y: &SampleSet, w: &WeightVector) -> f64 {
    let active: Vec<usize> = (0..y.n()).filter(|&i| w.as_slice()[i] > 0.0).collect();
    let mut best: f64 = 0.0;
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            best = best.max(crate::linalg::distance_sq(y.row(i), y.row(j)));
        }
    }
    best
}

fn no_regret_with_direction(
    y: &SampleSet,
    w: &WeightVector,
    eps: f64,
    cfg: &ThresholdConfig,
    v: &[f64],
) -> Result<WeightVector> {
    let spread = max_active_distance_sq(y, w);
    if spread == 0.0 {
        return Ok(w.clone());
    }
    let eta = 0.5 / spread;
    let scores = projection_scores(y, w, v)?;
    let tau_max = active_max(&scores, w);
    let mut rate = eps * eta / (2.0 * cfg.sigma_max_sq() * y.d() as f64);
    if tau_max > 0.0 {
        rate = rate.min(1.0 / tau_max);
    }
    let raw = scores
        .iter()
        .zip(w.as_slice())
        .map(|(&s, &wi)| wi * (1.0 - s * rate).max(0.0))
        .collect();
    let cap = 1.0 / ((1.0 - eps) * y.n() as f64);
    kl_project_capped_simplex(&renormalize(raw)?, cap)
}

/// One FILTERING step: each weight shrinks by `1 − τᵢ/τ_max`, then the weights
/// are renormalized. A zero or constant score profile leaves `w` unchanged.
pub fn filtering_step(y: &SampleSet, w: &WeightVector, seed: u64) -> Result<WeightVector> {
    let est = top_eigenpair(y, w, &PowerIteration::default(), seed)?;
    filter_with_direction(y, w, &est.pair.direction)
}

/// One NO-REGRET step: multiplicative update with step `η = 0.5/max‖yᵢ−yⱼ‖²`
/// followed by the KL projection onto the capped simplex with cap
/// `1/((1−ε)n)`. The rate is capped at `1/τ_max` so every factor stays in
/// `[0, 1]`; at the cap the update coincides with a FILTERING step.
pub fn no_regret_step(
    y: &SampleSet,
    w: &WeightVector,
    eps: f64,
    cfg: &ThresholdConfig,
    seed: u64,
) -> Result<WeightVector> {
    check_fraction(eps)?;
    let est = top_eigenpair(y, w, &PowerIteration::default(), seed)?;
    no_regret_with_direction(y, w, eps, cfg, &est.pair.direction)
}

/// KL projection onto `{w ≥ 0, Σw = 1, wᵢ ≤ cap}`: entries above the cap are
/// clamped and the remaining entries rescaled proportionally until no entry
/// exceeds the cap.
pub fn kl_project_capped_simplex(w: &WeightVector, cap: f64) -> Result<WeightVector> {
    let support = w.as_slice().iter().filter(|&&x| x > 0.0).count();
    if cap.is_nan() || cap <= 0.0 || cap * (support as f64) < 1.0 - 1e-12 {
        return Err(Error::invalid(format!(
            "cap {cap} is infeasible for {support} samples with positive weight"
        )));
    }
    let src = w.as_slice();
    let mut capped = vec![false; src.len()];
    loop {
        let n_capped = capped.iter().filter(|&&c| c).count();
        let free_mass = (1.0 - cap * n_capped as f64).max(0.0);
        let free_sum: f64 = src.iter().zip(&capped).filter(|(_, &c)| !c).map(|(x, _)| x).sum();
        let scale = if free_sum > 0.0 { free_mass / free_sum } else { 0.0 };
        let mut violated = false;
        for (x, c) in src.iter().zip(capped.iter_mut()) {
            if !*c && x * scale > cap * (1.0 + 1e-12) {
                *c = true;
                violated = true;
            }
        }
        if !violated {
            let out = src
                .iter()
                .zip(&capped)
                .map(|(x, &c)| if c { cap } else { x * scale })
                .collect();
            return WeightVector::normalized(out);
        }
    }
}

/// The spectral meta-loop: starting from equal weights, while the weighted
/// covariance has spectral norm above `ξ` apply one `subroutine` step, for at
/// most `2⌈nε⌉` steps. The mean is the weighted mean `Σ wᵢyᵢ`, or the plain
/// arithmetic mean when no step was taken.
pub fn meta_aggregate(
    y: &SampleSet,
    eps: f64,
    cfg: &ThresholdConfig,
    subroutine: Subroutine,
    seed: u64,
) -> Result<AggregationOutcome> {
    check_fraction(eps)?;
    let power = PowerIteration::default();
    let max_steps = 2 * corrupted_count(y.n(), eps);
    let mut w = WeightVector::uniform(y.n());
    let mut iterations = 0;
    let mut eigen_warning = false;
    let mut degenerate = false;
    let final_norm = loop {
        let est = top_eigenpair(y, &w, &power, derive_seed(seed, iterations as u64))?;
        eigen_warning |= !est.converged;
        if est.pair.value <= cfg.xi() || iterations == max_steps || degenerate {
            break est.pair.value;
        }
        let step = match subroutine {
            Subroutine::Filtering => filter_with_direction(y, &w, &est.pair.direction),
            Subroutine::NoRegret => no_regret_with_direction(y, &w, eps, cfg, &est.pair.direction),
        };
        match step {
            Ok(next) if next != w => w = next,
            Ok(_) | Err(_) => degenerate = true,
        }
        if !degenerate {
            iterations += 1;
        }
    };
    let mean = if iterations == 0 { sample_mean(y, None)? } else { sample_mean(y, Some(&w))? };
    Ok(AggregationOutcome {
        mean,
        weights: w,
        iterations,
        final_spectral_norm: final_norm,
        converged: final_norm <= cfg.xi(),
        degenerate,
        eigen_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::DEFAULT_K;
    use crate::rng::Stream;

    fn weights(w: &[f64]) -> WeightVector {
        WeightVector::new(w.to_vec()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn projection_examples() {
        let out = kl_project_capped_simplex(&weights(&[0.5, 0.3, 0.2]), 0.4).unwrap();
        assert_close(out.as_slice(), &[0.4, 0.36, 0.24], 1e-15);
        let out = kl_project_capped_simplex(&weights(&[0.9, 0.05, 0.05]), 0.34).unwrap();
        assert_close(out.as_slice(), &[0.34, 0.33, 0.33], 1e-15);
        let uniform = WeightVector::uniform(4);
        assert_eq!(kl_project_capped_simplex(&uniform, 0.3).unwrap(), uniform);
        let inside = weights(&[0.3, 0.3, 0.4]);
        assert_close(kl_project_capped_simplex(&inside, 0.5).unwrap().as_slice(), inside.as_slice(), 1e-15);
    }

    #[test]
    fn projection_rejects_infeasible_cap() {
        assert!(kl_project_capped_simplex(&WeightVector::uniform(3), 0.3).is_err());
        assert!(kl_project_capped_simplex(&weights(&[0.5, 0.5, 0.0]), 0.4).is_err());
    }

    #[test]
    fn filtering_annihilates_extreme_sample() {
        let y = SampleSet::from_rows(&[[0.0], [0.1], [-0.2], [0.15], [8.0]]).unwrap();
        let w = filtering_step(&y, &WeightVector::uniform(5), 1).unwrap();
        assert_eq!(w.as_slice()[4], 0.0);
        assert!(w.as_slice()[..4].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn filtering_matches_scalar_formula() {
        let vals = [1.0, 2.0, 4.0, -1.0, 9.0];
        let y = SampleSet::from_rows(&vals.map(|v| [v])).unwrap();
        let w = weights(&[0.1, 0.2, 0.3, 0.25, 0.15]);
        let mu: f64 = vals.iter().zip(w.as_slice()).map(|(v, w)| v * w).sum();
        let tau: Vec<f64> = vals.iter().map(|v| (v - mu).powi(2)).collect();
        let tau_max = tau.iter().cloned().fold(0.0, f64::max);
        let raw: Vec<f64> = tau.iter().zip(w.as_slice()).map(|(t, w)| w * (1.0 - t / tau_max)).collect();
        let total: f64 = raw.iter().sum();
        let expected: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let got = filtering_step(&y, &w, 3).unwrap();
        assert_close(got.as_slice(), &expected, 1e-14);
    }

    #[test]
    fn filtering_fixed_point_for_equal_scores() {
        let y = SampleSet::from_rows(&[[1.0], [-1.0], [1.0], [-1.0]]).unwrap();
        let w = WeightVector::uniform(4);
        assert_eq!(filtering_step(&y, &w, 0).unwrap(), w);
        let constant = SampleSet::from_rows(&[[2.0, 2.0]; 3]).unwrap();
        assert_eq!(filtering_step(&constant, &WeightVector::uniform(3), 0).unwrap(), WeightVector::uniform(3));
    }

    #[test]
    fn no_regret_equal_scores_gives_uniform() {
        let y = SampleSet::from_rows(&[[1.0], [-1.0], [1.0], [-1.0]]).unwrap();
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let w = no_regret_step(&y, &WeightVector::uniform(4), 0.25, &cfg, 0).unwrap();
        assert_close(w.as_slice(), &[0.25; 4], 1e-15);
    }

    #[test]
    fn no_regret_identical_samples_unchanged() {
        let y = SampleSet::from_rows(&[[3.0, 1.0]; 4]).unwrap();
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let w = weights(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(no_regret_step(&y, &w, 0.25, &cfg, 0).unwrap(), w);
    }

    /// Independent NO-REGRET reimplementation on a 1-d instance, where the top
    /// eigenvector is the unit axis and the KL projection has a closed form via
    /// sorting.
    fn reference_no_regret_1d(vals: &[f64], eps: f64, sigma_sq: f64, steps: usize) -> Vec<f64> {
        let n = vals.len();
        let cap = 1.0 / ((1.0 - eps) * n as f64);
        let mut w = vec![1.0 / n as f64; n];
        for _ in 0..steps {
            let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
            let lo = active.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min);
            let hi = active.iter().map(|&i| vals[i]).fold(f64::NEG_INFINITY, f64::max);
            let eta = 0.5 / (hi - lo).powi(2);
            let mu: f64 = (0..n).map(|i| w[i] * vals[i]).sum();
            let tau_max = active.iter().map(|&i| (vals[i] - mu).powi(2)).fold(0.0, f64::max);
            let rate = (eps * eta / (2.0 * sigma_sq)).min(1.0 / tau_max);
            for i in 0..n {
                let tau = (vals[i] - mu).powi(2);
                w[i] *= (1.0 - tau * rate).max(0.0);
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
            for k in 0..n {
                let rest: f64 = order[k..].iter().map(|&i| w[i]).sum();
                let scale = (1.0 - k as f64 * cap) / rest;
                if w[order[k]] * scale <= cap * (1.0 + 1e-12) {
                    for (pos, &i) in order.iter().enumerate() {
                        w[i] = if pos < k { cap } else { w[i] * scale };
                    }
                    break;
                }
            }
        }
        w
    }

    #[test]
    fn no_regret_matches_reference_over_many_steps() {
        let vals = [0.3, -0.2, 0.1, 0.0, -0.1, 0.25, -0.3, 0.05, 0.15, 30.0];
        let y = SampleSet::from_rows(&vals.map(|v| [v])).unwrap();
        let eps = 0.1;
        let cfg = ThresholdConfig::with_default_k(0.05).unwrap();
        let mut w = WeightVector::uniform(vals.len());
        for step in 0..50 {
            w = no_regret_step(&y, &w, eps, &cfg, step).unwrap();
        }
        let expected = reference_no_regret_1d(&vals, eps, 0.05, 50);
        assert_close(w.as_slice(), &expected, 1e-12);
        let cap = 1.0 / ((1.0 - eps) * vals.len() as f64);
        let floor = 1.0 - 9.0 * cap;
        assert!(w.as_slice()[9] <= floor.max(0.0) + 1e-12);
    }

    #[test]
    fn large_no_regret_rate_reduces_to_filtering() {
        let y = gaussian_with_outliers(40, 3, 8, 50.0, 3);
        let cfg = ThresholdConfig::with_default_k(1e-9).unwrap();
        let w = WeightVector::uniform(40);
        let via_filter = kl_project_capped_simplex(&filtering_step(&y, &w, 7).unwrap(), 1.0 / (0.8 * 40.0)).unwrap();
        assert_close(no_regret_step(&y, &w, 0.2, &cfg, 7).unwrap().as_slice(), via_filter.as_slice(), 1e-15);
    }

    #[test]
    fn tiny_threshold_scale_removes_flipped_outliers() {
        let mut s = Stream::new(4);
        let mut rows: Vec<Vec<f64>> = (0..100).map(|_| s.normal_vec(20).iter().map(|v| 1e-3 + 3e-3 * v).collect()).collect();
        let mu: Vec<f64> = (0..20).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 100.0).collect();
        for row in rows.iter_mut().take(20) {
            *row = mu.iter().map(|m| -1e6 * m).collect();
        }
        let y = SampleSet::from_rows(&rows).unwrap();
        let cfg = ThresholdConfig::with_default_k(1e-5).unwrap();
        let out = meta_aggregate(&y, 0.2, &cfg, Subroutine::NoRegret, 1).unwrap();
        assert!(out.weights.as_slice()[..20].iter().all(|&w| w == 0.0));
        assert!(out.converged && !out.degenerate);
    }

    fn gaussian_with_outliers(n: usize, d: usize, outliers: usize, magnitude: f64, seed: u64) -> SampleSet {
        let mut s = Stream::new(seed);
        let mut data = s.normal_vec(n * d);
        for i in 0..outliers {
            data[i * d..(i + 1) * d].iter_mut().for_each(|x| *x = 0.0);
            data[i * d] = magnitude;
        }
        SampleSet::new(n, d, data).unwrap()
    }

    #[test]
    fn clean_input_returns_arithmetic_mean() {
        let y = gaussian_with_outliers(200, 3, 0, 0.0, 5);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let out = meta_aggregate(&y, 0.1, &cfg, Subroutine::Filtering, 1).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
        assert_eq!(out.mean, sample_mean(&y, None).unwrap());
    }

    #[test]
    fn gross_outliers_are_removed() {
        let y = gaussian_with_outliers(100, 5, 20, 1e6, 8);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let benign = y.select_rows(&(20..100).collect::<Vec<_>>()).unwrap();
        let benign_mean = sample_mean(&benign, None).unwrap();
        let out = meta_aggregate(&y, 0.2, &cfg, Subroutine::Filtering, 2).unwrap();
        let outlier_mass: f64 = out.weights.as_slice()[..20].iter().sum();
        assert!(outlier_mass <= 1e-9, "{outlier_mass}");
        assert!(out.converged);
        assert!(out.iterations <= 40);
        let err: f64 = out.mean.iter().zip(&benign_mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 3.0 * 0.2f64.sqrt() * cfg.xi().sqrt(), "{err}");
    }

    #[test]
    fn no_regret_steadily_downweights_outliers() {
        let y = gaussian_with_outliers(100, 5, 20, 1e6, 8);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let cap = 1.0 / (0.8 * 100.0);
        let mut w = WeightVector::uniform(100);
        let mut previous: f64 = 0.2;
        for step in 0..10 {
            w = no_regret_step(&y, &w, 0.2, &cfg, step).unwrap();
            let mass: f64 = w.as_slice()[..20].iter().sum();
            assert!(mass < previous, "step {step}: {mass} >= {previous}");
            assert!(w.as_slice().iter().all(|&x| x <= cap * (1.0 + 1e-9)));
            previous = mass;
        }
    }

    #[test]
    fn loop_bound_respected() {
        let y = gaussian_with_outliers(10, 2, 2, 100.0, 4);
        let cfg = ThresholdConfig::with_default_k(1e-6).unwrap();
        let out = meta_aggregate(&y, 0.2, &cfg, Subroutine::Filtering, 0).unwrap();
        assert!(out.iterations <= 4);
        assert!(!out.converged);
        assert!(out.final_spectral_norm > cfg.xi());
    }

    #[test]
    fn zero_fraction_is_plain_mean() {
        let y = gaussian_with_outliers(10, 2, 1, 100.0, 4);
        let cfg = ThresholdConfig::new(1.0, DEFAULT_K).unwrap();
        let out = meta_aggregate(&y, 0.0, &cfg, Subroutine::NoRegret, 0).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.mean, sample_mean(&y, None).unwrap());
    }

    #[test]
    fn invalid_fraction_rejected() {
        let y = gaussian_with_outliers(10, 2, 0, 0.0, 4);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        assert!(meta_aggregate(&y, 0.5, &cfg, Subroutine::Filtering, 0).is_err());
        assert!(meta_aggregate(&y, -0.1, &cfg, Subroutine::Filtering, 0).is_err());
    }
}
