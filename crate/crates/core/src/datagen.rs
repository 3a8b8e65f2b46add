//! Seeded synthetic data: axis-aligned Gaussian gradient clouds and a two-class
//! logistic regression task.

use crate::error::{Error, Result};
use crate::linalg::{normalize, SampleSet};
use crate::rng::Stream;

/// Per-coordinate standard deviations of an axis-aligned Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceProfile {
    /// The same standard deviation on every axis.
    Spherical(f64),
    /// Standard deviations geometrically spaced from `min` (first axis) to `max`
    /// (last axis).
    LogSpaced { min: f64, max: f64 },
    /// One standard deviation per axis.
    Explicit(Vec<f64>),
}

impl VarianceProfile {
    /// Standard deviations for dimension `d`.
    pub fn stds(&self, d: usize) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(Error::invalid("profile dimension must be positive"));
        }
        let stds = match self {
            VarianceProfile::Spherical(s) => vec![*s; d],
            VarianceProfile::LogSpaced { min, max } => {
                if !(*min > 0.0 && max >= min) {
                    return Err(Error::invalid(format!("log-spaced profile needs 0 < min <= max, got {min}, {max}")));
                }
                if d == 1 {
                    vec![*max]
                } else {
                    let ratio = (max / min).ln();
                    (0..d).map(|j| min * (ratio * j as f64 / (d - 1) as f64).exp()).collect()
                }
            }
            VarianceProfile::Explicit(list) => {
                Error::check_dim(d, list.len())?;
                list.clone()
            }
        };
        if stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("every standard deviation must be positive and finite"));
        }
        Ok(stds)
    }

    /// The profile resolved at length `period` and repeated to cover `d` axes,
    /// giving every block of `period` consecutive axes the same spread.
    pub fn tiled(&self, d: usize, period: usize) -> Result<Vec<f64>> {
        let base = self.stds(period.min(d))?;
        Ok(base.iter().copied().cycle().take(d).collect())
    }

    /// Largest per-axis variance `max σᵢ²`.
    pub fn max_variance(&self, d: usize) -> Result<f64> {
        Ok(self.stds(d)?.into_iter().fold(0.0, f64::max).powi(2))
    }
}

/// `n` i.i.d. draws `meanⱼ + σⱼ·z` with `z` standard normal, generated row by row
/// from a single stream.
pub fn gaussian_samples(n: usize, profile: &VarianceProfile, mean: &[f64], seed: u64) -> Result<SampleSet> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least two samples, got {n}")));
    }
    let d = mean.len();
    let stds = profile.stds(d)?;
    let mut stream = Stream::new(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend(mean.iter().zip(&stds).map(|(m, s)| m + s * stream.normal()));
    }
    SampleSet::new(n, d, data)
}

/// A labelled two-class dataset with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticTask {
    pub train: SampleSet,
    pub train_labels: Vec<f64>,
    pub test: SampleSet,
    pub test_labels: Vec<f64>,
    /// Unit vector separating the class means.
    pub direction: Vec<f64>,
}

fn labelled_cloud(stream: &mut Stream, n: usize, direction: &[f64], half_gap: f64) -> Result<(SampleSet, Vec<f64>)> {
    let d = direction.len();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = if stream.coin() { 1.0 } else { -1.0 };
        labels.push(label);
        data.extend(direction.iter().map(|u| label * half_gap * u + stream.normal()));
    }
    Ok((SampleSet::new(n, d, data)?, labels))
}

/// Two unit-variance Gaussian clouds centred at `±separation/2` along a random
/// unit direction, labelled `+1` and `−1` with equal probability.
pub fn logistic_task(n_train: usize, n_test: usize, d: usize, separation: f64, seed: u64) -> Result<LogisticTask> {
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::invalid(format!("separation must be nonnegative, got {separation}")));
    }
    if n_train == 0 || n_test == 0 || d == 0 {
        return Err(Error::invalid("logistic task needs positive sizes"));
    }
    let mut stream = Stream::new(seed);
    let direction = normalize(&stream.normal_vec(d)).expect("Gaussian draw is nonzero");
    let (train, train_labels) = labelled_cloud(&mut stream, n_train, &direction, separation / 2.0)?;
    let (test, test_labels) = labelled_cloud(&mut stream, n_test, &direction, separation / 2.0)?;
    Ok(LogisticTask { train, train_labels, test, test_labels, direction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::logistic::{accuracy, fit_full_batch};

    fn column_stats(x: &SampleSet, j: usize) -> (f64, f64) {
        let n = x.n() as f64;
        let mean = x.rows().map(|r| r[j]).sum::<f64>() / n;
        let var = x.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn spherical_mean_band() {
        let x = gaussian_samples(10_000, &VarianceProfile::Spherical(1.0), &[0.0; 10], 1).unwrap();
        for j in 0..10 {
            assert!(column_stats(&x, j).0.abs() < 0.05);
        }
    }

    #[test]
    fn log_spaced_moments() {
        let profile = VarianceProfile::LogSpaced { min: 1e-4, max: 1e-1 };
        let stds = profile.stds(50).unwrap();
        assert!((stds[0] - 1e-4).abs() < 1e-18);
        assert!((stds[49] - 1e-1).abs() < 1e-15);
        let x = gaussian_samples(10_000, &profile, &[0.0; 50], 2).unwrap();
        for (j, s) in stds.iter().enumerate() {
            let var = column_stats(&x, j).1;
            assert!((var / (s * s) - 1.0).abs() < 0.2, "axis {j}");
        }
        assert!((profile.max_variance(50).unwrap() - 1e-2).abs() < 1e-16);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(VarianceProfile::Explicit(vec![0.0, 0.0]).stds(2).is_err());
        assert!(VarianceProfile::Explicit(vec![1.0]).stds(2).is_err());
        assert!(VarianceProfile::Spherical(-1.0).stds(2).is_err());
        assert!(VarianceProfile::LogSpaced { min: 1.0, max: 0.5 }.stds(3).is_err());
        assert!(gaussian_samples(1, &VarianceProfile::Spherical(1.0), &[0.0], 0).is_err());
    }

    #[test]
    fn tiling_repeats_profile() {
        let p = VarianceProfile::LogSpaced { min: 1.0, max: 4.0 };
        let t = p.tiled(7, 3).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(&t[0..3], &t[3..6]);
        assert_eq!(t[6], t[0]);
    }

    #[test]
    fn separated_task_is_learnable() {
        let task = logistic_task(2000, 2000, 100, 4.0, 3).unwrap();
        let w = fit_full_batch(&task.train, &task.train_labels, 0.5, 200);
        assert!(accuracy(&w, &task.test, &task.test_labels) >= 0.95);
    }

    #[test]
    fn unseparated_task_is_chance() {
        let task = logistic_task(2000, 4000, 20, 0.0, 3).unwrap();
        let w = fit_full_batch(&task.train, &task.train_labels, 0.5, 200);
        let acc = accuracy(&w, &task.test, &task.test_labels);
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }

    #[test]
    fn task_is_reproducible() {
        assert_eq!(logistic_task(50, 20, 8, 2.0, 9).unwrap(), logistic_task(50, 20, 8, 2.0, 9).unwrap());
    }
}
