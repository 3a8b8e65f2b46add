//! Fixtures shared by the benchmarks.

use ragg_core::attacks::{hidra_corrupt_chunked, AttackConfig};
use ragg_core::datagen::{gaussian_samples, VarianceProfile};
use ragg_core::{SampleSet, ThresholdConfig};

/// Benign samples with a log-spaced profile repeated every `m` axes.
pub fn benign(n: usize, d: usize, m: usize, seed: u64) -> SampleSet {
    let stds = VarianceProfile::LogSpaced { min: 1e-3, max: 1e-1 }.tiled(d, m).expect("valid profile");
    gaussian_samples(n, &VarianceProfile::Explicit(stds), &vec![0.05; d], seed).expect("valid shape")
}

/// Threshold matching [`benign`].
pub fn threshold() -> ThresholdConfig {
    ThresholdConfig::with_default_k(1e-2).expect("valid threshold")
}

/// Benign samples with the first `⌈n·ε⌉` rows replaced by gross outliers.
pub fn with_outliers(n: usize, d: usize, eps: f64, seed: u64) -> SampleSet {
    let mut x = benign(n, d, d, seed);
    let k = (n as f64 * eps).ceil() as usize;
    let row = vec![100.0; d];
    for i in 0..k {
        x.set_row(i, &row).expect("row fits");
    }
    x
}

/// Benign samples after the chunked threshold-hiding attack.
pub fn attacked(n: usize, d: usize, m: usize, eps: f64, seed: u64) -> SampleSet {
    let x = benign(n, d, m, seed);
    let cfg = AttackConfig::new(eps, threshold().xi());
    hidra_corrupt_chunked(&x, m, &cfg, None, seed).expect("valid attack").0
}
