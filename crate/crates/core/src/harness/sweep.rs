use rayon::prelude::*;

use crate::aggregators::{corrupted_count, dnc_aggregate, default_dims_sampled, ThresholdConfig};
use crate::attacks::{dnc_binary_attack, hidra_corrupt_chunked, measure_bias, sign_flip_baseline, AttackConfig, Knowledge};
use crate::datagen::{gaussian_samples, VarianceProfile};
use crate::error::{Error, Result};
use crate::format::ResultTable;
use crate::harness::spec::{AttackKind, ExperimentKind, ExperimentSpec, KnowledgeKind};
use crate::harness::theoretical_bias;
use crate::linalg::SampleSet;
use crate::rng::derive_seed;

/// One trial of a sweep. `bias` is `None` when the trial failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrial {
    pub d: usize,
    pub trial: usize,
    pub bias: Option<f64>,
    pub error: Option<String>,
}

/// Trial statistics at one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub d: usize,
    pub attack: String,
    pub aggregator: String,
    pub theoretical_bias: f64,
    pub empirical_bias_mean: f64,
    /// Sample standard deviation over successful trials (0 for a single trial).
    pub empirical_bias_std: f64,
    pub failures: usize,
}

/// Everything a sweep produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<SweepTrial>,
}

impl SweepOutput {
    /// Per-trial CSV: `d,attack,aggregator,trial,bias_empirical,bias_theoretical`.
    pub fn table(&self) -> Result<ResultTable> {
        let mut table =
            ResultTable::new(&["d", "attack", "aggregator", "trial", "bias_empirical", "bias_theoretical"]);
        for t in &self.trials {
            let row = self.rows.iter().find(|r| r.d == t.d).expect("every trial has a row");
            table.push(vec![
                t.d.into(),
                row.attack.as_str().into(),
                row.aggregator.as_str().into(),
                t.trial.into(),
                t.bias.unwrap_or(f64::NAN).into(),
                row.theoretical_bias.into(),
            ])?;
        }
        Ok(table)
    }
}

fn benign_set(spec: &ExperimentSpec, n: usize, d: usize, seed: u64) -> Result<(SampleSet, f64)> {
    let stds = spec.stds(d)?;
    let sigma_max_sq = spec.sigma_max_sq.unwrap_or_else(|| stds.iter().fold(0.0f64, |m, s| m.max(s * s)));
    let x = gaussian_samples(n, &VarianceProfile::Explicit(stds), &vec![spec.benign_mean; d], seed)?;
    Ok((x, sigma_max_sq))
}

fn attack_config(spec: &ExperimentSpec, n: usize, xi: f64) -> AttackConfig {
    let mut cfg = AttackConfig::new(spec.eps, xi);
    cfg.delta = spec.delta;
    cfg.selection = spec.selection;
    if spec.knowledge == KnowledgeKind::Partial {
        let visible = ((n as f64 * spec.visible_fraction).round() as usize).clamp(1, n);
        cfg.knowledge = Knowledge::Partial((n - visible..n).collect());
    }
    cfg
}

/// Applies the configured attack to honest samples `x` under threshold `cfg`.
pub(crate) fn apply_attack(
    spec: &ExperimentSpec,
    x: &SampleSet,
    cfg: &ThresholdConfig,
    seed: u64,
) -> Result<SampleSet> {
    if corrupted_count(x.n(), spec.eps) == 0 {
        return Ok(x.clone());
    }
    match spec.attack {
        AttackKind::None => Ok(x.clone()),
        AttackKind::SignFlip => sign_flip_baseline(x, spec.eps, spec.flip_scale),
        AttackKind::Hidra => {
            let attack = attack_config(spec, x.n(), cfg.xi());
            Ok(hidra_corrupt_chunked(x, spec.chunk_size, &attack, None, seed)?.0)
        }
    }
}

fn sweep_trial(spec: &ExperimentSpec, d: usize, trial: usize) -> Result<f64> {
    let seed = derive_seed(derive_seed(spec.seed, d as u64), trial as u64 + 1);
    let (x, sigma_max_sq) = benign_set(spec, spec.n, d, derive_seed(seed, 1))?;
    let cfg = ThresholdConfig::new(sigma_max_sq, spec.k)?;
    let y = apply_attack(spec, &x, &cfg, derive_seed(seed, 2))?;
    let report = spec.aggregator.run(&y, spec.eps, &cfg, spec.chunk_size, derive_seed(seed, 3))?;
    measure_bias(&x, &report.mean)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// For every dimension in the specification, generates benign samples, attacks
/// them, aggregates and measures the bias, over `trials` seeded repetitions.
/// Trials run in parallel; a failed trial is recorded rather than aborting.
pub fn bias_sweep(spec: &ExperimentSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let grid: Vec<(usize, usize)> = spec
        .dims
        .iter()
        .flat_map(|&d| (0..spec.trials).map(move |t| (d, t)))
        .collect();
    let trials: Vec<SweepTrial> = grid
        .par_iter()
        .map(|&(d, trial)| match sweep_trial(spec, d, trial) {
            Ok(bias) => SweepTrial { d, trial, bias: Some(bias), error: None },
            Err(e) => SweepTrial { d, trial, bias: None, error: Some(e.to_string()) },
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.dims.len());
    for &d in &spec.dims {
        let stds = spec.stds(d)?;
        let sigma_max_sq = spec.sigma_max_sq.unwrap_or_else(|| stds.iter().fold(0.0f64, |m, s| m.max(s * s)));
        let xi = ThresholdConfig::new(sigma_max_sq, spec.k)?.xi();
        let theory = if spec.attack == AttackKind::Hidra { theoretical_bias(spec.eps, d, spec.chunk_size, xi)? } else { 0.0 };
        let ok: Vec<f64> = trials.iter().filter(|t| t.d == d).filter_map(|t| t.bias).collect();
        let (mean, std) = mean_std(&ok);
        rows.push(SweepRow {
            d,
            attack: spec.attack.name().to_owned(),
            aggregator: spec.aggregator.name().to_owned(),
            theoretical_bias: theory,
            empirical_bias_mean: mean,
            empirical_bias_std: std,
            failures: spec.trials - ok.len(),
        });
    }
    Ok(SweepOutput { rows, trials })
}

/// One `(β, trial)` point of the DnC sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DncSweepRecord {
    pub beta: f64,
    pub trial: usize,
    pub bias: f64,
    /// Whether the lone sample along the first binary direction was removed.
    pub b1_removed: bool,
    /// How many samples along the complementary direction were removed.
    pub b2_removed: usize,
}

impl DncSweepRecord {
    pub fn table(records: &[DncSweepRecord]) -> Result<ResultTable> {
        let mut table = ResultTable::new(&["beta", "trial", "bias_empirical", "b1_removed", "b2_removed"]);
        for r in records {
            table.push(vec![r.beta.into(), r.trial.into(), r.bias.into(), r.b1_removed.into(), r.b2_removed.into()])?;
        }
        Ok(table)
    }
}

/// Runs the binary-direction attack against the DnC aggregator for every
/// `β` in the specification. Within a trial the benign set and the binary
/// direction are shared across `β`, so only the attack strength varies.
pub fn dnc_beta_sweep(spec: &ExperimentSpec) -> Result<Vec<DncSweepRecord>> {
    spec.validate()?;
    if spec.kind != ExperimentKind::Dnc {
        return Err(Error::invalid("dnc sweep needs kind = dnc"));
    }
    let d = spec.dims[0];
    let dims_sampled = spec.dims_sampled.unwrap_or_else(|| default_dims_sampled(d));
    let grid: Vec<(usize, usize)> = (0..spec.trials)
        .flat_map(|t| (0..spec.betas.len()).map(move |b| (t, b)))
        .collect();
    grid.par_iter()
        .map(|&(trial, b)| {
            let beta = spec.betas[b];
            let seed = derive_seed(spec.seed, trial as u64 + 1);
            let (x, _) = benign_set(spec, spec.n, d, derive_seed(seed, 1))?;
            let (y, report) = dnc_binary_attack(&x, spec.eps, beta, spec.c, derive_seed(seed, 2))?;
            let out = dnc_aggregate(&y, spec.eps, dims_sampled, derive_seed(seed, 3))?;
            Ok(DncSweepRecord {
                beta,
                trial,
                bias: measure_bias(&x, &out.mean)?,
                b1_removed: out.removed.contains(&report.b1_index),
                b2_removed: report.b2_indices.iter().filter(|i| out.removed.contains(i)).count(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::Aggregator;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            n: 60,
            dims: vec![20, 40],
            chunk_size: 20,
            trials: 3,
            sigma_min: 0.01,
            sigma_max: 0.1,
            benign_mean: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn sweep_is_reproducible_and_shaped() {
        let spec = small_spec();
        let a = bias_sweep(&spec).unwrap();
        let b = bias_sweep(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.trials.len(), 6);
        assert!(a.rows.iter().all(|r| r.failures == 0 && r.empirical_bias_std >= 0.0));
        let table = a.table().unwrap();
        assert_eq!(table.header(), &["d", "attack", "aggregator", "trial", "bias_empirical", "bias_theoretical"]);
        assert_eq!(table.rows().len(), 6);
    }

    #[test]
    fn sweep_records_failures() {
        let spec = ExperimentSpec { n: 3, aggregator: Aggregator::Krum, eps: 0.4, ..small_spec() };
        let out = bias_sweep(&spec).unwrap();
        assert!(out.rows.iter().all(|r| r.failures == 3));
        assert!(out.trials.iter().all(|t| t.error.is_some()));
    }

    #[test]
    fn zero_fraction_has_sampling_bias_only() {
        let spec = ExperimentSpec { eps: 0.0, ..small_spec() };
        let out = bias_sweep(&spec).unwrap();
        for row in &out.rows {
            assert_eq!(row.empirical_bias_mean, 0.0);
        }
    }

    #[test]
    fn dnc_sweep_shapes() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::Dnc,
            n: 50,
            dims: vec![100],
            trials: 2,
            betas: vec![0.0, 10.0],
            profile: crate::harness::ProfileKind::Spherical,
            sigma: 0.1,
            benign_mean: 0.05,
            ..Default::default()
        };
        let records = dnc_beta_sweep(&spec).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(records, dnc_beta_sweep(&spec).unwrap());
        let strong: Vec<_> = records.iter().filter(|r| r.beta == 10.0).collect();
        assert!(strong.iter().all(|r| r.b1_removed && r.b2_removed == 0));
        assert!(DncSweepRecord::table(&records).unwrap().rows().len() == 4);
    }
}
