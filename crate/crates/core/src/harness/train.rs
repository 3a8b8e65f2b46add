use rayon::prelude::*;

use crate::aggregators::{ChunkPlan, ThresholdConfig};
use crate::attacks::measure_bias;
use crate::datagen::logistic_task;
use crate::error::{Error, Result};
use crate::format::ResultTable;
use crate::harness::logistic::{accuracy, gradient};
use crate::harness::spec::{ExperimentKind, ExperimentSpec, ThresholdMode};
use crate::harness::sweep::apply_attack;
use crate::linalg::{spectral_norm, PowerIteration, SampleSet, WeightVector};
use crate::rng::{derive_seed, Stream};

/// Per-round metrics of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSimResult {
    pub accuracy: Vec<f64>,
    pub bias: Vec<f64>,
    pub final_accuracy: f64,
    /// True when the model became non-finite and training stopped early.
    pub diverged: bool,
}

impl TrainSimResult {
    /// CSV with columns `round,accuracy,bias`, rounds numbered from 1.
    pub fn table(&self) -> Result<ResultTable> {
        let mut table = ResultTable::new(&["round", "accuracy", "bias"]);
        for (r, (a, b)) in self.accuracy.iter().zip(&self.bias).enumerate() {
            table.push(vec![(r + 1).into(), (*a).into(), (*b).into()])?;
        }
        Ok(table)
    }
}

/// Largest per-chunk spectral norm of the honest gradients.
fn oracle_sigma_sq(g: &SampleSet, m: usize, seed: u64) -> Result<f64> {
    let plan = ChunkPlan::new(g.d(), m)?;
    let w = WeightVector::uniform(g.n());
    let norms = plan
        .ranges()
        .par_iter()
        .enumerate()
        .map(|(i, r)| spectral_norm(&g.columns(r.clone())?, &w, &PowerIteration::default(), derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// Federated logistic regression: each round every client computes a minibatch
/// gradient on its shard, the first `⌈n·ε⌉` gradients are replaced by the
/// attack, the server aggregates and takes a gradient step, and test accuracy
/// is recorded.
pub fn train_sim(spec: &ExperimentSpec) -> Result<TrainSimResult> {
    spec.validate()?;
    if spec.kind != ExperimentKind::TrainSim {
        return Err(Error::invalid("training simulation needs kind = trainsim"));
    }
    let d = spec.dims[0];
    let task = logistic_task(spec.clients * spec.shard_size, spec.test_size, d, spec.separation, derive_seed(spec.seed, 1))?;
    let mut w = vec![0.0; d];
    let mut result = TrainSimResult { accuracy: Vec::new(), bias: Vec::new(), final_accuracy: 0.5, diverged: false };

    for round in 0..spec.rounds {
        let round_seed = derive_seed(derive_seed(spec.seed, 2), round as u64);
        let grads: Vec<Vec<f64>> = (0..spec.clients)
            .into_par_iter()
            .map(|client| {
                let mut stream = Stream::new(derive_seed(round_seed, client as u64 + 1));
                let offset = client * spec.shard_size;
                let rows: Vec<usize> =
                    stream.sample_indices(spec.shard_size, spec.batch).into_iter().map(|i| i + offset).collect();
                gradient(&w, &task.train, &task.train_labels, &rows)
            })
            .collect();
        let honest = SampleSet::new(spec.clients, d, grads.concat())?;

        let sigma_max_sq = match spec.threshold {
            ThresholdMode::Fixed => spec.sigma_max_sq.expect("validated"),
            ThresholdMode::Oracle => oracle_sigma_sq(&honest, spec.chunk_size, round_seed)?.max(f64::MIN_POSITIVE),
        };
        let cfg = ThresholdConfig::new(sigma_max_sq, spec.k)?;
        let submitted = apply_attack(spec, &honest, &cfg, derive_seed(round_seed, 0))?;
        let agg = spec.aggregator.run(&submitted, spec.eps, &cfg, spec.chunk_size, round_seed)?;

        w.iter_mut().zip(&agg.mean).for_each(|(wi, gi)| *wi -= spec.lr * gi);
        if w.iter().any(|x| !x.is_finite()) {
            result.diverged = true;
            break;
        }
        result.bias.push(measure_bias(&honest, &agg.mean)?);
        result.accuracy.push(accuracy(&w, &task.test, &task.test_labels));
    }
    result.final_accuracy = result.accuracy.last().copied().unwrap_or(0.5);
    Ok(result)
}
