//! Planted instances on which a robust aggregate reveals the direction of
//! maximum variance, the reduction that extracts it, and verifiers.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::aggregators::corrupted_count;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalize, sample_mean, top_eigenpair, PowerIteration, SampleSet, WeightVector};
use crate::rng::Stream;

/// Orthogonality threshold on the cosine between two candidate samples.
const ORTHOGONAL_COS: f64 = 1e-6;

/// A spherical Gaussian sample with `n·ε` planted samples split evenly between
/// two orthogonal unit directions at distance `√d + l` from the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct EcInstance {
    pub y: SampleSet,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    /// Offsets of the samples planted along `b1`.
    pub l1: Vec<f64>,
    /// Offsets of the samples planted along `b2`.
    pub l2: Vec<f64>,
    /// Indices of the planted samples: the `b1` group, then the `b2` group.
    pub corrupted_indices: Vec<usize>,
}

impl EcInstance {
    /// The unit vector `(b₁ − b₂)/√2`.
    pub fn planted_difference(&self) -> Vec<f64> {
        let diff: Vec<f64> = self.b1.iter().zip(&self.b2).map(|(a, b)| a - b).collect();
        normalize(&diff).expect("b1 and b2 are orthonormal")
    }
}

/// `h` offsets in `(−1, 1]` drawn as antithetic pairs `±u`, `u` uniform on
/// `(0, 1]`; a single zero completes an odd count. The sum is exactly zero.
fn antithetic_offsets(stream: &mut Stream, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h);
    for _ in 0..h / 2 {
        let u = stream.uniform_open_closed();
        out.push(u);
        out.push(-u);
    }
    if h % 2 == 1 {
        out.push(0.0);
    }
    out
}

/// Builds a planted instance. Requires `n·ε` to be an even integer of at least
/// 2, `d ≥ 2` and `n − n·ε ≥ d/2`.
pub fn construct_ec(n: usize, d: usize, eps: f64, seed: u64) -> Result<EcInstance> {
    let planted = n as f64 * eps;
    let k = planted.round();
    if (planted - k).abs() > 1e-9 || k < 2.0 || k as usize % 2 == 1 {
        return Err(Error::invalid(format!("n*eps must be an even integer >= 2, got {planted}")));
    }
    let k = k as usize;
    if d < 2 {
        return Err(Error::invalid("construction needs d >= 2"));
    }
    if k >= n || ((n - k) as f64) < d as f64 / 2.0 {
        return Err(Error::invalid(format!("need n - n*eps >= d/2, got n={n}, n*eps={k}, d={d}")));
    }
    let benign = n - k;
    let h = k / 2;
    let mut stream = Stream::new(seed);
    let mut data = stream.normal_vec(benign * d);

    let b1 = normalize(&stream.normal_vec(d)).expect("Gaussian draw is nonzero");
    let mut g = stream.normal_vec(d);
    for _ in 0..2 {
        let proj = dot(&g, &b1);
        g.iter_mut().zip(&b1).for_each(|(x, b)| *x -= proj * b);
    }
    let b2 = normalize(&g).expect("Gaussian draws are independent");

    let mut l1 = antithetic_offsets(&mut stream, h);
    let mut l2 = antithetic_offsets(&mut stream, h);
    let (s1, s2) = (dot(&l1, &l1), dot(&l2, &l2));
    if s1 > 0.0 && s2 > 0.0 {
        if s2 > s1 {
            let scale = (s1 / s2).sqrt();
            l2.iter_mut().for_each(|l| *l *= scale);
        } else {
            let scale = (s2 / s1).sqrt();
            l1.iter_mut().for_each(|l| *l *= scale);
        }
    }

    let root_d = (d as f64).sqrt();
    for (offsets, b) in [(&l1, &b1), (&l2, &b2)] {
        for l in offsets.iter() {
            data.extend(b.iter().map(|x| (root_d + l) * x));
        }
    }
    Ok(EcInstance {
        y: SampleSet::new(n, d, data)?,
        b1,
        b2,
        l1,
        l2,
        corrupted_indices: (benign..n).collect(),
    })
}

/// Output of the reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionOutcome {
    /// Unit vector estimating the direction of maximum variance.
    pub direction: Vec<f64>,
    /// The `⌈n·ε⌉` highest-scoring samples, best first.
    pub candidates: Vec<usize>,
    /// The pair of candidates whose unit vectors were subtracted.
    pub pair: (usize, usize),
    /// True when no orthogonal pair was found and the first and last
    /// candidates were used instead.
    pub fallback: bool,
    /// Score `⟨μ′ − μ̃, yᵢ/‖yᵢ‖⟩` of every sample.
    pub scores: Vec<f64>,
}

/// The reduction given the robust aggregate `mu_tilde` of `y`: score samples
/// by the projection of `mean(y) − mu_tilde` on their unit vectors, keep the
/// top `⌈n·ε⌉`, and return the normalized difference of the unit vectors of
/// the first candidate and the first candidate orthogonal to it.
pub fn reduce_with_aggregate(y: &SampleSet, eps: f64, mu_tilde: &[f64]) -> Result<ReductionOutcome> {
    Error::check_dim(y.d(), mu_tilde.len())?;
    let k = corrupted_count(y.n(), eps);
    if k < 2 {
        return Err(Error::invalid("reduction needs at least two candidates"));
    }
    let mu_prime = sample_mean(y, None)?;
    let shift: Vec<f64> = mu_prime.iter().zip(mu_tilde).map(|(a, b)| a - b).collect();
    let scores: Vec<f64> = y
        .rows()
        .map(|row| {
            let len = norm(row);
            if len > 0.0 {
                dot(&shift, row) / len
            } else {
                0.0
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..y.n()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let candidates = order[..k].to_vec();

    let unit = |i: usize| normalize(y.row(i)).unwrap_or_else(|| vec![0.0; y.d()]);
    let first = unit(candidates[0]);
    let partner = candidates[1..]
        .iter()
        .map(|&c| (c, unit(c)))
        .find(|(_, u)| dot(&first, u).abs() <= ORTHOGONAL_COS);
    let fallback = partner.is_none();
    let (second, second_unit) = partner.unwrap_or_else(|| (candidates[k - 1], unit(candidates[k - 1])));
    let diff: Vec<f64> = first.iter().zip(&second_unit).map(|(a, b)| a - b).collect();
    let direction = normalize(&diff)
        .ok_or_else(|| Error::Numerical("reduction candidates have identical directions".into()))?;
    Ok(ReductionOutcome { direction, pair: (candidates[0], second), candidates, fallback, scores })
}

/// Runs `aggregator` on `y` and then the reduction.
pub fn reduce_max_variance<F>(y: &SampleSet, eps: f64, aggregator: F) -> Result<ReductionOutcome>
where
    F: FnOnce(&SampleSet) -> Result<Vec<f64>>,
{
    let mu_tilde = aggregator(y)?;
    reduce_with_aggregate(y, eps, &mu_tilde)
}

/// Gap between the smallest planted-sample score and the largest benign score.
/// Positive when the scores separate the two groups.
pub fn projection_margin(ec: &EcInstance, outcome: &ReductionOutcome) -> f64 {
    let planted = |i: &usize| ec.corrupted_indices.binary_search(i).is_ok();
    let (mut lo_planted, mut hi_benign) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &s) in outcome.scores.iter().enumerate() {
        if planted(&i) {
            lo_planted = lo_planted.min(s);
        } else {
            hi_benign = hi_benign.max(s);
        }
    }
    lo_planted - hi_benign
}

/// Alignment between the top principal direction of the instance and the
/// planted difference `(b₁ − b₂)/√2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    /// `|cos|` of the angle between the two directions.
    pub cosine: f64,
    pub angle_degrees: f64,
    pub passes: bool,
    /// Power-iteration estimate of the top direction.
    #[serde(skip)]
    pub top_direction: Vec<f64>,
}

/// Angle between two directions, ignoring sign, in degrees.
pub fn angle_degrees(a: &[f64], b: &[f64]) -> f64 {
    let cos = (dot(a, b).abs() / (norm(a) * norm(b))).min(1.0);
    cos.acos().to_degrees()
}

/// Checks that the top principal direction of `ec.y` is within `|cos| ≥ 1 −
/// tol` of the planted difference. Fails if power iteration does not converge.
pub fn verify_max_variance_alignment(ec: &EcInstance, tol: f64, seed: u64) -> Result<AlignmentReport> {
    let pair = top_eigenpair(&ec.y, &WeightVector::uniform(ec.y.n()), &PowerIteration::default(), seed)?
        .require_converged()?;
    let planted = ec.planted_difference();
    let cosine = dot(&pair.direction, &planted).abs().min(1.0);
    Ok(AlignmentReport {
        cosine,
        angle_degrees: cosine.acos().to_degrees(),
        passes: cosine >= 1.0 - tol,
        top_direction: pair.direction,
    })
}

/// Wall-clock split of the reduction into the aggregator call and the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionTiming {
    pub aggregator: Duration,
    pub overhead: Duration,
    /// `overhead` in nanoseconds divided by `n·d`.
    pub overhead_per_entry_ns: f64,
}

/// Times the aggregator and the remaining reduction steps separately, keeping
/// the fastest of `repeats` runs of each.
pub fn reduction_timing<F>(y: &SampleSet, eps: f64, aggregator: F, repeats: usize) -> Result<ReductionTiming>
where
    F: Fn(&SampleSet) -> Result<Vec<f64>>,
{
    let repeats = repeats.max(1);
    let mut best_agg = Duration::MAX;
    let mut best_overhead = Duration::MAX;
    let mut mu_tilde = Vec::new();
    for _ in 0..repeats {
        let start = Instant::now();
        mu_tilde = aggregator(y)?;
        best_agg = best_agg.min(start.elapsed());
    }
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(reduce_with_aggregate(y, eps, &mu_tilde)?);
        best_overhead = best_overhead.min(start.elapsed());
    }
    Ok(ReductionTiming {
        aggregator: best_agg,
        overhead: best_overhead,
        overhead_per_entry_ns: best_overhead.as_nanos() as f64 / (y.n() * y.d()) as f64,
    })
}
