use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregators::{meta_aggregate, AggregationOutcome, Subroutine, ThresholdConfig};
use crate::error::{Error, Result};
use crate::linalg::SampleSet;
use crate::rng::derive_seed;

/// Partition of `[0, d)` into consecutive chunks of size `m`; the last chunk
/// holds the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    m: usize,
    boundaries: Vec<Range<usize>>,
}

impl ChunkPlan {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid(format!("chunk plan needs d >= 1 and m >= 1, got d={d}, m={m}")));
        }
        let boundaries = (0..d).step_by(m).map(|start| start..(start + m).min(d)).collect();
        Ok(Self { m, boundaries })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }
}

/// Outcome of the meta-loop on one chunk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkOutcome {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub seed: u64,
    pub outcome: AggregationOutcome,
}

/// Per-chunk outcomes and the concatenated mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedOutcome {
    pub mean: Vec<f64>,
    pub chunks: Vec<ChunkOutcome>,
}

impl ChunkedOutcome {
    pub fn any_degenerate(&self) -> bool {
        self.chunks.iter().any(|c| c.outcome.degenerate)
    }

    pub fn all_converged(&self) -> bool {
        self.chunks.iter().all(|c| c.outcome.converged)
    }
}

/// Runs [`meta_aggregate`] independently on each column chunk of width `m` and
/// concatenates the chunk means. Chunk `i` uses the seed `derive_seed(seed, i)`,
/// so the result does not depend on how chunks are scheduled across threads.
pub fn chunked_aggregate(
    y: &SampleSet,
    m: usize,
    eps: f64,
    cfg: &ThresholdConfig,
    subroutine: Subroutine,
    seed: u64,
) -> Result<ChunkedOutcome> {
    let plan = ChunkPlan::new(y.d(), m)?;
    let chunks = plan
        .ranges()
        .par_iter()
        .enumerate()
        .map(|(index, range)| {
            let part = y.columns(range.clone())?;
            let chunk_seed = derive_seed(seed, index as u64);
            let outcome = meta_aggregate(&part, eps, cfg, subroutine, chunk_seed)?;
            Ok(ChunkOutcome { index, start: range.start, end: range.end, seed: chunk_seed, outcome })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = chunks.iter().flat_map(|c| c.outcome.mean.iter().copied()).collect();
    Ok(ChunkedOutcome { mean, chunks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn remainder_rule() {
        let plan = ChunkPlan::new(5, 2).unwrap();
        assert_eq!(plan.ranges(), &[0..2, 2..4, 4..5]);
        assert_eq!(ChunkPlan::new(4, 2).unwrap().ranges(), &[0..2, 2..4]);
        assert_eq!(ChunkPlan::new(3, 10).unwrap().ranges().to_vec(), vec![(0..3)]);
        assert!(ChunkPlan::new(3, 0).is_err());
    }

    fn contaminated(seed: u64) -> SampleSet {
        let mut s = Stream::new(seed);
        let (n, d) = (60, 6);
        let mut data = s.normal_vec(n * d);
        for i in 0..6 {
            for j in 0..d {
                data[i * d + j] = 40.0 + j as f64;
            }
        }
        SampleSet::new(n, d, data).unwrap()
    }

    #[test]
    fn single_chunk_matches_meta_aggregate_bitwise() {
        let y = contaminated(3);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        for sub in [Subroutine::Filtering, Subroutine::NoRegret] {
            let whole = meta_aggregate(&y, 0.1, &cfg, sub, 77).unwrap();
            assert!(whole.iterations > 0);
            let chunked = chunked_aggregate(&y, y.d(), 0.1, &cfg, sub, 77).unwrap();
            assert_eq!(chunked.chunks.len(), 1);
            assert_eq!(chunked.chunks[0].outcome, whole);
            assert_eq!(chunked.mean, whole.mean);
        }
    }

    #[test]
    fn chunks_match_independent_runs() {
        let y = contaminated(4);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let out = chunked_aggregate(&y, 4, 0.1, &cfg, Subroutine::Filtering, 9).unwrap();
        assert_eq!(out.chunks.len(), 2);
        for (i, range) in [0..4, 4..6].into_iter().enumerate() {
            let part = y.columns(range.clone()).unwrap();
            let solo = meta_aggregate(&part, 0.1, &cfg, Subroutine::Filtering, derive_seed(9, i as u64)).unwrap();
            assert_eq!(&out.mean[range], solo.mean.as_slice());
        }
        assert!(out.all_converged());
        assert!(!out.any_degenerate());
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let y = contaminated(5);
        let cfg = ThresholdConfig::with_default_k(1.0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| chunked_aggregate(&y, 1, 0.1, &cfg, Subroutine::NoRegret, 1).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
