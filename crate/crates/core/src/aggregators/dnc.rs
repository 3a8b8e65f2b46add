use crate::aggregators::{check_fraction, corrupted_count};
use crate::error::{Error, Result};
use crate::linalg::{dot, sample_mean, top_eigenpair, PowerIteration, SampleSet, WeightVector};
use crate::rng::{derive_seed, Stream};

/// Default number of sampled coordinates: `min(d, 1000)`.
pub fn default_dims_sampled(d: usize) -> usize {
    d.min(1000)
}

/// Result of [`dnc_aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct DncOutcome {
    pub mean: Vec<f64>,
    /// Removed sample indices, ascending.
    pub removed: Vec<usize>,
    /// Outlier score of every sample.
    pub scores: Vec<f64>,
}

/// Divide-and-conquer aggregator: project the centered samples, restricted to
/// `dims_sampled` random coordinates, on their top principal direction, drop the
/// `⌈n·ε⌉` samples with the largest squared projection and average the rest over
/// all coordinates. There is a single filtering round.
pub fn dnc_aggregate(y: &SampleSet, eps: f64, dims_sampled: usize, seed: u64) -> Result<DncOutcome> {
    check_fraction(eps)?;
    let (n, d) = (y.n(), y.d());
    if dims_sampled == 0 || dims_sampled > d {
        return Err(Error::invalid(format!("dims_sampled must lie in [1, {d}], got {dims_sampled}")));
    }
    let remove = corrupted_count(n, eps);
    let cols = if dims_sampled == d {
        (0..d).collect()
    } else {
        Stream::new(seed).sample_indices(d, dims_sampled)
    };
    let sub = y.select_columns(&cols)?;
    let uniform = WeightVector::uniform(n);
    let v = top_eigenpair(&sub, &uniform, &PowerIteration::default(), derive_seed(seed, 1))?
        .pair
        .direction;
    let shift = dot(&sample_mean(&sub, None)?, &v);
    let scores: Vec<f64> = sub.rows().map(|row| (dot(row, &v) - shift).powi(2)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut removed = order[..remove].to_vec();
    removed.sort_unstable();
    let kept: Vec<usize> = (0..n).filter(|i| removed.binary_search(i).is_err()).collect();
    Ok(DncOutcome { mean: sample_mean(&y.select_rows(&kept)?, None)?, removed, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fraction_is_arithmetic_mean() {
        let y = SampleSet::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let out = dnc_aggregate(&y, 0.0, 2, 0).unwrap();
        assert!(out.removed.is_empty());
        assert_eq!(out.mean, sample_mean(&y, None).unwrap());
    }

    #[test]
    fn removes_outlier_on_principal_axis() {
        let mut s = Stream::new(21);
        let mut rows: Vec<Vec<f64>> = (0..9).map(|_| s.normal_vec(3).iter().map(|x| 0.1 * x).collect()).collect();
        rows.push(vec![25.0, 0.0, 0.0]);
        let y = SampleSet::from_rows(&rows).unwrap();
        let out = dnc_aggregate(&y, 0.1, 3, 4).unwrap();
        assert_eq!(out.removed, vec![9]);
        assert_eq!(out.mean, sample_mean(&SampleSet::from_rows(&rows[..9]).unwrap(), None).unwrap());
    }

    #[test]
    fn subsampling_is_seeded() {
        let mut s = Stream::new(1);
        let y = SampleSet::new(20, 50, s.normal_vec(1000)).unwrap();
        let a = dnc_aggregate(&y, 0.2, 10, 3).unwrap();
        let b = dnc_aggregate(&y, 0.2, 10, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.removed.len(), 4);
    }

    #[test]
    fn invalid_dims_sampled() {
        let y = SampleSet::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        assert!(dnc_aggregate(&y, 0.1, 0, 0).is_err());
        assert!(dnc_aggregate(&y, 0.1, 3, 0).is_err());
        assert_eq!(default_dims_sampled(5000), 1000);
        assert_eq!(default_dims_sampled(20), 20);
    }
}
