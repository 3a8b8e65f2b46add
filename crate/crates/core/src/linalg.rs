//! Dense kernels: sample sets, weighted means, the weighted covariance action and
//! power iteration for the top eigenpair.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// `n` samples of dimension `d`, stored row-major. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("sample set needs n >= 1 and d >= 1, got n={n}, d={d}")));
        }
        let expected = n
            .checked_mul(d)
            .ok_or_else(|| Error::invalid("sample set size overflows"))?;
        Error::check_dim(expected, data.len())?;
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for row in rows {
            Error::check_dim(d, row.as_ref().len())?;
            data.extend_from_slice(row.as_ref());
        }
        Self::new(n, d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    /// Replaces row `i`, rejecting wrong lengths and non-finite values.
    pub fn set_row(&mut self, i: usize, values: &[f64]) -> Result<()> {
        if i >= self.n {
            return Err(Error::invalid(format!("row {i} out of range for n={}", self.n)));
        }
        Error::check_dim(self.d, values.len())?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value written to row {i}")));
        }
        self.data[i * self.d..(i + 1) * self.d].copy_from_slice(values);
        Ok(())
    }

    /// Copy of the columns in `range`.
    pub fn columns(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.d {
            return Err(Error::invalid(format!("column range {range:?} invalid for d={}", self.d)));
        }
        let mut data = Vec::with_capacity(self.n * range.len());
        for row in self.rows() {
            data.extend_from_slice(&row[range.clone()]);
        }
        Ok(Self { n: self.n, d: range.len(), data })
    }

    /// Copy of the selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.d) {
            return Err(Error::invalid("column selection empty or out of range"));
        }
        let mut data = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Self { n: self.n, d: cols.len(), data })
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|&r| r >= self.n) {
            return Err(Error::invalid("row selection empty or out of range"));
        }
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Ok(Self { n: rows.len(), d: self.d, data })
    }

    /// Writes the columns of `part` into `range` of this set.
    pub fn paste_columns(&mut self, range: Range<usize>, part: &SampleSet) -> Result<()> {
        Error::check_dim(self.n, part.n)?;
        Error::check_dim(range.len(), part.d)?;
        if range.end > self.d {
            return Err(Error::invalid("column range out of bounds"));
        }
        let d = self.d;
        for (i, src) in part.rows().enumerate() {
            self.data[i * d + range.start..i * d + range.end].copy_from_slice(src);
        }
        Ok(())
    }
}

/// Nonnegative per-sample weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector is empty"));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Scales nonnegative raw weights to unit sum.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Numerical("all weights are zero".into()));
        }
        Ok(Self(raw.into_iter().map(|x| x / sum).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// An eigenvalue in variance units with its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub direction: Vec<f64>,
}

/// Power iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1000 }
    }
}

/// Result of power iteration. `converged` is false when `max_iter` was reached
/// before the residual fell below tolerance; the pair is then the last iterate,
/// whose value is still a lower bound on the top eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    pub pair: EigenPair,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl EigenEstimate {
    pub fn require_converged(self) -> Result<EigenPair> {
        if self.converged {
            Ok(self.pair)
        } else {
            Err(Error::NonConvergence { iterations: self.iterations, residual: self.residual })
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Scales `v` to unit length; `None` for the zero vector.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let len = norm(v);
    (len > 0.0).then(|| v.iter().map(|x| x / len).collect())
}

/// Arithmetic mean, or `Σ wᵢxᵢ` when weights are supplied.
pub fn sample_mean(x: &SampleSet, w: Option<&WeightVector>) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; x.d];
    match w {
        None => {
            for row in x.rows() {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            let n = x.n as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        Some(w) => {
            Error::check_dim(x.n, w.len())?;
            for (row, &wi) in x.rows().zip(w.as_slice()) {
                if wi != 0.0 {
                    acc.iter_mut().zip(row).for_each(|(a, v)| *a += wi * v);
                }
            }
        }
    }
    Ok(acc)
}

/// Rows with positive weight, centered at the weighted mean.
struct Centered {
    d: usize,
    weights: Vec<f64>,
    rows: Vec<f64>,
    trace: f64,
    second_moment: f64,
}

impl Centered {
    fn new(x: &SampleSet, w: &WeightVector) -> Result<Self> {
        Error::check_dim(x.n, w.len())?;
        let mean = sample_mean(x, Some(w))?;
        let mut weights = Vec::new();
        let mut rows = Vec::new();
        let mut trace = 0.0;
        let mut second_moment = 0.0;
        for (row, &wi) in x.rows().zip(w.as_slice()) {
            if wi == 0.0 {
                continue;
            }
            weights.push(wi);
            let start = rows.len();
            rows.extend(row.iter().zip(&mean).map(|(a, m)| a - m));
            trace += wi * dot(&rows[start..], &rows[start..]);
            second_moment += wi * dot(row, row);
        }
        Ok(Self { d: x.d, weights, rows, trace, second_moment })
    }

    /// True when the covariance is zero up to rounding of the mean.
    fn is_degenerate(&self) -> bool {
        self.trace <= 16.0 * f64::EPSILON * f64::EPSILON * self.second_moment
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (z, &wi) in self.rows.chunks_exact(self.d).zip(&self.weights) {
            let t = wi * dot(z, v);
            out.iter_mut().zip(z).for_each(|(o, zi)| *o += t * zi);
        }
    }
}

/// `Σ_w v` for the weighted covariance `Σ_w = Σᵢ wᵢ(xᵢ−μ_w)(xᵢ−μ_w)ᵀ`.
pub fn covariance_apply(x: &SampleSet, w: &WeightVector, v: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(x.d, v.len())?;
    let centered = Centered::new(x, w)?;
    let mut out = vec![0.0; x.d];
    centered.apply(v, &mut out);
    Ok(out)
}

fn apply_sign_convention(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

/// Top eigenpair of the weighted covariance by power iteration from a seeded
/// Gaussian start vector.
pub fn top_eigenpair(
    x: &SampleSet,
    w: &WeightVector,
    power: &PowerIteration,
    seed: u64,
) -> Result<EigenEstimate> {
    if power.tol.is_nan() || power.tol <= 0.0 {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }
    if power.max_iter == 0 {
        return Err(Error::invalid("power iteration needs max_iter >= 1"));
    }
    let centered = Centered::new(x, w)?;
    let d = x.d;
    if centered.is_degenerate() {
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        return Ok(EigenEstimate {
            pair: EigenPair { value: 0.0, direction: e1 },
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }

    let mut stream = Stream::new(seed);
    let mut v = normalize(&stream.normal_vec(d)).expect("Gaussian start vector is nonzero");
    let mut u = vec![0.0; d];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < power.max_iter {
        iterations += 1;
        centered.apply(&v, &mut u);
        lambda = dot(&v, &u);
        residual = u
            .iter()
            .zip(&v)
            .map(|(ui, vi)| (ui - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= power.tol * lambda.max(1.0) {
            converged = true;
            break;
        }
        match normalize(&u) {
            Some(next) => v = next,
            None => break,
        }
    }
    apply_sign_convention(&mut v);
    Ok(EigenEstimate {
        pair: EigenPair { value: lambda.max(0.0), direction: v },
        iterations,
        residual,
        converged,
    })
}

/// Largest eigenvalue of the weighted covariance.
pub fn spectral_norm(x: &SampleSet, w: &WeightVector, power: &PowerIteration, seed: u64) -> Result<f64> {
    Ok(top_eigenpair(x, w, power, seed)?.pair.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> SampleSet {
        SampleSet::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap()
    }

    #[test]
    fn sample_set_rejects_invalid() {
        assert!(SampleSet::new(0, 2, vec![]).is_err());
        assert!(SampleSet::new(1, 2, vec![1.0]).is_err());
        assert!(SampleSet::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(SampleSet::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::normalized(vec![0.0, 0.0]).is_err());
        let w = WeightVector::normalized(vec![3.0, 1.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.75, 0.25]);
    }

    #[test]
    fn mean_examples() {
        let single = SampleSet::from_rows(&[[3.0, -1.0]]).unwrap();
        assert_eq!(sample_mean(&single, None).unwrap(), vec![3.0, -1.0]);
        assert_eq!(sample_mean(&two_points(), None).unwrap(), vec![0.0, 0.0]);
        let w = WeightVector::new(vec![0.75, 0.25]).unwrap();
        assert_eq!(sample_mean(&two_points(), Some(&w)).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn mean_weight_length_mismatch() {
        let w = WeightVector::uniform(3);
        assert!(matches!(
            sample_mean(&two_points(), Some(&w)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn covariance_apply_examples() {
        let w = WeightVector::uniform(2);
        assert_eq!(covariance_apply(&two_points(), &w, &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(covariance_apply(&two_points(), &w, &[0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let constant = SampleSet::from_rows(&[[2.5, -1.0, 4.0]; 5]).unwrap();
        let out = covariance_apply(&constant, &WeightVector::uniform(5), &[0.3, -2.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
        assert!(covariance_apply(&two_points(), &w, &[1.0]).is_err());
    }

    #[test]
    fn top_eigenpair_two_points() {
        let est = top_eigenpair(&two_points(), &WeightVector::uniform(2), &PowerIteration::default(), 1).unwrap();
        assert!(est.converged);
        assert!((est.pair.value - 1.0).abs() < 1e-12);
        assert!((est.pair.direction[0] - 1.0).abs() < 1e-12);
        assert!(est.pair.direction[1].abs() < 1e-12);
        assert!((spectral_norm(&two_points(), &WeightVector::uniform(2), &PowerIteration::default(), 9).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_set_gives_e1() {
        let constant = SampleSet::from_rows(&[[0.1, 0.7, -3.0]; 3]).unwrap();
        let est = top_eigenpair(&constant, &WeightVector::uniform(3), &PowerIteration::default(), 4).unwrap();
        assert_eq!(est.pair, EigenPair { value: 0.0, direction: vec![1.0, 0.0, 0.0] });
    }

    #[test]
    fn invalid_power_settings() {
        let w = WeightVector::uniform(2);
        assert!(top_eigenpair(&two_points(), &w, &PowerIteration { tol: 0.0, max_iter: 10 }, 0).is_err());
        assert!(top_eigenpair(&two_points(), &w, &PowerIteration { tol: 1e-10, max_iter: 0 }, 0).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = SampleSet::from_rows(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.99, 0.0], [0.0, -0.99, 0.0]]).unwrap();
        let est = top_eigenpair(&x, &WeightVector::uniform(4), &PowerIteration { tol: 1e-14, max_iter: 3 }, 2).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 3);
        assert!(matches!(est.require_converged(), Err(Error::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn sign_convention_positive_first_component() {
        let x = SampleSet::from_rows(&[[2.0, -2.0], [-2.0, 2.0], [0.1, 0.0]]).unwrap();
        for seed in 0..10 {
            let est = top_eigenpair(&x, &WeightVector::uniform(3), &PowerIteration::default(), seed).unwrap();
            assert!(est.pair.direction[0] > 0.0);
        }
    }

    #[test]
    fn column_and_row_selection() {
        let x = SampleSet::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(x.columns(1..3).unwrap().data(), &[2.0, 3.0, 5.0, 6.0]);
        assert_eq!(x.select_columns(&[2, 0]).unwrap().data(), &[3.0, 1.0, 6.0, 4.0]);
        assert_eq!(x.select_rows(&[1]).unwrap().data(), &[4.0, 5.0, 6.0]);
        let mut y = x.clone();
        y.paste_columns(0..1, &SampleSet::from_rows(&[[9.0], [8.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[9.0, 2.0, 3.0, 8.0, 5.0, 6.0]);
        assert!(x.columns(2..2).is_err());
    }
}
