use crate::aggregators::{check_fraction, corrupted_count};
use crate::error::{Error, Result};
use crate::linalg::{distance_sq, SampleSet};

fn column_sorted(y: &SampleSet, j: usize) -> Vec<f64> {
    let mut col: Vec<f64> = y.rows().map(|r| r[j]).collect();
    col.sort_by(f64::total_cmp);
    col
}

/// Per-coordinate median; for even `n` the mean of the two middle values.
pub fn coordinate_median(y: &SampleSet) -> Vec<f64> {
    let n = y.n();
    (0..y.d())
        .map(|j| {
            let col = column_sorted(y, j);
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect()
}

/// Per-coordinate mean after dropping the `⌈n·ε⌉` smallest and largest values.
pub fn coordinate_trimmed_mean(y: &SampleSet, eps: f64) -> Result<Vec<f64>> {
    check_fraction(eps)?;
    let n = y.n();
    let trim = corrupted_count(n, eps);
    if 2 * trim >= n {
        return Err(Error::invalid(format!("trimming {trim} per side leaves no samples out of {n}")));
    }
    let kept = (n - 2 * trim) as f64;
    Ok((0..y.d())
        .map(|j| column_sorted(y, j)[trim..n - trim].iter().sum::<f64>() / kept)
        .collect())
}

/// Krum: the sample whose squared distances to its `n − ⌈n·ε⌉ − 1` nearest
/// neighbours have the smallest sum. Ties go to the lowest index.
pub fn krum(y: &SampleSet, eps: f64) -> Result<Vec<f64>> {
    check_fraction(eps)?;
    let n = y.n();
    let f = corrupted_count(n, eps);
    if n < f + 2 {
        return Err(Error::invalid(format!("krum needs n - ceil(n*eps) - 1 >= 1, got n={n}, f={f}")));
    }
    let neighbours = n - f - 1;
    let mut best = (f64::INFINITY, 0);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| distance_sq(y.row(i), y.row(j)))
            .collect();
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists[..neighbours].iter().sum();
        if score < best.0 {
            best = (score, i);
        }
    }
    Ok(y.row(best.1).to_vec())
}
