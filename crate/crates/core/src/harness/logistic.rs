//! Logistic regression primitives with labels in `{−1, +1}`.

use crate::linalg::{dot, SampleSet};

/// Numerically stable `1/(1 + e^{−t})`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Gradient of the mean logistic loss `log(1 + e^{−y⟨w,x⟩})` over the selected
/// rows.
pub fn gradient(w: &[f64], x: &SampleSet, labels: &[f64], rows: &[usize]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for &i in rows {
        let row = x.row(i);
        let y = labels[i];
        let coef = -y * sigmoid(-y * dot(w, row));
        g.iter_mut().zip(row).for_each(|(gi, xi)| *gi += coef * xi);
    }
    let scale = 1.0 / rows.len() as f64;
    g.iter_mut().for_each(|gi| *gi *= scale);
    g
}

/// Share of rows whose label matches the sign of `⟨w, x⟩` (zero counts as `+1`).
pub fn accuracy(w: &[f64], x: &SampleSet, labels: &[f64]) -> f64 {
    let correct = x
        .rows()
        .zip(labels)
        .filter(|(row, &y)| (dot(w, row) >= 0.0) == (y > 0.0))
        .count();
    correct as f64 / x.n() as f64
}

/// Plain full-batch gradient descent from zero.
pub fn fit_full_batch(x: &SampleSet, labels: &[f64], lr: f64, epochs: usize) -> Vec<f64> {
    let rows: Vec<usize> = (0..x.n()).collect();
    let mut w = vec![0.0; x.d()];
    for _ in 0..epochs {
        let g = gradient(&w, x, labels, &rows);
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= lr * gi);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let x = SampleSet::from_rows(&[[1.0, 2.0], [-0.5, 0.3], [0.7, -1.2]]).unwrap();
        let labels = [1.0, -1.0, 1.0];
        let rows = [0, 1, 2];
        let w = [0.3, -0.4];
        let loss = |w: &[f64]| {
            rows.iter()
                .map(|&i| (1.0 + (-labels[i] * dot(w, x.row(i))).exp()).ln())
                .sum::<f64>()
                / 3.0
        };
        let g = gradient(&w, &x, &labels, &rows);
        for j in 0..2 {
            let mut up = w;
            let mut down = w;
            up[j] += 1e-6;
            down[j] -= 1e-6;
            let fd = (loss(&up) - loss(&down)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn accuracy_counts_signs() {
        let x = SampleSet::from_rows(&[[1.0], [-1.0], [2.0], [0.0]]).unwrap();
        assert_eq!(accuracy(&[1.0], &x, &[1.0, -1.0, -1.0, 1.0]), 0.75);
    }
}
