//! Gaussian-RBF repulsion between objective vectors.

use crate::linalg::{median, sq_dist, Matrix};

/// Kernel width `2σ² = scale · median(‖y_i − y_j‖², all i, j) / ln n`.
///
/// The median runs over all ordered pairs including `i = j`. Degenerate batches (median zero)
/// fall back to the mean squared distance, then to 1.
pub fn bandwidth(y: &Matrix, scale: f64) -> f64 {
    let n = y.rows();
    if n < 2 {
        return 1.0;
    }
    let mut d2 = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            d2.push(sq_dist(y.row(i), y.row(j)));
        }
    }
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    let med = median(&mut d2);
    let base = if med > 0.0 {
        med
    } else if mean > 0.0 {
        mean
    } else {
        1.0
    };
    scale * base / (n as f64).ln()
}

/// `Γ = 2/(n(n−1)) Σ_{i<j} exp(−‖y_i − y_j‖² / two_sigma_sq)` and its gradient w.r.t. `y`.
pub fn repulsion_with_bandwidth(y: &Matrix, two_sigma_sq: f64) -> (f64, Matrix) {
    let n = y.rows();
    let mut grad = Matrix::zeros(n, y.cols());
    if n < 2 {
        return (0.0, grad);
    }
    let c = 2.0 / (n * (n - 1)) as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let k = (-sq_dist(y.row(i), y.row(j)) / two_sigma_sq).exp();
            if k == 0.0 {
                continue;
            }
            total += k;
            let w = c * k * 2.0 / two_sigma_sq;
            for t in 0..y.cols() {
                let diff = y[(i, t)] - y[(j, t)];
                grad[(i, t)] -= w * diff;
                grad[(j, t)] += w * diff;
            }
        }
    }
    (c * total, grad)
}

/// Repulsion with the adaptive bandwidth of [`bandwidth`].
pub fn repulsion(y: &Matrix, scale: f64) -> (f64, Matrix) {
    repulsion_with_bandwidth(y, bandwidth(y, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_points_give_one() {
        let y = Matrix::filled(2, 3, 0.4);
        assert_eq!(repulsion(&y, 5e-6).0, 1.0);
        let far = Matrix::from_rows(&[[0.0, 0.0], [1e6, 1e6]]).unwrap();
        assert_eq!(repulsion_with_bandwidth(&far, 1.0).0, 0.0);
        assert_eq!(repulsion(&Matrix::filled(1, 2, 0.0), 5e-6).0, 0.0);
    }

    #[test]
    fn median_counts_the_diagonal() {
        // pairwise sq. distances [0,1,1,0] -> median 0.5
        let y = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!((bandwidth(&y, 1.0) - 0.5 / 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = crate::rng::stream(7, "rep");
        let y = Matrix::from_fn(4, 3, |_, _| r.random::<f64>());
        let bw = 0.3;
        let (_, g) = repulsion_with_bandwidth(&y, bw);
        let h = 1e-6;
        for i in 0..4 {
            for t in 0..3 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[(i, t)] += h;
                ym[(i, t)] -= h;
                let fd = (repulsion_with_bandwidth(&yp, bw).0 - repulsion_with_bandwidth(&ym, bw).0) / (2.0 * h);
                assert!((fd - g[(i, t)]).abs() <= 1e-6 * g[(i, t)].abs().max(1e-3), "{fd} vs {}", g[(i, t)]);
            }
        }
    }

    #[test]
    fn bounded_and_permutation_symmetric() {
        let mut r = crate::rng::stream(8, "rep");
        for _ in 0..20 {
            let y = Matrix::from_fn(6, 2, |_, _| r.random::<f64>());
            let (v, _) = repulsion(&y, 0.5);
            assert!((0.0..=1.0).contains(&v));
            let p = y.select_rows(&[5, 3, 1, 0, 2, 4]);
            assert!((repulsion(&p, 0.5).0 - v).abs() < 1e-14);
        }
    }
}
