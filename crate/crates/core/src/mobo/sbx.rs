//! Simulated binary crossover.

use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Spread factor for a uniform draw `u` and distribution index `kappa`.
pub fn spread_factor(u: f64, kappa: f64) -> f64 {
    let e = 1.0 / (kappa + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    }
}

/// The two children of `p1`, `p2` for per-coordinate spread factors `tau`, before clamping.
pub fn crossover(p1: &[f64], p2: &[f64], tau: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c1 = p1.iter().zip(p2).zip(tau).map(|((a, b), t)| 0.5 * ((1.0 + t) * a + (1.0 - t) * b)).collect();
    let c2 = p1.iter().zip(p2).zip(tau).map(|((a, b), t)| 0.5 * ((1.0 - t) * a + (1.0 + t) * b)).collect();
    (c1, c2)
}

/// `count` crossovers of random distinct parent pairs; returns `2 * count` clamped children.
pub fn sbx_offspring(parents: &Matrix, kappa: f64, count: usize, bounds: &[(f64, f64)], rng: &mut Rng) -> Result<Matrix> {
    let n = parents.rows();
    if n < 2 {
        return Err(invalid("SBX needs at least two parents"));
    }
    if !(kappa > 0.0) {
        return Err(invalid(format!("SBX distribution index must be positive, got {kappa}")));
    }
    let d = parents.cols();
    let mut out = Matrix::zeros(2 * count, d);
    for c in 0..count {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let tau: Vec<f64> = (0..d).map(|_| spread_factor(rng.random::<f64>(), kappa)).collect();
        let (a, b) = crossover(parents.row(i), parents.row(j), &tau);
        for (k, (lo, hi)) in bounds.iter().enumerate() {
            out[(2 * c, k)] = a[k].clamp(*lo, *hi);
            out[(2 * c + 1, k)] = b[k].clamp(*lo, *hi);
        }
    }
    Ok(out)
}
