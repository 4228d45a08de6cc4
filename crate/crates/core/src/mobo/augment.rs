//! Training-set augmentation for the per-iteration diffusion model.
//!
//! Promising points are extracted by non-domination rank with a crowding tie-break, which stands
//! in for shift-based density estimation. Extra samples come from three transforms (small uniform
//! perturbation, convex interpolation of random pairs, Gaussian noise), pooled, shuffled and cut
//! to `factor` times the extracted count.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::pareto::{crowding_distance, non_dominated_sort};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Fraction of the archive kept as extracted points.
    pub keep: f64,
    /// Augmented samples per extracted point.
    pub factor: usize,
    /// Half-width of the uniform perturbation, as a fraction of the box width.
    pub perturb: f64,
    /// Gaussian noise standard deviation, as a fraction of the box width.
    pub noise: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            keep: 0.5,
            factor: 4,
            perturb: 0.01,
            noise: 0.02,
        }
    }
}

/// Indices ordered best first: by front, then by decreasing crowding distance within a front.
pub fn quality_order(y: &Matrix) -> Vec<usize> {
    let mut order = Vec::with_capacity(y.rows());
    for front in non_dominated_sort(y) {
        let cd = crowding_distance(&y.select_rows(&front));
        let mut idx: Vec<usize> = (0..front.len()).collect();
        idx.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]));
        order.extend(idx.into_iter().map(|i| front[i]));
    }
    order
}

/// Extracted points followed by `factor * extracted` augmented ones, all inside `bounds`.
pub fn augment_training_data(x: &Matrix, y: &Matrix, bounds: &[(f64, f64)], cfg: &AugmentConfig, rng: &mut Rng) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 || y.rows() != n {
        return Err(invalid(format!("augmentation needs >= 2 evaluated points, got {n}")));
    }
    if !(cfg.keep > 0.0 && cfg.keep <= 1.0) {
        return Err(invalid(format!("keep fraction must lie in (0, 1], got {}", cfg.keep)));
    }
    let kept = ((cfg.keep * n as f64).ceil() as usize).clamp(2, n);
    let order = quality_order(y);
    let base = x.select_rows(&order[..kept]);
    let target = cfg.factor * kept;
    if target == 0 {
        return Ok(base);
    }

    let d = x.cols();
    let width: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let clamp = |mut p: Vec<f64>| {
        for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
        p
    };
    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(3 * target);
    for _ in 0..target {
        let a = base.row(rng.random_range(0..kept));
        pool.push(clamp((0..d).map(|k| a[k] + cfg.perturb * width[k] * rng.random_range(-1.0..=1.0)).collect()));
    }
    for _ in 0..target {
        let a = base.row(rng.random_range(0..kept));
        let b = base.row(rng.random_range(0..kept));
        let w: f64 = rng.random();
        pool.push(clamp((0..d).map(|k| w * a[k] + (1.0 - w) * b[k]).collect()));
    }
    for _ in 0..target {
        let a = base.row(rng.random_range(0..kept));
        pool.push(clamp((0..d).map(|k| a[k] + cfg.noise * width[k] * gauss.sample(rng)).collect()));
    }
    pool.shuffle(rng);
    pool.truncate(target);

    let mut out = base;
    for p in &pool {
        out.push_row(p)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn data() -> (Matrix, Matrix) {
        let mut r = rng::stream(3, "aug");
        let x = Matrix::from_fn(20, 3, |_, _| r.random::<f64>());
        let y = Matrix::from_fn(20, 2, |i, j| if j == 0 { x[(i, 0)] } else { 1.0 - x[(i, 0)] + x[(i, 1)] });
        (x, y)
    }

    #[test]
    fn zero_factor_returns_extracted_only() {
        let (x, y) = data();
        let b = vec![(0.0, 1.0); 3];
        let cfg = AugmentConfig { factor: 0, ..AugmentConfig::default() };
        let out = augment_training_data(&x, &y, &b, &cfg, &mut rng::stream(1, "a")).unwrap();
        assert_eq!(out.rows(), 10);
        let order = quality_order(&y);
        assert_eq!(out, x.select_rows(&order[..10]));
    }

    #[test]
    fn size_and_bounds() {
        let (x, y) = data();
        let b = vec![(0.0, 1.0); 3];
        let out = augment_training_data(&x, &y, &b, &AugmentConfig::default(), &mut rng::stream(1, "a")).unwrap();
        assert_eq!(out.rows(), 10 + 4 * 10);
        assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn extraction_prefers_the_first_front() {
        let y = Matrix::from_rows(&[[2.0, 2.0], [0.0, 1.0], [1.0, 0.0], [3.0, 3.0]]).unwrap();
        let order = quality_order(&y);
        assert_eq!(&order[2..], &[0, 3]);
    }
}
