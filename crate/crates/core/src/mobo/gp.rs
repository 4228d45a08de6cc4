//! Squared-exponential Gaussian processes, one per objective.
//!
//! Inputs are expected on the unit box; targets are standardized internally and predictions are
//! returned in the original target scale. Hyperparameters (length-scale, signal variance, noise)
//! are fitted by Adam ascent on the log marginal likelihood in log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::autodiff::Adam;
use crate::error::{invalid, Error, Result};
use crate::linalg::{mean_std, median, sq_dist, Matrix};
use crate::problems::{Evaluation, Objective};

/// Jitter ladder tried when the kernel matrix is numerically indefinite.
const JITTERS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Adam steps on the marginal likelihood; 0 keeps the initial guess.
    pub steps: usize,
    pub lr: f64,
    /// Fixed noise variance (standardized units). `None` fits it.
    pub noise: Option<f64>,
    /// Lower bound for a fitted noise variance.
    pub min_noise: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            lr: 0.05,
            noise: None,
            min_noise: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lengthscale: f64,
    pub signal: f64,
    pub noise: f64,
}

/// A fitted single-output GP.
#[derive(Debug, Clone)]
pub struct Gp {
    pub hyper: Hyper,
    /// Extra diagonal added to make the factorization succeed.
    pub jitter: f64,
    x: Matrix,
    y_mean: f64,
    y_std: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn kernel(h: &Hyper, a: &[f64], b: &[f64]) -> f64 {
    h.signal * (-sq_dist(a, b) / (2.0 * h.lengthscale * h.lengthscale)).exp()
}

fn gram(x: &Matrix, h: &Hyper) -> DMatrix<f64> {
    let n = x.rows();
    DMatrix::from_fn(n, n, |i, j| {
        kernel(h, x.row(i), x.row(j)) + if i == j { h.noise } else { 0.0 }
    })
}

/// Cholesky of `k`, escalating diagonal jitter on failure.
fn factor(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    for j in JITTERS {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += j;
        }
        if let Some(c) = Cholesky::new(kj) {
            log::debug!("GP kernel matrix needed jitter {j:e}");
            return Ok((c, j));
        }
    }
    Err(Error::NotPositiveDefinite { jitter: JITTERS[JITTERS.len() - 1] })
}

/// Negative log marginal likelihood (per point) and its gradient in
/// `(ln ℓ, ln s², ln σ²)`.
fn nlml(x: &Matrix, y: &DVector<f64>, h: &Hyper, fit_noise: bool) -> Result<(f64, [f64; 3])> {
    let n = x.rows();
    let (chol, _) = factor(gram(x, h))?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let value = 0.5 * y.dot(&alpha) + 0.5 * log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // dNLML/dθ = -½ tr((ααᵀ − K⁻¹) dK/dθ)
    let w = &alpha * alpha.transpose() - chol.inverse();
    let inv_l2 = 1.0 / (h.lengthscale * h.lengthscale);
    let (mut g_len, mut g_sig, mut g_noise) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let d2 = sq_dist(x.row(i), x.row(j));
            let kf = h.signal * (-0.5 * d2 * inv_l2).exp();
            g_len += w[(i, j)] * kf * d2 * inv_l2;
            g_sig += w[(i, j)] * kf;
        }
        g_noise += w[(i, i)] * h.noise;
    }
    let s = -0.5 / n as f64;
    let grad = [s * g_len, s * g_sig, if fit_noise { s * g_noise } else { 0.0 }];
    Ok((value / n as f64, grad))
}

impl Gp {
    /// Fits hyperparameters from the median heuristic, then factors the final kernel matrix.
    pub fn fit(x: &Matrix, y: &[f64], cfg: &GpConfig) -> Result<Self> {
        let n = x.rows();
        if n < 2 || y.len() != n {
            return Err(invalid(format!("GP fit needs >= 2 points with matching targets, got {n} and {}", y.len())));
        }
        if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "GP training data".into() });
        }
        let (y_mean, std) = mean_std(y);
        let y_std = if std > 0.0 { std } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));

        let mut d = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(sq_dist(x.row(i), x.row(j)).sqrt());
            }
        }
        let med = median(&mut d);
        let mut hyper = Hyper {
            lengthscale: if med > 0.0 { med } else { 1.0 },
            signal: 1.0,
            noise: cfg.noise.unwrap_or(1e-4_f64.max(cfg.min_noise)),
        };

        if cfg.steps > 0 {
            let fit_noise = cfg.noise.is_none();
            let mut theta = [Matrix::from_vec(1, 3, vec![hyper.lengthscale.ln(), hyper.signal.ln(), hyper.noise.ln()])?];
            let mut adam = Adam::new(cfg.lr);
            let mut best = (f64::INFINITY, hyper);
            for _ in 0..cfg.steps {
                let (val, g) = nlml(x, &ys, &hyper, fit_noise)?;
                if val.is_finite() && val < best.0 {
                    best = (val, hyper);
                }
                if g.iter().any(|v| !v.is_finite()) {
                    break;
                }
                adam.step(&mut theta, &[Matrix::from_vec(1, 3, g.to_vec())?])?;
                let t = theta[0].as_mut_slice();
                t[0] = t[0].clamp(-7.0, 5.0);
                t[1] = t[1].clamp(-7.0, 5.0);
                t[2] = if fit_noise { t[2].clamp(cfg.min_noise.ln(), 0.0) } else { hyper.noise.ln() };
                hyper = Hyper {
                    lengthscale: t[0].exp(),
                    signal: t[1].exp(),
                    noise: if fit_noise { t[2].exp() } else { hyper.noise },
                };
            }
            if let Ok((val, _)) = nlml(x, &ys, &hyper, fit_noise) {
                if val < best.0 {
                    best = (val, hyper);
                }
            }
            hyper = best.1;
        }

        let (chol, jitter) = factor(gram(x, &hyper))?;
        let alpha = chol.solve(&ys);
        Ok(Self {
            hyper,
            jitter,
            x: x.clone(),
            y_mean,
            y_std,
            alpha,
            chol,
        })
    }

    pub fn n_train(&self) -> usize {
        self.x.rows()
    }

    fn kvec(&self, q: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.rows(), self.x.row_iter().map(|r| kernel(&self.hyper, q, r)))
    }

    /// Posterior mean in target units.
    pub fn mean(&self, q: &[f64]) -> f64 {
        self.y_mean + self.y_std * self.kvec(q).dot(&self.alpha)
    }

    /// Posterior variance of the latent function in target units.
    pub fn variance(&self, q: &[f64]) -> f64 {
        let k = self.kvec(q);
        let v = self.chol.l().solve_lower_triangular(&k).expect("triangular factor");
        (self.hyper.signal - v.dot(&v)).max(0.0) * self.y_std * self.y_std
    }

    /// Posterior mean and its gradient with respect to the query.
    pub fn mean_grad(&self, q: &[f64]) -> (f64, Vec<f64>) {
        let inv_l2 = 1.0 / (self.hyper.lengthscale * self.hyper.lengthscale);
        let mut mu = 0.0;
        let mut grad = vec![0.0; q.len()];
        for (i, r) in self.x.row_iter().enumerate() {
            let w = kernel(&self.hyper, q, r) * self.alpha[i];
            mu += w;
            for (g, (a, b)) in grad.iter_mut().zip(q.iter().zip(r)) {
                *g -= w * (a - b) * inv_l2;
            }
        }
        for g in &mut grad {
            *g *= self.y_std;
        }
        (self.y_mean + self.y_std * mu, grad)
    }
}

/// Posterior means of per-objective GPs, exposed as an objective on the unit box.
#[derive(Debug, Clone)]
pub struct GpObjective {
    pub gps: Vec<Gp>,
    bounds: Vec<(f64, f64)>,
}

impl GpObjective {
    /// Fits one GP per column of `y` on unit-box inputs `x`.
    pub fn fit(x: &Matrix, y: &Matrix, cfg: &GpConfig) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape {
                op: "gp_fit",
                lhs: vec![x.rows(), x.cols()],
                rhs: vec![y.rows(), y.cols()],
            });
        }
        let gps = (0..y.cols()).map(|j| Gp::fit(x, &y.column(j), cfg)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gps,
            bounds: vec![(0.0, 1.0); x.cols()],
        })
    }
}

impl Objective for GpObjective {
    fn name(&self) -> &str {
        "gp-mean"
    }
    fn n_var(&self) -> usize {
        self.bounds.len()
    }
    fn n_obj(&self) -> usize {
        self.gps.len()
    }
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let d = self.bounds.len();
        if x.len() != d {
            return Err(Error::Shape {
                op: "gp_evaluate",
                lhs: vec![x.len()],
                rhs: vec![d],
            });
        }
        let mut values = Vec::with_capacity(self.gps.len());
        let mut jacobian = Matrix::zeros(self.gps.len(), d);
        for (j, gp) in self.gps.iter().enumerate() {
            let (mu, g) = gp.mean_grad(x);
            values.push(mu);
            jacobian.row_mut(j).copy_from_slice(&g);
        }
        Ok(Evaluation {
            values,
            jacobian,
            out_of_bounds: x.iter().any(|v| !(0.0..=1.0).contains(v)),
        })
    }
    fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gps.iter().map(|gp| gp.mean(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn toy(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut r = rng::stream(seed, "gp-toy");
        let x = Matrix::from_fn(n, d, |_, _| r.random::<f64>());
        let y = x.row_iter().map(|p| (3.0 * p[0]).sin() + p.iter().map(|v| v * v).sum::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn noiseless_fit_interpolates() {
        let (x, y) = toy(5, 2, 1);
        let cfg = GpConfig {
            noise: Some(1e-8),
            ..GpConfig::default()
        };
        let gp = Gp::fit(&x, &y, &cfg).unwrap();
        for (i, r) in x.row_iter().enumerate() {
            assert!((gp.mean(r) - y[i]).abs() < 1e-6, "{} vs {}", gp.mean(r), y[i]);
            let var_std = gp.variance(r) / (gp.y_std * gp.y_std);
            assert!(var_std <= gp.hyper.noise + gp.jitter + 1e-12, "{var_std}");
        }
    }

    /// Gaussian elimination with partial pivoting, kept independent of the Cholesky path.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn posterior_matches_dense_solve() {
        let (x, y) = toy(20, 3, 2);
        let gp = Gp::fit(&x, &y, &GpConfig::default()).unwrap();
        let h = gp.hyper;
        let n = x.rows();
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| kernel(&h, x.row(i), x.row(j)) + if i == j { h.noise + gp.jitter } else { 0.0 })
                    .collect()
            })
            .collect();
        let ys: Vec<f64> = y.iter().map(|v| (v - gp.y_mean) / gp.y_std).collect();
        let alpha = gauss_solve(k.clone(), ys);
        let mut r = rng::stream(3, "gp-query");
        for _ in 0..10 {
            let q: Vec<f64> = (0..3).map(|_| r.random::<f64>()).collect();
            let kq: Vec<f64> = x.row_iter().map(|p| kernel(&h, &q, p)).collect();
            let mu = gp.y_mean + gp.y_std * kq.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
            let w = gauss_solve(k.clone(), kq.clone());
            let var = (h.signal - kq.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).max(0.0) * gp.y_std * gp.y_std;
            assert!((gp.mean(&q) - mu).abs() < 1e-8, "{} vs {mu}", gp.mean(&q));
            assert!((gp.variance(&q) - var).abs() < 1e-8, "{} vs {var}", gp.variance(&q));
        }
    }

    #[test]
    fn mean_gradient_matches_finite_differences() {
        let (x, y) = toy(15, 4, 4);
        let gp = Gp::fit(&x, &y, &GpConfig::default()).unwrap();
        let mut r = rng::stream(5, "gp-fd");
        for _ in 0..10 {
            let q: Vec<f64> = (0..4).map(|_| r.random::<f64>()).collect();
            let (_, g) = gp.mean_grad(&q);
            for k in 0..4 {
                let eps = 1e-6;
                let mut a = q.clone();
                let mut b = q.clone();
                a[k] += eps;
                b[k] -= eps;
                let fd = (gp.mean(&a) - gp.mean(&b)) / (2.0 * eps);
                assert!((g[k] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "{} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn fitting_improves_marginal_likelihood() {
        let (x, y) = toy(30, 2, 6);
        let init = Gp::fit(&x, &y, &GpConfig { steps: 0, ..GpConfig::default() }).unwrap();
        let fitted = Gp::fit(&x, &y, &GpConfig::default()).unwrap();
        let ys = DVector::from_iterator(30, y.iter().map(|v| (v - init.y_mean) / init.y_std));
        let before = nlml(&x, &ys, &init.hyper, true).unwrap().0;
        let after = nlml(&x, &ys, &fitted.hyper, true).unwrap().0;
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn hyper_gradient_matches_finite_differences() {
        let (x, y) = toy(12, 2, 7);
        let (m, s) = mean_std(&y);
        let ys = DVector::from_iterator(12, y.iter().map(|v| (v - m) / s));
        let h = Hyper {
            lengthscale: 0.4,
            signal: 1.3,
            noise: 1e-2,
        };
        let (_, g) = nlml(&x, &ys, &h, true).unwrap();
        let logs = [h.lengthscale.ln(), h.signal.ln(), h.noise.ln()];
        for k in 0..3 {
            let at = |delta: f64| {
                let mut l = logs;
                l[k] += delta;
                let hh = Hyper {
                    lengthscale: l[0].exp(),
                    signal: l[1].exp(),
                    noise: l[2].exp(),
                };
                nlml(&x, &ys, &hh, true).unwrap().0
            };
            let fd = (at(1e-5) - at(-1e-5)) / 2e-5;
            assert!((g[k] - fd).abs() < 1e-5 * fd.abs().max(1.0), "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn jitter_rescues_duplicate_inputs() {
        let x = Matrix::from_rows(&[[0.2, 0.2], [0.2, 0.2], [0.7, 0.1]]).unwrap();
        let cfg = GpConfig {
            steps: 0,
            noise: Some(0.0),
            ..GpConfig::default()
        };
        let gp = Gp::fit(&x, &[1.0, 1.0, 0.0], &cfg).unwrap();
        assert!(gp.jitter > 0.0);
        assert!((gp.mean(&[0.2, 0.2]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_single_point() {
        let x = Matrix::from_rows(&[[0.5]]).unwrap();
        assert!(Gp::fit(&x, &[1.0], &GpConfig::default()).is_err());
    }
}
