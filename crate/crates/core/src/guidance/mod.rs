//! Guided reverse steps.
//!
//! After the plain denoising step produces `X'`, every sample is pushed along a guidance
//! direction `h̃ = h + γδ`: `h` trades the MGD direction `g` against an RBF repulsion between
//! objective vectors, `δ` is a random perturbation and `γ` is sized so that `h̃` stays a common
//! descent direction whenever `h` is one. The step length comes from Armijo backtracking.

mod armijo;
mod mgd;
mod repulsion;

pub use armijo::{armijo_step, trial_point, ArmijoConfig};
pub use mgd::{duality_gap, mgd_direction, MgdSolution};
pub use repulsion::{bandwidth, repulsion, repulsion_with_bandwidth};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{reverse_step, ConditionNorm, DiffusionSchedule, NoisePredictor};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::problems::Objective;
use crate::rng::Rng;

use armijo::clamp_to;

/// Rows whose MGD direction is shorter than this are treated as Pareto-stationary.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Which parts of the guidance direction are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `h̃ = h + γδ`
    #[default]
    Full,
    /// `h̃ = g`
    NoDiversity,
    /// `h̃ = g + γδ`
    NoRepulsion,
    /// `h̃ = h`
    NoPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Repulsion weight.
    pub nu: f64,
    /// Perturbation scale in (0, 1).
    pub rho: f64,
    /// Perturbation scale when no objective opposes δ.
    pub zeta: f64,
    pub subproblem_iters: usize,
    /// Fixed sub-problem learning rate. By default each step is normalized to a row-mean
    /// length of `0.1 * mean_i ‖g_i‖`.
    pub subproblem_lr: Option<f64>,
    pub armijo: ArmijoConfig,
    /// Multiplier in the repulsion bandwidth.
    pub sigma_scale: f64,
    /// One perturbation shared by the whole batch (otherwise one per sample).
    pub shared_delta: bool,
    pub variant: Variant,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            nu: 10.0,
            rho: 0.5,
            zeta: 1e-2,
            subproblem_iters: 10,
            subproblem_lr: None,
            armijo: ArmijoConfig::default(),
            sigma_scale: 5e-6,
            shared_delta: true,
            variant: Variant::Full,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.zeta > 0.0) {
            return Err(Error::InvalidArgument(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be non-negative, got {}", self.nu)));
        }
        let a = &self.armijo;
        if !(a.eta0 > 0.0 && a.b > 0.0 && a.b < 1.0 && a.a > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid line-search settings {a:?}")));
        }
        Ok(())
    }
}

/// All directions computed in one guided step. Matrices are n x d.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionBundle {
    pub g: Matrix,
    pub h: Matrix,
    pub h_tilde: Matrix,
    pub gamma: Vec<f64>,
    /// Row i is the perturbation used for sample i (identical rows when shared).
    pub delta: Matrix,
    pub eta: Vec<f64>,
    /// Rows that were Pareto-stationary and left in place.
    pub stationary: Vec<bool>,
}

/// Objective of the main-direction sub-problem and its gradient w.r.t. `u`.
#[allow(clippy::too_many_arguments)]
fn subproblem(
    f: &dyn Objective,
    x_prime: &Matrix,
    g: &Matrix,
    u: &Matrix,
    offset: &Matrix,
    eta: f64,
    nu: f64,
    two_sigma_sq: Option<f64>,
    sigma_scale: f64,
) -> Result<(f64, Matrix)> {
    let n = x_prime.rows();
    let mut value = 0.0;
    let mut grad = Matrix::zeros(n, u.cols());
    for i in 0..n {
        value -= dot(g.row(i), u.row(i)) / n as f64;
        for (gr, gi) in grad.row_mut(i).iter_mut().zip(g.row(i)) {
            *gr = -gi / n as f64;
        }
    }
    if nu == 0.0 || n < 2 {
        return Ok((value, grad));
    }
    let mut y = Matrix::zeros(n, f.n_obj());
    let mut jacs = Vec::with_capacity(n);
    for i in 0..n {
        let mut p: Vec<f64> = (0..u.cols())
            .map(|k| x_prime[(i, k)] - eta * (u[(i, k)] + offset[(i, k)]))
            .collect();
        clamp_to(&mut p, f.bounds());
        let e = f.evaluate(&p)?;
        y.row_mut(i).copy_from_slice(&e.values);
        jacs.push(e.jacobian);
    }
    let bw = two_sigma_sq.unwrap_or_else(|| bandwidth(&y, sigma_scale));
    let (gamma, dgy) = repulsion_with_bandwidth(&y, bw);
    value += nu * gamma;
    for i in 0..n {
        // d/du_i Γ(F(x' − η(u + off))) = −η J_iᵀ ∂Γ/∂y_i
        let back = jacs[i].tmul_vec(dgy.row(i));
        for (gr, b) in grad.row_mut(i).iter_mut().zip(back) {
            *gr -= nu * eta * b;
        }
    }
    Ok((value, grad))
}

/// Main directions: `subproblem_iters` gradient steps on
/// `U ↦ −(1/n) Σ ⟨g_i, u_i⟩ + ν Γ(F(X' − η(U + γ∘δ)))` from `U = g`.
///
/// The repulsion bandwidth is fixed from the starting batch. Rows whose gradient turns
/// non-finite are reset to `g` and frozen.
pub fn main_directions(
    f: &dyn Objective,
    x_prime: &Matrix,
    g: &Matrix,
    delta: &Matrix,
    gamma: &[f64],
    eta: f64,
    cfg: &GuidanceConfig,
) -> Result<Matrix> {
    Ok(main_directions_traced(f, x_prime, g, delta, gamma, eta, cfg)?.0)
}

/// As [`main_directions`], also returning the sub-problem objective before each step and at
/// the end.
pub fn main_directions_traced(
    f: &dyn Objective,
    x_prime: &Matrix,
    g: &Matrix,
    delta: &Matrix,
    gamma: &[f64],
    eta: f64,
    cfg: &GuidanceConfig,
) -> Result<(Matrix, Vec<f64>)> {
    let n = x_prime.rows();
    let mut u = g.clone();
    if n == 0 {
        return Ok((u, vec![]));
    }
    let offset = Matrix::from_fn(n, g.cols(), |i, k| gamma[i] * delta[(i, k)]);
    let mean_norm = g.row_iter().map(norm).sum::<f64>() / n as f64;

    // bandwidth from the starting configuration, held fixed across iterations
    let bw = if cfg.nu > 0.0 && n >= 2 {
        let mut y = Matrix::zeros(n, f.n_obj());
        for i in 0..n {
            let p = trial_point(x_prime.row(i), &add(u.row(i), offset.row(i)), eta, f.bounds());
            y.row_mut(i).copy_from_slice(&f.values(&p)?);
        }
        Some(bandwidth(&y, cfg.sigma_scale))
    } else {
        None
    };

    let mut frozen = vec![false; n];
    let mut trace = Vec::with_capacity(cfg.subproblem_iters + 1);
    for _ in 0..cfg.subproblem_iters {
        let (val, grad) = subproblem(f, x_prime, g, &u, &offset, eta, cfg.nu, bw, cfg.sigma_scale)?;
        trace.push(val);
        // default: normalized step whose row-mean length is a tenth of the mean MGD norm,
        // so the update shrinks with g instead of blowing up as g → 0
        let lr = cfg.subproblem_lr.unwrap_or_else(|| {
            let gn = grad.row_iter().filter(|r| r.iter().all(|v| v.is_finite())).map(norm).sum::<f64>() / n as f64;
            if gn > 0.0 { 0.1 * mean_norm / gn } else { 0.0 }
        });
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let row = grad.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                log::warn!("main-direction sub-problem produced a non-finite gradient; row {i} reset to g");
                u.row_mut(i).copy_from_slice(g.row(i));
                frozen[i] = true;
                continue;
            }
            let next: Vec<f64> = u.row(i).iter().zip(row).map(|(a, b)| a - lr * b).collect();
            u.row_mut(i).copy_from_slice(&next);
        }
    }
    let (val, _) = subproblem(f, x_prime, g, &u, &offset, eta, cfg.nu, bw, cfg.sigma_scale)?;
    trace.push(val);
    Ok((u, trace))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Perturbation scale for one sample given `a_j = ⟨∇f_j, h⟩` and `b_j = ⟨∇f_j, δ⟩`.
pub fn gamma_for(a: &[f64], b: &[f64], rho: f64, zeta: f64) -> f64 {
    if a.iter().any(|v| !(*v > 0.0)) {
        return 0.0;
    }
    let limit = a
        .iter()
        .zip(b)
        .filter(|(_, bj)| **bj < 0.0)
        .map(|(aj, bj)| -aj / bj)
        .fold(f64::INFINITY, f64::min);
    if limit.is_finite() {
        rho * limit
    } else {
        zeta
    }
}

/// Per-sample perturbation scales keeping `h̃ = h + γδ` a descent direction for every objective.
pub fn adaptive_gamma(jacs: &[Matrix], h: &Matrix, delta: &Matrix, rho: f64, zeta: f64) -> Vec<f64> {
    jacs.iter()
        .enumerate()
        .map(|(i, j)| {
            let a: Vec<f64> = j.row_iter().map(|r| dot(r, h.row(i))).collect();
            let b: Vec<f64> = j.row_iter().map(|r| dot(r, delta.row(i))).collect();
            gamma_for(&a, &b, rho, zeta)
        })
        .collect()
}

fn draw_delta(n: usize, d: usize, shared: bool, rng: &mut Rng) -> Matrix {
    if shared {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        Matrix::from_fn(n, d, |_, k| v[k])
    } else {
        Matrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }
}

/// Applies the guidance to already-denoised points `x_prime` (inside the box of `f`).
pub fn guide(f: &dyn Objective, x_prime: &Matrix, cfg: &GuidanceConfig, rng: &mut Rng) -> Result<(Matrix, DirectionBundle)> {
    cfg.validate()?;
    let (n, d) = x_prime.shape();
    let (fx, jacs) = f.evaluate_batch(x_prime)?;

    let mut g = Matrix::zeros(n, d);
    let mut stationary = vec![false; n];
    for (i, j) in jacs.iter().enumerate() {
        let sol = mgd_direction(j);
        g.row_mut(i).copy_from_slice(&sol.g);
        stationary[i] = norm(&sol.g) < STATIONARY_TOL;
    }
    let delta = draw_delta(n, d, cfg.shared_delta, rng);
    let active: Vec<usize> = (0..n).filter(|&i| !stationary[i]).collect();

    let mut h = Matrix::zeros(n, d);
    let mut gamma = vec![0.0; n];
    if !active.is_empty() {
        let xa = x_prime.select_rows(&active);
        let ga = g.select_rows(&active);
        let da = delta.select_rows(&active);
        let ha = match cfg.variant {
            Variant::Full | Variant::NoPerturbation => {
                // inside the sub-problem the step is the nominal one and no perturbation is applied yet
                main_directions(f, &xa, &ga, &da, &vec![0.0; active.len()], cfg.armijo.eta0, cfg)?
            }
            Variant::NoDiversity | Variant::NoRepulsion => ga.clone(),
        };
        let ja: Vec<Matrix> = active.iter().map(|&i| jacs[i].clone()).collect();
        let gam = match cfg.variant {
            Variant::Full | Variant::NoRepulsion => adaptive_gamma(&ja, &ha, &da, cfg.rho, cfg.zeta),
            _ => vec![0.0; active.len()],
        };
        for (p, &i) in active.iter().enumerate() {
            h.row_mut(i).copy_from_slice(ha.row(p));
            gamma[i] = gam[p];
        }
    }

    let mut h_tilde = Matrix::zeros(n, d);
    let mut eta = vec![0.0; n];
    let mut out = x_prime.clone();
    for &i in &active {
        let ht: Vec<f64> = h.row(i).iter().zip(delta.row(i)).map(|(a, b)| a + gamma[i] * b).collect();
        let e = armijo_step(f, x_prime.row(i), fx.row(i), &jacs[i], &ht, &cfg.armijo)?;
        eta[i] = e;
        if e > 0.0 {
            out.row_mut(i).copy_from_slice(&trial_point(x_prime.row(i), &ht, e, f.bounds()));
        }
        h_tilde.row_mut(i).copy_from_slice(&ht);
    }
    Ok((
        out,
        DirectionBundle {
            g,
            h,
            h_tilde,
            gamma,
            delta,
            eta,
            stationary,
        },
    ))
}

/// One guided reverse step on unit-box points: condition on the current objective values,
/// denoise, clamp into the box and apply [`guide`].
#[allow(clippy::too_many_arguments)]
pub fn guided_update(
    x_t: &Matrix,
    t: usize,
    net: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    norm_c: &ConditionNorm,
    f: &dyn Objective,
    cfg: &GuidanceConfig,
    rng: &mut Rng,
) -> Result<(Matrix, DirectionBundle)> {
    let (n, d) = x_t.shape();
    let mut xc = x_t.clone();
    for i in 0..n {
        clamp_to(xc.row_mut(i), f.bounds());
    }
    let cond = norm_c.apply(&f.values_batch(&xc)?, false);
    let z = (t > 1).then(|| Matrix::from_fn(n, d, |_, _| StandardNormal.sample(rng)));
    let mut x_prime = reverse_step(net, x_t, t, &cond, sched, z.as_ref())?;
    for i in 0..n {
        clamp_to(x_prime.row_mut(i), f.bounds());
    }
    guide(f, &x_prime, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Evaluation;
    use crate::rng;
    use rand::Rng as _;

    /// Sum of shifted quadratics `f_j(x) = ‖x − c_j‖²` on a wide box.
    pub(crate) struct Quadratics {
        centers: Vec<Vec<f64>>,
        bounds: Vec<(f64, f64)>,
    }

    impl Quadratics {
        pub(crate) fn new(centers: Vec<Vec<f64>>) -> Self {
            let d = centers[0].len();
            Self {
                centers,
                bounds: vec![(-100.0, 100.0); d],
            }
        }
    }

    impl Objective for Quadratics {
        fn name(&self) -> &str {
            "quadratics"
        }
        fn n_var(&self) -> usize {
            self.bounds.len()
        }
        fn n_obj(&self) -> usize {
            self.centers.len()
        }
        fn bounds(&self) -> &[(f64, f64)] {
            &self.bounds
        }
        fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
            let m = self.centers.len();
            let d = x.len();
            let mut values = vec![0.0; m];
            let mut jac = Matrix::zeros(m, d);
            for (j, c) in self.centers.iter().enumerate() {
                for k in 0..d {
                    values[j] += (x[k] - c[k]).powi(2);
                    jac[(j, k)] = 2.0 * (x[k] - c[k]);
                }
            }
            Ok(Evaluation {
                values,
                jacobian: jac,
                out_of_bounds: false,
            })
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_for(&[1.0], &[-2.0], 0.5, 1e-2), 0.25);
        assert_eq!(gamma_for(&[1.0, 2.0], &[3.0, 0.1], 0.5, 1e-2), 1e-2);
        assert_eq!(gamma_for(&[1.0, -0.1], &[-3.0, 0.1], 0.5, 1e-2), 0.0);
    }

    #[test]
    fn zero_nu_keeps_directions_colinear() {
        let f = Quadratics::new(vec![vec![0.0, 0.0, 0.0], vec![1.0, 2.0, -1.0]]);
        let mut r = rng::stream(1, "md");
        let x = Matrix::from_fn(5, 3, |_, _| r.random::<f64>());
        let g = Matrix::from_fn(5, 3, |_, _| r.random::<f64>() - 0.5);
        let lr = 0.1 / (g.row_iter().map(norm).sum::<f64>() / 5.0);
        let cfg = GuidanceConfig { nu: 0.0, subproblem_lr: Some(lr), ..Default::default() };
        let h = main_directions(&f, &x, &g, &Matrix::zeros(5, 3), &[0.0; 5], 0.1, &cfg).unwrap();
        for i in 0..5 {
            for k in 0..3 {
                let want = g[(i, k)] * (1.0 + 10.0 * lr / 5.0);
                assert!((h[(i, k)] - want).abs() < 1e-12);
            }
        }
        // normalized steps change the length, not the direction
        let h = main_directions(&f, &x, &g, &Matrix::zeros(5, 3), &[0.0; 5], 0.1, &GuidanceConfig { nu: 0.0, ..Default::default() }).unwrap();
        for i in 0..5 {
            let c = h[(i, 0)] / g[(i, 0)];
            assert!(c > 1.0);
            for k in 0..3 {
                assert!((h[(i, k)] - c * g[(i, k)]).abs() < 1e-12);
            }
        }
        // a single sample has no pairs, so ν is irrelevant
        let h1 = main_directions(&f, &x.select_rows(&[0]), &g.select_rows(&[0]), &Matrix::zeros(1, 3), &[0.0], 0.1, &GuidanceConfig::default()).unwrap();
        let c = h1[(0, 0)] / g[(0, 0)];
        for k in 0..3 {
            assert!((h1[(0, k)] - c * g[(0, k)]).abs() < 1e-12);
        }
    }

    #[test]
    fn subproblem_descends_with_small_steps() {
        let f = Quadratics::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        let x = Matrix::from_rows(&[[0.5, 0.30], [0.5, 0.31]]).unwrap();
        let g = Matrix::from_fn(2, 2, |i, _| 0.1 + 0.01 * i as f64);
        // bandwidth large enough for the repulsion to matter
        let cfg = GuidanceConfig {
            sigma_scale: 1.0,
            subproblem_lr: Some(1e-3),
            ..Default::default()
        };
        let (_, trace) = main_directions_traced(&f, &x, &g, &Matrix::zeros(2, 2), &[0.0; 2], 0.1, &cfg).unwrap();
        assert_eq!(trace.len(), 11);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{trace:?}");
        }
    }

    #[test]
    fn armijo_examples() {
        let f = Quadratics::new(vec![vec![0.0, 0.0]]);
        let x = [1.0, -2.0];
        let e = f.evaluate(&x).unwrap();
        let h = e.jacobian.row(0).to_vec();
        let cfg = ArmijoConfig { eta0: 0.01, ..Default::default() };
        assert_eq!(armijo_step(&f, &x, &e.values, &e.jacobian, &h, &cfg).unwrap(), 0.01);
        let up: Vec<f64> = h.iter().map(|v| -v).collect();
        assert_eq!(armijo_step(&f, &x, &e.values, &e.jacobian, &up, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn guided_step_is_deterministic_and_handles_one_sample() {
        let f = Quadratics::new(vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]);
        let mut r = rng::stream(4, "x");
        let x = Matrix::from_fn(6, 3, |_, _| r.random::<f64>() * 2.0 - 0.5);
        let cfg = GuidanceConfig::default();
        let a = guide(&f, &x, &cfg, &mut rng::stream(9, "g")).unwrap();
        let b = guide(&f, &x, &cfg, &mut rng::stream(9, "g")).unwrap();
        assert_eq!(a.0, b.0);
        let one = guide(&f, &x.select_rows(&[2]), &cfg, &mut rng::stream(9, "g")).unwrap();
        assert!(one.0.all_finite());
    }

    #[test]
    fn pure_mgd_step_decreases_every_objective() {
        let f = Quadratics::new(vec![vec![0.0, 0.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 2.0, 1.0]]);
        let mut r = rng::stream(5, "x");
        let x = Matrix::from_fn(8, 3, |_, _| r.random::<f64>() * 4.0 - 4.0);
        let cfg = GuidanceConfig { nu: 0.0, rho: 1e-9, zeta: 1e-12, ..Default::default() };
        let (out, bundle) = guide(&f, &x, &cfg, &mut rng::stream(1, "g")).unwrap();
        for i in 0..8 {
            assert!(bundle.eta[i] > 0.0);
            let (before, after) = (f.values(x.row(i)).unwrap(), f.values(out.row(i)).unwrap());
            assert!(before.iter().zip(&after).all(|(b, a)| a < b));
        }
    }
}
