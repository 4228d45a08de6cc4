//! Backtracking step sizes satisfying the Armijo condition on every objective.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{dot, Matrix};
use crate::problems::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoConfig {
    /// Sufficient-decrease constant.
    pub a: f64,
    /// Backtracking factor.
    pub b: f64,
    pub eta0: f64,
    pub k_max: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            a: 1e-4,
            b: 0.9,
            eta0: 0.1,
            k_max: 50,
        }
    }
}

pub(crate) fn clamp_to(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Trial point `clamp(x − η h)`.
pub fn trial_point(x: &[f64], h: &[f64], eta: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let mut t: Vec<f64> = x.iter().zip(h).map(|(a, b)| a - eta * b).collect();
    clamp_to(&mut t, bounds);
    t
}

/// Largest `η = eta0 · b^k`, `k = 0..=k_max`, with
/// `f_j(clamp(x − η h)) ≤ f_j(x) − a η ⟨∇f_j(x), h⟩` for every `j`; zero if none qualifies.
/// `fx` and `jac` are the values and Jacobian at `x`.
pub fn armijo_step(
    f: &dyn Objective,
    x: &[f64],
    fx: &[f64],
    jac: &Matrix,
    h: &[f64],
    cfg: &ArmijoConfig,
) -> Result<f64> {
    let slopes: Vec<f64> = (0..jac.rows()).map(|j| dot(jac.row(j), h)).collect();
    let mut eta = cfg.eta0;
    for _ in 0..=cfg.k_max {
        let xt = trial_point(x, h, eta, f.bounds());
        let ft = f.values(&xt)?;
        if ft
            .iter()
            .zip(fx)
            .zip(&slopes)
            .all(|((new, old), s)| *new <= old - cfg.a * eta * s)
        {
            return Ok(eta);
        }
        eta *= cfg.b;
    }
    Ok(0.0)
}
