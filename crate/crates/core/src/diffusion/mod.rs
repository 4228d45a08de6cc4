//! Cosine-schedule DDPM pieces: the variance schedule, forward noising and the plain reverse
//! step, plus training and checkpointing of the conditional noise network.
//!
//! Callers hand in unit-box decisions. The network itself works on `u - CENTER`, so the
//! terminal standard normal sits on the middle of the box instead of on its lower corner.

mod checkpoint;
mod train;

pub use checkpoint::Checkpoint;
pub use train::{train, ConditionNorm, TrainConfig, TrainReport};

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_S_OFFSET: f64 = 0.008;
/// Offset between unit-box coordinates and the coordinates the network is trained in.
pub const CENTER: f64 = 0.5;
const BETA_MIN: f64 = 1e-8;
const BETA_MAX: f64 = 0.999;

/// Per-step variances `beta_t` and cumulative products `alpha_bar_t` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub s_offset: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// Shifted-cosine schedule. `beta_t = 1 - abar_t / abar_{t-1}` is clipped to
    /// `[1e-8, 0.999]` and `alpha_bar` is then rebuilt as the running product of `1 - beta`,
    /// so the two stay exactly consistent.
    pub fn cosine(steps: usize, s: f64) -> Result<Self> {
        if steps == 0 || !(s >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cosine schedule needs T >= 1 and s >= 0, got T={steps}, s={s}"
            )));
        }
        let f = |t: usize| {
            let c = ((t as f64 / steps as f64 + s) / (1.0 + s) * FRAC_PI_2).cos();
            c * c
        };
        let f0 = f(0);
        let mut beta = Vec::with_capacity(steps);
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for t in 1..=steps {
            let b = (1.0 - (f(t) / f0) / (f(t - 1) / f0)).clamp(BETA_MIN, BETA_MAX);
            prod *= 1.0 - b;
            beta.push(b);
            alpha_bar.push(prod);
        }
        Ok(Self {
            steps,
            s_offset: s,
            beta,
            alpha_bar,
        })
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::InvalidArgument(format!(
                "timestep {t} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T` (`alpha_bar_0 = 1`).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn noise_to(x0: &Matrix, t: usize, eps: &Matrix, sched: &DiffusionSchedule) -> Result<Matrix> {
    sched.check_t(t)?;
    if x0.shape() != eps.shape() {
        return Err(Error::Shape {
            op: "noise_to",
            lhs: vec![x0.rows(), x0.cols()],
            rhs: vec![eps.rows(), eps.cols()],
        });
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0.as_slice().iter().zip(eps.as_slice()).map(|(x, e)| a * x + b * e).collect();
    Matrix::from_vec(x0.rows(), x0.cols(), data)
}

/// Row-wise noising with a separate timestep per row.
pub fn noise_to_rows(x0: &Matrix, ts: &[usize], eps: &Matrix, sched: &DiffusionSchedule) -> Result<Matrix> {
    let mut out = Matrix::zeros(x0.rows(), x0.cols());
    for (i, &t) in ts.iter().enumerate() {
        sched.check_t(t)?;
        let ab = sched.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for j in 0..x0.cols() {
            out[(i, j)] = a * x0[(i, j)] + b * eps[(i, j)];
        }
    }
    Ok(out)
}

/// Reverse step given a noise prediction: `(x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(1 - beta_t) + sqrt(beta_t) z`.
/// Pass `z = None` for the noiseless final step.
pub fn reverse_step_eps(
    x_t: &Matrix,
    t: usize,
    eps_hat: &Matrix,
    z: Option<&Matrix>,
    sched: &DiffusionSchedule,
) -> Result<Matrix> {
    sched.check_t(t)?;
    let b = sched.beta(t);
    let c = b / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / (1.0 - b).sqrt();
    let sb = b.sqrt();
    let mut out = Matrix::zeros(x_t.rows(), x_t.cols());
    for (k, o) in out.as_mut_slice().iter_mut().enumerate() {
        let mut v = (x_t.as_slice()[k] - c * eps_hat.as_slice()[k]) * inv;
        if let Some(z) = z {
            v += sb * z.as_slice()[k];
        }
        *o = v;
    }
    Ok(out)
}

/// Noise-predictor interface used by the reverse process.
pub trait NoisePredictor {
    fn predict_noise(&self, x_t: &Matrix, t: usize, cond: &Matrix) -> Result<Matrix>;
}

impl NoisePredictor for crate::ditmoo::DitMoo {
    fn predict_noise(&self, x_t: &Matrix, t: usize, cond: &Matrix) -> Result<Matrix> {
        self.forward(x_t, t, cond)
    }
}

/// One plain reverse step with the network's noise prediction; `x_t` and the result are in
/// unit-box coordinates.
pub fn reverse_step(
    net: &dyn NoisePredictor,
    x_t: &Matrix,
    t: usize,
    cond: &Matrix,
    sched: &DiffusionSchedule,
    z: Option<&Matrix>,
) -> Result<Matrix> {
    let xc = x_t.map(|v| v - CENTER);
    let eps = net.predict_noise(&xc, t, cond)?;
    Ok(reverse_step_eps(&xc, t, &eps, z, sched)?.map(|v| v + CENTER))
}
