use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{noise_to_rows, DiffusionSchedule, CENTER};
use crate::autodiff::{Adam, Graph};
use crate::ditmoo::{time_features, DitMoo};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problems::Objective;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Maximum number of epochs.
    pub epochs: usize,
    /// Stop once this many epochs pass without a new best loss.
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Training-set size used when the caller draws its own design.
    pub n_train: usize,
    /// Condition shift; defaults to 0.1 x the per-objective range of the training objectives.
    pub xi: Option<Vec<f64>>,
    /// Condition on the clean points instead of the noised ones.
    pub condition_on_clean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            patience: 100,
            lr: 1e-3,
            batch_size: 256,
            n_train: 10_000,
            xi: None,
            condition_on_clean: false,
        }
    }
}

/// Standardization of condition vectors, plus the training shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ConditionNorm {
    /// Stats of the objective rows `y`; `xi` defaults to a tenth of each objective's range.
    pub fn fit(y: &Matrix, xi: Option<&[f64]>) -> Result<Self> {
        let m = y.cols();
        let mut mean = Vec::with_capacity(m);
        let mut std = Vec::with_capacity(m);
        let mut range = Vec::with_capacity(m);
        for j in 0..m {
            let col = y.column(j);
            let (mu, sd) = crate::linalg::mean_std(&col);
            mean.push(mu);
            std.push(if sd > 0.0 { sd } else { 1.0 });
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
            range.push(hi - lo);
        }
        let xi = match xi {
            Some(x) => x.to_vec(),
            None => range.iter().zip(&std).map(|(r, s)| if *r > 0.0 { 0.1 * r } else { 0.1 * s }).collect(),
        };
        if xi.len() != m || xi.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "condition shift must have {m} strictly positive entries, got {xi:?}"
            )));
        }
        Ok(Self { mean, std, xi })
    }

    /// Standardizes raw objective rows, adding the shift first when `shifted`.
    pub fn apply(&self, y: &Matrix, shifted: bool) -> Matrix {
        Matrix::from_fn(y.rows(), y.cols(), |i, j| {
            let v = if shifted { y[(i, j)] + self.xi[j] } else { y[(i, j)] };
            (v - self.mean[j]) / self.std[j]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per completed epoch.
    pub loss_history: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

/// Patience-based early stopping on a loss sequence.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Records one epoch's loss; returns `(is_new_best, should_stop)`.
    pub fn update(&mut self, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }
}

/// Centred network coordinates back to the unit box, projected onto it.
fn clamp_unit(x: &Matrix) -> Matrix {
    x.map(|v| (v + CENTER).clamp(0.0, 1.0))
}

/// Trains `net` to predict the noise added to `x_unit` (rows in `[0,1]^d`), conditioned on the
/// shifted, standardized objective values from `f`. The best-loss parameters are left in `net`.
pub fn train(
    net: &mut DitMoo,
    f: &dyn Objective,
    x_unit: &Matrix,
    config: &TrainConfig,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<(TrainReport, ConditionNorm)> {
    let n = x_unit.rows();
    if n == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument("training needs data and a positive batch size".into()));
    }
    if x_unit.cols() != net.config.d || f.n_obj() != net.config.m {
        return Err(Error::Shape {
            op: "train",
            lhs: vec![x_unit.cols(), f.n_obj()],
            rhs: vec![net.config.d, net.config.m],
        });
    }
    let y_train = f.values_batch(x_unit)?;
    let norm = ConditionNorm::fit(&y_train, config.xi.as_deref())?;

    let mut adam = Adam::new(config.lr);
    let mut stopper = EarlyStopper::new(config.patience.max(1));
    let mut best_params = net.params.clone();
    let mut report = TrainReport {
        loss_history: Vec::new(),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let d = net.config.d;

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x0 = x_unit.select_rows(chunk).map(|v| v - CENTER);
            let b = chunk.len();
            let ts: Vec<usize> = (0..b).map(|_| rng.random_range(1..=sched.steps)).collect();
            let eps = Matrix::from_fn(b, d, |_, _| StandardNormal.sample(rng));
            let xt = noise_to_rows(&x0, &ts, &eps, sched)?;
            let raw = if config.condition_on_clean {
                y_train.select_rows(chunk)
            } else {
                f.values_batch(&clamp_unit(&xt))?
            };
            let cond = norm.apply(&raw, true);

            let mut g = Graph::new();
            let pv = net.register(&mut g, true);
            let xv = g.constant(xt);
            let tv = g.constant(time_features(&ts));
            let cv = g.constant(cond);
            let pred = net.forward_graph(&mut g, &pv, xv, tv, cv)?;
            let target = g.constant(eps);
            let diff = g.sub(pred, target)?;
            let ss = g.sum_sq(diff);
            let loss = g.scale(ss, 1.0 / (b * d) as f64);
            let lv = g.value(loss)[(0, 0)];
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = g.backward(loss)?;
            let gs: Vec<Matrix> = pv.iter().map(|v| grads.get(*v)).collect();
            adam.step(&mut net.params, &gs).map_err(|_| Error::Diverged { epoch })?;
            total += lv;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        report.loss_history.push(epoch_loss);
        let (best, stop) = stopper.update(epoch_loss);
        if best {
            best_params.clone_from(&net.params);
            report.best_epoch = epoch;
            report.best_loss = epoch_loss;
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        if stop {
            report.stopped_early = true;
            break;
        }
    }
    net.params = best_params;
    Ok((report, norm))
}
