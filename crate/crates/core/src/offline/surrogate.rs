//! Per-objective MLP surrogates (two GELU hidden layers) trained on standardized targets.
//!
//! Training runs through the autodiff graph; prediction and input gradients use a direct
//! forward/backward pass since the guidance queries single points many times.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{gelu, gelu_grad, Adam, Graph};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::problems::{Evaluation, Objective};
use crate::rng::Rng;

use super::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Held-out fraction used to pick the snapshot.
    pub validation: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 500,
            lr: 1e-3,
            batch_size: 128,
            validation: 0.1,
        }
    }
}

/// One scalar MLP: `W1 (d×h), b1, W2 (h×h), b2, W3 (h×1), b3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: Vec<Matrix>,
}

impl Mlp {
    pub fn init(d: usize, h: usize, rng: &mut Rng) -> Self {
        let mut w = |r: usize, c: usize| {
            let n = Normal::new(0.0, 1.0 / (r as f64).sqrt()).expect("positive std");
            Matrix::from_fn(r, c, |_, _| n.sample(&mut *rng))
        };
        let (w1, w2, w3) = (w(d, h), w(h, h), w(h, 1));
        Self {
            params: vec![w1, Matrix::zeros(1, h), w2, Matrix::zeros(1, h), w3, Matrix::zeros(1, 1)],
        }
    }

    fn graph(&self, g: &mut Graph, pv: &[crate::autodiff::Var], x: crate::autodiff::Var) -> Result<crate::autodiff::Var> {
        let z1 = g.matmul(x, pv[0])?;
        let z1 = g.add_bias(z1, pv[1])?;
        let a1 = g.gelu(z1);
        let z2 = g.matmul(a1, pv[2])?;
        let z2 = g.add_bias(z2, pv[3])?;
        let a2 = g.gelu(z2);
        let o = g.matmul(a2, pv[4])?;
        g.add_bias(o, pv[5])
    }

    /// Output and input gradient at one point.
    pub fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let [w1, b1, w2, b2, w3, b3] = &self.params[..] else {
            unreachable!("six parameter tensors")
        };
        let h = b1.cols();
        let mut z1 = b1.as_slice().to_vec();
        for (k, xk) in x.iter().enumerate() {
            for (z, w) in z1.iter_mut().zip(w1.row(k)) {
                *z += xk * w;
            }
        }
        let a1: Vec<f64> = z1.iter().map(|v| gelu(*v)).collect();
        let mut z2 = b2.as_slice().to_vec();
        for (i, ai) in a1.iter().enumerate() {
            for (z, w) in z2.iter_mut().zip(w2.row(i)) {
                *z += ai * w;
            }
        }
        let a2: Vec<f64> = z2.iter().map(|v| gelu(*v)).collect();
        let out = b3[(0, 0)] + (0..h).map(|i| a2[i] * w3[(i, 0)]).sum::<f64>();

        let dz2: Vec<f64> = (0..h).map(|i| w3[(i, 0)] * gelu_grad(z2[i])).collect();
        let dz1: Vec<f64> = (0..h)
            .map(|i| w2.row(i).iter().zip(&dz2).map(|(w, d)| w * d).sum::<f64>() * gelu_grad(z1[i]))
            .collect();
        let grad = (0..x.len()).map(|k| w1.row(k).iter().zip(&dz1).map(|(w, d)| w * d).sum()).collect();
        (out, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// Validation RMSE per objective in the original target units.
    pub val_rmse: Vec<f64>,
    pub best_epoch: Vec<usize>,
}

/// The fitted surrogate as an objective on the unit box of the dataset's decision bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMlp {
    pub nets: Vec<Mlp>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

fn mse(net: &Mlp, x: &Matrix, t: &[f64]) -> f64 {
    let s: f64 = x.row_iter().zip(t).map(|(r, y)| (net.value_grad(r).0 - y).powi(2)).sum();
    s / t.len().max(1) as f64
}

fn train_one(x_tr: &Matrix, t_tr: &[f64], x_va: &Matrix, t_va: &[f64], cfg: &SurrogateConfig, rng: &mut Rng) -> Result<(Mlp, f64, usize)> {
    let mut net = Mlp::init(x_tr.cols(), cfg.hidden, rng);
    let mut adam = Adam::new(cfg.lr);
    let mut best = (net.clone(), f64::INFINITY, 0);
    let mut order: Vec<usize> = (0..x_tr.rows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut g = Graph::new();
            let pv: Vec<_> = net.params.iter().map(|p| g.param(p.clone())).collect();
            let xv = g.constant(x_tr.select_rows(chunk));
            let pred = net.graph(&mut g, &pv, xv)?;
            let tv = g.constant(Matrix::from_vec(chunk.len(), 1, chunk.iter().map(|&i| t_tr[i]).collect())?);
            let diff = g.sub(pred, tv)?;
            let ss = g.sum_sq(diff);
            let loss = g.scale(ss, 1.0 / chunk.len() as f64);
            if !g.value(loss)[(0, 0)].is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = g.backward(loss)?;
            let gs: Vec<Matrix> = pv.iter().map(|v| grads.get(*v)).collect();
            adam.step(&mut net.params, &gs).map_err(|_| Error::Diverged { epoch })?;
        }
        let val = if x_va.rows() > 0 { mse(&net, x_va, t_va) } else { mse(&net, x_tr, t_tr) };
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if val < best.1 {
            best = (net.clone(), val, epoch);
        }
    }
    Ok(best)
}

/// Fits one MLP per objective on the dataset (inputs on the unit box, targets standardized),
/// keeping the snapshot with the lowest validation error.
pub fn fit_surrogate(ds: &Dataset, cfg: &SurrogateConfig, rng: &mut Rng) -> Result<(SurrogateMlp, SurrogateReport)> {
    if !(0.0..1.0).contains(&cfg.validation) || cfg.hidden == 0 {
        return Err(invalid("validation fraction must lie in [0, 1) and the width must be positive"));
    }
    let xu = ds.x_unit();
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(rng);
    let n_val = ((cfg.validation * ds.len() as f64).round() as usize).min(ds.len() - 1);
    let (va, tr) = idx.split_at(n_val);
    let (x_tr, x_va) = (xu.select_rows(tr), xu.select_rows(va));

    let mut nets = Vec::with_capacity(ds.n_obj());
    let mut report = SurrogateReport {
        val_rmse: vec![],
        best_epoch: vec![],
    };
    for j in 0..ds.n_obj() {
        let t: Vec<f64> = ds.y.column(j).iter().map(|v| (v - ds.y_mean[j]) / ds.y_std[j]).collect();
        let t_tr: Vec<f64> = tr.iter().map(|&i| t[i]).collect();
        let t_va: Vec<f64> = va.iter().map(|&i| t[i]).collect();
        let (net, val, epoch) = train_one(&x_tr, &t_tr, &x_va, &t_va, cfg, rng)?;
        log::info!("surrogate f{}: validation mse {val:.3e} (standardized) at epoch {epoch}", j + 1);
        report.val_rmse.push(val.sqrt() * ds.y_std[j]);
        report.best_epoch.push(epoch);
        nets.push(net);
    }
    Ok((
        SurrogateMlp {
            nets,
            y_mean: ds.y_mean.clone(),
            y_std: ds.y_std.clone(),
            bounds: vec![(0.0, 1.0); ds.n_var()],
        },
        report,
    ))
}

impl Objective for SurrogateMlp {
    fn name(&self) -> &str {
        "mlp-surrogate"
    }
    fn n_var(&self) -> usize {
        self.bounds.len()
    }
    fn n_obj(&self) -> usize {
        self.nets.len()
    }
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if x.len() != self.bounds.len() {
            return Err(Error::Shape {
                op: "surrogate",
                lhs: vec![x.len()],
                rhs: vec![self.bounds.len()],
            });
        }
        let mut values = Vec::with_capacity(self.nets.len());
        let mut jacobian = Matrix::zeros(self.nets.len(), x.len());
        for (j, net) in self.nets.iter().enumerate() {
            let (v, g) = net.value_grad(x);
            values.push(self.y_mean[j] + self.y_std[j] * v);
            for (dst, gk) in jacobian.row_mut(j).iter_mut().zip(g) {
                *dst = self.y_std[j] * gk;
            }
        }
        Ok(Evaluation {
            values,
            jacobian,
            out_of_bounds: x.iter().any(|v| !(0.0..=1.0).contains(v)),
        })
    }
}
