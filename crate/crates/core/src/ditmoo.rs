//! DiT-MOO noise predictor.
//!
//! Each sample is a single query token (the embedded noisy decision vector) attending over two
//! key/value tokens: the embedded condition and the embedded timestep. A block is
//! `H += MHCA(LN(H), [E_c, E_t]) W_O`; after `L` blocks a linear head maps back to `d`.
//! With only two keys the per-head attention is a softmax over a pair of scores, which is
//! expressed with 2-D ops by stacking the two score columns.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Width of the sinusoidal timestep featurization.
pub const TIME_FEATURES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiTConfig {
    /// Decision dimension.
    pub d: usize,
    /// Condition (objective) dimension.
    pub m: usize,
    /// Hidden width.
    pub e: usize,
    /// Number of blocks.
    pub blocks: usize,
    /// Attention heads.
    pub heads: usize,
}

impl DiTConfig {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            e: 256,
            blocks: 3,
            heads: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.e == 0 || self.heads == 0 {
            return Err(Error::InvalidArgument(format!("degenerate network config {self:?}")));
        }
        if self.e % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "hidden width {} is not divisible by {} heads",
                self.e, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.e / self.heads
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let (d, m, e) = (self.d, self.m, self.e);
        let mut v = vec![
            ("in_w".to_string(), d, e),
            ("in_b".to_string(), 1, e),
            ("time_w".to_string(), TIME_FEATURES, e),
            ("time_b".to_string(), 1, e),
            ("cond_w".to_string(), m, e),
            ("cond_b".to_string(), 1, e),
        ];
        for l in 0..self.blocks {
            for (n, r, c) in [("ln_g", 1, e), ("ln_b", 1, e), ("wq", e, e), ("wk", e, e), ("wv", e, e), ("wo", e, e)] {
                v.push((format!("block{l}.{n}"), r, c));
            }
        }
        v.push(("out_w".to_string(), e, d));
        v.push(("out_b".to_string(), 1, d));
        v
    }

    /// Exact number of scalars in the parameter set.
    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Sinusoidal features of one timestep per row.
pub fn time_features(ts: &[usize]) -> Matrix {
    let half = TIME_FEATURES / 2;
    Matrix::from_fn(ts.len(), TIME_FEATURES, |i, j| {
        let k = j % half;
        let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
        let a = ts[i] as f64 * freq;
        if j < half {
            a.sin()
        } else {
            a.cos()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DitMoo {
    pub config: DiTConfig,
    /// Tensors in [`DiTConfig::layout`] order.
    pub params: Vec<Matrix>,
}

impl DitMoo {
    /// Scaled-normal weights, unit layer-norm gains, zero biases and a zero output head.
    pub fn init(config: DiTConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let params = config
            .layout()
            .into_iter()
            .map(|(name, r, c)| {
                if name.ends_with("ln_g") {
                    Matrix::filled(r, c, 1.0)
                } else if name.ends_with("_b") || name.starts_with("out_") {
                    Matrix::zeros(r, c)
                } else {
                    let std = (1.0 / r as f64).sqrt();
                    let n = Normal::new(0.0, std).expect("positive std");
                    Matrix::from_fn(r, c, |_, _| n.sample(rng))
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Fills the output head with small random values; used by gradient checks, where a zero
    /// head would hide every upstream gradient.
    pub fn randomize_head(&mut self, rng: &mut Rng) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            for v in p.as_mut_slice() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.rows() * p.cols()).sum()
    }

    /// Records the forward pass into `g`. `param_vars` must come from [`Self::register`].
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        param_vars: &[Var],
        x: Var,
        time_feats: Var,
        cond: Var,
    ) -> Result<Var> {
        let cfg = &self.config;
        let (n, dx) = g.shape(x);
        if dx != cfg.d || g.shape(cond) != (n, cfg.m) || g.shape(time_feats) != (n, TIME_FEATURES) {
            return Err(Error::Shape {
                op: "ditmoo.forward",
                lhs: vec![n, dx, g.shape(cond).1, g.shape(time_feats).1],
                rhs: vec![cfg.d, cfg.m, TIME_FEATURES],
            });
        }
        let p = param_vars;
        let embed = |g: &mut Graph, inp: Var, w: Var, b: Var| -> Result<Var> {
            let z = g.matmul(inp, w)?;
            let z = g.add_bias(z, b)?;
            Ok(g.gelu(z))
        };
        let mut h = embed(g, x, p[0], p[1])?;
        let et = embed(g, time_feats, p[2], p[3])?;
        let ec = embed(g, cond, p[4], p[5])?;

        let dk = cfg.head_dim();
        let inv = 1.0 / (dk as f64).sqrt();
        for l in 0..cfg.blocks {
            let b = &p[6 + 6 * l..12 + 6 * l];
            let z = g.layernorm(h, b[0], b[1])?;
            let q = g.matmul(z, b[2])?;
            let kc = g.matmul(ec, b[3])?;
            let kt = g.matmul(et, b[3])?;
            let vc = g.matmul(ec, b[4])?;
            let vt = g.matmul(et, b[4])?;

            let qk_c = g.mul(q, kc)?;
            let sc = g.group_sum(qk_c, dk)?;
            let sc = g.scale(sc, inv);
            let qk_t = g.mul(q, kt)?;
            let st = g.group_sum(qk_t, dk)?;
            let st = g.scale(st, inv);

            let sc = g.reshape(sc, n * cfg.heads, 1)?;
            let st = g.reshape(st, n * cfg.heads, 1)?;
            let pair = g.concat_last(sc, st)?;
            let attn = g.softmax(pair);
            let ac = g.slice_last(attn, 0, 1)?;
            let at = g.slice_last(attn, 1, 2)?;
            let ac = g.reshape(ac, n, cfg.heads)?;
            let at = g.reshape(at, n, cfg.heads)?;

            let ac = g.repeat_groups(ac, dk);
            let at = g.repeat_groups(at, dk);
            let oc = g.mul(ac, vc)?;
            let ot = g.mul(at, vt)?;
            let o = g.add(oc, ot)?;
            let o = g.matmul(o, b[5])?;
            h = g.add(h, o)?;
        }
        let k = p.len();
        let out = g.matmul(h, p[k - 2])?;
        g.add_bias(out, p[k - 1])
    }

    /// Adds the parameters to `g` as trainable leaves (or constants when `trainable` is false).
    pub fn register(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Predicted noise for a batch at per-row timesteps.
    pub fn predict(&self, x: &Matrix, ts: &[usize], cond: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let pv = self.register(&mut g, false);
        let xv = g.constant(x.clone());
        let tv = g.constant(time_features(ts));
        let cv = g.constant(cond.clone());
        let out = self.forward_graph(&mut g, &pv, xv, tv, cv)?;
        Ok(g.value(out).clone())
    }

    /// Predicted noise for a batch sharing timestep `t`.
    pub fn forward(&self, x: &Matrix, t: usize, cond: &Matrix) -> Result<Matrix> {
        self.predict(x, &vec![t; x.rows()], cond)
    }
}
