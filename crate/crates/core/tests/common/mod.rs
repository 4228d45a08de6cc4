//! Helpers shared by the integration targets.
#![allow(dead_code)]

use rand::Rng as _;
use spread_core::autodiff::{Graph, Var};
use spread_core::ditmoo::{time_features, DiTConfig, DitMoo};
use spread_core::problems::{Evaluation, Objective};
use spread_core::rng::Rng;
use spread_core::{Matrix, Result};

pub type OpFn<'a> = dyn Fn(&mut Graph, &[Var]) -> Result<Var> + 'a;

/// Worst entrywise error between autodiff and central differences, relative to
/// `max(|analytic|, |numeric|, 1e-3)`.
pub struct GradCheck {
    pub name: String,
    pub max_rel: f64,
    pub entries: usize,
}

impl GradCheck {
    pub fn ok(&self, tol: f64) -> bool {
        self.max_rel.is_finite() && self.max_rel <= tol
    }
}

fn weighted_loss(g: &mut Graph, out: Var, w: &Matrix) -> Result<Var> {
    let wv = g.constant(w.clone());
    let p = g.mul(out, wv)?;
    Ok(g.sum(p))
}

fn loss_at(inputs: &[Matrix], op: &OpFn, w: &Matrix) -> f64 {
    let mut g = Graph::new();
    let vs: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
    let out = op(&mut g, &vs).expect("op builds");
    let l = weighted_loss(&mut g, out, w).expect("weights match");
    g.value(l)[(0, 0)]
}

/// Checks the gradient of `Σ W ⊙ op(inputs)` with respect to every input entry; `W` is a fixed
/// random weighting so that no output symmetry can hide an error.
pub fn check_op(name: &str, inputs: &[Matrix], op: &OpFn, rng: &mut Rng) -> GradCheck {
    let mut g = Graph::new();
    let vs: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
    let out = op(&mut g, &vs).expect("op builds");
    let (r, c) = g.shape(out);
    let w = Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let l = weighted_loss(&mut g, out, &w).unwrap();
    let grads = g.backward(l).unwrap();

    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut entries = 0;
    let mut probe = inputs.to_vec();
    for (k, v) in vs.iter().enumerate() {
        let analytic = grads.get(*v);
        for e in 0..probe[k].as_slice().len() {
            let orig = probe[k].as_slice()[e];
            probe[k].as_mut_slice()[e] = orig + h;
            let up = loss_at(&probe, op, &w);
            probe[k].as_mut_slice()[e] = orig - h;
            let down = loss_at(&probe, op, &w);
            probe[k].as_mut_slice()[e] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            max_rel = if rel.is_nan() { f64::INFINITY } else { max_rel.max(rel) };
            entries += 1;
        }
    }
    GradCheck {
        name: name.to_string(),
        max_rel,
        entries,
    }
}

fn rand_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5))
}

/// One check per graph operation.
pub fn op_checks(rng: &mut Rng) -> Vec<GradCheck> {
    let m = |r, c, rng: &mut Rng| rand_matrix(r, c, rng);
    let mut out = Vec::new();
    let mut run = |name: &str, inputs: Vec<Matrix>, op: &OpFn, rng: &mut Rng| out.push(check_op(name, &inputs, op, rng));

    let ins = vec![m(3, 4, rng), m(4, 2, rng)];
    run("matmul", ins, &|g, v| g.matmul(v[0], v[1]), rng);
    let ins = vec![m(3, 4, rng), m(3, 4, rng)];
    run("add", ins, &|g, v| g.add(v[0], v[1]), rng);
    let ins = vec![m(3, 4, rng), m(3, 4, rng)];
    run("sub", ins, &|g, v| g.sub(v[0], v[1]), rng);
    let ins = vec![m(3, 4, rng), m(3, 4, rng)];
    run("mul", ins, &|g, v| g.mul(v[0], v[1]), rng);
    let ins = vec![m(3, 4, rng), m(1, 4, rng)];
    run("add_bias", ins, &|g, v| g.add_bias(v[0], v[1]), rng);
    let ins = vec![m(3, 4, rng)];
    run("scale", ins, &|g, v| Ok(g.scale(v[0], -0.7)), rng);
    let ins = vec![m(3, 4, rng), m(3, 1, rng)];
    run("mul_column", ins, &|g, v| g.mul_column(v[0], v[1]), rng);
    let ins = vec![m(3, 5, rng)];
    run("softmax", ins, &|g, v| Ok(g.softmax(v[0])), rng);
    let ins = vec![m(3, 6, rng), m(1, 6, rng), m(1, 6, rng)];
    run("layernorm", ins, &|g, v| g.layernorm(v[0], v[1], v[2]), rng);
    let ins = vec![m(3, 4, rng)];
    run("gelu", ins, &|g, v| Ok(g.gelu(v[0])), rng);
    let ins = vec![m(3, 2, rng), m(3, 3, rng)];
    run("concat_last", ins, &|g, v| g.concat_last(v[0], v[1]), rng);
    let ins = vec![m(3, 5, rng)];
    run("slice_last", ins, &|g, v| g.slice_last(v[0], 1, 4), rng);
    let ins = vec![m(3, 4, rng)];
    run("reshape", ins, &|g, v| g.reshape(v[0], 6, 2), rng);
    let ins = vec![m(3, 6, rng)];
    run("group_sum", ins, &|g, v| g.group_sum(v[0], 3), rng);
    let ins = vec![m(3, 2, rng)];
    run("repeat_groups", ins, &|g, v| Ok(g.repeat_groups(v[0], 3)), rng);
    let ins = vec![m(3, 4, rng)];
    run("mean", ins, &|g, v| Ok(g.mean(v[0])), rng);
    let ins = vec![m(3, 4, rng)];
    run("sum", ins, &|g, v| Ok(g.sum(v[0])), rng);
    let ins = vec![m(3, 4, rng)];
    run("sum_sq", ins, &|g, v| Ok(g.sum_sq(v[0])), rng);
    // a small composite: two-layer perceptron with a squared loss
    let ins = vec![m(4, 3, rng), m(3, 5, rng), m(1, 5, rng), m(5, 2, rng)];
    run(
        "mlp",
        ins,
        &|g, v| {
            let z = g.matmul(v[0], v[1])?;
            let z = g.add_bias(z, v[2])?;
            let z = g.gelu(z);
            let z = g.matmul(z, v[3])?;
            Ok(g.sum_sq(z))
        },
        rng,
    );
    out
}

/// Gradient of the full DiT-MOO forward pass w.r.t. every parameter, the inputs and the
/// condition, at a tiny configuration.
pub fn ditmoo_check(rng: &mut Rng) -> GradCheck {
    let cfg = DiTConfig {
        e: 8,
        heads: 2,
        blocks: 2,
        ..DiTConfig::new(3, 2)
    };
    let mut net = DitMoo::init(cfg, rng).unwrap();
    net.randomize_head(rng);
    // non-trivial layer-norm affine parameters and biases
    for (p, (name, _, _)) in net.params.iter_mut().zip(cfg.layout()) {
        if name.ends_with("ln_g") || name.ends_with("_b") {
            for v in p.as_mut_slice() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    let n = 4;
    let ts = [1usize, 7, 19, 50];
    let tf = time_features(&ts);
    let mut inputs = net.params.clone();
    inputs.push(rand_matrix(n, cfg.d, rng));
    inputs.push(rand_matrix(n, cfg.m, rng));
    let np = net.params.len();
    let op = move |g: &mut Graph, v: &[Var]| {
        let t = g.constant(tf.clone());
        net.forward_graph(g, &v[..np], v[np], t, v[np + 1])
    };
    check_op("ditmoo.forward", &inputs, &op, rng)
}

/// `f_j(x) = ½ (x − c_j)ᵀ A_j (x − c_j)` with symmetric positive definite `A_j` on `[-1, 1]^d`.
pub struct Quadratic {
    pub a: Vec<Matrix>,
    pub c: Vec<Vec<f64>>,
    bounds: Vec<(f64, f64)>,
}

impl Quadratic {
    pub fn random(m: usize, d: usize, rng: &mut Rng) -> Self {
        let a = (0..m)
            .map(|_| {
                let b = rand_matrix(d, d, rng);
                let mut a = b.matmul(&b.transpose()).unwrap();
                for k in 0..d {
                    a[(k, k)] += 0.1;
                }
                a.map(|v| v / d as f64)
            })
            .collect();
        let c = (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Self {
            a,
            c,
            bounds: vec![(-1.0, 1.0); d],
        }
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn n_var(&self) -> usize {
        self.bounds.len()
    }
    fn n_obj(&self) -> usize {
        self.a.len()
    }
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let d = x.len();
        let mut values = Vec::with_capacity(self.a.len());
        let mut jac = Matrix::zeros(self.a.len(), d);
        for (j, (a, c)) in self.a.iter().zip(&self.c).enumerate() {
            let r: Vec<f64> = x.iter().zip(c).map(|(p, q)| p - q).collect();
            let ar = a.mul_vec(&r);
            values.push(0.5 * r.iter().zip(&ar).map(|(p, q)| p * q).sum::<f64>());
            jac.row_mut(j).copy_from_slice(&ar);
        }
        Ok(Evaluation {
            values,
            jacobian: jac,
            out_of_bounds: x.iter().any(|v| v.abs() > 1.0),
        })
    }
}
