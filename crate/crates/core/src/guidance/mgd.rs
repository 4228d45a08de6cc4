//! Minimum-norm point in the convex hull of the objective gradients.
//!
//! Solves `min_{λ ∈ Δ_m} ‖Jᵀλ‖² = λᵀGλ` with `G = J Jᵀ` by Frank–Wolfe with away steps and
//! exact line search. If the duality gap is still open after the iteration cap (typically when
//! `m > d` and the Gram matrix is singular), Wolfe's exact minimum-norm-point method finishes.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{dot, Matrix};

const MAX_ITERS: usize = 500;
const GAP_TOL: f64 = 1e-10;
const SUPPORT_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct MgdSolution {
    /// Simplex weights.
    pub lambda: Vec<f64>,
    /// Common direction `Jᵀλ`.
    pub g: Vec<f64>,
    /// Frank–Wolfe duality gap at `lambda`.
    pub gap: f64,
    pub iterations: usize,
}

fn gram(j: &Matrix) -> Vec<Vec<f64>> {
    let m = j.rows();
    let mut g = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a..m {
            let v = dot(j.row(a), j.row(b));
            g[a][b] = v;
            g[b][a] = v;
        }
    }
    g
}

fn mat_vec(g: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    g.iter().map(|r| dot(r, x)).collect()
}

/// Duality gap `λᵀ∇ - min_i ∇_i` with `∇ = 2Gλ`.
pub fn duality_gap(gram: &[Vec<f64>], lambda: &[f64]) -> f64 {
    let grad: Vec<f64> = mat_vec(gram, lambda).into_iter().map(|v| 2.0 * v).collect();
    let min = grad.iter().copied().fold(f64::INFINITY, f64::min);
    (dot(lambda, &grad) - min).max(0.0)
}

/// Solves the MGD sub-problem for an m x d Jacobian.
pub fn mgd_direction(j: &Matrix) -> MgdSolution {
    let m = j.rows();
    let d = j.cols();
    if m == 0 {
        return MgdSolution {
            lambda: vec![],
            g: vec![0.0; d],
            gap: 0.0,
            iterations: 0,
        };
    }
    let uniform = vec![1.0 / m as f64; m];
    if j.as_slice().iter().all(|v| *v == 0.0) {
        return MgdSolution {
            lambda: uniform,
            g: vec![0.0; d],
            gap: 0.0,
            iterations: 0,
        };
    }
    let g = gram(j);
    let mut lambda = uniform;
    let mut gl = mat_vec(&g, &lambda); // G λ, kept in sync
    let mut iterations = 0;
    for it in 0..MAX_ITERS {
        iterations = it + 1;
        let grad: Vec<f64> = gl.iter().map(|v| 2.0 * v).collect();
        let lg = dot(&lambda, &grad);
        let s = argmin(&grad);
        let fw_gap = lg - grad[s];
        if fw_gap < GAP_TOL {
            break;
        }
        let v = (0..m)
            .filter(|&i| lambda[i] > SUPPORT_EPS)
            .max_by(|&a, &b| grad[a].total_cmp(&grad[b]))
            .unwrap_or(s);
        let away_gap = grad[v] - lg;

        // direction dir and the largest feasible step
        let mut dir = vec![0.0; m];
        let max_step;
        if fw_gap >= away_gap || v == s {
            for (i, di) in dir.iter_mut().enumerate() {
                *di = -lambda[i];
            }
            dir[s] += 1.0;
            max_step = 1.0;
        } else {
            for (i, di) in dir.iter_mut().enumerate() {
                *di = lambda[i];
            }
            dir[v] -= 1.0;
            max_step = lambda[v] / (1.0 - lambda[v]).max(f64::MIN_POSITIVE);
        }
        let gd = mat_vec(&g, &dir);
        let curv = dot(&dir, &gd);
        let slope = dot(&lambda, &gd); // half the directional derivative
        let step = if curv > 0.0 {
            (-slope / curv).clamp(0.0, max_step)
        } else {
            max_step
        };
        if step <= 0.0 {
            break;
        }
        for i in 0..m {
            lambda[i] += step * dir[i];
            gl[i] += step * gd[i];
        }
        // keep exactly on the simplex
        for l in lambda.iter_mut() {
            if *l < SUPPORT_EPS {
                *l = 0.0;
            }
        }
        let total: f64 = lambda.iter().sum();
        for l in lambda.iter_mut() {
            *l /= total;
        }
        gl = mat_vec(&g, &lambda);
    }

    let mut gap = duality_gap(&g, &lambda);
    if gap >= GAP_TOL {
        if let Some(polished) = wolfe(&g) {
            let pg = duality_gap(&g, &polished);
            if pg < gap {
                lambda = polished;
                gap = pg;
            }
        }
    }
    let dir = j.tmul_vec(&lambda);
    MgdSolution {
        lambda,
        g: dir,
        gap,
        iterations,
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

/// Affine minimizer over the corral `s`: `[G_S 1; 1ᵀ 0][α; μ] = [0; 1]`. Weights may be negative.
fn affine_min(g: &[Vec<f64>], s: &[usize]) -> Option<Vec<f64>> {
    let k = s.len();
    let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for (p, &i) in s.iter().enumerate() {
        for (q, &j) in s.iter().enumerate() {
            a[(p, q)] = g[i][j];
        }
        a[(p, k)] = 1.0;
        a[(k, p)] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = a.lu().solve(&rhs)?;
    let alpha: Vec<f64> = (0..k).map(|p| sol[p]).collect();
    alpha.iter().all(|v| v.is_finite()).then_some(alpha)
}

/// Wolfe's minimum-norm-point method, run on the Gram matrix. The corral stays affinely
/// independent, so the bordered system above is nonsingular even when `m > d`.
fn wolfe(g: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = g.len();
    let scale = (0..m).map(|i| g[i][i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let first = (0..m).min_by(|&a, &b| g[a][a].total_cmp(&g[b][b]))?;
    let mut s = vec![first];
    let mut w = vec![1.0];
    let weights = |s: &[usize], w: &[f64]| {
        let mut l = vec![0.0; m];
        for (&i, &v) in s.iter().zip(w) {
            l[i] = v;
        }
        l
    };
    for _ in 0..(20 * m + 100) {
        let lam = weights(&s, &w);
        let gl = mat_vec(g, &lam);
        let xx = dot(&lam, &gl);
        let i = argmin(&gl);
        if xx - gl[i] <= tol || s.contains(&i) {
            return Some(lam);
        }
        s.push(i);
        w.push(0.0);
        loop {
            let alpha = affine_min(g, &s)?;
            if alpha.iter().all(|a| *a > SUPPORT_EPS) {
                w = alpha;
                break;
            }
            // move towards the affine minimizer until a weight hits zero, then drop it
            let theta = w
                .iter()
                .zip(&alpha)
                .filter(|(_, a)| **a <= SUPPORT_EPS)
                .map(|(wk, a)| wk / (wk - a))
                .fold(1.0, f64::min);
            for (wk, a) in w.iter_mut().zip(&alpha) {
                *wk = theta * a + (1.0 - theta) * *wk;
            }
            let keep: Vec<usize> = (0..s.len()).filter(|&k| w[k] > SUPPORT_EPS).collect();
            s = keep.iter().map(|&k| s[k]).collect();
            w = keep.iter().map(|&k| w[k]).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
        }
    }
    Some(weights(&s, &w))
}
