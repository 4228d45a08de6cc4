//! DTLZ test suite (Deb, Thiele, Laumanns and Zitzler, 2005) for any number of objectives.
//!
//! Objectives share the shape `f_j = (1 + g) * S_j(theta)`, where `S_j` is a product of
//! `m - j` "cos" factors and one "sin" factor. DTLZ1 swaps these for `x` and `1 - x` and
//! a 0.5 prefactor; DTLZ7 has its own layout.

use std::f64::consts::{FRAC_PI_2, PI};

use super::zdt::DERIV_FLOOR;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dtlz(pub u8);

const DTLZ4_ALPHA: f64 = 100.0;

impl Dtlz {
    /// Standard number of distance variables `k`; `d = m + k - 1`.
    pub fn default_k(self) -> usize {
        match self.0 {
            1 => 5,
            7 => 20,
            _ => 10,
        }
    }

    fn g(self, xm: &[f64]) -> (f64, Vec<f64>) {
        let k = xm.len() as f64;
        match self.0 {
            1 | 3 => {
                let mut s = k;
                let mut dg = Vec::with_capacity(xm.len());
                for &v in xm {
                    let u = v - 0.5;
                    s += u * u - (20.0 * PI * u).cos();
                    dg.push(100.0 * (2.0 * u + 20.0 * PI * (20.0 * PI * u).sin()));
                }
                (100.0 * s, dg)
            }
            6 => {
                let s = xm.iter().map(|v| v.max(0.0).powf(0.1)).sum();
                let dg = xm.iter().map(|v| 0.1 * v.max(DERIV_FLOOR).powf(-0.9)).collect();
                (s, dg)
            }
            7 => (1.0 + 9.0 / k * xm.iter().sum::<f64>(), vec![9.0 / k; xm.len()]),
            _ => {
                let s = xm.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
                (s, xm.iter().map(|v| 2.0 * (v - 0.5)).collect())
            }
        }
    }

    /// Objective values and the m x d Jacobian.
    pub fn eval(self, x: &[f64], m: usize) -> (Vec<f64>, Matrix) {
        let d = x.len();
        let np = m - 1; // position variables
        let (g, dg_tail) = self.g(&x[np..]);
        let mut dg = vec![0.0; d];
        dg[np..].copy_from_slice(&dg_tail);

        if self.0 == 7 {
            return dtlz7(x, m, g, &dg);
        }

        // angles (or raw positions for DTLZ1) and their gradients w.r.t. x
        let mut theta = vec![0.0; np];
        let mut dtheta = Matrix::zeros(np, d);
        for i in 0..np {
            match self.0 {
                1 => {
                    theta[i] = x[i];
                    dtheta[(i, i)] = 1.0;
                }
                4 => {
                    theta[i] = x[i].powf(DTLZ4_ALPHA) * FRAC_PI_2;
                    dtheta[(i, i)] = DTLZ4_ALPHA * x[i].powf(DTLZ4_ALPHA - 1.0) * FRAC_PI_2;
                }
                5 | 6 if i > 0 => {
                    let a = PI / (4.0 * (1.0 + g));
                    theta[i] = a * (1.0 + 2.0 * g * x[i]);
                    dtheta[(i, i)] = a * 2.0 * g;
                    // d theta / d g = -PI/(4(1+g)^2) (1 + 2 g x) + a 2 x = PI (2x - 1) / (4 (1+g)^2)
                    let dth_dg = PI * (2.0 * x[i] - 1.0) / (4.0 * (1.0 + g) * (1.0 + g));
                    for j in np..d {
                        dtheta[(i, j)] += dth_dg * dg[j];
                    }
                }
                _ => {
                    theta[i] = x[i] * FRAC_PI_2;
                    dtheta[(i, i)] = FRAC_PI_2;
                }
            }
        }

        // per-angle factor values and derivatives
        let linear = self.0 == 1;
        let (c, dc, s, ds): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) = if linear {
            (
                theta.clone(),
                vec![1.0; np],
                theta.iter().map(|t| 1.0 - t).collect(),
                vec![-1.0; np],
            )
        } else {
            (
                theta.iter().map(|t| t.cos()).collect(),
                theta.iter().map(|t| -t.sin()).collect(),
                theta.iter().map(|t| t.sin()).collect(),
                theta.iter().map(|t| t.cos()).collect(),
            )
        };
        let scale = if linear { 0.5 } else { 1.0 };

        let mut f = vec![0.0; m];
        let mut jac = Matrix::zeros(m, d);
        for j in 0..m {
            // objective j (0-based) uses cos factors 0..m-1-j and, for j > 0, sin factor m-1-j
            let nc = m - 1 - j;
            let mut factors: Vec<(usize, f64, f64)> = (0..nc).map(|i| (i, c[i], dc[i])).collect();
            if j > 0 {
                factors.push((nc, s[nc], ds[nc]));
            }
            let shape: f64 = factors.iter().map(|(_, v, _)| v).product();
            let amp = scale * (1.0 + g);
            f[j] = amp * shape;
            // d shape / d theta_i
            let mut row = vec![0.0; d];
            for (p, &(ti, _, dv)) in factors.iter().enumerate() {
                let others: f64 = factors
                    .iter()
                    .enumerate()
                    .filter(|(q, _)| *q != p)
                    .map(|(_, (_, v, _))| v)
                    .product();
                let ds_dth = dv * others;
                for (r, dt) in row.iter_mut().zip(dtheta.row(ti)) {
                    *r += amp * ds_dth * dt;
                }
            }
            for (r, dgk) in row.iter_mut().zip(&dg) {
                *r += scale * shape * dgk;
            }
            jac.row_mut(j).copy_from_slice(&row);
        }
        (f, jac)
    }

    /// About `n` points on the Pareto front (fewer after non-dominated filtering for DTLZ7).
    pub fn front(self, n: usize, m: usize) -> Matrix {
        match self.0 {
            5 | 6 => {
                // degenerate curve: theta_i = pi/4 for i > 0
                let mut rows = Vec::with_capacity(n);
                for k in 0..n.max(2) {
                    let t1 = FRAC_PI_2 * k as f64 / (n.max(2) - 1) as f64;
                    let mut theta = vec![std::f64::consts::FRAC_PI_4; m - 1];
                    theta[0] = t1;
                    rows.push(sphere(&theta, m));
                }
                Matrix::from_rows(&rows).expect("fixed width")
            }
            7 => {
                let grid = simplex_free_grid(n, m - 1);
                let mut rows = Vec::with_capacity(grid.len());
                for p in grid {
                    let h = m as f64
                        - p.iter()
                            .map(|f| f / 2.0 * (1.0 + (3.0 * PI * f).sin()))
                            .sum::<f64>();
                    let mut y = p.clone();
                    y.push(2.0 * h);
                    rows.push(y);
                }
                let all = Matrix::from_rows(&rows).expect("fixed width");
                let keep = crate::pareto::non_dominated_indices(&all);
                all.select_rows(&keep)
            }
            _ => {
                let grid = simplex_free_grid(n, m - 1);
                let rows: Vec<Vec<f64>> = grid
                    .iter()
                    .map(|u| {
                        if self.0 == 1 {
                            let mut f = vec![0.0; m];
                            for (j, fj) in f.iter_mut().enumerate() {
                                let nc = m - 1 - j;
                                let mut v = 0.5;
                                for ui in &u[..nc] {
                                    v *= ui;
                                }
                                if j > 0 {
                                    v *= 1.0 - u[nc];
                                }
                                *fj = v;
                            }
                            f
                        } else {
                            let th: Vec<f64> = u.iter().map(|v| v * FRAC_PI_2).collect();
                            sphere(&th, m)
                        }
                    })
                    .collect();
                Matrix::from_rows(&rows).expect("fixed width")
            }
        }
    }
}

fn dtlz7(x: &[f64], m: usize, g: f64, dg: &[f64]) -> (Vec<f64>, Matrix) {
    let d = x.len();
    let np = m - 1;
    let mut f = vec![0.0; m];
    let mut jac = Matrix::zeros(m, d);
    let mut h = m as f64;
    let mut sum_term = 0.0;
    for j in 0..np {
        f[j] = x[j];
        jac[(j, j)] = 1.0;
        let sj = (3.0 * PI * x[j]).sin();
        h -= x[j] / (1.0 + g) * (1.0 + sj);
        sum_term += x[j] * (1.0 + sj);
    }
    f[np] = (1.0 + g) * h;
    for j in 0..np {
        let sj = (3.0 * PI * x[j]).sin();
        let cj = (3.0 * PI * x[j]).cos();
        jac[(np, j)] = -(1.0 + sj + 3.0 * PI * x[j] * cj);
    }
    // d/dg [(1+g) h] = h + sum_term/(1+g)
    let dfdg = h + sum_term / (1.0 + g);
    for k in np..d {
        jac[(np, k)] = dfdg * dg[k];
    }
    (f, jac)
}

fn sphere(theta: &[f64], m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let nc = m - 1 - j;
            let mut v: f64 = theta[..nc].iter().map(|t| t.cos()).product();
            if j > 0 {
                v *= theta[nc].sin();
            }
            v
        })
        .collect()
}

/// Regular grid on `[0,1]^k` with about `n` points in total.
fn simplex_free_grid(n: usize, k: usize) -> Vec<Vec<f64>> {
    if k == 0 {
        return vec![vec![]];
    }
    let per = ((n as f64).powf(1.0 / k as f64).round() as usize).max(2);
    let total = per.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            (0..k)
                .map(|_| {
                    let i = idx % per;
                    idx /= per;
                    i as f64 / (per - 1) as f64
                })
                .collect()
        })
        .collect()
}
