//! ZDT test suite (Zitzler, Deb and Thiele, 2000).

use std::f64::consts::PI;

use crate::linalg::Matrix;

/// Floor applied where a derivative is unbounded at the boundary (sqrt and fractional powers at 0).
pub(crate) const DERIV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zdt {
    Zdt1,
    Zdt2,
    Zdt3,
    Zdt4,
    Zdt6,
}

/// Feasible f1 intervals of the disconnected ZDT3 front.
const ZDT3_REGIONS: [(f64, f64); 5] = [
    (0.0, 0.083_001_534_9),
    (0.182_228_728_0, 0.257_762_363_4),
    (0.409_313_674_8, 0.453_882_104_1),
    (0.618_396_794_4, 0.652_511_703_8),
    (0.823_331_798_3, 0.851_832_865_4),
];

impl Zdt {
    pub fn default_dim(self) -> usize {
        match self {
            Zdt::Zdt4 | Zdt::Zdt6 => 10,
            _ => 30,
        }
    }

    pub fn bounds(self, d: usize) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, 1.0); d];
        if self == Zdt::Zdt4 {
            for bi in b.iter_mut().skip(1) {
                *bi = (-5.0, 5.0);
            }
        }
        b
    }

    /// Objective values and the 2 x d Jacobian.
    pub fn eval(self, x: &[f64]) -> (Vec<f64>, Matrix) {
        let d = x.len();
        let mut jac = Matrix::zeros(2, d);
        let tail = (d - 1).max(1) as f64;

        // g and its gradient (same for every tail coordinate up to a per-coordinate factor)
        let (g, dg): (f64, Vec<f64>) = match self {
            Zdt::Zdt1 | Zdt::Zdt2 | Zdt::Zdt3 => {
                let s: f64 = x[1..].iter().sum();
                (1.0 + 9.0 * s / tail, vec![9.0 / tail; d - 1])
            }
            Zdt::Zdt4 => {
                let s: f64 = x[1..]
                    .iter()
                    .map(|&v| v * v - 10.0 * (4.0 * PI * v).cos())
                    .sum();
                let dg = x[1..]
                    .iter()
                    .map(|&v| 2.0 * v + 40.0 * PI * (4.0 * PI * v).sin())
                    .collect();
                (1.0 + 10.0 * (d - 1) as f64 + s, dg)
            }
            Zdt::Zdt6 => {
                let s: f64 = x[1..].iter().sum::<f64>() / tail;
                let ds = 0.25 * s.max(DERIV_FLOOR).powf(-0.75) * 9.0 / tail;
                (1.0 + 9.0 * s.max(0.0).powf(0.25), vec![ds; d - 1])
            }
        };

        let (f1, df1) = match self {
            Zdt::Zdt6 => {
                let e = (-4.0 * x[0]).exp();
                let s = (6.0 * PI * x[0]).sin();
                let c = (6.0 * PI * x[0]).cos();
                let f = 1.0 - e * s.powi(6);
                let df = 4.0 * e * s.powi(6) - e * 6.0 * s.powi(5) * c * 6.0 * PI;
                (f, df)
            }
            _ => (x[0], 1.0),
        };
        jac[(0, 0)] = df1;

        // f2 = g * h(f1, g); record d f2/d f1 and d f2/d g
        let (f2, df2_df1, df2_dg) = match self {
            Zdt::Zdt1 | Zdt::Zdt4 => {
                let r = (f1 / g).sqrt();
                let rf = (f1.max(DERIV_FLOOR) / g).sqrt();
                (g * (1.0 - r), -0.5 / rf, 1.0 - 0.5 * r)
            }
            Zdt::Zdt2 | Zdt::Zdt6 => {
                let q = f1 / g;
                (g * (1.0 - q * q), -2.0 * q, 1.0 + q * q)
            }
            Zdt::Zdt3 => {
                let r = (f1 / g).sqrt();
                let rf = (f1.max(DERIV_FLOOR) / g).sqrt();
                let s = (10.0 * PI * f1).sin();
                let c = (10.0 * PI * f1).cos();
                let f2 = g * (1.0 - r - f1 / g * s);
                (f2, -0.5 / rf - s - 10.0 * PI * f1 * c, 1.0 - 0.5 * r)
            }
        };
        jac[(1, 0)] = df2_df1 * df1;
        for (i, dgi) in dg.iter().enumerate() {
            jac[(1, i + 1)] = df2_dg * dgi;
        }
        (vec![f1, f2], jac)
    }

    /// `n` points on the Pareto front, ordered by f1.
    pub fn front(self, n: usize) -> Matrix {
        let n = n.max(2);
        let mut rows = Vec::with_capacity(n);
        match self {
            Zdt::Zdt1 | Zdt::Zdt4 => {
                for i in 0..n {
                    let f1 = i as f64 / (n - 1) as f64;
                    rows.push([f1, 1.0 - f1.sqrt()]);
                }
            }
            Zdt::Zdt2 => {
                for i in 0..n {
                    let f1 = i as f64 / (n - 1) as f64;
                    rows.push([f1, 1.0 - f1 * f1]);
                }
            }
            Zdt::Zdt6 => {
                let lo = 0.280_775_319_1;
                for i in 0..n {
                    let f1 = lo + (1.0 - lo) * i as f64 / (n - 1) as f64;
                    rows.push([f1, 1.0 - f1 * f1]);
                }
            }
            Zdt::Zdt3 => {
                let total: f64 = ZDT3_REGIONS.iter().map(|(a, b)| b - a).sum();
                for (a, b) in ZDT3_REGIONS {
                    let k = ((n as f64 * (b - a) / total).round() as usize).max(2);
                    for i in 0..k {
                        let f1 = a + (b - a) * i as f64 / (k - 1) as f64;
                        rows.push([f1, 1.0 - f1.sqrt() - f1 * (10.0 * PI * f1).sin()]);
                    }
                }
                // region starts tie with the previous region's end up to the digits above
                let all = Matrix::from_rows(&rows).expect("fixed width");
                return all.select_rows(&crate::pareto::non_dominated_indices(&all));
            }
        }
        Matrix::from_rows(&rows).expect("fixed width")
    }

    /// The Pareto-optimal decision vector with first coordinate `x1`.
    pub fn pareto_x(self, x1: f64, d: usize) -> Vec<f64> {
        let mut x = vec![0.0; d];
        x[0] = x1;
        x
    }
}
