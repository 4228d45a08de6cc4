//! Real-world engineering problems from the RE suite.
//!
//! Formulations follow Tanabe and Ishibuchi, "An easy-to-use real-world multi-objective
//! optimization problem suite" (Applied Soft Computing, 2020) and its reference code
//! `reproblem.py`. Constraint violations are folded into the last objective as
//! `sum(max(0, -g_i))`, as in that code.
//!
//! Jacobians come from forward-mode dual numbers, which differentiate the exact same
//! expressions that produce the values.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::linalg::Matrix;

const MAX_VARS: usize = 8;

#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    g: [f64; MAX_VARS],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; MAX_VARS],
        }
    }

    fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; MAX_VARS];
        g[i] = 1.0;
        Self { v, g }
    }

    fn map(self, v: f64, dv: f64) -> Self {
        let mut g = self.g;
        for gi in g.iter_mut() {
            *gi *= dv;
        }
        Self { v, g }
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.map(r, 0.5 / r)
    }

    /// `max(0, -self)`: the violation of a `self >= 0` constraint.
    fn violation(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            Self::constant(0.0)
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, o: Dual) -> Dual {
        self.v += o.v;
        for (a, b) in self.g.iter_mut().zip(o.g) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + (-o)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.map(-self.v, -1.0)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut g = [0.0; MAX_VARS];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = self.g[i] * o.v + self.v * o.g[i];
        }
        Dual { v: self.v * o.v, g }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let mut g = [0.0; MAX_VARS];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = (self.g[i] * o.v - self.v * o.g[i]) / (o.v * o.v);
        }
        Dual { v: self.v / o.v, g }
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr<f64> for Dual {
            type Output = Dual;
            fn $f(self, o: f64) -> Dual { $tr::$f(self, Dual::constant(o)) }
        }
        impl $tr<Dual> for f64 {
            type Output = Dual;
            fn $f(self, o: Dual) -> Dual { $tr::$f(Dual::constant(self), o) }
        }
    )*};
}
scalar_ops!(Add add, Sub sub, Mul mul, Div div);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Re {
    Re21,
    Re33,
    Re34,
    Re37,
    Re41,
}

impl Re {
    pub fn n_var(self) -> usize {
        match self {
            Re::Re21 | Re::Re33 | Re::Re37 => 4,
            Re::Re34 => 5,
            Re::Re41 => 7,
        }
    }

    pub fn n_obj(self) -> usize {
        match self {
            Re::Re21 => 2,
            Re::Re33 | Re::Re34 | Re::Re37 => 3,
            Re::Re41 => 4,
        }
    }

    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            Re::Re21 => {
                let a = 10.0 / 10.0; // F / sigma
                let r2 = std::f64::consts::SQRT_2;
                vec![(a, 3.0 * a), (r2 * a, 3.0 * a), (r2 * a, 3.0 * a), (a, 3.0 * a)]
            }
            Re::Re33 => vec![(55.0, 80.0), (75.0, 110.0), (1000.0, 3000.0), (11.0, 20.0)],
            Re::Re34 => vec![(1.0, 3.0); 5],
            Re::Re37 => vec![(0.0, 1.0); 4],
            Re::Re41 => vec![
                (0.5, 1.5),
                (0.45, 1.35),
                (0.5, 1.5),
                (0.5, 1.5),
                (0.875, 2.625),
                (0.4, 1.2),
                (0.4, 1.2),
            ],
        }
    }

    pub fn eval(self, xs: &[f64]) -> (Vec<f64>, Matrix) {
        let x: Vec<Dual> = xs.iter().enumerate().map(|(i, &v)| Dual::var(v, i)).collect();
        let f = match self {
            Re::Re21 => re21(&x),
            Re::Re33 => re33(&x),
            Re::Re34 => re34(&x),
            Re::Re37 => re37(&x),
            Re::Re41 => re41(&x),
        };
        let d = xs.len();
        let jac = Matrix::from_fn(f.len(), d, |j, i| f[j].g[i]);
        (f.iter().map(|v| v.v).collect(), jac)
    }
}

/// Four bar truss design.
fn re21(x: &[Dual]) -> Vec<Dual> {
    let (f, e, l) = (10.0, 2.0e5, 200.0);
    let r2 = std::f64::consts::SQRT_2;
    let f1 = l * ((2.0 * x[0]) + r2 * x[1] + x[2].sqrt() + x[3]);
    let f2 = (f * l / e) * ((2.0 / x[0]) + (2.0 * r2 / x[1]) - (2.0 * r2 / x[2]) + (2.0 / x[3]));
    vec![f1, f2]
}

/// Disc brake design.
fn re33(x: &[Dual]) -> Vec<Dual> {
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let sq = x2 * x2 - x1 * x1;
    let cu = x2 * x2 * x2 - x1 * x1 * x1;
    let f1 = 4.9e-5 * sq * (x4 - 1.0);
    let f2 = (9.82e6 * sq) / (x3 * x4 * cu);
    let g = [
        (x2 - x1) - 20.0,
        0.4 - (x3 / (3.14 * sq)),
        1.0 - (2.22e-3 * x3 * cu) / (sq * sq),
        (2.66e-2 * x3 * x4 * cu) / sq - 900.0,
    ];
    let f3 = g.iter().fold(Dual::constant(0.0), |acc, gi| acc + gi.violation());
    vec![f1, f2, f3]
}

/// Vehicle crashworthiness design (five variables, response-surface objectives).
fn re34(x: &[Dual]) -> Vec<Dual> {
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    let f1 = 1640.2823 + 2.3573285 * x1 + 2.3220035 * x2 + 4.5688768 * x3 + 7.7213633 * x4
        + 4.4559504 * x5;
    let f2 = 6.5856 + 1.15 * x1 - 1.0427 * x2 + 0.9738 * x3 + 0.8364 * x4 - 0.3695 * x1 * x4
        + 0.0861 * x1 * x5
        + 0.3628 * x2 * x4
        - 0.1106 * x1 * x1
        - 0.3437 * x3 * x3
        + 0.1764 * x4 * x4;
    let f3 = -0.0551 + 0.0181 * x1 + 0.1024 * x2 + 0.0421 * x3 - 0.0073 * x1 * x2
        + 0.024 * x2 * x3
        - 0.0118 * x2 * x4
        - 0.0204 * x3 * x4
        - 0.008 * x3 * x5
        - 0.0241 * x2 * x2
        + 0.0109 * x4 * x4;
    vec![f1, f2, f3]
}

/// Rocket injector design.
fn re37(x: &[Dual]) -> Vec<Dual> {
    let (a, ha, oa, optt) = (x[0], x[1], x[2], x[3]);
    let f1 = 0.692 + 0.477 * a - 0.687 * ha - 0.080 * oa - 0.0650 * optt - 0.167 * a * a
        - 0.0129 * ha * a
        + 0.0796 * ha * ha
        - 0.0634 * oa * a
        - 0.0257 * oa * ha
        + 0.0877 * oa * oa
        - 0.0521 * optt * a
        + 0.00156 * optt * ha
        + 0.00198 * optt * oa
        + 0.0184 * optt * optt;
    let f2 = 0.153 - 0.322 * a + 0.396 * ha + 0.424 * oa + 0.0226 * optt + 0.175 * a * a
        + 0.0185 * ha * a
        - 0.0701 * ha * ha
        - 0.251 * oa * a
        + 0.179 * oa * ha
        + 0.0150 * oa * oa
        + 0.0134 * optt * a
        + 0.0296 * optt * ha
        + 0.0752 * optt * oa
        + 0.0192 * optt * optt;
    let f3 = 0.370 - 0.205 * a + 0.0307 * ha + 0.108 * oa + 1.019 * optt - 0.135 * a * a
        + 0.0141 * ha * a
        + 0.0998 * ha * ha
        + 0.208 * oa * a
        - 0.0301 * oa * ha
        - 0.226 * oa * oa
        + 0.353 * optt * a
        - 0.0497 * optt * oa
        - 0.423 * optt * optt
        + 0.202 * ha * a * a
        - 0.281 * oa * a * a
        - 0.342 * ha * ha * a
        - 0.245 * ha * ha * oa
        + 0.281 * oa * oa * ha
        - 0.184 * optt * optt * a
        - 0.281 * ha * a * oa;
    vec![f1, f2, f3]
}

/// Car side impact design.
fn re41(x: &[Dual]) -> Vec<Dual> {
    let (x1, x2, x3, x4, x5, x6, x7) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
    let f1 = 1.98 + 4.9 * x1 + 6.67 * x2 + 6.98 * x3 + 4.01 * x4 + 1.78 * x5 + 0.00001 * x6
        + 2.73 * x7;
    let f2 = 4.72 - 0.5 * x4 - 0.19 * x2 * x3;
    let v_mbp = 10.58 - 0.674 * x1 * x2 - 0.67275 * x2;
    let v_fd = 16.45 - 0.489 * x3 * x7 - 0.843 * x5 * x6;
    let f3 = 0.5 * (v_mbp + v_fd);
    let g = [
        1.0 - (1.16 - 0.3717 * x2 * x4 - 0.0092928 * x3),
        0.32 - (0.261 - 0.0159 * x1 * x2 - 0.06486 * x1 - 0.019 * x2 * x7 + 0.0144 * x3 * x5
            + 0.0154464 * x6),
        0.32 - (0.214 + 0.00817 * x5 - 0.045195 * x1 - 0.0135168 * x1 + 0.03099 * x2 * x6
            - 0.018 * x2 * x7
            + 0.007176 * x3
            + 0.023232 * x3
            - 0.00364 * x5 * x6
            - 0.018 * x2 * x2),
        0.32 - (0.74 - 0.61 * x2 - 0.031296 * x3 - 0.031872 * x7 + 0.227 * x2 * x2),
        32.0 - (28.98 + 3.818 * x3 - 4.2 * x1 * x2 + 1.27296 * x6 - 2.68065 * x7),
        32.0 - (33.86 + 2.95 * x3 - 5.057 * x1 * x2 - 3.795 * x2 - 3.4431 * x7 + 1.45728),
        32.0 - (46.36 - 9.9 * x2 - 4.4505 * x1),
        4.0 - f2,
        9.9 - v_mbp,
        15.7 - v_fd,
    ];
    let f4 = g.iter().fold(Dual::constant(0.0), |acc, gi| acc + gi.violation());
    vec![f1, f2, f3, f4]
}
