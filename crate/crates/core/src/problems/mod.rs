//! Benchmark problems with analytic Jacobians, box bounds and hypervolume reference points.
//!
//! Problems are addressed by name: `zdt1`, `zdt1-d20`, `dtlz2-m3-d30`, `re21`. Decision vectors
//! stay in original units here; [`Normalized`] exposes any objective on the unit box.

mod dtlz;
mod re;
mod zdt;

use rand::seq::SliceRandom;
use rand::Rng as _;

pub use dtlz::Dtlz;
pub use re::Re;
pub use zdt::Zdt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Objective values and Jacobian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    /// m x d, row j is the gradient of objective j.
    pub jacobian: Matrix,
    /// Set when the point lies outside the box; the values are still computed.
    pub out_of_bounds: bool,
}

/// A differentiable vector objective over a box.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn n_var(&self) -> usize;
    fn n_obj(&self) -> usize;
    fn bounds(&self) -> &[(f64, f64)];
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;

    fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x)?.values)
    }

    /// Row-wise objective values of a batch.
    fn values_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(x.rows(), self.n_obj());
        for (i, r) in x.row_iter().enumerate() {
            out.row_mut(i).copy_from_slice(&self.values(r)?);
        }
        Ok(out)
    }

    /// Row-wise values and Jacobians of a batch.
    fn evaluate_batch(&self, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
        let mut y = Matrix::zeros(x.rows(), self.n_obj());
        let mut jacs = Vec::with_capacity(x.rows());
        for (i, r) in x.row_iter().enumerate() {
            let e = self.evaluate(r)?;
            y.row_mut(i).copy_from_slice(&e.values);
            jacs.push(e.jacobian);
        }
        Ok((y, jacs))
    }
}

fn in_box(x: &[f64], bounds: &[(f64, f64)]) -> bool {
    x.iter().zip(bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
}

pub(crate) fn check_finite(name: &str, x: &[f64], values: &[f64], jac: &Matrix) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) && jac.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("{name} evaluated at x = {x:?}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Zdt(Zdt),
    Dtlz(Dtlz),
    Re(Re),
}

/// A named benchmark problem.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    family: Family,
    m: usize,
    bounds: Vec<(f64, f64)>,
    ref_point: Vec<f64>,
}

/// Base names accepted by [`Problem::from_name`].
pub const REGISTRY: [&str; 17] = [
    "zdt1", "zdt2", "zdt3", "zdt4", "zdt6", "dtlz1", "dtlz2", "dtlz3", "dtlz4", "dtlz5", "dtlz6",
    "dtlz7", "re21", "re33", "re34", "re37", "re41",
];

impl Problem {
    /// Parses `family[-mM][-dD]`, e.g. `dtlz2-m3-d30`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let lower = spec.trim().to_ascii_lowercase();
        let mut parts = lower.split('-');
        let base = parts.next().unwrap_or_default();
        let (mut m, mut d) = (None, None);
        for p in parts {
            let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::UnknownProblem(spec.into()));
            if let Some(v) = p.strip_prefix('m') {
                m = Some(parse(v)?);
            } else if let Some(v) = p.strip_prefix('d') {
                d = Some(parse(v)?);
            } else {
                return Err(Error::UnknownProblem(spec.into()));
            }
        }
        let family = match base {
            "zdt1" => Family::Zdt(Zdt::Zdt1),
            "zdt2" => Family::Zdt(Zdt::Zdt2),
            "zdt3" => Family::Zdt(Zdt::Zdt3),
            "zdt4" => Family::Zdt(Zdt::Zdt4),
            "zdt6" => Family::Zdt(Zdt::Zdt6),
            "re21" => Family::Re(Re::Re21),
            "re33" => Family::Re(Re::Re33),
            "re34" => Family::Re(Re::Re34),
            "re37" => Family::Re(Re::Re37),
            "re41" => Family::Re(Re::Re41),
            b => match b.strip_prefix("dtlz").and_then(|n| n.parse::<u8>().ok()) {
                Some(n @ 1..=7) => Family::Dtlz(Dtlz(n)),
                _ => return Err(Error::UnknownProblem(spec.into())),
            },
        };
        match family {
            Family::Zdt(z) => {
                if m.is_some_and(|m| m != 2) {
                    return Err(Error::UnknownProblem(spec.into()));
                }
                Self::zdt(z, d.unwrap_or(z.default_dim()))
            }
            Family::Dtlz(t) => {
                let m = m.unwrap_or(3);
                Self::dtlz(t, m, d.unwrap_or(m + t.default_k() - 1))
            }
            Family::Re(r) => {
                if m.is_some_and(|m| m != r.n_obj()) || d.is_some_and(|d| d != r.n_var()) {
                    return Err(Error::UnknownProblem(spec.into()));
                }
                Ok(Self::re(r))
            }
        }
    }

    pub fn zdt(z: Zdt, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("ZDT needs d >= 2, got {d}")));
        }
        let n = match z {
            Zdt::Zdt1 => 1,
            Zdt::Zdt2 => 2,
            Zdt::Zdt3 => 3,
            Zdt::Zdt4 => 4,
            Zdt::Zdt6 => 6,
        };
        let mut p = Self {
            name: format!("zdt{n}-d{d}"),
            family: Family::Zdt(z),
            m: 2,
            bounds: z.bounds(d),
            ref_point: vec![],
        };
        p.ref_point = p.default_ref_point();
        Ok(p)
    }

    pub fn dtlz(t: Dtlz, m: usize, d: usize) -> Result<Self> {
        if m < 2 || d < m {
            return Err(Error::InvalidArgument(format!(
                "DTLZ needs m >= 2 and d >= m, got m={m}, d={d}"
            )));
        }
        let mut p = Self {
            name: format!("dtlz{}-m{m}-d{d}", t.0),
            family: Family::Dtlz(t),
            m,
            bounds: vec![(0.0, 1.0); d],
            ref_point: vec![],
        };
        p.ref_point = p.default_ref_point();
        Ok(p)
    }

    pub fn re(r: Re) -> Self {
        let name = format!("{r:?}").to_ascii_lowercase();
        let mut p = Self {
            name,
            family: Family::Re(r),
            m: r.n_obj(),
            bounds: r.bounds(),
            ref_point: vec![],
        };
        p.ref_point = p.default_ref_point();
        p
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn ref_point(&self) -> &[f64] {
        &self.ref_point
    }

    pub fn with_ref_point(mut self, r: Vec<f64>) -> Result<Self> {
        if r.len() != self.m {
            return Err(Error::InvalidArgument(format!(
                "reference point has {} entries, {} has {} objectives",
                r.len(),
                self.name,
                self.m
            )));
        }
        self.ref_point = r;
        Ok(self)
    }

    /// Reference points used by the benchmark protocol; otherwise 1.1 x the nadir of the true front.
    fn default_ref_point(&self) -> Vec<f64> {
        let d = self.bounds.len();
        let table: Option<&[f64]> = match self.family {
            Family::Zdt(Zdt::Zdt1) => Some(&[0.9994, 6.0576]),
            Family::Zdt(Zdt::Zdt2) => Some(&[0.9994, 6.8960]),
            Family::Zdt(Zdt::Zdt3) => Some(&[0.9994, 6.0571]),
            Family::Zdt(Zdt::Zdt4) => Some(&[1.10, 300.42]),
            Family::Zdt(Zdt::Zdt6) => Some(&[1.07, 10.27]),
            Family::Dtlz(t) if self.m == 3 => match t.0 {
                1 => Some(&[558.21, 552.30, 568.36]),
                2 => Some(&[2.8390, 2.9011, 2.8575]),
                3 => Some(&[1703.72, 1605.54, 1670.48]),
                4 => Some(&[3.2675, 2.6443, 2.4263]),
                5 if d <= 10 => Some(&[2.65, 2.61, 2.70]),
                5 => Some(&[2.6672, 2.8009, 2.8575]),
                6 => Some(&[9.80, 9.78, 9.78]),
                7 => Some(&[0.9984, 0.9961, 22.8114]),
                _ => None,
            },
            Family::Re(Re::Re21) => Some(&[3144.44, 0.05]),
            Family::Re(Re::Re33) => Some(&[5.01, 9.84, 4.30]),
            Family::Re(Re::Re34) => Some(&[1864.72022, 11.8199394, 0.290399938]),
            Family::Re(Re::Re37) => Some(&[1.1022, 1.20726899, 1.20318656]),
            Family::Re(Re::Re41) => Some(&[47.04480682, 4.86997366, 14.40049127, 10.3941957]),
            _ => None,
        };
        match table {
            Some(r) => r.to_vec(),
            None => {
                let front = self.true_front(1000).expect("DTLZ fronts are known");
                (0..self.m)
                    .map(|j| 1.1 * front.column(j).into_iter().fold(f64::MIN, f64::max))
                    .collect()
            }
        }
    }

    /// About `n` points sampled on the known Pareto front, if there is one.
    pub fn true_front(&self, n: usize) -> Option<Matrix> {
        match self.family {
            Family::Zdt(z) => Some(z.front(n)),
            Family::Dtlz(t) => Some(t.front(n, self.m)),
            Family::Re(_) => None,
        }
    }

    /// Hypervolume of a dense (10^4 point) sampling of the true front.
    pub fn hv_star(&self) -> Option<f64> {
        let front = self.true_front(10_000)?;
        crate::metrics::hypervolume(&front, &self.ref_point).ok()
    }

    /// First and last point of the true front when sorted along objective 1 (for Δ-spread).
    pub fn front_extremes(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let front = self.true_front(10_000)?;
        let mut idx: Vec<usize> = (0..front.rows()).collect();
        idx.sort_by(|&a, &b| front[(a, 0)].total_cmp(&front[(b, 0)]));
        Some((
            front.row(idx[0]).to_vec(),
            front.row(*idx.last()?).to_vec(),
        ))
    }
}

impl Objective for Problem {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_var(&self) -> usize {
        self.bounds.len()
    }

    fn n_obj(&self) -> usize {
        self.m
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if x.len() != self.n_var() {
            return Err(Error::Shape {
                op: "evaluate",
                lhs: vec![self.n_var()],
                rhs: vec![x.len()],
            });
        }
        let (values, jacobian) = match self.family {
            Family::Zdt(z) => z.eval(x),
            Family::Dtlz(t) => t.eval(x, self.m),
            Family::Re(r) => r.eval(x),
        };
        check_finite(&self.name, x, &values, &jacobian)?;
        Ok(Evaluation {
            values,
            jacobian,
            out_of_bounds: !in_box(x, &self.bounds),
        })
    }
}

/// View of an objective on the unit box: `x = lo + u * (hi - lo)`.
pub struct Normalized<'a> {
    inner: &'a dyn Objective,
    unit: Vec<(f64, f64)>,
}

impl<'a> Normalized<'a> {
    pub fn new(inner: &'a dyn Objective) -> Self {
        Self {
            inner,
            unit: vec![(0.0, 1.0); inner.n_var()],
        }
    }

    pub fn to_original(&self, u: &[f64]) -> Vec<f64> {
        to_original(self.inner.bounds(), u)
    }
}

pub fn to_original(bounds: &[(f64, f64)], u: &[f64]) -> Vec<f64> {
    u.iter().zip(bounds).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect()
}

pub fn to_unit(bounds: &[(f64, f64)], x: &[f64]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect()
}

impl Objective for Normalized<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn n_var(&self) -> usize {
        self.inner.n_var()
    }

    fn n_obj(&self) -> usize {
        self.inner.n_obj()
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.unit
    }

    fn evaluate(&self, u: &[f64]) -> Result<Evaluation> {
        let mut e = self.inner.evaluate(&self.to_original(u))?;
        for j in 0..e.jacobian.rows() {
            for (v, (lo, hi)) in e.jacobian.row_mut(j).iter_mut().zip(self.inner.bounds()) {
                *v *= hi - lo;
            }
        }
        Ok(e)
    }

    fn values(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.inner.values(&self.to_original(u))
    }
}

/// Latin hypercube design: per dimension, exactly one of the `n` points falls in each of the
/// `n` equal-width strata of the box.
pub fn latin_hypercube(bounds: &[(f64, f64)], n: usize, rng: &mut Rng) -> Matrix {
    let d = bounds.len();
    let mut out = Matrix::zeros(n, d);
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        perm.shuffle(rng);
        for (i, &s) in perm.iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            out[(i, j)] = lo + u * (hi - lo);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn fd_jacobian(p: &dyn Objective, x: &[f64], h: f64) -> Matrix {
        let m = p.n_obj();
        let mut j = Matrix::zeros(m, x.len());
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (p.values(&xp).unwrap(), p.values(&xm).unwrap());
            for k in 0..m {
                j[(k, i)] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        j
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn zdt1_origin() {
        let p = Problem::from_name("zdt1").unwrap();
        let e = p.evaluate(&vec![0.0; 30]).unwrap();
        assert_eq!(e.values, vec![0.0, 1.0]);
        assert!(!e.out_of_bounds);
    }

    #[test]
    fn dtlz2_sphere_on_optimal_slice() {
        let p = Problem::from_name("dtlz2-m3-d12").unwrap();
        let mut x = vec![0.5; 12];
        x[0] = 0.3;
        x[1] = 0.8;
        let f = p.values(&x).unwrap();
        let n: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_is_flagged_not_rejected() {
        let p = Problem::from_name("zdt2-d5").unwrap();
        let e = p.evaluate(&[0.5, 1.2, 0.0, 0.0, 0.0]).unwrap();
        assert!(e.out_of_bounds);
    }

    #[test]
    fn nan_names_problem() {
        let p = Problem::from_name("zdt1-d3").unwrap();
        let err = p.evaluate(&[-1.0, 0.0, 0.0]).unwrap_err().to_string();
        assert!(err.contains("zdt1-d3"), "{err}");
    }

    #[test]
    fn registry_parses() {
        for name in REGISTRY {
            let p = Problem::from_name(name).unwrap();
            assert_eq!(p.ref_point().len(), p.n_obj());
            assert!(p.bounds().iter().all(|(lo, hi)| lo < hi));
        }
        assert_eq!(Problem::from_name("dtlz2-m3-d30").unwrap().n_var(), 30);
        assert_eq!(Problem::from_name("zdt1-d20").unwrap().n_var(), 20);
        assert!(Problem::from_name("zdt9").is_err());
        assert!(Problem::from_name("re21-d9").is_err());
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let names = [
            "zdt1-d10", "zdt2-d10", "zdt3-d10", "zdt4-d10", "zdt6-d10", "dtlz1-m3-d7",
            "dtlz2-m3-d12", "dtlz3-m3-d12", "dtlz4-m3-d12", "dtlz5-m3-d12", "dtlz6-m3-d12",
            "dtlz7-m3-d12", "dtlz2-m4-d9", "dtlz5-m4-d9", "dtlz7-m2-d6", "re21", "re33", "re34",
            "re37", "re41",
        ];
        let mut r = rng::stream(11, "fd");
        for name in names {
            let p = Problem::from_name(name).unwrap();
            // stay away from the box edges where some derivatives blow up
            let inner: Vec<(f64, f64)> = p
                .bounds()
                .iter()
                .map(|(lo, hi)| (lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo)))
                .collect();
            let xs = latin_hypercube(&inner, 10, &mut r);
            for x in xs.row_iter() {
                let e = p.evaluate(x).unwrap();
                let scale: Vec<f64> = p.bounds().iter().map(|(lo, hi)| hi - lo).collect();
                let h = 1e-6 * scale.iter().fold(0.0f64, |a, b| a.max(*b));
                let fd = fd_jacobian(&p, x, h);
                let bound = e.jacobian.as_slice().iter().fold(0.0f64, |a, b| a.max(b.abs()));
                for (a, b) in e.jacobian.as_slice().iter().zip(fd.as_slice()) {
                    // DTLZ4's x^100 makes entries tiny relative to others; compare on the row scale
                    assert!(
                        rel_close(*a, *b, 1e-5) || (a - b).abs() < 1e-6 * bound.max(1.0),
                        "{name}: analytic {a} vs fd {b} at {x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn known_fronts_are_mutually_non_dominated() {
        for name in ["zdt1", "zdt2", "zdt3", "dtlz2"] {
            let p = Problem::from_name(name).unwrap();
            let f = p.true_front(300).unwrap();
            let nd = crate::pareto::non_dominated_indices(&f);
            assert_eq!(nd.len(), f.rows(), "{name}");
        }
    }

    #[test]
    fn front_points_evaluate_on_front() {
        let p = Problem::from_name("zdt3-d5").unwrap();
        let f = p.true_front(50).unwrap();
        for r in f.row_iter() {
            let y = p.values(&Zdt::Zdt3.pareto_x(r[0], 5)).unwrap();
            assert!((y[1] - r[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_points_are_dominated_by_the_fronts() {
        // ZDT1-3 use f1 = 0.9994 < 1, so the extreme front point at f1 = 1 sits outside;
        // every other front point must dominate the reference point.
        for name in REGISTRY.iter().filter(|n| !n.starts_with("re")) {
            let p = Problem::from_name(name).unwrap();
            let f = p.true_front(2000).unwrap();
            let inside = f
                .row_iter()
                .filter(|y| y.iter().zip(p.ref_point()).all(|(a, b)| a < b))
                .count();
            assert!(inside as f64 >= 0.999 * f.rows() as f64, "{name}: {inside}/{}", f.rows());
        }
    }

    #[test]
    fn lhs_stratification() {
        for n in [1usize, 2, 10, 17, 100] {
            let b = vec![(-2.0, 3.0); 4];
            let x = latin_hypercube(&b, n, &mut rng::stream(5, "lhs"));
            for j in 0..4 {
                let mut strata: Vec<usize> = x
                    .column(j)
                    .iter()
                    .map(|v| (((v + 2.0) / 5.0) * n as f64).floor() as usize)
                    .collect();
                strata.sort_unstable();
                assert_eq!(strata, (0..n).collect::<Vec<_>>());
            }
        }
        let b = vec![(0.0, 1.0); 3];
        let a = latin_hypercube(&b, 10, &mut rng::stream(1, "lhs"));
        assert_eq!(a, latin_hypercube(&b, 10, &mut rng::stream(1, "lhs")));
        assert_ne!(a, latin_hypercube(&b, 10, &mut rng::stream(2, "lhs")));
    }

    #[test]
    fn normalized_view_scales_jacobian() {
        let p = Problem::re(Re::Re33);
        let nz = Normalized::new(&p);
        let u = [0.3, 0.4, 0.5, 0.6];
        let e = nz.evaluate(&u).unwrap();
        let fd = fd_jacobian(&nz, &u, 1e-6);
        for (a, b) in e.jacobian.as_slice().iter().zip(fd.as_slice()) {
            assert!(rel_close(*a, *b, 1e-5), "{a} vs {b}");
        }
    }
}
