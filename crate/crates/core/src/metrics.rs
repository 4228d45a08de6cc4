//! Quality indicators: hypervolume, Δ-spread and log hypervolume difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::pareto::dominates;

/// A named indicator value with the context needed to interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ref_point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hv_star: Option<f64>,
}

/// Points that strictly dominate `r` (the only ones contributing volume).
fn inside(y: &Matrix, r: &[f64]) -> Vec<Vec<f64>> {
    y.row_iter()
        .filter(|p| p.iter().zip(r).all(|(a, b)| a < b))
        .map(|p| p.to_vec())
        .collect()
}

fn check(y: &Matrix, r: &[f64]) -> Result<()> {
    if r.is_empty() {
        return Err(Error::InvalidArgument("hypervolume needs at least one objective".into()));
    }
    if y.rows() > 0 && y.cols() != r.len() {
        return Err(Error::Shape {
            op: "hypervolume",
            lhs: vec![y.rows(), y.cols()],
            rhs: vec![r.len()],
        });
    }
    Ok(())
}

/// Exact hypervolume dominated by `y` and bounded by `r`.
///
/// Two objectives use an O(k log k) sweep, three a slab sweep over the last objective, and
/// more the recursive exclusive-volume scheme of [`hypervolume_recursive`].
pub fn hypervolume(y: &Matrix, r: &[f64]) -> Result<f64> {
    check(y, r)?;
    let pts = inside(y, r);
    Ok(match r.len() {
        1 => pts.iter().map(|p| r[0] - p[0]).fold(0.0, f64::max),
        2 => hv2(pts, r),
        3 => hv3(pts, r),
        _ => wfg(nondominated(pts), r),
    })
}

/// Recursive exclusive-volume hypervolume for any number of objectives.
pub fn hypervolume_recursive(y: &Matrix, r: &[f64]) -> Result<f64> {
    check(y, r)?;
    Ok(wfg(nondominated(inside(y, r)), r))
}

fn hv2(mut pts: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut best = r[1];
    let mut vol = 0.0;
    for p in &pts {
        if p[1] < best {
            vol += (r[0] - p[0]) * (best - p[1]);
            best = p[1];
        }
    }
    vol
}

fn hv3(mut pts: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut vol = 0.0;
    let mut stair = Staircase::new(r[0], r[1]);
    for i in 0..pts.len() {
        stair.insert(pts[i][0], pts[i][1]);
        let top = if i + 1 < pts.len() { pts[i + 1][2] } else { r[2] };
        vol += (top - pts[i][2]) * stair.area;
    }
    vol
}

/// Non-dominated 2-D points sorted by x ascending (so y descending) with their dominated area.
struct Staircase {
    pts: Vec<(f64, f64)>,
    rx: f64,
    ry: f64,
    area: f64,
}

impl Staircase {
    fn new(rx: f64, ry: f64) -> Self {
        Self {
            pts: Vec::new(),
            rx,
            ry,
            area: 0.0,
        }
    }

    fn insert(&mut self, x: f64, y: f64) {
        let pos = self.pts.partition_point(|p| p.0 < x);
        if self.pts.get(pos).is_some_and(|p| p.0 == x && p.1 <= y) {
            return;
        }
        let upper = if pos > 0 {
            let left = self.pts[pos - 1].1;
            if left <= y {
                return; // weakly dominated
            }
            left
        } else {
            self.ry
        };
        let mut end = pos;
        let (mut cur_x, mut u) = (x, upper);
        while end < self.pts.len() && self.pts[end].1 >= y {
            let (px, py) = self.pts[end];
            self.area += (px - cur_x) * (u - y);
            cur_x = px;
            u = py;
            end += 1;
        }
        let next_x = if end < self.pts.len() { self.pts[end].0 } else { self.rx };
        self.area += (next_x - cur_x) * (u - y);
        self.pts.splice(pos..end, std::iter::once((x, y)));
    }
}

fn nondominated(pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.iter().any(|q| dominates(q, &p) || q == &p) {
            continue;
        }
        out.retain(|q| !dominates(&p, q));
        out.push(p);
    }
    out
}

fn box_volume(p: &[f64], r: &[f64]) -> f64 {
    p.iter().zip(r).map(|(a, b)| b - a).product()
}

/// `pts` must be mutually non-dominated and strictly inside `r`.
fn wfg(mut pts: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    match pts.len() {
        0 => return 0.0,
        1 => return box_volume(&pts[0], r),
        _ => {}
    }
    // sorting by the last objective keeps the limit sets small
    let last = r.len() - 1;
    pts.sort_by(|a, b| b[last].total_cmp(&a[last]));
    let mut vol = 0.0;
    for i in 0..pts.len() {
        vol += exclusive(&pts[i], &pts[i + 1..], r);
    }
    vol
}

fn exclusive(p: &[f64], rest: &[Vec<f64>], r: &[f64]) -> f64 {
    let limited: Vec<Vec<f64>> = rest
        .iter()
        .map(|q| q.iter().zip(p).map(|(a, b)| a.max(*b)).collect())
        .collect();
    box_volume(p, r) - wfg(nondominated(limited), r)
}

/// Δ-spread of a solution set, sorted along objective 1.
///
/// With `extremes` the distances from the first and last sorted points to the given endpoints
/// enter as `d_f` and `d_l`; without them both are zero. A set with fewer than two distinct
/// points gets +inf.
pub fn delta_spread(y: &Matrix, extremes: Option<(&[f64], &[f64])>) -> f64 {
    let mut rows: Vec<&[f64]> = y.row_iter().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let distinct = rows.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(!rows.is_empty());
    if distinct < 2 {
        return f64::INFINITY;
    }
    let gaps: Vec<f64> = rows
        .windows(2)
        .map(|w| norm(&w[0].iter().zip(w[1]).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let (df, dl) = match extremes {
        Some((first, last)) => {
            let dist = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
            (dist(rows[0], first), dist(rows[rows.len() - 1], last))
        }
        None => (0.0, 0.0),
    };
    let num = df + dl + gaps.iter().map(|g| (g - mean).abs()).sum::<f64>();
    let den = df + dl + gaps.len() as f64 * mean;
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `ln(hv_star - hv)`; -inf (with a warning) once `hv` reaches `hv_star`.
pub fn lhd(hv_star: f64, hv: f64) -> f64 {
    if hv >= hv_star {
        log::warn!("hypervolume {hv} reached the maximum {hv_star}; log difference is -inf");
        return f64::NEG_INFINITY;
    }
    (hv_star - hv).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn trivial_volumes() {
        let r = [1.0, 1.0];
        assert_eq!(hypervolume(&Matrix::from_rows(&[[0.0, 0.0]]).unwrap(), &r).unwrap(), 1.0);
        assert_eq!(hypervolume(&Matrix::from_rows(&[[1.0, 1.0]]).unwrap(), &r).unwrap(), 0.0);
        assert_eq!(hypervolume(&Matrix::zeros(0, 2), &r).unwrap(), 0.0);
        assert!(hypervolume(&Matrix::zeros(0, 0), &[]).is_err());
    }

    #[test]
    fn staircase_by_hand() {
        let y = Matrix::from_rows(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]).unwrap();
        // 3x1 + 2x1 + 1x1
        assert_eq!(hypervolume(&y, &[4.0, 4.0]).unwrap(), 6.0);
        let y3 = Matrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        // 2x2x1 + 1x1x1
        assert_eq!(hypervolume(&y3, &[2.0, 2.0, 2.0]).unwrap(), 5.0);
    }

    #[test]
    fn three_and_four_objective_paths_agree_with_recursion() {
        let mut r = crate::rng::stream(4, "hv");
        for m in [3usize, 4] {
            for _ in 0..20 {
                let y = Matrix::from_fn(25, m, |_, _| r.random::<f64>());
                let refp = vec![1.1; m];
                let a = hypervolume(&y, &refp).unwrap();
                let b = hypervolume_recursive(&y, &refp).unwrap();
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn spread_examples() {
        let same = Matrix::filled(4, 2, 0.3);
        assert!(delta_spread(&same, None).is_infinite());
        let line = Matrix::from_fn(6, 2, |i, j| if j == 0 { i as f64 } else { 5.0 - i as f64 });
        assert!(delta_spread(&line, None).abs() < 1e-15);
        // gaps 1, 2, 3 (along a line, scaled by sqrt 2): mean 2, deviations 1+0+1 = 2, denominator 6
        let y = Matrix::from_rows(&[[3.0, 3.0], [0.0, 0.0], [1.0, 1.0], [6.0, 6.0]]).unwrap();
        assert!((delta_spread(&y, None) - 2.0 / 6.0).abs() < 1e-15);
        // endpoints at distance sqrt 2 on both ends
        let s = std::f64::consts::SQRT_2;
        let e = delta_spread(&y, Some((&[-1.0, -1.0], &[7.0, 7.0])));
        let want = (2.0 * s + 2.0 * s) / (2.0 * s + 6.0 * s);
        assert!((e - want).abs() < 1e-14, "{e} vs {want}");
    }

    #[test]
    fn lhd_examples() {
        assert_eq!(lhd(2.0, 1.0), 0.0);
        assert!((lhd(1.0 + std::f64::consts::E, 1.0) - 1.0).abs() < 1e-15);
        assert!(lhd(1.0, 0.5) < lhd(1.0, 0.2));
        assert_eq!(lhd(1.0, 1.0), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn hv_monotone_and_invariant(pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..25),
                                     extra in prop::collection::vec(0.0f64..1.0, 3)) {
            let y = Matrix::from_rows(&pts).unwrap();
            let r = [1.0, 1.0, 1.0];
            let base = hypervolume(&y, &r).unwrap();
            let mut more = pts.clone();
            more.push(extra);
            prop_assert!(hypervolume(&Matrix::from_rows(&more).unwrap(), &r).unwrap() >= base - 1e-12);
            let mut rev = pts.clone();
            rev.reverse();
            rev.push(pts[0].clone());
            let hv_rev = hypervolume(&Matrix::from_rows(&rev).unwrap(), &r).unwrap();
            prop_assert!((hv_rev - base).abs() < 1e-12);
        }

        #[test]
        fn two_objective_paths_agree(pts in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 2), 1..60)) {
            let y = Matrix::from_rows(&pts).unwrap();
            let r = [1.5, 1.7];
            let a = hypervolume(&y, &r).unwrap();
            let b = hypervolume_recursive(&y, &r).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn spread_scale_invariant(pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 2..20),
                                  s in 0.1f64..10.0) {
            let y = Matrix::from_rows(&pts).unwrap();
            let a = delta_spread(&y, Some((&[0.0, 1.0], &[1.0, 0.0])));
            let b = delta_spread(&y.map(|v| v * s), Some((&[0.0, s], &[s, 0.0])));
            if a.is_finite() {
                prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
            } else {
                prop_assert!(b.is_infinite());
            }
        }
    }
}
