//! Dominance, non-dominated sorting, crowding distance and the bounded archive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// True iff `a` is no worse than `b` everywhere and strictly better somewhere (minimization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Fast non-dominated sort. Returns the fronts in rank order, each listing row indices in
/// increasing order.
pub fn non_dominated_sort(y: &Matrix) -> Vec<Vec<usize>> {
    let k = y.rows();
    let mut dominated_by = vec![0usize; k];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..k {
        for j in (i + 1)..k {
            if dominates(y.row(i), y.row(j)) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(y.row(j), y.row(i)) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..k).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Rank (0 = non-dominated) of every row.
pub fn ranks(y: &Matrix) -> Vec<usize> {
    let mut r = vec![0; y.rows()];
    for (k, front) in non_dominated_sort(y).iter().enumerate() {
        for &i in front {
            r[i] = k;
        }
    }
    r
}

/// Indices of the non-dominated rows, in increasing order.
pub fn non_dominated_indices(y: &Matrix) -> Vec<usize> {
    (0..y.rows())
        .filter(|&i| !(0..y.rows()).any(|j| j != i && dominates(y.row(j), y.row(i))))
        .collect()
}

/// Crowding distance of each row of a front. Boundary points, and every point when there are
/// at most two, get +inf; an objective with zero range adds nothing.
pub fn crowding_distance(front: &Matrix) -> Vec<f64> {
    let k = front.rows();
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let mut cd = vec![0.0; k];
    let mut idx: Vec<usize> = (0..k).collect();
    for j in 0..front.cols() {
        idx.sort_by(|&a, &b| front[(a, j)].total_cmp(&front[(b, j)]).then(a.cmp(&b)));
        let lo = front[(idx[0], j)];
        let hi = front[(idx[k - 1], j)];
        let range = hi - lo;
        cd[idx[0]] = f64::INFINITY;
        cd[idx[k - 1]] = f64::INFINITY;
        if range <= 0.0 {
            continue;
        }
        for w in 1..k - 1 {
            let i = idx[w];
            cd[i] += (front[(idx[w + 1], j)] - front[(idx[w - 1], j)]) / range;
        }
    }
    cd
}

/// Decisions with cached objectives, ranks and crowding distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub x: Matrix,
    pub y: Matrix,
    pub rank: Vec<usize>,
    pub crowd: Vec<f64>,
}

impl SolutionSet {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape {
                op: "SolutionSet::new",
                lhs: vec![x.rows(), x.cols()],
                rhs: vec![y.rows(), y.cols()],
            });
        }
        let fronts = non_dominated_sort(&y);
        let mut rank = vec![0; y.rows()];
        let mut crowd = vec![0.0; y.rows()];
        for (r, front) in fronts.iter().enumerate() {
            let cd = crowding_distance(&y.select_rows(front));
            for (&i, c) in front.iter().zip(cd) {
                rank[i] = r;
                crowd[i] = c;
            }
        }
        Ok(Self { x, y, rank, crowd })
    }

    pub fn empty(d: usize, m: usize) -> Self {
        Self {
            x: Matrix::zeros(0, d),
            y: Matrix::zeros(0, m),
            rank: vec![],
            crowd: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// The rank-0 members.
    pub fn first_front(&self) -> SolutionSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.rank[i] == 0).collect();
        SolutionSet::new(self.x.select_rows(&idx), self.y.select_rows(&idx)).expect("consistent")
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Keeps the best `n` of `archive ∪ new`: bitwise-duplicate decisions are dropped (the archive's
/// copy wins), fronts are taken whole in rank order, and the front that crosses `n` is cut by
/// descending crowding distance with insertion order breaking ties. Survivors keep their
/// insertion order.
pub fn archive_update(archive: &SolutionSet, x_new: &Matrix, y_new: &Matrix, n: usize) -> Result<SolutionSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("archive size must be at least 1".into()));
    }
    let x_all = archive.x.vstack(x_new)?;
    let y_all = archive.y.vstack(y_new)?;
    if x_all.rows() != y_all.rows() {
        return Err(Error::Shape {
            op: "archive_update",
            lhs: vec![x_new.rows(), x_new.cols()],
            rhs: vec![y_new.rows(), y_new.cols()],
        });
    }

    // exact dedup, keeping the first occurrence; hash on bit patterns
    let mut seen: std::collections::HashMap<Vec<u64>, Vec<usize>> = std::collections::HashMap::new();
    let mut keep = Vec::with_capacity(x_all.rows());
    for i in 0..x_all.rows() {
        let key: Vec<u64> = x_all.row(i).iter().map(|v| v.to_bits()).collect();
        let bucket = seen.entry(key).or_default();
        if bucket.iter().any(|&j| same_bits(x_all.row(j), x_all.row(i))) {
            continue;
        }
        bucket.push(i);
        keep.push(i);
    }
    let x_u = x_all.select_rows(&keep);
    let y_u = y_all.select_rows(&keep);

    let mut chosen: Vec<usize> = Vec::with_capacity(n.min(keep.len()));
    for front in non_dominated_sort(&y_u) {
        if chosen.len() + front.len() <= n {
            chosen.extend_from_slice(&front);
            if chosen.len() == n {
                break;
            }
            continue;
        }
        let cd = crowding_distance(&y_u.select_rows(&front));
        let mut order: Vec<usize> = (0..front.len()).collect();
        // stable sort keeps insertion order among equal distances
        order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]));
        let need = n - chosen.len();
        chosen.extend(order[..need].iter().map(|&o| front[o]));
        break;
    }
    chosen.sort_unstable();
    SolutionSet::new(x_u.select_rows(&chosen), y_u.select_rows(&chosen))
}
