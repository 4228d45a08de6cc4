//! Greedy hypervolume-contribution batch selection.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::metrics::hypervolume;
use crate::pareto::non_dominated_indices;

/// Picks `b` candidate rows one at a time, each maximizing the hypervolume gained over the
/// archive plus the rows already picked. Ties go to the earliest candidate. Returns indices into
/// `candidates` in pick order; all of them when fewer than `b` exist.
pub fn batch_select(candidates: &Matrix, archive_y: &Matrix, reference: &[f64], b: usize) -> Result<Vec<usize>> {
    let n = candidates.rows();
    if n <= b {
        return Ok((0..n).collect());
    }
    // only the non-dominated part of the base set matters for the volume
    let mut base = archive_y.select_rows(&non_dominated_indices(archive_y));
    let mut base_hv = hypervolume(&base, reference)?;
    let mut taken = vec![false; n];
    let mut picked = Vec::with_capacity(b);
    for _ in 0..b {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let mut trial = base.clone();
            trial.push_row(candidates.row(i))?;
            let gain = hypervolume(&trial, reference)? - base_hv;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, gain) = best.expect("a candidate remains");
        taken[i] = true;
        picked.push(i);
        base.push_row(candidates.row(i))?;
        base = base.select_rows(&non_dominated_indices(&base));
        base_hv += gain;
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn interior_candidate_still_selected() {
        let archive = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let cand = Matrix::from_rows(&[[0.5, 0.5], [0.6, 0.6]]).unwrap();
        assert_eq!(batch_select(&cand, &archive, &[1.0, 1.0], 1).unwrap(), vec![0]);
    }

    #[test]
    fn dominating_candidate_first() {
        let archive = Matrix::from_rows(&[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        let cand = Matrix::from_rows(&[[0.9, 0.1], [0.1, 0.1], [0.4, 0.45]]).unwrap();
        assert_eq!(batch_select(&cand, &archive, &[1.0, 1.0], 2).unwrap()[0], 1);
    }

    #[test]
    fn fewer_candidates_than_batch() {
        let archive = Matrix::zeros(0, 2);
        let cand = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(batch_select(&cand, &archive, &[1.0, 1.0], 3).unwrap(), vec![0]);
    }

    fn union_hv(archive: &Matrix, cand: &Matrix, idx: &[usize], r: &[f64]) -> f64 {
        let mut all = archive.clone();
        for &i in idx {
            all.push_row(cand.row(i)).unwrap();
        }
        hypervolume(&all, r).unwrap()
    }

    #[test]
    fn greedy_beats_every_singleton() {
        let mut g = rng::stream(11, "select");
        let r = [1.0, 1.0, 1.0];
        for _ in 0..50 {
            let k = g.random_range(2..=8);
            let b = g.random_range(1..=3);
            let archive = Matrix::from_fn(4, 3, |_, _| 0.3 + 0.7 * g.random::<f64>());
            let cand = Matrix::from_fn(k, 3, |_, _| g.random::<f64>());
            let picked = batch_select(&cand, &archive, &r, b).unwrap();
            let greedy = union_hv(&archive, &cand, &picked, &r);
            for i in 0..k {
                assert!(greedy >= union_hv(&archive, &cand, &[i], &r) - 1e-12);
            }
        }
    }
}
