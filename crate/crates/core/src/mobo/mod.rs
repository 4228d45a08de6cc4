//! Bayesian mode: GP surrogates stand in for the expensive objectives, a freshly trained
//! diffusion model proposes candidates over the GP posterior means, and a greedy hypervolume
//! rule picks the batch that gets truly evaluated. When the hypervolume stalls, one round of
//! SBX offspring replaces the diffusion proposals.

pub mod augment;
pub mod gp;
pub mod sbx;
pub mod select;

use serde::{Deserialize, Serialize};

pub use augment::{augment_training_data, AugmentConfig};
pub use gp::{Gp, GpConfig, GpObjective};
pub use sbx::sbx_offspring;
pub use select::batch_select;

use crate::diffusion::{self, DiffusionSchedule, TrainConfig};
use crate::ditmoo::{DiTConfig, DitMoo};
use crate::error::{invalid, Result};
use crate::guidance::GuidanceConfig;
use crate::linalg::Matrix;
use crate::metrics::{hypervolume, lhd};
use crate::pareto::non_dominated_indices;
use crate::problems::{latin_hypercube, to_original, Normalized, Objective, Problem};
use crate::rng::{stream_path, Rng};
use crate::sampler::sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoboConfig {
    pub n_init: usize,
    /// Number of batches K.
    pub iterations: usize,
    /// Batch size b.
    pub batch: usize,
    /// Diffusion timesteps per proposal round.
    pub steps: usize,
    pub s_offset: f64,
    pub hidden: usize,
    pub heads: usize,
    pub blocks: usize,
    pub train: TrainConfig,
    pub guidance: GuidanceConfig,
    pub gp: GpConfig,
    pub augment: AugmentConfig,
    /// Independent sampling runs per round (N_gen).
    pub generations: usize,
    /// Samples per run.
    pub offspring: usize,
    /// SBX distribution index.
    pub kappa: f64,
    /// SBX parent-pair draws per escape round.
    pub sbx_pairs: usize,
    /// Relative hypervolume gain below which an iteration counts as stalled.
    pub stall_tol: f64,
    /// Consecutive stalled iterations that trigger an escape round.
    pub stall_iters: usize,
}

impl Default for MoboConfig {
    fn default() -> Self {
        Self {
            n_init: 100,
            iterations: 20,
            batch: 5,
            steps: 25,
            s_offset: diffusion::DEFAULT_S_OFFSET,
            hidden: 256,
            heads: 4,
            blocks: 3,
            train: TrainConfig {
                epochs: 250,
                ..TrainConfig::default()
            },
            guidance: GuidanceConfig::default(),
            gp: GpConfig::default(),
            augment: AugmentConfig::default(),
            generations: 1,
            offspring: 50,
            kappa: 15.0,
            sbx_pairs: 1000,
            stall_tol: 1e-4,
            stall_iters: 2,
        }
    }
}

/// Switches between diffusion proposals and SBX escape rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRule {
    pub tol: f64,
    pub patience: usize,
    pub stalled: usize,
    pub escape: bool,
}

impl EscapeRule {
    pub fn new(tol: f64, patience: usize) -> Self {
        Self {
            tol,
            patience: patience.max(1),
            stalled: 0,
            escape: false,
        }
    }

    /// Updates the flag after an iteration that moved the hypervolume from `before` to `after`.
    pub fn update(&mut self, before: f64, after: f64) -> bool {
        if self.escape {
            // one escape round, then back to diffusion proposals
            self.escape = false;
            self.stalled = 0;
            return self.escape;
        }
        let gain = if before > 0.0 {
            (after - before) / before
        } else if after > before {
            f64::INFINITY
        } else {
            0.0
        };
        if gain < self.tol {
            self.stalled += 1;
        } else {
            self.stalled = 0;
        }
        if self.stalled >= self.patience {
            self.escape = true;
            self.stalled = 0;
        }
        self.escape
    }
}

/// Evaluated data in unit-box coordinates.
#[derive(Debug, Clone)]
pub struct MoboState {
    pub x: Matrix,
    pub y: Matrix,
    pub k: usize,
    pub escape: bool,
    /// Hypervolume of all evaluations after initialization and after each iteration.
    pub hv_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    /// 0 for the initial design, then 1..=K.
    pub k: usize,
    pub hv: f64,
    /// `None` when the problem has no known front.
    pub lhd: Option<f64>,
    /// Whether the proposals of this iteration came from SBX.
    pub escape: bool,
    /// Newly evaluated points in original units.
    pub selected: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MoboOutcome {
    pub state: MoboState,
    pub log: Vec<IterationLog>,
    /// Number of true objective evaluations.
    pub evaluations: usize,
}

impl MoboOutcome {
    /// Non-dominated evaluated points, original units.
    pub fn front(&self, bounds: &[(f64, f64)]) -> (Matrix, Matrix) {
        let idx = non_dominated_indices(&self.state.y);
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| to_original(bounds, self.state.x.row(i))).collect();
        let x = if rows.is_empty() {
            Matrix::zeros(0, bounds.len())
        } else {
            Matrix::from_rows(&rows).expect("fixed width")
        };
        (x, self.state.y.select_rows(&idx))
    }
}

/// Trains a fresh network on `x_train` against the GP means and returns the union of the first
/// fronts of `generations` guided sampling runs (unit coordinates).
pub fn spread_offspring(gp: &GpObjective, x_train: &Matrix, cfg: &MoboConfig, rng: &mut Rng) -> Result<Matrix> {
    let sched = DiffusionSchedule::cosine(cfg.steps, cfg.s_offset)?;
    let net_cfg = DiTConfig {
        d: gp.n_var(),
        m: gp.n_obj(),
        e: cfg.hidden,
        blocks: cfg.blocks,
        heads: cfg.heads,
    };
    let mut net = DitMoo::init(net_cfg, rng)?;
    let (_, norm) = diffusion::train(&mut net, gp, x_train, &cfg.train, &sched, rng)?;
    let mut out = Matrix::zeros(0, gp.n_var());
    for _ in 0..cfg.generations {
        let s = sample(&net, &sched, &norm, gp, cfg.offspring, &cfg.guidance, None, rng)?;
        out = out.vstack(&s.front.x)?;
    }
    Ok(out)
}

/// Runs the Bayesian loop; the true objective is called `n_init + iterations * batch` times.
pub fn mobo_run(problem: &Problem, cfg: &MoboConfig, seed: u64) -> Result<MoboOutcome> {
    if cfg.n_init < 2 || cfg.batch == 0 {
        return Err(invalid("MOBO needs n_init >= 2 and a positive batch size"));
    }
    let f = Normalized::new(problem);
    let reference = problem.ref_point().to_vec();
    let hv_star = problem.hv_star();
    let score = |hv: f64| hv_star.map(|s| lhd(s, hv));

    let x0 = latin_hypercube(f.bounds(), cfg.n_init, &mut stream_path(seed, &["mobo", "init"]));
    let y0 = f.values_batch(&x0)?;
    let mut evaluations = x0.rows();
    let hv0 = hypervolume(&y0, &reference)?;
    let mut state = MoboState {
        x: x0,
        y: y0,
        k: 0,
        escape: false,
        hv_history: vec![hv0],
    };
    let mut log = vec![IterationLog {
        k: 0,
        hv: hv0,
        lhd: score(hv0),
        escape: false,
        selected: vec![],
    }];
    let mut rule = EscapeRule::new(cfg.stall_tol, cfg.stall_iters);

    for k in 0..cfg.iterations {
        let tag = k.to_string();
        let gp = GpObjective::fit(&state.x, &state.y, &cfg.gp)?;
        let used_escape = state.escape;
        let candidates = if used_escape {
            sbx_offspring(&state.x, cfg.kappa, cfg.sbx_pairs, f.bounds(), &mut stream_path(seed, &["mobo", "sbx", &tag]))?
        } else {
            let x_train = augment_training_data(
                &state.x,
                &state.y,
                f.bounds(),
                &cfg.augment,
                &mut stream_path(seed, &["mobo", "augment", &tag]),
            )?;
            spread_offspring(&gp, &x_train, cfg, &mut stream_path(seed, &["mobo", "spread", &tag]))?
        };
        if candidates.rows() == 0 {
            return Err(invalid(format!("iteration {} produced no candidates", k + 1)));
        }
        let predicted = gp.values_batch(&candidates)?;
        let picked = batch_select(&predicted, &state.y, &reference, cfg.batch)?;
        let x_new = candidates.select_rows(&picked);
        let y_new = f.values_batch(&x_new)?;
        evaluations += x_new.rows();

        state.x = state.x.vstack(&x_new)?;
        state.y = state.y.vstack(&y_new)?;
        state.k = k + 1;
        let before = *state.hv_history.last().expect("initial entry");
        let hv = hypervolume(&state.y, &reference)?;
        state.hv_history.push(hv);
        state.escape = rule.update(before, hv);
        log::info!("mobo iteration {}: hv {hv:.6}, escape next {}", k + 1, state.escape);
        log.push(IterationLog {
            k: k + 1,
            hv,
            lhd: score(hv),
            escape: used_escape,
            selected: x_new.row_iter().map(|r| to_original(problem.bounds(), r)).collect(),
        });
    }
    Ok(MoboOutcome { state, log, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_fires_after_two_stalls_and_lasts_one_round() {
        let mut r = EscapeRule::new(1e-4, 2);
        assert!(!r.update(1.0, 1.1));
        assert!(!r.update(1.1, 1.1));
        assert!(r.update(1.1, 1.1 + 1e-6));
        assert!(!r.update(1.1, 1.1));
        assert!(!r.update(1.1, 1.1));
        assert!(r.update(1.1, 1.1));
    }

    #[test]
    fn progress_resets_the_stall_count() {
        let mut r = EscapeRule::new(1e-4, 2);
        assert!(!r.update(1.0, 1.0));
        assert!(!r.update(1.0, 1.5));
        assert!(!r.update(1.5, 1.5));
        assert!(r.update(1.5, 1.5));
    }

    fn tiny() -> MoboConfig {
        MoboConfig {
            n_init: 12,
            iterations: 3,
            batch: 2,
            steps: 5,
            hidden: 8,
            heads: 2,
            blocks: 1,
            train: TrainConfig {
                epochs: 3,
                batch_size: 32,
                ..TrainConfig::default()
            },
            gp: GpConfig {
                steps: 10,
                ..GpConfig::default()
            },
            offspring: 10,
            sbx_pairs: 20,
            ..MoboConfig::default()
        }
    }

    #[test]
    fn small_run_counts_and_monotone_trace() {
        let p = Problem::from_name("zdt1-d4").unwrap();
        let out = mobo_run(&p, &tiny(), 5).unwrap();
        assert_eq!(out.evaluations, 12 + 3 * 2);
        assert_eq!(out.state.x.rows(), out.evaluations);
        assert_eq!(out.log.len(), 4);
        for w in out.state.hv_history.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in out.log.windows(2) {
            assert!(w[1].lhd.unwrap() <= w[0].lhd.unwrap());
        }
        let again = mobo_run(&p, &tiny(), 5).unwrap();
        assert_eq!(out.log, again.log);
    }

    #[test]
    fn spread_offspring_is_non_dominated_under_the_gp() {
        let p = Problem::from_name("zdt2-d4").unwrap();
        let f = Normalized::new(&p);
        let mut r = stream_path(1, &["t"]);
        let x = latin_hypercube(f.bounds(), 15, &mut r);
        let y = f.values_batch(&x).unwrap();
        let gp = GpObjective::fit(&x, &y, &GpConfig::default()).unwrap();
        let cfg = tiny();
        let s = spread_offspring(&gp, &x, &cfg, &mut stream_path(2, &["s"])).unwrap();
        assert!(s.rows() >= 1 && s.rows() <= 10);
        let ys = gp.values_batch(&s).unwrap();
        assert_eq!(non_dominated_indices(&ys).len(), s.rows());
        for j in 0..2 {
            let (mean, std) = crate::linalg::mean_std(&y.column(j));
            assert!(ys.column(j).iter().all(|v| v.is_finite() && ((v - mean) / std).abs() < 10.0));
        }
        assert_eq!(s, spread_offspring(&gp, &x, &cfg, &mut stream_path(2, &["s"])).unwrap());
    }
}
