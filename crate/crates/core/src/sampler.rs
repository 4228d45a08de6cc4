//! Guided sampling loop and the end-to-end online pipeline.
//!
//! Sampling starts from uniform points in the unit box. Every reverse step applies the
//! guided update and merges the result into a bounded archive; the final answer is the
//! archive's first front.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, ConditionNorm, DiffusionSchedule, NoisePredictor, TrainConfig, TrainReport};
use crate::ditmoo::{DiTConfig, DitMoo};
use crate::error::Result;
use crate::guidance::{guided_update, GuidanceConfig};
use crate::linalg::Matrix;
use crate::metrics::hypervolume;
use crate::pareto::{archive_update, SolutionSet};
use crate::problems::{latin_hypercube, to_original, Normalized, Objective, Problem};
use crate::rng::{stream_path, Rng};

/// Per-step diagnostics of a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: usize,
    pub archive_size: usize,
    pub front_size: usize,
    /// Fraction of samples that took a positive step.
    pub moved: f64,
    pub mean_eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hv: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    /// Final archive, unit-box decisions.
    pub archive: SolutionSet,
    /// Rank-0 members of the final archive.
    pub front: SolutionSet,
    pub log: Vec<StepLog>,
}

/// Runs the guided reverse process with `n` samples on the unit-box objective `f`.
/// When `hv_ref` is given, the archive hypervolume is logged at every step.
#[allow(clippy::too_many_arguments)]
pub fn sample(
    net: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    norm: &ConditionNorm,
    f: &dyn Objective,
    n: usize,
    cfg: &GuidanceConfig,
    hv_ref: Option<&[f64]>,
    rng: &mut Rng,
) -> Result<SampleOutcome> {
    let d = f.n_var();
    let bounds = f.bounds().to_vec();
    let mut x = Matrix::from_fn(n, d, |_, k| {
        let (lo, hi) = bounds[k];
        lo + rng.random::<f64>() * (hi - lo)
    });
    let y = f.values_batch(&x)?;
    let mut archive = archive_update(&SolutionSet::empty(d, f.n_obj()), &x, &y, n)?;
    let mut log = Vec::with_capacity(sched.steps);
    for t in (1..=sched.steps).rev() {
        let (next, bundle) = guided_update(&x, t, net, sched, norm, f, cfg, rng)?;
        let y = f.values_batch(&next)?;
        archive = archive_update(&archive, &next, &y, n)?;
        x = next;
        let moved = bundle.eta.iter().filter(|e| **e > 0.0).count() as f64 / n.max(1) as f64;
        let mean_eta = bundle.eta.iter().sum::<f64>() / n.max(1) as f64;
        let hv = match hv_ref {
            Some(r) => Some(hypervolume(&archive.y, r)?),
            None => None,
        };
        log.push(StepLog {
            t,
            archive_size: archive.len(),
            front_size: archive.rank.iter().filter(|r| **r == 0).count(),
            moved,
            mean_eta,
            hv,
        });
    }
    let front = archive.first_front();
    Ok(SampleOutcome { archive, front, log })
}

/// Settings of the online mode: train on a Latin-hypercube design of the true problem, then
/// sample with guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    /// Number of solutions.
    pub n: usize,
    /// Diffusion timesteps.
    pub steps: usize,
    pub s_offset: f64,
    pub hidden: usize,
    pub heads: usize,
    pub blocks: usize,
    pub train: TrainConfig,
    pub guidance: GuidanceConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            n: 100,
            steps: 5000,
            s_offset: diffusion::DEFAULT_S_OFFSET,
            hidden: 256,
            heads: 4,
            blocks: 3,
            train: TrainConfig::default(),
            guidance: GuidanceConfig::default(),
        }
    }
}

impl OnlineConfig {
    pub fn net_config(&self, d: usize, m: usize) -> DiTConfig {
        DiTConfig {
            d,
            m,
            e: self.hidden,
            blocks: self.blocks,
            heads: self.heads,
        }
    }
}

/// Result of a full online run. Decisions are in the problem's original units.
#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub front_x: Matrix,
    pub front_y: Matrix,
    pub archive_x: Matrix,
    pub archive_y: Matrix,
    pub train_report: TrainReport,
    pub log: Vec<StepLog>,
    pub net: DitMoo,
    pub schedule: DiffusionSchedule,
    pub norm: ConditionNorm,
}

fn to_original_rows(bounds: &[(f64, f64)], u: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = u.row_iter().map(|r| to_original(bounds, r)).collect();
    if rows.is_empty() {
        return Matrix::zeros(0, bounds.len());
    }
    Matrix::from_rows(&rows).expect("fixed width")
}

/// Trains a fresh network on `problem` and samples from it, all under `seed`.
pub fn online_run(problem: &Problem, cfg: &OnlineConfig, seed: u64) -> Result<OnlineOutcome> {
    let f = Normalized::new(problem);
    let sched = DiffusionSchedule::cosine(cfg.steps, cfg.s_offset)?;
    let x_train = latin_hypercube(f.bounds(), cfg.train.n_train, &mut stream_path(seed, &["online", "lhs"]));
    let mut net = DitMoo::init(
        cfg.net_config(problem.n_var(), problem.n_obj()),
        &mut stream_path(seed, &["online", "init"]),
    )?;
    let (report, norm) = diffusion::train(
        &mut net,
        &f,
        &x_train,
        &cfg.train,
        &sched,
        &mut stream_path(seed, &["online", "train"]),
    )?;
    let out = sample_trained(problem, &net, &sched, &norm, cfg, seed)?;
    Ok(OnlineOutcome {
        train_report: report,
        net,
        schedule: sched,
        norm,
        ..out
    })
}

/// Sampling half of [`online_run`] for an already trained network.
pub fn sample_trained(
    problem: &Problem,
    net: &DitMoo,
    sched: &DiffusionSchedule,
    norm: &ConditionNorm,
    cfg: &OnlineConfig,
    seed: u64,
) -> Result<OnlineOutcome> {
    let f = Normalized::new(problem);
    let out = sample(
        net,
        sched,
        norm,
        &f,
        cfg.n,
        &cfg.guidance,
        Some(problem.ref_point()),
        &mut stream_path(seed, &["online", "sample"]),
    )?;
    let b = problem.bounds();
    Ok(OnlineOutcome {
        front_x: to_original_rows(b, &out.front.x),
        front_y: out.front.y.clone(),
        archive_x: to_original_rows(b, &out.archive.x),
        archive_y: out.archive.y.clone(),
        train_report: TrainReport {
            loss_history: vec![],
            best_epoch: 0,
            best_loss: f64::NAN,
            stopped_early: false,
        },
        log: out.log,
        net: net.clone(),
        schedule: sched.clone(),
        norm: norm.clone(),
    })
}
