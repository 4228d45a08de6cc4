//! Offline mode: learn MLP surrogates from a fixed dataset, train the diffusion model on the
//! dataset's own designs, and run guided sampling against the surrogates only.
//!
//! A true evaluator may be supplied for final scoring. It is wrapped in [`Counting`] and the
//! run fails if anything touched it before optimization finished.

pub mod dataset;
pub mod surrogate;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use dataset::{load_dataset, read_table, write_dataset, Dataset};
pub use surrogate::{fit_surrogate, SurrogateConfig, SurrogateMlp, SurrogateReport};

use crate::diffusion::{self, DiffusionSchedule, TrainConfig};
use crate::ditmoo::{DiTConfig, DitMoo};
use crate::error::{invalid, Error, Result};
use crate::guidance::GuidanceConfig;
use crate::linalg::Matrix;
use crate::metrics::{delta_spread, hypervolume, Indicator};
use crate::pareto::non_dominated_indices;
use crate::problems::{to_original, Evaluation, Objective};
use crate::rng::stream_path;
use crate::sampler::{sample, StepLog};

/// Forwards to an objective while counting every evaluation.
pub struct Counting<'a> {
    inner: &'a dyn Objective,
    calls: AtomicUsize,
}

impl<'a> Counting<'a> {
    pub fn new(inner: &'a dyn Objective) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Objective for Counting<'_> {
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
        self.inner.bounds()
    }
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(x)
    }
    fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.values(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineConfig {
    /// Number of solutions.
    pub n: usize,
    pub steps: usize,
    pub s_offset: f64,
    pub hidden: usize,
    pub heads: usize,
    pub blocks: usize,
    pub train: TrainConfig,
    pub guidance: GuidanceConfig,
    pub surrogate: SurrogateConfig,
    /// Hypervolume reference; defaults to the dataset nadir plus 10% of each objective range.
    pub ref_point: Option<Vec<f64>>,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            n: 256,
            steps: 1000,
            s_offset: diffusion::DEFAULT_S_OFFSET,
            hidden: 256,
            heads: 4,
            blocks: 3,
            train: TrainConfig::default(),
            guidance: GuidanceConfig::default(),
            surrogate: SurrogateConfig::default(),
            ref_point: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    /// Returned solutions in original units, mutually non-dominated under the surrogate.
    pub x: Matrix,
    /// Surrogate objective values of `x`.
    pub y_surrogate: Matrix,
    /// True objective values of `x`, when an evaluator was given.
    pub y_true: Option<Matrix>,
    /// Final sampling archive in original units, with surrogate values.
    pub archive_x: Matrix,
    pub archive_y: Matrix,
    pub indicators: Vec<Indicator>,
    pub surrogate_report: SurrogateReport,
    pub log: Vec<StepLog>,
    /// True-objective calls made before final scoring; always 0 on success.
    pub true_calls_during_optimization: usize,
}

fn default_ref(ds: &Dataset) -> Vec<f64> {
    (0..ds.n_obj())
        .map(|j| {
            let c = ds.y.column(j);
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi + 0.1 * (hi - lo).max(f64::EPSILON)
        })
        .collect()
}

fn indicators(prefix: &str, y: &Matrix, r: &[f64]) -> Result<Vec<Indicator>> {
    Ok(vec![
        Indicator {
            name: format!("{prefix}hv"),
            value: hypervolume(y, r)?,
            ref_point: Some(r.to_vec()),
            hv_star: None,
        },
        Indicator {
            name: format!("{prefix}delta_spread"),
            value: delta_spread(y, None),
            ref_point: None,
            hv_star: None,
        },
    ])
}

fn original_rows(bounds: &[(f64, f64)], u: &Matrix) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = u.row_iter().map(|r| to_original(bounds, r)).collect();
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, bounds.len()));
    }
    Matrix::from_rows(&rows)
}

/// Runs the offline pipeline. `truth`, if given, must share the dataset's decision space and
/// is only used to score the final set.
pub fn offline_run(ds: &Dataset, cfg: &OfflineConfig, truth: Option<&dyn Objective>, seed: u64) -> Result<OfflineOutcome> {
    if let Some(t) = truth {
        if t.n_var() != ds.n_var() || t.n_obj() != ds.n_obj() {
            return Err(invalid("true evaluator does not match the dataset's dimensions"));
        }
    }
    let counted = truth.map(Counting::new);
    let r = cfg.ref_point.clone().unwrap_or_else(|| default_ref(ds));
    if r.len() != ds.n_obj() {
        return Err(invalid("reference point length differs from the objective count"));
    }

    let (sur, report) = fit_surrogate(ds, &cfg.surrogate, &mut stream_path(seed, &["offline", "surrogate"]))?;
    let sched = DiffusionSchedule::cosine(cfg.steps, cfg.s_offset)?;
    let net_cfg = DiTConfig {
        d: ds.n_var(),
        m: ds.n_obj(),
        e: cfg.hidden,
        blocks: cfg.blocks,
        heads: cfg.heads,
    };
    let mut net = DitMoo::init(net_cfg, &mut stream_path(seed, &["offline", "init"]))?;
    let (_, norm) = diffusion::train(&mut net, &sur, &ds.x_unit(), &cfg.train, &sched, &mut stream_path(seed, &["offline", "train"]))?;
    let out = sample(&net, &sched, &norm, &sur, cfg.n, &cfg.guidance, None, &mut stream_path(seed, &["offline", "sample"]))?;

    let calls = counted.as_ref().map_or(0, Counting::calls);
    if calls != 0 {
        return Err(Error::InvalidArgument(format!("true objective called {calls} times during optimization")));
    }

    let front = &out.front;
    let keep = non_dominated_indices(&front.y);
    let x_unit = front.x.select_rows(&keep);
    let y_sur = front.y.select_rows(&keep);
    let x = original_rows(&ds.bounds, &x_unit)?;
    let archive_x = original_rows(&ds.bounds, &out.archive.x)?;

    let mut ind = indicators("surrogate_", &y_sur, &r)?;
    let y_true = match &counted {
        Some(t) => {
            let y = t.values_batch(&x)?;
            ind.extend(indicators("true_", &y, &r)?);
            Some(y)
        }
        None => None,
    };
    Ok(OfflineOutcome {
        x,
        y_surrogate: y_sur,
        y_true,
        archive_x,
        archive_y: out.archive.y,
        indicators: ind,
        surrogate_report: report,
        log: out.log,
        true_calls_during_optimization: calls,
    })
}
