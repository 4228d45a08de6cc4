//! Executes a run spec: one pipeline per seed, then the cross-seed summary.

use std::fs;
use std::path::{Path, PathBuf};

use spread_core::diffusion::Checkpoint;
use spread_core::metrics::{delta_spread, hypervolume, lhd, Indicator};
use spread_core::mobo::mobo_run;
use spread_core::offline::{load_dataset, offline_run};
use spread_core::problems::{Objective, Problem};
use spread_core::sampler::{online_run, sample_trained, OnlineOutcome};
use spread_core::Matrix;

use crate::artifacts::{self, aggregate, seed_dir, IndicatorRecord, SeedIndicators, Summary};
use crate::failure::{CliResult, Failure};
use crate::spec::{Mode, RunSpec};

/// Resolves and validates `spec`, runs every seed and returns the run directory.
pub fn run(mut spec: RunSpec) -> CliResult<PathBuf> {
    spec.resolve();
    spec.validate()?;
    let out = spec.output_dir();
    fs::create_dir_all(&out).map_err(|e| Failure::user(format!("cannot create {}: {e}", out.display())))?;
    let spec_text = toml::to_string(&spec).map_err(Failure::internal)?;
    fs::write(out.join(artifacts::SPEC_FILE), spec_text)?;

    let mut per_seed = Vec::with_capacity(spec.seeds.0.len());
    for &seed in &spec.seeds.0 {
        log::info!("{} {} seed {seed}", spec.mode.as_str(), spec.subject());
        let dir = seed_dir(&out, seed);
        fs::create_dir_all(&dir)?;
        let indicators = match spec.mode {
            Mode::Online => run_online(&spec, seed, &dir),
            Mode::Offline => run_offline(&spec, seed, &dir),
            Mode::Mobo => run_mobo(&spec, seed, &dir),
        }
        .map_err(|e| e.context(format!("seed {seed}")))?;
        let record = SeedIndicators { seed, indicators };
        artifacts::write_json(&dir.join(artifacts::INDICATORS_FILE), &record)?;
        per_seed.push(record);
    }

    let summary = Summary {
        mode: spec.mode.as_str().into(),
        subject: spec.subject(),
        label: spec.label(),
        seeds: spec.seeds.0.clone(),
        indicators: aggregate(&per_seed),
    };
    artifacts::write_json(&out.join(artifacts::SUMMARY_FILE), &summary)?;
    Ok(out)
}

fn problem(spec: &RunSpec) -> CliResult<Problem> {
    let name = spec.problem.as_deref().ok_or_else(|| Failure::user("problem: required"))?;
    Ok(Problem::from_name(name)?)
}

/// HV, Δ-spread and, where the front is known, log HV difference of a final set.
fn front_indicators(p: &Problem, y: &Matrix) -> CliResult<Vec<IndicatorRecord>> {
    let r = p.ref_point().to_vec();
    let hv = hypervolume(y, &r)?;
    let hv_star = p.hv_star();
    let extremes = p.front_extremes();
    let spread = delta_spread(y, extremes.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())));
    let mut out = vec![
        IndicatorRecord::from(Indicator {
            name: "hv".into(),
            value: hv,
            ref_point: Some(r),
            hv_star,
        }),
        IndicatorRecord::new("delta_spread", spread),
    ];
    if let Some(s) = hv_star {
        out.push(IndicatorRecord::new("lhd", lhd(s, hv)));
    }
    out.push(IndicatorRecord::new("front_size", y.rows() as f64));
    Ok(out)
}

fn load_or_train(spec: &RunSpec, p: &Problem, seed: u64) -> CliResult<OnlineOutcome> {
    let cfg = &spec.online;
    let Some(path) = spec.checkpoint_path(seed) else {
        return Ok(online_run(p, cfg, seed)?);
    };
    if path.exists() {
        log::info!("loading checkpoint {}", path.display());
        let ck = Checkpoint::load(&path).map_err(|e| Failure::from(e).context(path.display().to_string()))?;
        let net = ck.network()?;
        if net.config.d != p.n_var() || net.config.m != p.n_obj() || ck.bounds != p.bounds() {
            return Err(Failure::user(format!("{}: checkpoint was trained for a different problem", path.display())));
        }
        if ck.steps != cfg.steps {
            return Err(Failure::user(format!("{}: checkpoint has {} steps, spec asks for {}", path.display(), ck.steps, cfg.steps)));
        }
        return Ok(sample_trained(p, &net, &ck.schedule()?, &ck.norm, cfg, seed)?);
    }
    let out = online_run(p, cfg, seed)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Checkpoint::new(&out.net, &out.schedule, &out.norm, p.bounds()).save(&path)?;
    Ok(out)
}

fn run_online(spec: &RunSpec, seed: u64, dir: &Path) -> CliResult<Vec<IndicatorRecord>> {
    let p = problem(spec)?;
    let out = load_or_train(spec, &p, seed)?;
    artifacts::write_table(&dir.join(artifacts::FRONT_FILE), &out.front_x, &out.front_y)?;
    artifacts::write_table(&dir.join(artifacts::ARCHIVE_FILE), &out.archive_x, &out.archive_y)?;
    artifacts::write_jsonl(&dir.join(artifacts::LOG_FILE), &out.log)?;
    let mut ind = front_indicators(&p, &out.front_y)?;
    if out.train_report.best_loss.is_finite() {
        ind.push(IndicatorRecord::new("train_loss", out.train_report.best_loss));
    }
    Ok(ind)
}

fn run_mobo(spec: &RunSpec, seed: u64, dir: &Path) -> CliResult<Vec<IndicatorRecord>> {
    let p = problem(spec)?;
    let out = mobo_run(&p, &spec.mobo, seed)?;
    let (fx, fy) = out.front(p.bounds());
    artifacts::write_table(&dir.join(artifacts::FRONT_FILE), &fx, &fy)?;
    let rows: Vec<Vec<f64>> = out.state.x.row_iter().map(|u| spread_core::problems::to_original(p.bounds(), u)).collect();
    let ax = Matrix::from_rows(&rows)?;
    artifacts::write_table(&dir.join(artifacts::ARCHIVE_FILE), &ax, &out.state.y)?;
    // the trace holds the post-initialization iterations; the initial design is an indicator
    let trace: Vec<_> = out.log.iter().filter(|l| l.k > 0).cloned().collect();
    artifacts::write_jsonl(&dir.join(artifacts::LOG_FILE), &trace)?;

    let mut ind = front_indicators(&p, &fy)?;
    ind.push(IndicatorRecord::new("initial_hv", out.log[0].hv));
    ind.push(IndicatorRecord::new("evaluations", out.evaluations as f64));
    Ok(ind)
}

fn run_offline(spec: &RunSpec, seed: u64, dir: &Path) -> CliResult<Vec<IndicatorRecord>> {
    let path = spec.dataset.as_deref().ok_or_else(|| Failure::user("dataset: required"))?;
    let ds = load_dataset(path)?;
    let truth = match &spec.problem {
        Some(name) => {
            let p = Problem::from_name(name)?;
            if p.n_var() != ds.n_var() || p.n_obj() != ds.n_obj() {
                return Err(Failure::user(format!(
                    "problem `{name}` has {} variables and {} objectives, the dataset {} and {}",
                    p.n_var(),
                    p.n_obj(),
                    ds.n_var(),
                    ds.n_obj()
                )));
            }
            Some(p)
        }
        None => None,
    };
    let out = offline_run(&ds, &spec.offline, truth.as_ref().map(|p| p as &dyn Objective), seed)?;
    let front_y = out.y_true.as_ref().unwrap_or(&out.y_surrogate);
    artifacts::write_table(&dir.join(artifacts::FRONT_FILE), &out.x, front_y)?;
    artifacts::write_table(&dir.join(artifacts::ARCHIVE_FILE), &out.archive_x, &out.archive_y)?;
    artifacts::write_jsonl(&dir.join(artifacts::LOG_FILE), &out.log)?;
    let mut ind: Vec<IndicatorRecord> = out.indicators.into_iter().map(IndicatorRecord::from).collect();
    for (j, r) in out.surrogate_report.val_rmse.iter().enumerate() {
        ind.push(IndicatorRecord::new(format!("surrogate_rmse_f{}", j + 1), *r));
    }
    ind.push(IndicatorRecord::new("true_calls_during_optimization", out.true_calls_during_optimization as f64));
    Ok(ind)
}
