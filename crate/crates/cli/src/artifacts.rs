//! Run artifacts. Every writer reads its file back and compares it with what it meant to write.
//!
//! Layout of a run directory:
//!
//! ```text
//! spec.toml            resolved run spec
//! summary.json         mean and sample std of every indicator over the seeds
//! seed-<s>/front.csv   x1..xd,f1..fm of the returned set
//! seed-<s>/archive.csv x1..xd,f1..fm of the final archive (all evaluations in MOBO mode)
//! seed-<s>/indicators.json
//! seed-<s>/log.jsonl   one JSON object per step or iteration
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use spread_core::offline::{read_table, write_dataset};
use spread_core::Matrix;

use crate::failure::{CliResult, Failure};

pub const SPEC_FILE: &str = "spec.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FRONT_FILE: &str = "front.csv";
pub const ARCHIVE_FILE: &str = "archive.csv";
pub const INDICATORS_FILE: &str = "indicators.json";
pub const LOG_FILE: &str = "log.jsonl";

pub fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed-{seed}"))
}

/// One indicator as stored on disk. Non-finite values are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub name: String,
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hv_star: Option<f64>,
}

impl IndicatorRecord {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value: value.is_finite().then_some(value),
            ref_point: None,
            hv_star: None,
        }
    }
}

impl From<spread_core::metrics::Indicator> for IndicatorRecord {
    fn from(i: spread_core::metrics::Indicator) -> Self {
        Self {
            ref_point: i.ref_point,
            hv_star: i.hv_star.filter(|h| h.is_finite()),
            ..Self::new(i.name, i.value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedIndicators {
    pub seed: u64,
    pub indicators: Vec<IndicatorRecord>,
}

impl SeedIndicators {
    pub fn get(&self, name: &str) -> Option<&IndicatorRecord> {
        self.indicators.iter().find(|i| i.name == name)
    }
}

/// Mean and sample standard deviation (n - 1 denominator) of one indicator over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub mean: Option<f64>,
    /// `None` with fewer than two finite values.
    pub std: Option<f64>,
    /// Number of seeds with a finite value.
    pub n: usize,
    pub values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub subject: String,
    pub label: String,
    pub seeds: Vec<u64>,
    pub indicators: Vec<Aggregate>,
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}

/// Aggregates indicators by name, in first-seen order.
pub fn aggregate(per_seed: &[SeedIndicators]) -> Vec<Aggregate> {
    let mut names: Vec<&str> = Vec::new();
    for s in per_seed {
        for i in &s.indicators {
            if !names.contains(&i.name.as_str()) {
                names.push(&i.name);
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let values: Vec<Option<f64>> = per_seed.iter().map(|s| s.get(name).and_then(|i| i.value)).collect();
            let finite: Vec<f64> = values.iter().flatten().copied().collect();
            let (mean, std) = mean_std(&finite);
            let ref_point = per_seed.iter().find_map(|s| s.get(name).and_then(|i| i.ref_point.clone()));
            Aggregate {
                name: name.to_string(),
                mean,
                std,
                n: finite.len(),
                values,
                ref_point,
            }
        })
        .collect()
}

fn mismatch(path: &Path) -> Failure {
    Failure::internal(format!("{} did not read back as written", path.display()))
}

pub fn write_json<T: Serialize + DeserializeOwned + PartialEq>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal(e))?;
    text.push('\n');
    fs::write(path, &text)?;
    if &read_json::<T>(path)? != value {
        return Err(mismatch(path));
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::user(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::user(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize + DeserializeOwned + PartialEq>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(|e| Failure::internal(e))?);
        text.push('\n');
    }
    fs::write(path, &text)?;
    if read_jsonl::<T>(path)? != rows {
        return Err(mismatch(path));
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::user(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Failure::user(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

/// Writes a design table and checks it parses back bit-for-bit.
pub fn write_table(path: &Path, x: &Matrix, y: &Matrix) -> CliResult<()> {
    if x.rows() != y.rows() {
        return Err(Failure::internal(format!("{}: {} designs but {} objective rows", path.display(), x.rows(), y.rows())));
    }
    if !x.all_finite() || !y.all_finite() {
        return Err(Failure::internal(format!("{}: refusing to write non-finite values", path.display())));
    }
    write_dataset(path, x, y)?;
    let (rx, ry) = read_table(path)?;
    let same = rx.rows() == x.rows() && rx.as_slice() == x.as_slice() && ry.as_slice() == y.as_slice();
    if !same {
        return Err(mismatch(path));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((s.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]), (Some(3.0), None));
    }

    #[test]
    fn aggregate_skips_missing_and_non_finite() {
        let s = |seed, v: f64| SeedIndicators {
            seed,
            indicators: vec![IndicatorRecord::new("hv", v), IndicatorRecord::new("delta_spread", 0.5)],
        };
        let agg = aggregate(&[s(1, 1.0), s(2, f64::INFINITY), s(3, 3.0)]);
        assert_eq!(agg[0].name, "hv");
        assert_eq!(agg[0].values, vec![Some(1.0), None, Some(3.0)]);
        assert_eq!((agg[0].mean, agg[0].n), (Some(2.0), 2));
        assert_eq!(agg[1].std, Some(0.0));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_fn(3, 2, |i, k| (i + k) as f64 / 7.0);
        let y = Matrix::from_fn(3, 2, |i, k| (i * k) as f64 + 0.1);
        write_table(&dir.path().join("t.csv"), &x, &y).unwrap();
        let rows = vec![SeedIndicators {
            seed: 4,
            indicators: vec![IndicatorRecord::new("hv", 0.1 + 0.2)],
        }];
        write_jsonl(&dir.path().join("l.jsonl"), &rows).unwrap();
        write_json(&dir.path().join("i.json"), &rows[0]).unwrap();
        assert!(write_table(&dir.path().join("bad.csv"), &x, &Matrix::filled(3, 2, f64::NAN)).is_err());
    }
}
