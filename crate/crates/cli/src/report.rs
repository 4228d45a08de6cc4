//! Comparison table over finished run directories.

use std::path::{Path, PathBuf};

use crate::artifacts::{self, aggregate, mean_std, seed_dir, Aggregate, SeedIndicators, Summary};
use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub subject: String,
    pub method: String,
    pub seeds: usize,
    /// Name of the hypervolume indicator used (`hv`, `true_hv` or `surrogate_hv`).
    pub hv_name: String,
    pub hv: (Option<f64>, Option<f64>),
    pub delta: (Option<f64>, Option<f64>),
    pub ref_point: Option<Vec<f64>>,
    pub dir: PathBuf,
}

fn pick<'a>(agg: &'a [Aggregate], prefix_order: &[&str], base: &str) -> Option<&'a Aggregate> {
    prefix_order.iter().find_map(|p| agg.iter().find(|a| a.name == format!("{p}{base}")))
}

/// Reads one run directory, recomputing the statistics from the per-seed files.
pub fn read_run(dir: &Path) -> CliResult<Row> {
    let summary_path = dir.join(artifacts::SUMMARY_FILE);
    if !summary_path.is_file() {
        return Err(Failure::user(format!("{}: missing {}", dir.display(), artifacts::SUMMARY_FILE)));
    }
    let summary: Summary = artifacts::read_json(&summary_path)?;
    let mut per_seed = Vec::with_capacity(summary.seeds.len());
    for &s in &summary.seeds {
        let p = seed_dir(dir, s).join(artifacts::INDICATORS_FILE);
        if !p.is_file() {
            return Err(Failure::user(format!("missing indicator file {}", p.display())));
        }
        per_seed.push(artifacts::read_json::<SeedIndicators>(&p)?);
    }
    let agg = aggregate(&per_seed);
    let order = ["", "true_", "surrogate_"];
    let hv = pick(&agg, &order, "hv").ok_or_else(|| Failure::user(format!("{}: no hypervolume indicator", dir.display())))?;
    let delta = pick(&agg, &order, "delta_spread");
    let stats = |a: &Aggregate| {
        let v: Vec<f64> = a.values.iter().flatten().copied().collect();
        mean_std(&v)
    };
    Ok(Row {
        subject: summary.subject,
        method: summary.label,
        seeds: summary.seeds.len(),
        hv_name: hv.name.clone(),
        hv: stats(hv),
        delta: delta.map_or((None, None), stats),
        ref_point: hv.ref_point.clone(),
        dir: dir.to_path_buf(),
    })
}

/// One row per directory. Rows of the same problem must share the hypervolume reference point.
pub fn build(dirs: &[PathBuf]) -> CliResult<Vec<Row>> {
    if dirs.is_empty() {
        return Err(Failure::user("report needs at least one run directory"));
    }
    let rows = dirs.iter().map(|d| read_run(d)).collect::<CliResult<Vec<_>>>()?;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[..i] {
            if a.subject == b.subject && a.ref_point != b.ref_point {
                return Err(Failure::user(format!(
                    "{} and {} use different reference points for {}: {:?} vs {:?}",
                    b.dir.display(),
                    a.dir.display(),
                    a.subject,
                    b.ref_point,
                    a.ref_point
                )));
            }
        }
    }
    Ok(rows)
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6e}"))
}

fn pm((m, s): (Option<f64>, Option<f64>)) -> String {
    match (m, s) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "n/a".into(),
    }
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::from("problem,method,seeds,hv_indicator,hv_mean,hv_std,delta_mean,delta_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.subject,
            r.method,
            r.seeds,
            r.hv_name,
            num(r.hv.0),
            num(r.hv.1),
            num(r.delta.0),
            num(r.delta.1)
        ));
    }
    out
}

pub fn to_text(rows: &[Row]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| [r.subject.clone(), r.method.clone(), r.seeds.to_string(), pm(r.hv), pm(r.delta)])
        .collect();
    let header = ["problem", "method", "seeds", "HV", "Δ-spread"].map(String::from);
    let mut width = header.clone().map(|h| h.chars().count());
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let line = |c: &[String; 5]| {
        let parts: Vec<String> = c.iter().zip(&width).map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count()))).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    for c in &cells {
        out.push_str(&line(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_table_aligns() {
        let row = Row {
            subject: "zdt1".into(),
            method: "online/full".into(),
            seeds: 2,
            hv_name: "hv".into(),
            hv: (Some(5.5), Some(0.01)),
            delta: (Some(0.4), None),
            ref_point: None,
            dir: PathBuf::new(),
        };
        let t = to_text(&[row.clone()]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("5.5000 ± 0.0100"));
        assert_eq!(lines[0].find("method"), lines[1].find("online"));
        assert!(to_csv(&[row]).lines().nth(1).unwrap().starts_with("zdt1,online/full,2,hv,5.5"));
    }
}
