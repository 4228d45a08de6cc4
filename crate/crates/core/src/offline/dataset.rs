//! CSV datasets of evaluated designs: header `x1..xd,f1..fm`, one design per row.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{mean_std, Matrix};

/// Smallest accepted dataset.
pub const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    /// Decision box; per-column `[min, max]` of `x` unless supplied.
    pub bounds: Vec<(f64, f64)>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

impl Dataset {
    /// Validates and computes normalization statistics. Degenerate inferred bounds are widened
    /// by 0.5 on each side so the unit-box map stays defined.
    pub fn new(x: Matrix, y: Matrix, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape {
                op: "dataset",
                lhs: vec![x.rows(), x.cols()],
                rhs: vec![y.rows(), y.cols()],
            });
        }
        if x.rows() < MIN_ROWS {
            return Err(invalid(format!("a dataset needs at least {MIN_ROWS} rows, got {}", x.rows())));
        }
        if x.cols() == 0 || y.cols() == 0 {
            return Err(invalid("a dataset needs at least one decision and one objective column"));
        }
        if !x.all_finite() || !y.all_finite() {
            return Err(Error::NonFinite { context: "dataset".into() });
        }
        let bounds = match bounds {
            Some(b) => {
                if b.len() != x.cols() || b.iter().any(|(lo, hi)| !(lo < hi)) {
                    return Err(invalid("supplied bounds must be one increasing pair per decision column"));
                }
                b
            }
            None => (0..x.cols())
                .map(|k| {
                    let c = x.column(k);
                    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if hi > lo {
                        (lo, hi)
                    } else {
                        (lo - 0.5, hi + 0.5)
                    }
                })
                .collect(),
        };
        let (y_mean, y_std) = (0..y.cols())
            .map(|j| {
                let (m, s) = mean_std(&y.column(j));
                (m, if s > 0.0 { s } else { 1.0 })
            })
            .unzip();
        Ok(Self { x, y, bounds, y_mean, y_std })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn n_var(&self) -> usize {
        self.x.cols()
    }

    pub fn n_obj(&self) -> usize {
        self.y.cols()
    }

    /// Decisions mapped to the unit box.
    pub fn x_unit(&self) -> Matrix {
        Matrix::from_fn(self.x.rows(), self.x.cols(), |i, k| {
            let (lo, hi) = self.bounds[k];
            (self.x[(i, k)] - lo) / (hi - lo)
        })
    }
}

fn cell_err(path: &Path, row: usize, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Dataset {
        path: PathBuf::from(path),
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Splits the header into decision and objective counts, insisting on `x1..xd` then `f1..fm`.
fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<(usize, usize)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let d = names.iter().take_while(|n| n.starts_with('x')).count();
    let m = names.len() - d;
    if d == 0 || m == 0 {
        return Err(cell_err(path, 0, names.first().copied().unwrap_or(""), "missing header: expected x1..xd,f1..fm"));
    }
    for (k, name) in names.iter().enumerate() {
        let want = if k < d { format!("x{}", k + 1) } else { format!("f{}", k - d + 1) };
        if *name != want {
            return Err(cell_err(path, 0, *name, format!("header column {} should be `{want}`", k + 1)));
        }
    }
    Ok((d, m))
}

/// Parses the table without the dataset-level checks. Errors name the offending data row
/// (1-based) and column.
pub fn read_table(path: &Path) -> Result<(Matrix, Matrix)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let (d, m) = parse_header(path, &header)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != d + m {
            return Err(cell_err(path, row, "*", format!("expected {} fields, found {}", d + m, rec.len())));
        }
        let mut vals = Vec::with_capacity(d + m);
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| cell_err(path, row, &header[k], format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(cell_err(path, row, &header[k], "value is not finite"));
            }
            vals.push(v);
        }
        ys.push(vals.split_off(d));
        xs.push(vals);
    }
    if xs.is_empty() {
        return Ok((Matrix::zeros(0, d), Matrix::zeros(0, m)));
    }
    Ok((Matrix::from_rows(&xs)?, Matrix::from_rows(&ys)?))
}

/// Reads and validates a dataset; bounds are inferred from the columns.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (x, y) = read_table(path)?;
    if x.rows() < MIN_ROWS {
        return Err(cell_err(path, x.rows(), "*", format!("at least {MIN_ROWS} data rows required")));
    }
    Dataset::new(x, y, None)
}

/// Writes `x` and `y` in the dataset layout, full round-trip precision.
pub fn write_dataset(path: &Path, x: &Matrix, y: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=x.cols()).map(|k| format!("x{k}")).collect();
    header.extend((1..=y.cols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (a, b) in x.row_iter().zip(y.row_iter()) {
        w.write_record(a.iter().chain(b).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn rows(n: usize) -> String {
        (0..n).map(|i| format!("{},{},{},{}\n", i as f64 * 0.1, 0.5, i as f64 * 0.01, 1.0 - i as f64 * 0.01)).collect()
    }

    #[test]
    fn round_trip_exact() {
        let x = Matrix::from_fn(12, 2, |i, k| (i * 7 + k) as f64 / 13.0 + 1e-17);
        let y = Matrix::from_fn(12, 3, |i, j| ((i + j) as f64).sqrt() / 3.0);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset(f.path(), &x, &y).unwrap();
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds.x, x);
        assert_eq!(ds.y, y);
    }

    #[test]
    fn hand_written_table_round_trips() {
        let f = file("x1,x2,f1,f2\n0.125,-3,1e-3,7\n0.5,2.75,0.1,0.2\n1,0,-0.5,3.25\n");
        let (x, y) = read_table(f.path()).unwrap();
        assert_eq!(x.as_slice(), &[0.125, -3.0, 0.5, 2.75, 1.0, 0.0]);
        assert_eq!(y.as_slice(), &[1e-3, 7.0, 0.1, 0.2, -0.5, 3.25]);
        // below the minimum size for a dataset
        assert!(load_dataset(f.path()).is_err());
    }

    #[test]
    fn bounds_inferred_from_columns() {
        let f = file(&format!("x1,x2,f1,f2\n{}", rows(12)));
        let ds = load_dataset(f.path()).unwrap();
        assert!((ds.bounds[0].0 - 0.0).abs() < 1e-15 && (ds.bounds[0].1 - 1.1).abs() < 1e-12);
        // constant column gets a unit-width box around the value
        assert_eq!(ds.bounds[1], (0.0, 1.0));
    }

    #[test]
    fn nan_cell_is_named() {
        let mut lines: Vec<String> = rows(12).lines().map(String::from).collect();
        lines[2] = "0.2,NaN,0.02,0.98".into();
        let body = format!("x1,x2,f1,f2\n{}\n", lines.join("\n"));
        let err = load_dataset(file(&body).path()).unwrap_err();
        match err {
            Error::Dataset { row, column, .. } => assert_eq!((row, column.as_str()), (3, "x2")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ragged_row_is_rejected() {
        let body = format!("x1,x2,f1,f2\n{}0.1,0.2,0.3\n", rows(12));
        let err = load_dataset(file(&body).path()).unwrap_err();
        assert!(matches!(err, Error::Dataset { row: 13, .. }), "{err}");
    }

    #[test]
    fn missing_header_is_rejected() {
        let err = load_dataset(file(&rows(12)).path()).unwrap_err();
        assert!(matches!(err, Error::Dataset { row: 0, .. }), "{err}");
        let err = load_dataset(file(&format!("x1,x3,f1,f2\n{}", rows(12))).path()).unwrap_err();
        assert!(err.to_string().contains("x2"), "{err}");
    }

    #[test]
    fn too_few_rows() {
        assert!(load_dataset(file(&format!("x1,x2,f1,f2\n{}", rows(5))).path()).is_err());
    }
}
