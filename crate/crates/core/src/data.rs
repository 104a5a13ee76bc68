//! Datasets: the Rings generator, standardization, and CSV interchange.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-column `(mean, std)` pairs; the identity transform is `(0, 1)`.
pub type ColumnStats = Vec<(f64, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix<f64>,
    pub y: Matrix<f64>,
    pub x_stats: ColumnStats,
    pub y_stats: ColumnStats,
}

impl Dataset {
    pub fn new(x: Matrix<f64>, y: Matrix<f64>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 || y.cols() == 0 || x.rows() != y.rows() {
            return Err(Error::InvalidInput(format!(
                "dataset needs N, M, L >= 1 with matching rows (X {}x{}, Y {}x{})",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols()
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput("dataset has non-finite entries".into()));
        }
        let x_stats = vec![(0.0, 1.0); x.cols()];
        let y_stats = vec![(0.0, 1.0); y.cols()];
        Ok(Dataset { x, y, x_stats, y_stats })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Rows `idx` with the same standardization metadata.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            x_stats: self.x_stats.clone(),
            y_stats: self.y_stats.clone(),
        }
    }
}

/// Two interlocked cylindrical bands of 60 points each, labels 0 and 1.
///
/// Ring 1 is the image of the 12 x 5 lattice `theta_i = 2 pi i / 12`,
/// `z_j = -1/2 + j/4` under `(theta, z) -> (cos theta, sin theta, z)`.
/// Ring 2 rotates ring 1 by `(x, y, z) -> (z, y, -x)` and shifts it by 1
/// along `y`.
pub fn generate_rings() -> Dataset {
    let mut xs = Vec::with_capacity(120);
    let mut ys = Vec::with_capacity(120);
    for label in 0..2 {
        for i in 0..12 {
            let theta = 2.0 * PI * i as f64 / 12.0;
            for j in 0..5 {
                let z = -0.5 + j as f64 / 4.0;
                let p = [theta.cos(), theta.sin(), z];
                let q = if label == 0 { p } else { [p[2], p[1] + 1.0, -p[0]] };
                xs.push(q);
                ys.push([label as f64]);
            }
        }
    }
    Dataset::new(Matrix::from_rows(&xs), Matrix::from_rows(&ys)).expect("rings are well formed")
}

fn column_stats(m: &Matrix<f64>) -> ColumnStats {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let col = m.col(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            // constant columns (up to round-off) map to zero with unit scale
            if sd <= 1e-14 * mean.abs().max(1.0) {
                (mean, 1.0)
            } else {
                (mean, sd)
            }
        })
        .collect()
}

fn apply(m: &Matrix<f64>, stats: &[(f64, f64)], forward: bool) -> Matrix<f64> {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        let (mu, sd) = stats[j];
        if forward {
            (m[(i, j)] - mu) / sd
        } else {
            m[(i, j)] * sd + mu
        }
    })
}

/// Compose `outer` after `inner`: original = (v * outer.sd + outer.mu) * inner.sd + inner.mu.
fn compose(inner: &[(f64, f64)], outer: &[(f64, f64)]) -> ColumnStats {
    inner.iter().zip(outer).map(|(&(m1, s1), &(m2, s2))| (m1 + s1 * m2, s1 * s2)).collect()
}

/// Column-wise standardization with population standard deviations. The
/// returned metadata maps back to the original (unstandardized) values.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    if d.len() < 2 {
        return Err(Error::InvalidInput("standardization needs at least two rows".into()));
    }
    let xs = column_stats(&d.x);
    let ys = column_stats(&d.y);
    Ok(Dataset {
        x: apply(&d.x, &xs, true),
        y: apply(&d.y, &ys, true),
        x_stats: compose(&d.x_stats, &xs),
        y_stats: compose(&d.y_stats, &ys),
    })
}

/// Undo all recorded standardization.
pub fn unstandardize(d: &Dataset) -> Dataset {
    Dataset {
        x: apply(&d.x, &d.x_stats, false),
        y: apply(&d.y, &d.y_stats, false),
        x_stats: vec![(0.0, 1.0); d.x.cols()],
        y_stats: vec![(0.0, 1.0); d.y.cols()],
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Write `X` and `Y` with `x_<j>` / `y_<j>` headers.
pub fn save_csv(path: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let mut f = BufWriter::new(File::create(path.as_ref())?);
    write_csv(&mut f, d)?;
    f.flush()?;
    Ok(())
}

pub fn write_csv(out: &mut impl Write, d: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (0..d.x.cols())
        .map(|j| format!("x_{j}"))
        .chain((0..d.y.cols()).map(|j| format!("y_{j}")))
        .collect();
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..d.len() {
        let row: Vec<String> = d.x.row(i).iter().chain(d.y.row(i)).map(|&v| fmt_num(v)).collect();
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 0, message: format!("{other:?}") },
    }
}

/// Read a dataset whose header names feature columns `x_*` and target
/// columns `y_*`. Lines starting with `#` are ignored.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_io)?;
    let mut records = r.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(csv_io)?,
        None => return Err(Error::Parse { line: 1, message: "missing header row".into() }),
    };
    let header_line = header.position().map_or(1, |p| p.line() as usize);
    let mut x_idx = Vec::new();
    let mut y_idx = Vec::new();
    for (k, name) in header.iter().enumerate() {
        if name.starts_with("x_") {
            x_idx.push(k);
        } else if name.starts_with("y_") {
            y_idx.push(k);
        }
    }
    if x_idx.is_empty() || y_idx.is_empty() {
        return Err(Error::Parse {
            line: header_line,
            message: "header needs at least one x_ and one y_ column".into(),
        });
    }
    let width = header.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_io)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        let parse = |k: usize| -> Result<f64> {
            let cell = &rec[k];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("non-numeric cell {cell:?} in column {}", k + 1) })
        };
        xs.push(x_idx.iter().map(|&k| parse(k)).collect::<Result<Vec<_>>>()?);
        ys.push(y_idx.iter().map(|&k| parse(k)).collect::<Result<Vec<_>>>()?);
    }
    if xs.is_empty() {
        return Err(Error::Parse { line: header_line, message: "no data rows".into() });
    }
    Dataset::new(Matrix::from_rows(&xs), Matrix::from_rows(&ys))
}

/// Long-format result table with a `#`-prefixed configuration header.
#[derive(Clone, Debug, Default)]
pub struct ResultTable {
    pub config: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        ResultTable { config: Vec::new(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        for (k, v) in &self.config {
            writeln!(out, "# {k} = {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns).map_err(csv_io)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path.as_ref())?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rings_layout() {
        let d = generate_rings();
        assert_eq!(d.len(), 120);
        assert_eq!(d.x.row(0), &[1.0, 0.0, -0.5]);
        assert_eq!(d.y[(0, 0)], 0.0);
        assert_eq!((0..120).filter(|&i| d.y[(i, 0)] == 1.0).count(), 60);
        for i in 0..60 {
            let r = d.x.row(i);
            assert!((r[0] * r[0] + r[1] * r[1] - 1.0).abs() < 1e-12);
        }
        for i in 60..120 {
            let r = d.x.row(i);
            // ring 2 wraps the y axis shifted by one: (y - 1)^2 + z^2 = 1
            assert!(((r[1] - 1.0).powi(2) + r[2] * r[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_examples() {
        let d = Dataset::new(Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]), Matrix::from_rows(&[[0.0], [2.0]])).unwrap();
        let s = standardize(&d).unwrap();
        assert_eq!(s.x.col(0), vec![-1.0, 1.0]);
        assert_eq!(s.x.col(1), vec![0.0, 0.0]);
        assert_eq!(s.x_stats[1], (5.0, 1.0));
        let back = unstandardize(&standardize(&s).unwrap());
        for (a, b) in back.x.data().iter().zip(d.x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
