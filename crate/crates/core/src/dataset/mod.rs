//! Observation tensors, relation priors, min-max normalization, CSV I/O and
//! synthetic generators.

mod relations;
mod synthetic;

pub use relations::{build_powers, expand_powers, load_relations, row_normalize, Provenance, Relation, RelationSet};
pub use synthetic::{
    generate_synthetic, GroundTruth, SyntheticKind, SyntheticSpec, TeacherParams, Topology,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Observations `X[t, i, j]`: `steps` time steps of `series` series with `dims` components each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTensor {
    steps: usize,
    series: usize,
    dims: usize,
    values: Vec<f64>,
    pub time_step_label: String,
    pub norm: Option<NormalizationRecord>,
}

impl SeriesTensor {
    pub fn new(steps: usize, series: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != steps * series * dims {
            return Err(Error::Validation(format!(
                "series tensor {steps}x{series}x{dims} needs {} values, got {}",
                steps * series * dims,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("series tensor has non-finite values".into()));
        }
        Ok(Self {
            steps,
            series,
            dims,
            values,
            time_step_label: String::from("steps"),
            norm: None,
        })
    }

    /// Stacks `n×m` slices along time.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let (series, dims) = slices.first().map_or((0, 0), Matrix::shape);
        let mut values = Vec::with_capacity(slices.len() * series * dims);
        for s in slices {
            if s.shape() != (series, dims) {
                return Err(Error::shape("from_slices", (series, dims), s.shape()));
            }
            values.extend_from_slice(s.as_slice());
        }
        Self::new(slices.len(), series, dims, values)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn series(&self) -> usize {
        self.series
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of `(series, dim)` columns.
    pub fn width(&self) -> usize {
        self.series * self.dims
    }

    #[inline]
    pub fn value(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[(t * self.series + i) * self.dims + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row `t` flattened in file column order.
    pub fn step(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.values[t * w..(t + 1) * w]
    }

    /// `X_t` as an `n×m` matrix.
    pub fn slice(&self, t: usize) -> Matrix {
        Matrix::new(self.series, self.dims, self.step(t).to_vec())
            .expect("tensor invariants guarantee a valid slice")
    }

    /// Values of one `(series, dim)` column over time.
    pub fn column(&self, col: usize) -> Vec<f64> {
        let w = self.width();
        (0..self.steps).map(|t| self.values[t * w + col]).collect()
    }

    /// Copy of the time steps in `range`, keeping metadata.
    pub fn window(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.steps {
            return Err(Error::Argument(format!(
                "window {range:?} outside 0..{}",
                self.steps
            )));
        }
        let w = self.width();
        Ok(Self {
            steps: range.len(),
            series: self.series,
            dims: self.dims,
            values: self.values[range.start * w..range.end * w].to_vec(),
            time_step_label: self.time_step_label.clone(),
            norm: self.norm.clone(),
        })
    }

    /// Reorders series: output series `i` is input series `perm[i]`.
    pub fn permute_series(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for t in 0..self.steps {
            for &p in perm {
                let start = (t * self.series + p) * self.dims;
                values.extend_from_slice(&self.values[start..start + self.dims]);
            }
        }
        Self {
            values,
            norm: None,
            ..self.clone()
        }
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for t in 0..self.steps {
            let line = self
                .step(t)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a headerless CSV with one row per time step and `n·m` columns.
pub fn load_series(path: &Path, n: usize, m: usize) -> Result<SeriesTensor> {
    if n == 0 || m == 0 {
        return Err(Error::Argument("series count and dimension must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let width = n * m;
    let mut values = Vec::new();
    let mut steps = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(steps + 1, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Parse {
                path: path.into(),
                line,
                msg: format!("expected {width} columns (n={n}, m={m}), found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                msg: format!("column {col}: non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("column {col}: non-finite value"),
                });
            }
            values.push(v);
        }
        steps += 1;
    }
    SeriesTensor::new(steps, n, m, values)
}

/// Number of series in a series file with `m` values per series, read from its first row.
pub fn infer_series_count(path: &Path, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::Argument("series dimension must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let width = match reader.records().next() {
        Some(record) => record.map_err(|e| csv_error(path, e))?.len(),
        None => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "empty series file".into(),
            })
        }
    };
    if width % m != 0 {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("{width} columns is not a multiple of the series dimension {m}"),
        });
    }
    Ok(width / m)
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse {
            path: path.into(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

/// Per-column min and max observed on the fitting window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub series: usize,
    pub dims: usize,
    pub fit_start: usize,
    pub fit_end: usize,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl NormalizationRecord {
    pub fn is_constant(&self, col: usize) -> bool {
        self.maxs[col] == self.mins[col]
    }

    /// Scales to `[0, 1]` on the fitting window. Constant columns are shifted so that their
    /// fitted value lands on 0.5 (unit scale), which keeps the map invertible.
    pub fn apply(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(x)?;
        let w = x.width();
        let mut out = x.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            let c = k % w;
            *v = if self.is_constant(c) {
                *v - self.mins[c] + 0.5
            } else {
                (*v - self.mins[c]) / (self.maxs[c] - self.mins[c])
            };
        }
        out.norm = Some(self.clone());
        Ok(out)
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn denormalize(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(x)?;
        let w = x.width();
        let mut out = x.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            let c = k % w;
            *v = if self.is_constant(c) {
                *v - 0.5 + self.mins[c]
            } else {
                self.mins[c] + *v * (self.maxs[c] - self.mins[c])
            };
        }
        out.norm = None;
        Ok(out)
    }

    fn check(&self, x: &SeriesTensor) -> Result<()> {
        if x.series != self.series || x.dims != self.dims {
            return Err(Error::shape(
                "normalization",
                (self.series, self.dims),
                (x.series, x.dims),
            ));
        }
        Ok(())
    }
}

/// Min-max scaling per `(series, dim)` column with statistics from `fit_range` only.
/// Values outside the fitted range are not clipped.
pub fn normalize(x: &SeriesTensor, fit_range: Range<usize>) -> Result<(SeriesTensor, NormalizationRecord)> {
    if fit_range.is_empty() || fit_range.end > x.steps {
        return Err(Error::Argument(format!(
            "fit range {fit_range:?} must be non-empty and within 0..{}",
            x.steps
        )));
    }
    let w = x.width();
    let mut mins = vec![f64::INFINITY; w];
    let mut maxs = vec![f64::NEG_INFINITY; w];
    for t in fit_range.clone() {
        for (c, &v) in x.step(t).iter().enumerate() {
            mins[c] = mins[c].min(v);
            maxs[c] = maxs[c].max(v);
        }
    }
    let record = NormalizationRecord {
        series: x.series,
        dims: x.dims,
        fit_start: fit_range.start,
        fit_end: fit_range.end,
        mins,
        maxs,
    };
    let scaled = record.apply(x)?;
    Ok((scaled, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(steps: usize, n: usize, m: usize, values: Vec<f64>) -> SeriesTensor {
        SeriesTensor::new(steps, n, m, values).unwrap()
    }

    #[test]
    fn series_count_from_first_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "1,2,3,4,5,6\n").unwrap();
        assert_eq!(infer_series_count(&path, 2).unwrap(), 3);
        assert!(infer_series_count(&path, 4).is_err());
        std::fs::write(&path, "").unwrap();
        assert!(infer_series_count(&path, 1).is_err());
    }

    #[test]
    fn load_infers_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "1,2\n3,4\n5,6\n7,8\n").unwrap();
        let x = load_series(&path, 2, 1).unwrap();
        assert_eq!((x.steps(), x.series(), x.dims()), (4, 2, 1));
        assert_eq!(x.value(2, 1, 0), 6.0);
    }

    #[test]
    fn load_rejects_column_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "1,2,3\n4,5,6\n").unwrap();
        match load_series(&path, 2, 2) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("expected 4 columns"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_reports_line_of_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "1,2\n3,abc\n").unwrap();
        match load_series(&path, 2, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let x = tensor(3, 2, 2, (0..12).map(|k| (k as f64 * 0.37).sin() * 1e3 + 1e-9).collect());
        x.save_csv(&path).unwrap();
        let y = load_series(&path, 2, 2).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let x = tensor(3, 2, 1, vec![2.0, 3.0, 4.0, 3.0, 6.0, 3.0]);
        let (y, rec) = normalize(&x, 0..3).unwrap();
        assert_eq!(y.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(y.column(1), vec![0.5, 0.5, 0.5]);
        assert!(rec.is_constant(1));
        assert!(!rec.is_constant(0));
    }

    #[test]
    fn normalize_does_not_clip_outside_fit_range() {
        let x = tensor(3, 1, 1, vec![0.0, 1.0, 3.0]);
        let (y, _) = normalize(&x, 0..2).unwrap();
        assert_eq!(y.column(0), vec![0.0, 1.0, 3.0]);
    }

    #[test]
    fn normalize_rejects_empty_range() {
        let x = tensor(3, 1, 1, vec![0.0, 1.0, 3.0]);
        assert!(matches!(normalize(&x, 1..1), Err(Error::Argument(_))));
        assert!(matches!(normalize(&x, 0..4), Err(Error::Argument(_))));
    }

    #[test]
    fn window_and_permute() {
        let x = tensor(3, 2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = x.window(1..3).unwrap();
        assert_eq!(w.values(), &[3.0, 4.0, 5.0, 6.0]);
        let p = x.permute_series(&[1, 0]);
        assert_eq!(p.values(), &[2.0, 1.0, 4.0, 3.0, 6.0, 5.0]);
        assert!(x.window(2..4).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 12), split in 1usize..6) {
            let x = tensor(6, 2, 1, values);
            let (y, rec) = normalize(&x, 0..split).unwrap();
            let back = rec.denormalize(&y).unwrap();
            for c in 0..2 {
                let scale = 1.0 + (rec.maxs[c] - rec.mins[c]).abs();
                for (a, b) in x.column(c).iter().zip(back.column(c)) {
                    prop_assert!((a - b).abs() <= 1e-10 * scale.max(a.abs()));
                }
            }
            for t in 0..split {
                for &v in y.step(t) {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
