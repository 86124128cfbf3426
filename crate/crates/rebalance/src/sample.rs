//! Tabular data: covariates `x`, a response `y`, and optional auxiliary
//! columns, plus CSV serialization.
//!
//! A [`Sample`] is immutable after construction and validated to hold only
//! finite values, so every downstream operation can assume clean input.
//! Columns are addressed by role (`x` / `y` / `aux`) through a
//! [`ColumnSchema`] rather than by position, so datasets with many extra
//! columns work unchanged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Maps CSV column names to their roles.
///
/// JSON form: `{"x": ["x1","x2"], "y": "y", "aux": ["z1"]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub x: Vec<String>,
    pub y: String,
    #[serde(default)]
    pub aux: Vec<String>,
}

impl ColumnSchema {
    /// Single covariate `x`, response `y`, no auxiliaries.
    pub fn univariate() -> Self {
        Self {
            x: vec!["x".to_string()],
            y: "y".to_string(),
            aux: Vec::new(),
        }
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let schema: ColumnSchema = serde_json::from_str(text)
            .map_err(|e| invalid(format!("bad schema JSON: {e}")))?;
        if schema.x.is_empty() {
            return Err(invalid("schema must declare at least one x column"));
        }
        Ok(schema)
    }
}

/// Column names of a sample, in emission order (x columns, then y, then aux).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub x_names: Vec<String>,
    pub y_name: String,
    pub aux_names: Vec<String>,
}

impl ColumnLayout {
    pub fn from_schema(schema: &ColumnSchema) -> Self {
        Self {
            x_names: schema.x.clone(),
            y_name: schema.y.clone(),
            aux_names: schema.aux.clone(),
        }
    }

    /// Joint dimension d = p + 1 + a.
    pub fn joint_dim(&self) -> usize {
        self.x_names.len() + 1 + self.aux_names.len()
    }
}

/// An immutable tabular dataset of n rows: covariates (n×p), response (n)
/// and auxiliary columns (n×a). All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<Vec<f64>>,   // p columns of length n
    y: Vec<f64>,        // length n
    aux: Vec<Vec<f64>>, // a columns of length n
    layout: ColumnLayout,
}

impl Sample {
    /// Build a sample from column vectors, validating shape and finiteness.
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        aux: Vec<Vec<f64>>,
        layout: ColumnLayout,
    ) -> Result<Self> {
        if x.len() != layout.x_names.len() {
            return Err(Error::DimensionMismatch {
                context: "x columns vs layout",
                expected: layout.x_names.len(),
                got: x.len(),
            });
        }
        if aux.len() != layout.aux_names.len() {
            return Err(Error::DimensionMismatch {
                context: "aux columns vs layout",
                expected: layout.aux_names.len(),
                got: aux.len(),
            });
        }
        let n = y.len();
        for (name, col) in layout.x_names.iter().zip(&x) {
            if col.len() != n {
                return Err(invalid(format!(
                    "column `{name}` has {} entries, expected {n}",
                    col.len()
                )));
            }
        }
        for (name, col) in layout.aux_names.iter().zip(&aux) {
            if col.len() != n {
                return Err(invalid(format!(
                    "column `{name}` has {} entries, expected {n}",
                    col.len()
                )));
            }
        }
        let all_names = layout
            .x_names
            .iter()
            .chain(std::iter::once(&layout.y_name))
            .chain(layout.aux_names.iter());
        for (name, col) in all_names.zip(x.iter().chain(std::iter::once(&y)).chain(aux.iter())) {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::BadCell {
                    row: row + 1,
                    column: name.clone(),
                    value: format!("{}", col[row]),
                });
            }
        }
        Ok(Self { x, y, aux, layout })
    }

    /// Convenience constructor for a univariate (x, y) sample.
    pub fn univariate(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let layout = ColumnLayout::from_schema(&ColumnSchema::univariate());
        Sample::new(vec![x], y, Vec::new(), layout)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariate columns.
    pub fn p(&self) -> usize {
        self.x.len()
    }

    /// Number of auxiliary columns.
    pub fn n_aux(&self) -> usize {
        self.aux.len()
    }

    /// Joint dimension over (x, y, aux).
    pub fn joint_dim(&self) -> usize {
        self.p() + 1 + self.n_aux()
    }

    pub fn layout(&self) -> &ColumnLayout {
        &self.layout
    }

    pub fn x_col(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn aux_col(&self, j: usize) -> &[f64] {
        &self.aux[j]
    }

    /// Covariate row i as a fresh vector (p is small).
    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|col| col[i]).collect()
    }

    /// Joint row (x.., y, aux..) written into `buf` (length `joint_dim`).
    pub fn joint_row_into(&self, i: usize, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.joint_dim());
        let p = self.p();
        for (j, col) in self.x.iter().enumerate() {
            buf[j] = col[i];
        }
        buf[p] = self.y[i];
        for (j, col) in self.aux.iter().enumerate() {
            buf[p + 1 + j] = col[i];
        }
    }

    /// All joint rows as a row-major matrix (n × joint_dim).
    pub fn joint_rows(&self) -> Vec<f64> {
        let d = self.joint_dim();
        let mut out = vec![0.0; self.n() * d];
        for i in 0..self.n() {
            self.joint_row_into(i, &mut out[i * d..(i + 1) * d]);
        }
        out
    }

    /// Rebuild a sample from joint rows using this sample's layout.
    pub fn from_joint_rows(&self, rows: &[f64]) -> Result<Sample> {
        Sample::from_joint(self.layout.clone(), rows)
    }

    /// Build a sample from row-major joint data (x.., y, aux..) and a layout.
    pub fn from_joint(layout: ColumnLayout, rows: &[f64]) -> Result<Sample> {
        let d = layout.joint_dim();
        if rows.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                context: "joint rows",
                expected: d,
                got: rows.len() % d,
            });
        }
        let n = rows.len() / d;
        let p = layout.x_names.len();
        let a = layout.aux_names.len();
        let mut x = vec![Vec::with_capacity(n); p];
        let mut y = Vec::with_capacity(n);
        let mut aux = vec![Vec::with_capacity(n); a];
        for i in 0..n {
            let row = &rows[i * d..(i + 1) * d];
            for j in 0..p {
                x[j].push(row[j]);
            }
            y.push(row[p]);
            for j in 0..a {
                aux[j].push(row[p + 1 + j]);
            }
        }
        Sample::new(x, y, aux, layout)
    }

    /// New sample holding the given rows (whole observations), in order.
    /// Indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Sample {
        let gather = |col: &Vec<f64>| indices.iter().map(|&i| col[i]).collect::<Vec<f64>>();
        Sample {
            x: self.x.iter().map(gather).collect(),
            y: gather(&self.y),
            aux: self.aux.iter().map(gather).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Concatenate samples with identical layouts.
    pub fn concat(parts: &[Sample]) -> Result<Sample> {
        let first = parts
            .first()
            .ok_or_else(|| invalid("cannot concatenate zero samples"))?;
        let layout = first.layout.clone();
        for part in parts {
            if part.layout != layout {
                return Err(invalid("cannot concatenate samples with different layouts"));
            }
        }
        let p = first.p();
        let a = first.n_aux();
        let mut x = vec![Vec::new(); p];
        let mut y = Vec::new();
        let mut aux = vec![Vec::new(); a];
        for part in parts {
            for j in 0..p {
                x[j].extend_from_slice(&part.x[j]);
            }
            y.extend_from_slice(&part.y);
            for j in 0..a {
                aux[j].extend_from_slice(&part.aux[j]);
            }
        }
        Sample::new(x, y, aux, layout)
    }
}

/// Read a CSV file, assigning columns to roles per `schema`.
///
/// Expects a header row; every cell in a declared column must parse as a
/// finite decimal number. Row order is preserved.
pub fn read_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Sample> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                path: path.to_path_buf(),
            })
    };

    let x_idx: Vec<usize> = schema.x.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let y_idx = find(&schema.y)?;
    let aux_idx: Vec<usize> = schema.aux.iter().map(|n| find(n)).collect::<Result<_>>()?;

    let mut x = vec![Vec::new(); x_idx.len()];
    let mut y = Vec::new();
    let mut aux = vec![Vec::new(); aux_idx.len()];

    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let parse = |idx: usize, column: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let value: f64 = raw.trim().parse().map_err(|_| Error::BadCell {
                row: row_no + 1,
                column: column.to_string(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::BadCell {
                    row: row_no + 1,
                    column: column.to_string(),
                    value: raw.to_string(),
                });
            }
            Ok(value)
        };
        for (j, &idx) in x_idx.iter().enumerate() {
            x[j].push(parse(idx, &schema.x[j])?);
        }
        y.push(parse(y_idx, &schema.y)?);
        for (j, &idx) in aux_idx.iter().enumerate() {
            aux[j].push(parse(idx, &schema.aux[j])?);
        }
    }

    Sample::new(x, y, aux, ColumnLayout::from_schema(schema))
}

/// Write a sample as CSV: x columns, then y, then aux, with a header row.
/// Values are serialized with enough digits to round-trip 64-bit floats,
/// so `read_csv(write_csv(s))` equals `s` exactly.
pub fn write_csv(sample: &Sample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let layout = &sample.layout;
    let header: Vec<&str> = layout
        .x_names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(layout.y_name.as_str()))
        .chain(layout.aux_names.iter().map(String::as_str))
        .collect();
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;

    let mut record = Vec::with_capacity(header.len());
    for i in 0..sample.n() {
        record.clear();
        for col in &sample.x {
            record.push(format_value(col[i]));
        }
        record.push(format_value(sample.y[i]));
        for col in &sample.aux {
            record.push(format_value(col[i]));
        }
        writer.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

// `{}` on f64 prints the shortest decimal that parses back to the same bits.
fn format_value(v: f64) -> String {
    format!("{v}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_three_row_file() {
        let f = write_temp("x1,y\n0.5,1.0\n0.25,2.0\n0.125,3.5\n");
        let schema = ColumnSchema {
            x: vec!["x1".into()],
            y: "y".into(),
            aux: vec![],
        };
        let s = read_csv(f.path(), &schema).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.p(), 1);
        assert_eq!(s.x_col(0), &[0.5, 0.25, 0.125]);
        assert_eq!(s.y(), &[1.0, 2.0, 3.5]);
    }

    #[test]
    fn header_only_gives_empty_sample() {
        let f = write_temp("x1,y\n");
        let schema = ColumnSchema {
            x: vec!["x1".into()],
            y: "y".into(),
            aux: vec![],
        };
        let s = read_csv(f.path(), &schema).unwrap();
        assert_eq!(s.n(), 0);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let f = write_temp("x1,y\n0.5,1.0\n0.25,NaN\n");
        let schema = ColumnSchema {
            x: vec!["x1".into()],
            y: "y".into(),
            aux: vec![],
        };
        match read_csv(f.path(), &schema) {
            Err(Error::BadCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected BadCell, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let f = write_temp("x1,y\n0.5,1.0\n");
        let schema = ColumnSchema {
            x: vec!["x2".into()],
            y: "y".into(),
            aux: vec![],
        };
        assert!(matches!(
            read_csv(f.path(), &schema),
            Err(Error::MissingColumn { .. })
        ));
    }

    #[test]
    fn aux_columns_round_trip_in_declared_order() {
        let layout = ColumnLayout {
            x_names: vec!["x".into()],
            y_name: "y".into(),
            aux_names: vec!["z1".into(), "z2".into()],
        };
        let s = Sample::new(
            vec![vec![0.1, 0.9]],
            vec![1.0, 2.0],
            vec![vec![7.0, 8.0], vec![-1.0, -2.0]],
            layout,
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&s, f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("x,y,z1,z2\n"));
        let schema = ColumnSchema {
            x: vec!["x".into()],
            y: "y".into(),
            aux: vec!["z1".into(), "z2".into()],
        };
        let back = read_csv(f.path(), &schema).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn empty_sample_writes_header_only() {
        let s = Sample::univariate(vec![], vec![]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&s, f.path()).unwrap();
        assert_eq!(std::fs::read_to_string(f.path()).unwrap(), "x,y\n");
    }

    #[test]
    fn non_finite_construction_rejected() {
        assert!(Sample::univariate(vec![f64::NAN], vec![1.0]).is_err());
        assert!(Sample::univariate(vec![1.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn select_rows_gathers_whole_observations() {
        let layout = ColumnLayout {
            x_names: vec!["x".into()],
            y_name: "y".into(),
            aux_names: vec!["z".into()],
        };
        let s = Sample::new(
            vec![vec![1.0, 2.0, 3.0]],
            vec![10.0, 20.0, 30.0],
            vec![vec![0.1, 0.2, 0.3]],
            layout,
        )
        .unwrap();
        let t = s.select_rows(&[2, 0, 2]);
        assert_eq!(t.x_col(0), &[3.0, 1.0, 3.0]);
        assert_eq!(t.y(), &[30.0, 10.0, 30.0]);
        assert_eq!(t.aux_col(0), &[0.3, 0.1, 0.3]);
    }

    proptest! {
        // Round-trip law: read(write(s)) == s for any finite values,
        // including extreme magnitudes.
        #[test]
        fn csv_round_trip_identity(
            rows in proptest::collection::vec(
                (any::<f64>(), any::<f64>(), any::<f64>()), 0..40)
        ) {
            let finite: Vec<(f64, f64, f64)> = rows
                .into_iter()
                .map(|(a, b, c)| (clamp_finite(a), clamp_finite(b), clamp_finite(c)))
                .collect();
            let layout = ColumnLayout {
                x_names: vec!["x1".into(), "x2".into()],
                y_name: "y".into(),
                aux_names: vec![],
            };
            let s = Sample::new(
                vec![
                    finite.iter().map(|r| r.0).collect(),
                    finite.iter().map(|r| r.1).collect(),
                ],
                finite.iter().map(|r| r.2).collect(),
                vec![],
                layout,
            ).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_csv(&s, f.path()).unwrap();
            let schema = ColumnSchema {
                x: vec!["x1".into(), "x2".into()],
                y: "y".into(),
                aux: vec![],
            };
            let back = read_csv(f.path(), &schema).unwrap();
            prop_assert_eq!(back, s);
        }
    }

    fn clamp_finite(v: f64) -> f64 {
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }
}
