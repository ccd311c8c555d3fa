//! Dataset container, CSV ingestion, and normalization statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PiwadError, Result};
use crate::util;

/// Numeric feature matrix with optional target and per-sample embeddings.
///
/// Rows are samples in raw feature units. Cells are finite (enforced on
/// construction); the target, when present, is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub embeddings: Option<Vec<Vec<f64>>>,
    /// Observed per-column minimum.
    pub min: Vec<f64>,
    /// Observed per-column maximum.
    pub max: Vec<f64>,
}

impl FeatureTable {
    pub fn from_rows(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        target: Option<Vec<f64>>,
    ) -> Result<Self> {
        let m = columns.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(PiwadError::shape(
                    format!("row {i}"),
                    format!("{m} columns"),
                    format!("{} columns", row.len()),
                ));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(PiwadError::Data(format!(
                        "non-finite value {v} at row {i}, column {:?}",
                        columns[j]
                    )));
                }
            }
        }
        if let Some(t) = &target {
            if t.len() != rows.len() {
                return Err(PiwadError::shape(
                    "target",
                    format!("{} values", rows.len()),
                    format!("{} values", t.len()),
                ));
            }
            for (i, v) in t.iter().enumerate() {
                if !v.is_finite() {
                    return Err(PiwadError::Data(format!(
                        "non-finite target at row {i}"
                    )));
                }
                if *v < 0.0 {
                    return Err(PiwadError::Data(format!(
                        "negative target {v} at row {i}; the target is a non-negative rate"
                    )));
                }
            }
        }
        let (min, max) = column_ranges(&rows, m);
        Ok(FeatureTable {
            columns,
            rows,
            target,
            embeddings: None,
            min,
            max,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.as_ref().and_then(|e| e.first().map(Vec::len))
    }

    /// Attach row-aligned embeddings.
    pub fn with_embeddings(mut self, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if embeddings.len() != self.n_rows() {
            return Err(PiwadError::Data(format!(
                "embedding row count {} does not match data row count {}",
                embeddings.len(),
                self.n_rows()
            )));
        }
        let dim = embeddings.first().map(Vec::len).unwrap_or(0);
        for (i, e) in embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(PiwadError::Data(format!(
                    "embedding row {i} has {} values, expected {dim}",
                    e.len()
                )));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(PiwadError::Data(format!("non-finite embedding at row {i}")));
            }
        }
        self.embeddings = Some(embeddings);
        Ok(self)
    }

    /// Index of a column by name.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| PiwadError::Data(format!("no column named {name:?}")))
    }

    /// True when the observed values of column `j` are exactly {0, 1} with
    /// both present.
    pub fn is_binary(&self, j: usize) -> bool {
        let mut saw_zero = false;
        let mut saw_one = false;
        for row in &self.rows {
            match row[j] {
                v if v == 0.0 => saw_zero = true,
                v if v == 1.0 => saw_one = true,
                _ => return false,
            }
        }
        saw_zero && saw_one
    }

    /// Subset of rows by index (target and embeddings follow).
    pub fn subset(&self, indices: &[usize]) -> FeatureTable {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let target = self
            .target
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        let embeddings = self
            .embeddings
            .as_ref()
            .map(|e| indices.iter().map(|&i| e[i].clone()).collect());
        let (min, max) = column_ranges(&rows, self.n_features());
        FeatureTable {
            columns: self.columns.clone(),
            rows,
            target,
            embeddings,
            min,
            max,
        }
    }

    /// Per-column mean/std over this table.
    pub fn norm_stats(&self) -> NormStats {
        let m = self.n_features();
        let mut mean = vec![0.0; m];
        let mut std = vec![1.0; m];
        for j in 0..m {
            let col: Vec<f64> = self.rows.iter().map(|r| r[j]).collect();
            mean[j] = util::mean(&col);
            let s = util::sample_std(&col);
            std[j] = if s > 0.0 { s } else { 1.0 };
        }
        NormStats { mean, std }
    }

    /// Write features (and target when present) as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let mut header: Vec<&str> = self.columns.iter().map(|s| s.as_str()).collect();
        if self.target.is_some() {
            header.push("target");
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            if let Some(t) = &self.target {
                cells.push(format!("{}", t[i]));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| PiwadError::io(path.display().to_string(), e))
    }
}

fn column_ranges(rows: &[Vec<f64>], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut min = vec![f64::INFINITY; m];
    let mut max = vec![f64::NEG_INFINITY; m];
    for row in rows {
        for j in 0..m {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    if rows.is_empty() {
        min = vec![0.0; m];
        max = vec![0.0; m];
    }
    (min, max)
}

/// Per-feature z-normalization statistics (training-set mean/std).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Load a CSV dataset with a header row; every cell must parse as a number.
///
/// `target_column`, when given, is split out of the feature matrix. An
/// optional embeddings CSV (header row, numeric cells) is joined by row
/// order.
pub fn load_dataset(
    path: &Path,
    target_column: Option<&str>,
    embeddings_path: Option<&Path>,
) -> Result<FeatureTable> {
    let (columns, cells) = read_numeric_csv(path)?;
    let target_idx = match target_column {
        Some(name) => Some(
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| PiwadError::Data(format!("missing target column {name:?}")))?,
        ),
        None => None,
    };

    let feature_columns: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != target_idx)
        .map(|(_, c)| c.clone())
        .collect();
    let mut rows = Vec::with_capacity(cells.len());
    let mut target = target_idx.map(|_| Vec::with_capacity(cells.len()));
    for record in cells {
        let mut row = Vec::with_capacity(feature_columns.len());
        for (i, v) in record.into_iter().enumerate() {
            if Some(i) == target_idx {
                target.as_mut().unwrap().push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }

    let table = FeatureTable::from_rows(feature_columns, rows, target)?;
    match embeddings_path {
        Some(epath) => {
            let (_, erows) = read_numeric_csv(epath)?;
            table.with_embeddings(erows)
        }
        None => Ok(table),
    }
}

/// Read a CSV file with a header row into numeric cells, reporting the first
/// offending (row, column) on parse failure. Row numbers are 1-based data
/// rows, matching what a spreadsheet user would count.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PiwadError::Data(format!("cannot open {}: {e}", path.display())))?;
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| PiwadError::Data(format!("bad header in {}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if columns.is_empty() {
        return Err(PiwadError::Data(format!("{} has no columns", path.display())));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| PiwadError::Data(format!("row {}: {e}", i + 1)))?;
        if record.len() != columns.len() {
            return Err(PiwadError::Data(format!(
                "row {} has {} cells, expected {}",
                i + 1,
                record.len(),
                columns.len()
            )));
        }
        let mut row = Vec::with_capacity(columns.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                PiwadError::Data(format!(
                    "non-numeric cell {:?} at row {}, column {:?}",
                    cell,
                    i + 1,
                    columns[j]
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_csv_with_target() {
        let f = write_temp("a,b,target\n1,2,3\n4,5,6\n7,8,9\n");
        let t = load_dataset(f.path(), Some("target"), None).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_features(), 2);
        assert_eq!(t.target.as_ref().unwrap().len(), 3);
        assert_eq!(t.columns, vec!["a", "b"]);
        assert_eq!(t.min, vec![1.0, 2.0]);
        assert_eq!(t.max, vec![7.0, 8.0]);
    }

    #[test]
    fn reports_bad_cell_with_row_and_column() {
        let f = write_temp("a,b\n1,2\n3,abc\n");
        let err = load_dataset(f.path(), None, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("\"b\""), "{msg}");
    }

    #[test]
    fn missing_target_column_is_an_error() {
        let f = write_temp("a,b\n1,2\n");
        assert!(load_dataset(f.path(), Some("target"), None).is_err());
    }

    #[test]
    fn embedding_row_mismatch_is_an_error() {
        let data = write_temp("a,target\n1,1\n2,2\n3,3\n");
        let emb = write_temp("e0,e1\n0.1,0.2\n0.3,0.4\n");
        let err = load_dataset(data.path(), Some("target"), Some(emb.path())).unwrap_err();
        assert!(err.to_string().contains("row count"), "{err}");
    }

    #[test]
    fn negative_target_rejected() {
        let f = write_temp("a,target\n1,-2\n2,1\n");
        assert!(load_dataset(f.path(), Some("target"), None).is_err());
    }

    #[test]
    fn binary_detection() {
        let t = FeatureTable::from_rows(
            vec!["flag".into(), "value".into()],
            vec![vec![0.0, 0.5], vec![1.0, 0.7], vec![0.0, 0.9]],
            None,
        )
        .unwrap();
        assert!(t.is_binary(0));
        assert!(!t.is_binary(1));
    }

    #[test]
    fn normalization_round_trip() {
        let t = FeatureTable::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 100.0], vec![2.0, 250.0], vec![3.0, 175.0]],
            None,
        )
        .unwrap();
        let stats = t.norm_stats();
        for row in &t.rows {
            let back = stats.denormalize(&stats.normalize(row));
            for (x, y) in row.iter().zip(back.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let t = FeatureTable::from_rows(
            vec!["c".into()],
            vec![vec![5.0], vec![5.0]],
            None,
        )
        .unwrap();
        let stats = t.norm_stats();
        assert_eq!(stats.normalize(&[5.0]), vec![0.0]);
        assert_eq!(stats.denormalize(&[0.0]), vec![5.0]);
    }
}
