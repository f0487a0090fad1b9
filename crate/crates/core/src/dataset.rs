//! Tabular datasets: raw CSV tables and the numeric view used for training.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::params::DataParams;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file has no header or no data rows")]
    EmptyFile,
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: value {value:?} is not numeric")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: label {value:?} is not in the label table")]
    UnknownLabelValue { row: usize, value: String },
    #[error("invalid data parameters: {0}")]
    InvalidParams(String),
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

/// A CSV file held as text cells, before any typing.
///
/// Datasites keep the table around so that the numeric dataset can be built
/// once the coordinator announces the federation-wide label table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(DatasetError::EmptyFile);
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push(record.iter().map(str::to_owned).collect());
        }
        if rows.is_empty() {
            return Err(DatasetError::EmptyFile);
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Writes the table back out as CSV.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Table made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> CsvTable {
        CsvTable {
            headers: self.headers.clone(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
        }
    }
}

/// Reads `path` and builds the numeric dataset described by `params`.
pub fn load_dataset(path: impl AsRef<Path>, params: &DataParams) -> Result<Dataset, DatasetError> {
    Dataset::from_table(&CsvTable::read(path)?, params)
}

/// Numeric feature matrix plus class ids.
///
/// Features are stored row-major. Class id `c` stands for `label_names[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<u32>,
    label_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<u32>,
        label_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n_features = feature_names.len();
        if n_features == 0 {
            return Err(DatasetError::Malformed("no feature columns".into()));
        }
        if features.len() != n_features * labels.len() {
            return Err(DatasetError::Malformed(format!(
                "{} values do not fill {} rows of {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::MissingValue {
                row: i / n_features + 1,
                column: feature_names[i % n_features].clone(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= label_names.len()) {
            return Err(DatasetError::Malformed(format!(
                "class id {bad} outside label table of {}",
                label_names.len()
            )));
        }
        Ok(Self {
            feature_names,
            features,
            labels,
            label_names,
        })
    }

    /// Builds a dataset from rows of equal length.
    pub fn from_rows(
        feature_names: Vec<String>,
        rows: &[Vec<f64>],
        labels: Vec<u32>,
        label_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if let Some(r) = rows.iter().position(|r| r.len() != feature_names.len()) {
            return Err(DatasetError::Malformed(format!(
                "row {} has {} values, expected {}",
                r + 1,
                rows[r].len(),
                feature_names.len()
            )));
        }
        if rows.len() != labels.len() {
            return Err(DatasetError::Malformed(
                "rows and labels differ in length".into(),
            ));
        }
        Self::new(feature_names, rows.concat(), labels, label_names)
    }

    /// Types a raw table: drops ignored columns, parses features as `f64`
    /// and maps the target column through `params.label_names`.
    pub fn from_table(table: &CsvTable, params: &DataParams) -> Result<Self, DatasetError> {
        params.validate().map_err(DatasetError::InvalidParams)?;
        let target = table
            .column(&params.target_column)
            .ok_or_else(|| DatasetError::MissingColumn(params.target_column.clone()))?;
        for ignored in &params.ignored_columns {
            if table.column(ignored).is_none() {
                return Err(DatasetError::MissingColumn(ignored.clone()));
            }
        }
        let feature_cols: Vec<usize> = (0..table.headers.len())
            .filter(|&c| c != target && !params.ignored_columns.contains(&table.headers[c]))
            .collect();
        if feature_cols.is_empty() {
            return Err(DatasetError::Malformed("no feature columns left".into()));
        }

        let mut features = Vec::with_capacity(table.rows.len() * feature_cols.len());
        let mut labels = Vec::with_capacity(table.rows.len());
        for (r, row) in table.rows.iter().enumerate() {
            let row_no = r + 1;
            if row.len() != table.headers.len() {
                return Err(DatasetError::Malformed(format!(
                    "row {row_no} has {} cells, header has {}",
                    row.len(),
                    table.headers.len()
                )));
            }
            for &c in &feature_cols {
                features.push(parse_feature(&row[c], row_no, &table.headers[c])?);
            }
            let label = lookup_label(&row[target], &params.label_names).ok_or_else(|| {
                DatasetError::UnknownLabelValue {
                    row: row_no,
                    value: row[target].clone(),
                }
            })?;
            labels.push(label);
        }
        let feature_names = feature_cols
            .iter()
            .map(|&c| table.headers[c].clone())
            .collect();
        Self::new(feature_names, features, labels, params.label_names.clone())
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.features[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features() + feature]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features())
    }

    /// Number of distinct class ids present.
    pub fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.n_classes()];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Dataset made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            label_names: self.label_names.clone(),
        }
    }

    /// True when both datasets name the same features and classes in the
    /// same order.
    pub fn same_schema(&self, feature_names: &[String], label_names: &[String]) -> bool {
        self.feature_names == feature_names && self.label_names == label_names
    }
}

fn parse_feature(cell: &str, row: usize, column: &str) -> Result<f64, DatasetError> {
    let missing = || DatasetError::MissingValue {
        row,
        column: column.to_owned(),
    };
    if cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") {
        return Err(missing());
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) if v.is_nan() => Err(missing()),
        _ => Err(DatasetError::NonNumericFeature {
            row,
            column: column.to_owned(),
            value: cell.to_owned(),
        }),
    }
}

fn lookup_label(cell: &str, label_names: &[String]) -> Option<u32> {
    if let Some(p) = label_names.iter().position(|l| l == cell) {
        return Some(p as u32);
    }
    // "1.0" in the file matches "1" in the table.
    let value: f64 = cell.parse().ok()?;
    label_names
        .iter()
        .position(|l| l.parse::<f64>().ok() == Some(value))
        .map(|p| p as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DataParams {
        DataParams {
            target_column: "y".into(),
            ignored_columns: vec![],
            positive_label: "1".into(),
            label_names: vec!["0".into(), "1".into()],
        }
    }

    fn table(text: &str) -> CsvTable {
        CsvTable::from_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn minimal_ingest() {
        let ds = Dataset::from_table(&table("a,b,y\n1,2,0\n3,4,1\n5,6,0\n"), &params()).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.labels(), &[0, 1, 0]);
    }

    #[test]
    fn ignored_columns_are_dropped_and_order_kept() {
        let mut p = params();
        p.ignored_columns = vec!["id".into()];
        let ds = Dataset::from_table(&table("id,a,y,b\n9,1,1,2\n8,3,0,4\n"), &p).unwrap();
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.row(0), &[1.0, 2.0]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn non_numeric_feature_names_row_and_column() {
        let err = Dataset::from_table(&table("a,b,y\n1,2,0\n3,abc,1\n"), &params()).unwrap_err();
        match err {
            DatasetError::NonNumericFeature { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_values_are_rejected() {
        for bad in ["", "NaN", "?"] {
            let text = format!("a,y\n{bad},0\n1,1\n");
            let err = Dataset::from_table(&table(&text), &params()).unwrap_err();
            assert!(
                matches!(err, DatasetError::MissingValue { row: 1, .. }),
                "{bad}: {err:?}"
            );
        }
    }

    #[test]
    fn unknown_label_and_missing_target() {
        let err = Dataset::from_table(&table("a,y\n1,0\n2,7\n"), &params()).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::UnknownLabelValue { row: 2, .. }
        ));
        let err = Dataset::from_table(&table("a,z\n1,0\n"), &params()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(c) if c == "y"));
    }

    #[test]
    fn numeric_label_spelling_is_tolerated() {
        let ds = Dataset::from_table(&table("a,y\n1,1.0\n2,0\n"), &params()).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn empty_file() {
        assert!(matches!(
            CsvTable::from_reader("".as_bytes()),
            Err(DatasetError::EmptyFile)
        ));
        assert!(matches!(
            CsvTable::from_reader("a,y\n".as_bytes()),
            Err(DatasetError::EmptyFile)
        ));
    }

    #[test]
    fn select_preserves_schema() {
        let ds = Dataset::from_table(&table("a,y\n1,0\n2,1\n3,0\n"), &params()).unwrap();
        let sub = ds.select(&[2, 0]);
        assert_eq!(sub.row(0), &[3.0]);
        assert_eq!(sub.labels(), &[0, 0]);
        assert_eq!(sub.distinct_labels(), 1);
        assert!(sub.same_schema(ds.feature_names(), ds.label_names()));
    }
}
