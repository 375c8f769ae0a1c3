//! Labelled tabular data: CSV ingestion, z-score scaling, undersampling and splitting.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies the generator behind every seeded operation; stored in models and reports.
pub const RNG_NAME: &str = "rand_chacha-0.3/ChaCha20Rng::seed_from_u64";

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::shape("label vector", x.nrows(), y.len()));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::shape("column names", x.ncols(), column_names.len()));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite feature value {v}")));
        }
        if let Some(v) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidData(format!("label {v} is not -1 or +1")));
        }
        Ok(Self { x, y, column_names })
    }

    /// Unnamed columns `x0, x1, ..`.
    pub fn unnamed(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.x.ncols()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v > 0.0).count();
        (self.len() - pos, pos)
    }

    /// Rows in the order given.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            column_names: self.column_names.clone(),
        }
    }

    pub fn with_x(&self, x: Array2<f64>) -> Result<Self> {
        Self::new(x, self.y.clone(), self.column_names.clone())
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("'{raw}' is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value '{raw}'"),
        });
    }
    Ok(value)
}

/// Load a headed CSV; every column except `label_column` must be numeric.
///
/// `positive_label` maps to `+1`, the other label value to `-1`. Rows are numbered
/// from 1 (the header is row 0) in error messages.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive_label: &str) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::InvalidData(format!("label column '{label_column}' not found")))?;
    let features: Vec<usize> = (0..headers.len()).filter(|&j| j != label_idx).collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        for &j in &features {
            values.push(parse_cell(&record[j], row, &headers[j])?);
        }
        raw_labels.push(record[label_idx].trim().to_string());
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(Error::InvalidData(format!(
            "label column '{label_column}' must hold exactly 2 distinct values, found {}: {:?}",
            distinct.len(),
            distinct
        )));
    }
    if !distinct.contains(positive_label) {
        return Err(Error::InvalidData(format!(
            "positive label '{positive_label}' does not occur; values are {distinct:?}"
        )));
    }
    let y = raw_labels
        .iter()
        .map(|l| if l == positive_label { 1.0 } else { -1.0 })
        .collect::<Vec<_>>();
    let x = Array2::from_shape_vec((y.len(), features.len()), values)
        .expect("row width checked by csv reader");
    Dataset::new(x, y, features.iter().map(|&j| headers[j].clone()).collect())
}

/// Read the named feature columns (in the given order) from a headed CSV.
///
/// Other columns are ignored, so a file that still carries its label column loads fine.
pub fn load_features_csv(path: impl AsRef<Path>, columns: &[String]) -> Result<Array2<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let idx = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::InvalidData(format!("feature column '{c}' not found")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for (&j, name) in idx.iter().zip(columns) {
            values.push(parse_cell(&record[j], i + 1, name)?);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, columns.len()), values).expect("row width fixed"))
}

/// Per-feature training mean and population standard deviation (zero replaced by one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerStats {
    pub fn dims(&self) -> usize {
        self.means.len()
    }
}

pub fn zscore_fit(x: ArrayView2<'_, f64>) -> Result<ScalerStats> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidData("cannot fit a scaler on an empty data set".into()));
    }
    let (means, stds) = x
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            (mean, if std > 0.0 { std } else { 1.0 })
        })
        .unzip();
    Ok(ScalerStats { means, stds })
}

pub fn zscore_apply(stats: &ScalerStats, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != stats.dims() {
        return Err(Error::shape("feature columns", stats.dims(), x.ncols()));
    }
    let mut out = x.to_owned();
    for (mut col, (m, s)) in out.columns_mut().into_iter().zip(stats.means.iter().zip(&stats.stds)) {
        col.mapv_inplace(|v| (v - m) / s);
    }
    Ok(out)
}

/// Randomly drop majority-class rows until both classes have the minority count.
pub fn balance_undersample(ds: &Dataset, seed: u64) -> Result<Dataset> {
    let (neg, pos): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.y[i] < 0.0);
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::InvalidData("balancing needs both classes present".into()));
    }
    let (mut major, minor) = if neg.len() >= pos.len() { (neg, pos) } else { (pos, neg) };
    let mut r = rng(seed);
    major.shuffle(&mut r);
    major.truncate(minor.len());
    let mut keep = minor;
    keep.extend(major);
    keep.sort_unstable();
    Ok(ds.select(&keep))
}

fn split_point(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidData(format!("cannot split {n} rows")));
    }
    Ok(((n as f64 * fraction).round() as usize).clamp(1, n - 1))
}

/// Seeded shuffle, then the first `round(fraction * N)` rows become the training set.
pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let cut = split_point(ds.len(), fraction)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng(seed));
    Ok((ds.select(&order[..cut]), ds.select(&order[cut..])))
}

/// Split in file order without shuffling.
pub fn split_ordered(ds: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    let cut = split_point(ds.len(), fraction)?;
    let order: Vec<usize> = (0..ds.len()).collect();
    Ok((ds.select(&order[..cut]), ds.select(&order[cut..])))
}

/// Two unit-variance Gaussian blobs whose centres lie `separation` apart; labels alternate `+1, -1`.
pub fn two_blobs(n: usize, d: usize, separation: f64, seed: u64) -> Result<Dataset> {
    let mut r = rng(seed);
    let offset = separation / (2.0 * (d as f64).sqrt());
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = Array2::from_shape_fn((n, d), |(i, _)| {
        let z: f64 = r.sample(rand_distr::StandardNormal);
        z + y[i] * offset
    });
    Dataset::unnamed(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn labels_follow_file_order() {
        let f = write_csv("a,b,class\n1,2,g\n3,4,h\n5,6,g\n");
        let ds = load_csv(f.path(), "class", "g").unwrap();
        assert_eq!(ds.y(), &[1.0, -1.0, 1.0]);
        assert_eq!(ds.x(), array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(ds.column_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn label_column_anywhere() {
        let f = write_csv("class,a\nh,1.5\ng,-2e3\n");
        let ds = load_csv(f.path(), "class", "h").unwrap();
        assert_eq!(ds.y(), &[1.0, -1.0]);
        assert_eq!(ds.x(), array![[1.5], [-2000.0]]);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let f = write_csv("a,b,class\n1,2,g\n3,NaN,h\n");
        match load_csv(f.path(), "class", "g") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn load_errors() {
        let f = write_csv("a,class\nx,g\n1,h\n");
        assert!(matches!(load_csv(f.path(), "class", "g"), Err(Error::Parse { row: 1, .. })));
        let f = write_csv("a,class\n1,g\n2,h\n");
        assert!(load_csv(f.path(), "label", "g").is_err());
        assert!(load_csv(f.path(), "class", "q").is_err());
        let f = write_csv("a,class\n1,g\n2,h\n3,k\n");
        assert!(load_csv(f.path(), "class", "g").is_err());
        let f = write_csv("a,class\n1,g\n2,g\n");
        assert!(load_csv(f.path(), "class", "g").is_err());
        let f = write_csv("a,class\n1,g\n2\n");
        assert!(load_csv(f.path(), "class", "g").is_err());
        let missing = load_csv("/nonexistent/file.csv", "class", "g").unwrap_err();
        assert_eq!(missing.class(), crate::ErrorClass::Io);
    }

    #[test]
    fn features_by_name() {
        let f = write_csv("b,class,a\n1,g,2\n3,h,4\n");
        let x = load_features_csv(f.path(), &["a".into(), "b".into()]).unwrap();
        assert_eq!(x, array![[2.0, 1.0], [4.0, 3.0]]);
        assert!(load_features_csv(f.path(), &["c".into()]).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        assert!(Dataset::unnamed(array![[1.0]], vec![0.0]).is_err());
        assert!(Dataset::unnamed(array![[f64::NAN]], vec![1.0]).is_err());
        assert!(Dataset::unnamed(array![[1.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn zscore_by_hand() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let s = zscore_fit(x.view()).unwrap();
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert!((s.stds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.stds[1], 1.0);
        let z = zscore_apply(&s, x.view()).unwrap();
        for (got, want) in z.column(0).iter().zip([-1.224744871391589, 0.0, 1.224744871391589]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        let test = array![[2.0, 7.0]];
        assert_eq!(zscore_apply(&s, test.view()).unwrap()[[0, 0]], 0.0);
        assert!(zscore_apply(&s, array![[1.0]].view()).is_err());
        assert!(zscore_fit(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    fn counts_dataset(neg: usize, pos: usize) -> Dataset {
        let n = neg + pos;
        let y: Vec<f64> = (0..n).map(|i| if i < neg { -1.0 } else { 1.0 }).collect();
        Dataset::unnamed(Array2::from_shape_fn((n, 1), |(i, _)| i as f64), y).unwrap()
    }

    #[test]
    fn undersample_to_minority() {
        let ds = counts_dataset(10, 3);
        for seed in 0..5 {
            let b = balance_undersample(&ds, seed).unwrap();
            assert_eq!(b.class_counts(), (3, 3));
            let rows: Vec<f64> = b.x().column(0).to_vec();
            assert!(rows.windows(2).all(|w| w[0] < w[1]));
        }
        let even = counts_dataset(4, 4);
        assert_eq!(balance_undersample(&even, 1).unwrap(), even);
        assert!(balance_undersample(&counts_dataset(5, 0), 1).is_err());
    }

    #[test]
    fn blobs_are_separated() {
        let ds = two_blobs(400, 4, 6.0, 1).unwrap();
        assert_eq!(ds.class_counts(), (200, 200));
        let mean = |label: f64| -> f64 {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.y()[i] == label).collect();
            rows.iter().map(|&i| ds.x()[[i, 0]]).sum::<f64>() / rows.len() as f64
        };
        assert!((mean(1.0) - mean(-1.0) - 3.0).abs() < 0.3);
        assert_eq!(two_blobs(400, 4, 6.0, 1).unwrap(), ds);
    }

    #[test]
    fn split_partitions() {
        let ds = counts_dataset(50, 50);
        let (a, b) = split_train_test(&ds, 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (50, 50));
        let mut all: Vec<f64> = a.x().column(0).iter().chain(b.x().column(0).iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());
        let (a2, _) = split_train_test(&ds, 0.5, 3).unwrap();
        assert_eq!(a, a2);
        let (o, _) = split_ordered(&ds, 0.3).unwrap();
        assert_eq!(o.x().column(0).to_vec(), (0..30).map(|i| i as f64).collect::<Vec<_>>());
        assert!(split_train_test(&ds, 1.0, 0).is_err());
        assert!(split_train_test(&ds, 0.0, 0).is_err());
        assert!(split_train_test(&counts_dataset(1, 0), 0.5, 0).is_err());
    }
}
