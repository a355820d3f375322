//! Multi-label datasets: loading, validation, splitting, perturbation and
//! summary statistics.

mod arff;
mod csv;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub use self::arff::{load_arff, parse_label_spec};
pub use self::csv::{load_csv, CsvOptions};

/// A feature matrix `X` (n x p) paired with a binary label matrix `Y` (n x m).
///
/// Construction validates every invariant, so a `Dataset` in hand always has
/// at least one row, feature and label, finite features and labels in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Array2<u8>,
    feature_names: Vec<String>,
    label_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Array2<u8>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        let (n_labels_rows, m) = labels.dim();
        if n == 0 || p == 0 || m == 0 {
            return Err(Error::InvalidDataset(format!(
                "need at least one instance, feature and label (got n={n}, p={p}, m={m})"
            )));
        }
        if n_labels_rows != n {
            return Err(Error::InvalidDataset(format!(
                "feature matrix has {n} rows but label matrix has {n_labels_rows}"
            )));
        }
        if feature_names.len() != p || label_names.len() != m {
            return Err(Error::InvalidDataset(format!(
                "expected {p} feature names and {m} label names, got {} and {}",
                feature_names.len(),
                label_names.len()
            )));
        }
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "feature value at row {i}, column {j} is not finite"
            )));
        }
        if let Some(((i, j), v)) = labels.indexed_iter().find(|(_, v)| **v > 1) {
            return Err(Error::InvalidDataset(format!(
                "label value {v} at row {i}, column {j} is not 0 or 1"
            )));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            label_names,
        })
    }

    /// Build a dataset with generated names `f0..`, `l0..`.
    pub fn from_arrays(features: Array2<f64>, labels: Array2<u8>) -> Result<Self> {
        let feature_names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        let label_names = (0..labels.ncols()).map(|j| format!("l{j}")).collect();
        Self::new(features, labels, feature_names, label_names)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    /// Labels as a real matrix, for the regression model.
    pub fn labels_f64(&self) -> Array2<f64> {
        self.labels.mapv(f64::from)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn n_instances(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.ncols()
    }

    /// Rows in the given order. Indices must be in range and the list nonempty.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_instances()) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {} instances",
                self.n_instances()
            )));
        }
        Self::new(
            self.features.select(Axis(0), rows),
            self.labels.select(Axis(0), rows),
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }

    /// Restrict to a subset of feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::InvalidArgument(format!(
                "feature index {bad} out of range for {} features",
                self.n_features()
            )));
        }
        Self::new(
            self.features.select(Axis(1), columns),
            self.labels.clone(),
            columns
                .iter()
                .map(|&c| self.feature_names[c].clone())
                .collect(),
            self.label_names.clone(),
        )
    }

    /// Stack the rows of `other` below `self`. Column names must agree.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.feature_names != other.feature_names || self.label_names != other.label_names {
            return Err(Error::InvalidDataset(
                "cannot concatenate datasets with different columns".into(),
            ));
        }
        let features = concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let labels = concatenate(Axis(0), &[self.labels.view(), other.labels.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(
            features,
            labels,
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }

    /// Replace the feature matrix, keeping labels and names.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::ShapeMismatch(format!(
                "replacement features are {:?}, expected {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        Self::new(
            features,
            self.labels.clone(),
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }
}

/// Label-structure summary of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dim: usize,
    #[serde(rename = "labels")]
    pub label_count: usize,
    pub size: usize,
    /// Fraction of instances carrying at least two labels.
    pub pmc: f64,
    /// Mean number of labels per instance.
    pub anl: f64,
    /// `anl / label_count`.
    pub dens: f64,
}

pub fn stats(ds: &Dataset) -> DatasetStats {
    let n = ds.n_instances();
    let m = ds.n_labels();
    let mut multi = 0usize;
    let mut total = 0usize;
    for row in ds.labels().rows() {
        let count = row.iter().filter(|&&v| v == 1).count();
        total += count;
        if count >= 2 {
            multi += 1;
        }
    }
    let anl = total as f64 / n as f64;
    DatasetStats {
        dim: ds.n_features(),
        label_count: m,
        size: n,
        pmc: multi as f64 / n as f64,
        anl,
        dens: anl / m as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Rows `[0, train)` then `[train, train + test)`.
    #[default]
    FirstN,
    /// Same, after a seeded permutation of all rows.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn first_n(train_count: usize, test_count: usize) -> Self {
        Self {
            train_count,
            test_count,
            seed: 0,
            mode: SplitMode::FirstN,
        }
    }

    pub fn shuffled(train_count: usize, test_count: usize, seed: u64) -> Self {
        Self {
            train_count,
            test_count,
            seed,
            mode: SplitMode::Shuffled,
        }
    }

    /// Row order the split draws from: identity for `FirstN`, a seeded
    /// permutation for `Shuffled`.
    pub fn row_order(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.mode == SplitMode::Shuffled {
            order.shuffle(&mut rng_from_seed(self.seed));
        }
        order
    }
}

/// Split into disjoint train and test row sets.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = ds.n_instances();
    if spec.train_count == 0 || spec.test_count == 0 {
        return Err(Error::InvalidArgument(
            "train and test counts must both be positive".into(),
        ));
    }
    if spec.train_count + spec.test_count > n {
        return Err(Error::InvalidArgument(format!(
            "train {} + test {} exceeds {n} instances",
            spec.train_count, spec.test_count
        )));
    }
    let order = spec.row_order(n);
    let train = ds.select_rows(&order[..spec.train_count])?;
    let test = ds.select_rows(&order[spec.train_count..spec.train_count + spec.test_count])?;
    Ok((train, test))
}

/// Sample standard deviation (n - 1 denominator) of every feature column.
/// Single-row datasets have zero spread.
pub fn column_std(features: &Array2<f64>) -> Vec<f64> {
    let n = features.nrows();
    if n < 2 {
        return vec![0.0; features.ncols()];
    }
    features
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        })
        .collect()
}

/// Add zero-mean Gaussian noise with standard deviation `ratio * std_j` to
/// every entry of feature column `j`. Constant columns and labels are left
/// untouched.
pub fn add_gaussian_noise(ds: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise ratio must be finite and non-negative, got {ratio}"
        )));
    }
    if ratio == 0.0 {
        return Ok(ds.clone());
    }
    let scales: Vec<f64> = column_std(ds.features())
        .into_iter()
        .map(|s| ratio * s)
        .collect();
    let mut rng = rng_from_seed(seed);
    let mut features = ds.features().clone();
    for mut row in features.rows_mut() {
        for (value, &scale) in row.iter_mut().zip(&scales) {
            let z: f64 = StandardNormal.sample(&mut rng);
            if scale > 0.0 {
                *value += scale * z;
            }
        }
    }
    ds.with_features(features)
}

/// Column means and standard deviations used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fit on the rows of `features`. Zero-spread columns get unit scale.
    pub fn fit(features: &Array2<f64>) -> Self {
        let n = features.nrows().max(1) as f64;
        let mean = features
            .columns()
            .into_iter()
            .map(|c| c.sum() / n)
            .collect();
        let scale = column_std(features)
            .into_iter()
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_features() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "standardizer fitted on {} features, dataset has {}",
                self.mean.len(),
                ds.n_features()
            )));
        }
        let mut features = ds.features().clone();
        for mut row in features.rows_mut() {
            for ((v, mu), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / s;
            }
        }
        ds.with_features(features)
    }
}
