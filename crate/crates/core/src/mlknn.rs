//! Multi-label k-nearest-neighbor classifier (ML-KNN).
//!
//! For each label the model keeps a smoothed prior and, for each possible
//! count `c` of positive neighbors among the `k` nearest, the smoothed
//! likelihoods `P(c | label)` and `P(c | ¬label)`. Prediction returns the
//! posterior of the label given the observed count.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 7;
pub const DEFAULT_SMOOTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MlKnnModel {
    pub k: usize,
    pub smooth: f64,
    /// `P(H_j = 1)`.
    pub priors: Array1<f64>,
    /// `cond[[j, c]] = P(c positive neighbors | H_j = 1)`.
    pub cond: Array2<f64>,
    /// `cond_neg[[j, c]] = P(c positive neighbors | H_j = 0)`.
    pub cond_neg: Array2<f64>,
    pub train_features: Array2<f64>,
    pub train_labels: Array2<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingPrediction {
    /// Posterior label probabilities, n_test x m.
    pub scores: Array2<f64>,
    /// `scores >= 0.5`.
    pub binary: Array2<u8>,
}

/// Indices of the `k` training rows closest to `query`, excluding `skip`.
/// Ties in distance go to the lower index.
fn nearest(
    train: &Array2<f64>,
    query: ArrayView1<f64>,
    k: usize,
    skip: Option<usize>,
) -> Vec<usize> {
    let mut dists: Vec<(f64, usize)> = train
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, row)| {
            let d: f64 = row
                .iter()
                .zip(query.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k, cmp);
        dists.truncate(k);
    }
    dists.sort_unstable_by(cmp);
    dists.into_iter().map(|(_, i)| i).collect()
}

fn positive_counts(labels: &Array2<u8>, neighbors: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; labels.ncols()];
    for &nb in neighbors {
        for (c, &v) in counts.iter_mut().zip(labels.row(nb).iter()) {
            *c += usize::from(v);
        }
    }
    counts
}

pub fn mlknn_fit(train: &Dataset, k: usize, smooth: f64) -> Result<MlKnnModel> {
    let n = train.n_instances();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must satisfy 1 <= k < {n} training instances, got {k}"
        )));
    }
    if !(smooth.is_finite() && smooth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be positive, got {smooth}"
        )));
    }
    let x = train.features();
    let y = train.labels();
    let m = train.n_labels();

    let priors = y
        .columns()
        .into_iter()
        .map(|col| {
            (smooth + col.iter().map(|&v| f64::from(v)).sum::<f64>()) / (2.0 * smooth + n as f64)
        })
        .collect::<Array1<f64>>();

    let neighbor_counts: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| positive_counts(y, &nearest(x, x.row(i), k, Some(i))))
        .collect();

    let mut hits = Array2::<f64>::zeros((m, k + 1));
    let mut misses = Array2::<f64>::zeros((m, k + 1));
    for (i, counts) in neighbor_counts.iter().enumerate() {
        for (j, &c) in counts.iter().enumerate() {
            if y[[i, j]] == 1 {
                hits[[j, c]] += 1.0;
            } else {
                misses[[j, c]] += 1.0;
            }
        }
    }
    let smooth_rows = |table: Array2<f64>| {
        let mut out = table.clone();
        for (mut row, src) in out.rows_mut().into_iter().zip(table.rows()) {
            let total = src.sum();
            row.mapv_inplace(|c| (smooth + c) / (smooth * (k + 1) as f64 + total));
        }
        out
    };

    Ok(MlKnnModel {
        k,
        smooth,
        priors,
        cond: smooth_rows(hits),
        cond_neg: smooth_rows(misses),
        train_features: x.clone(),
        train_labels: y.clone(),
    })
}

impl MlKnnModel {
    pub fn n_features(&self) -> usize {
        self.train_features.ncols()
    }

    pub fn predict(&self, test_features: &Array2<f64>) -> Result<RankingPrediction> {
        if test_features.ncols() != self.n_features() {
            return Err(Error::ShapeMismatch(format!(
                "model trained on {} features, test data has {}",
                self.n_features(),
                test_features.ncols()
            )));
        }
        let m = self.priors.len();
        let rows: Vec<Vec<f64>> = test_features
            .rows()
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|row| {
                let nb = nearest(&self.train_features, row, self.k, None);
                positive_counts(&self.train_labels, &nb)
                    .into_iter()
                    .enumerate()
                    .map(|(j, c)| {
                        let pos = self.priors[j] * self.cond[[j, c]];
                        let neg = (1.0 - self.priors[j]) * self.cond_neg[[j, c]];
                        pos / (pos + neg)
                    })
                    .collect()
            })
            .collect();
        let scores = Array2::from_shape_vec(
            (test_features.nrows(), m),
            rows.into_iter().flatten().collect(),
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let binary = scores.mapv(|s| u8::from(s >= 0.5));
        Ok(RankingPrediction { scores, binary })
    }
}

impl RankingPrediction {
    /// One row per instance, one column per label score.
    pub fn write_scores_csv<W: std::io::Write>(
        &self,
        label_names: &[String],
        out: W,
    ) -> Result<()> {
        if label_names.len() != self.scores.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} label names for {} score columns",
                label_names.len(),
                self.scores.ncols()
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing scores: {e}"));
        w.write_record(label_names).map_err(io)?;
        for row in self.scores.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("writing scores: {e}")))?;
        Ok(())
    }
}

pub fn mlknn_predict(model: &MlKnnModel, test_features: &Array2<f64>) -> Result<RankingPrediction> {
    model.predict(test_features)
}
