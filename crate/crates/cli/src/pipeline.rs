//! Pieces of the select-then-evaluate pipeline shared by `eval` and `bench`.

use msfs_core::metrics::{evaluate, MetricReport};
use msfs_core::mlknn::{mlknn_fit, RankingPrediction};
use msfs_core::{Dataset, Result};

/// Train ML-KNN on the chosen feature columns of `train` and score `test`.
pub fn evaluate_subset(
    train: &Dataset,
    test: &Dataset,
    indices: &[usize],
    k: usize,
    smooth: f64,
) -> Result<(MetricReport, RankingPrediction)> {
    let train = train.select_features(indices)?;
    let test = test.select_features(indices)?;
    let prediction = mlknn_fit(&train, k, smooth)?.predict(test.features())?;
    let report = evaluate(&prediction, test.labels())?;
    Ok((report, prediction))
}
