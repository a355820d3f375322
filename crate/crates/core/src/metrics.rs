//! Multi-label evaluation measures and the Friedman-rank / Bonferroni-Dunn
//! comparison of several methods over several datasets.
//!
//! Rank-based measures order labels by descending score with ties going to
//! the lower label index. Instances whose label set is empty or full have no
//! relevant/irrelevant pair and are skipped by every rank-based measure.

use std::fmt;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlknn::RankingPrediction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hamming_loss: f64,
    pub ranking_loss: f64,
    pub one_error: f64,
    pub coverage: f64,
    pub coverage_normalized: f64,
    pub average_precision: f64,
    pub skipped_instances: usize,
}

/// Which way is better for a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

impl Direction {
    /// True if `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::LowerIsBetter => a < b,
            Direction::HigherIsBetter => a > b,
        }
    }
}

/// The reported measures, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    HammingLoss,
    RankingLoss,
    OneError,
    Coverage,
    CoverageNormalized,
    AveragePrecision,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::HammingLoss,
        Metric::RankingLoss,
        Metric::OneError,
        Metric::Coverage,
        Metric::CoverageNormalized,
        Metric::AveragePrecision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::HammingLoss => "hamming_loss",
            Metric::RankingLoss => "ranking_loss",
            Metric::OneError => "one_error",
            Metric::Coverage => "coverage",
            Metric::CoverageNormalized => "coverage_normalized",
            Metric::AveragePrecision => "average_precision",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Metric::AveragePrecision => Direction::HigherIsBetter,
            _ => Direction::LowerIsBetter,
        }
    }

    pub fn value(self, report: &MetricReport) -> f64 {
        match self {
            Metric::HammingLoss => report.hamming_loss,
            Metric::RankingLoss => report.ranking_loss,
            Metric::OneError => report.one_error,
            Metric::Coverage => report.coverage,
            Metric::CoverageNormalized => report.coverage_normalized,
            Metric::AveragePrecision => report.average_precision,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rank-based measure averaged over the evaluable instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankScore {
    pub value: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageScore {
    pub raw: f64,
    pub normalized: f64,
    pub skipped: usize,
}

fn same_shape<A, B>(a: &Array2<A>, b: &Array2<B>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {:?}, truth is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() {
        return Err(Error::ShapeMismatch("empty prediction".into()));
    }
    Ok(())
}

/// Average fraction of mispredicted label bits.
pub fn hamming_loss(pred: &Array2<u8>, truth: &Array2<u8>) -> Result<f64> {
    same_shape(pred, truth)?;
    let m = truth.ncols() as f64;
    let total: f64 = pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .map(|(p, t)| {
            p.iter()
                .zip(t.iter())
                .filter(|(a, b)| (**a != 0) != (**b != 0))
                .count() as f64
                / m
        })
        .sum();
    Ok(total / truth.nrows() as f64)
}

/// 1-based label positions in descending score order, ties to lower index.
pub fn label_ranks(scores: ArrayView1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (pos, &label) in order.iter().enumerate() {
        ranks[label] = pos + 1;
    }
    ranks
}

/// Average a per-instance quantity over instances with a proper label subset.
fn over_evaluable<F>(
    scores: &Array2<f64>,
    truth: &Array2<u8>,
    mut per_instance: F,
) -> Result<RankScore>
where
    F: FnMut(ArrayView1<f64>, &[bool]) -> f64,
{
    same_shape(scores, truth)?;
    let m = truth.ncols();
    let mut total = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for (s, t) in scores.rows().into_iter().zip(truth.rows()) {
        let relevant: Vec<bool> = t.iter().map(|&v| v != 0).collect();
        let count = relevant.iter().filter(|&&r| r).count();
        if count == 0 || count == m {
            skipped += 1;
            continue;
        }
        total += per_instance(s, &relevant);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::NoEvaluableInstances);
    }
    Ok(RankScore {
        value: total / evaluated as f64,
        skipped,
    })
}

/// Fraction of (relevant, irrelevant) label pairs ordered wrongly; tied
/// pairs count one half.
pub fn ranking_loss(scores: &Array2<f64>, truth: &Array2<u8>) -> Result<RankScore> {
    over_evaluable(scores, truth, |s, rel| {
        let mut wrong = 0.0;
        let mut pairs = 0usize;
        for (k, &rk) in rel.iter().enumerate() {
            if !rk {
                continue;
            }
            for (j, &rj) in rel.iter().enumerate() {
                if rj {
                    continue;
                }
                pairs += 1;
                if s[k] < s[j] {
                    wrong += 1.0;
                } else if s[k] == s[j] {
                    wrong += 0.5;
                }
            }
        }
        wrong / pairs as f64
    })
}

/// Fraction of instances whose top-ranked label is irrelevant.
pub fn one_error(scores: &Array2<f64>, truth: &Array2<u8>) -> Result<RankScore> {
    over_evaluable(scores, truth, |s, rel| {
        let ranks = label_ranks(s);
        let top = ranks.iter().position(|&r| r == 1).expect("rank 1 exists");
        if rel[top] {
            0.0
        } else {
            1.0
        }
    })
}

/// Mean depth, minus one, needed to cover every relevant label; also
/// divided by the label count.
pub fn coverage(scores: &Array2<f64>, truth: &Array2<u8>) -> Result<CoverageScore> {
    let r = over_evaluable(scores, truth, |s, rel| {
        let ranks = label_ranks(s);
        let deepest = rel
            .iter()
            .zip(&ranks)
            .filter(|(r, _)| **r)
            .map(|(_, &rank)| rank)
            .max()
            .expect("at least one relevant label");
        (deepest - 1) as f64
    })?;
    Ok(CoverageScore {
        raw: r.value,
        normalized: r.value / truth.ncols() as f64,
        skipped: r.skipped,
    })
}

/// Mean over relevant labels of the fraction of labels ranked at or above
/// it that are relevant.
pub fn average_precision(scores: &Array2<f64>, truth: &Array2<u8>) -> Result<RankScore> {
    over_evaluable(scores, truth, |s, rel| {
        let ranks = label_ranks(s);
        let relevant_ranks: Vec<usize> = rel
            .iter()
            .zip(&ranks)
            .filter(|(r, _)| **r)
            .map(|(_, &rank)| rank)
            .collect();
        let sum: f64 = relevant_ranks
            .iter()
            .map(|&rk| {
                let above = relevant_ranks.iter().filter(|&&rj| rj <= rk).count();
                above as f64 / rk as f64
            })
            .sum();
        sum / relevant_ranks.len() as f64
    })
}

/// All measures for one prediction.
pub fn evaluate(prediction: &RankingPrediction, truth: &Array2<u8>) -> Result<MetricReport> {
    let hamming_loss = hamming_loss(&prediction.binary, truth)?;
    let rl = ranking_loss(&prediction.scores, truth)?;
    let oe = one_error(&prediction.scores, truth)?;
    let cov = coverage(&prediction.scores, truth)?;
    let ap = average_precision(&prediction.scores, truth)?;
    debug_assert!(
        rl.skipped == oe.skipped && oe.skipped == cov.skipped && cov.skipped == ap.skipped
    );
    Ok(MetricReport {
        hamming_loss,
        ranking_loss: rl.value,
        one_error: oe.value,
        coverage: cov.raw,
        coverage_normalized: cov.normalized,
        average_precision: ap.value,
        skipped_instances: rl.skipped,
    })
}

/// Per-dataset ranks of `k` methods on `N` datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// Raw measure values, k x N.
    pub values: Array2<f64>,
    /// 1 = best; ties share their mean rank. k x N.
    pub ranks: Array2<f64>,
    pub avg_ranks: Vec<f64>,
}

pub fn friedman_ranks(
    methods: Vec<String>,
    datasets: Vec<String>,
    values: Array2<f64>,
    direction: Direction,
) -> Result<RankTable> {
    let (k, n) = values.dim();
    if methods.len() != k || datasets.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} methods and {} datasets for a {k} x {n} table",
            methods.len(),
            datasets.len()
        )));
    }
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("rank table is empty".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("rank table contains NaN".into()));
    }
    let mut ranks = Array2::zeros((k, n));
    for (col, mut rank_col) in values.columns().into_iter().zip(ranks.columns_mut()) {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let ord = col[a].total_cmp(&col[b]);
            match direction {
                Direction::LowerIsBetter => ord,
                Direction::HigherIsBetter => ord.reverse(),
            }
        });
        let mut start = 0;
        while start < k {
            let mut end = start + 1;
            while end < k && col[order[end]] == col[order[start]] {
                end += 1;
            }
            // positions start..end hold ranks start+1..=end
            let mid = (start + 1 + end) as f64 / 2.0;
            for &method in &order[start..end] {
                rank_col[method] = mid;
            }
            start = end;
        }
    }
    let avg_ranks = ranks
        .rows()
        .into_iter()
        .map(|r| r.sum() / n as f64)
        .collect();
    Ok(RankTable {
        methods,
        datasets,
        values,
        ranks,
        avg_ranks,
    })
}

impl RankTable {
    /// `method,<dataset ranks...>,avg_rank`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push_str(",avg_rank\n");
        for (i, method) in self.methods.iter().enumerate() {
            out.push_str(method);
            for r in self.ranks.row(i) {
                out.push_str(&format!(",{r}"));
            }
            out.push_str(&format!(",{}\n", self.avg_ranks[i]));
        }
        out
    }

    /// One summary line per method compared against `control`.
    pub fn cd_summary(&self, control: &str, cd: f64) -> Result<Vec<String>> {
        let c = self
            .methods
            .iter()
            .position(|m| m == control)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {control:?}")))?;
        Ok(self
            .methods
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != c)
            .map(|(i, m)| {
                let delta = (self.avg_ranks[c] - self.avg_ranks[i]).abs();
                let verdict = if delta > cd {
                    "significant"
                } else {
                    "not significant"
                };
                format!("{control} vs {m}: |Δrank| = {delta:.4} (CD = {cd:.4}) → {verdict}")
            })
            .collect())
    }
}

/// `q · sqrt(k (k + 1) / (6 N))`.
pub fn critical_difference(k: usize, n_datasets: usize, q_alpha: f64) -> Result<f64> {
    if k < 2 || n_datasets == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least two methods and one dataset (k={k}, N={n_datasets})"
        )));
    }
    let k = k as f64;
    Ok(q_alpha * (k * (k + 1.0) / (6.0 * n_datasets as f64)).sqrt())
}

/// Two-tailed Bonferroni-Dunn critical values at α = 0.05 for 2..=10 methods.
pub fn bonferroni_dunn_q05(k: usize) -> Option<f64> {
    const Q: [f64; 9] = [
        1.960, 2.241, 2.394, 2.498, 2.576, 2.638, 2.690, 2.724, 2.773,
    ];
    k.checked_sub(2).and_then(|i| Q.get(i).copied())
}
