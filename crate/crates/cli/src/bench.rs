//! Grid search over (α, β, ρ, l) with repetitions, resumable per fit cell.
//!
//! For each dataset and repetition the noisy split and the neighborhood graph
//! are built once. Each (α, β, ρ) fit is then shared by every feature count
//! `l`. Finished fits are written to `runs/` and skipped on the next run when
//! the config fingerprint matches.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use msfs_core::graph::{build_graph, SigmaRule, WalkConfig, WalkMode, DEFAULT_WALK_STEPS};
use msfs_core::metrics::{
    bonferroni_dunn_q05, critical_difference, friedman_ranks, Direction, Metric, MetricReport,
};
use msfs_core::mlknn::{DEFAULT_K, DEFAULT_SMOOTH};
use msfs_core::solver::{
    rank_features, select_top, FitContext, SolverParams, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use msfs_core::{derive_seed, Dataset, NeighborhoodGraph, SplitMode};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::BenchArgs;
use crate::error::{CliError, CliResult};
use crate::input::{prepare, resolve_split, DataSource, Format, LabelSource, PrepareOptions};
use crate::pipeline::evaluate_subset;

fn default_decades() -> Vec<f64> {
    vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}
fn default_rho_list() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}
fn default_feature_counts() -> Vec<usize> {
    (1..=20).map(|i| 5 * i).collect()
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_smooth() -> f64 {
    DEFAULT_SMOOTH
}
fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_noise() -> f64 {
    0.15
}
fn default_repetitions() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_steps() -> usize {
    DEFAULT_WALK_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Used in output rows and file names.
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub labels: LabelSource,
    #[serde(default)]
    pub header: bool,
    /// Split counts; omit when `test_path` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<usize>,
    #[serde(default)]
    pub split_mode: SplitMode,
}

impl DatasetConfig {
    pub fn source(&self) -> DataSource {
        DataSource {
            path: self.path.clone(),
            test_path: self.test_path.clone(),
            format: self.format,
            labels: self.labels.clone(),
            header: self.header,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSettings {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub mode: WalkMode,
    /// Fixed Gaussian bandwidth; median heuristic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for WalkSettings {
    fn default() -> Self {
        Self {
            steps: DEFAULT_WALK_STEPS,
            mode: WalkMode::Dfs,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default = "default_decades")]
    pub alpha_list: Vec<f64>,
    #[serde(default = "default_decades")]
    pub beta_list: Vec<f64>,
    #[serde(default = "default_rho_list")]
    pub rho_list: Vec<f64>,
    #[serde(default = "default_feature_counts")]
    pub feature_counts: Vec<usize>,
    #[serde(default = "default_k")]
    pub mlknn_k: usize,
    #[serde(default = "default_smooth")]
    pub mlknn_smooth: f64,
    #[serde(default)]
    pub walk: WalkSettings,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_noise")]
    pub noise_ratio: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config for `datasets` with every other field at its default.
    pub fn with_defaults(datasets: Vec<DatasetConfig>) -> Self {
        Self {
            datasets,
            alpha_list: default_decades(),
            beta_list: default_decades(),
            rho_list: default_rho_list(),
            feature_counts: default_feature_counts(),
            mlknn_k: DEFAULT_K,
            mlknn_smooth: DEFAULT_SMOOTH,
            walk: WalkSettings::default(),
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            noise_ratio: default_noise(),
            repetitions: 1,
            master_seed: 0,
            standardize: true,
            output_dir: None,
        }
    }

    pub fn params(&self, alpha: f64, beta: f64, rho: f64) -> SolverParams {
        SolverParams::new(alpha, beta, rho)
            .with_max_iters(self.max_iters)
            .with_tol(self.tol)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::usage(format!("config: {m}")));
        if self.datasets.is_empty() {
            return bad("datasets is empty".into());
        }
        let mut names = HashSet::new();
        for d in &self.datasets {
            let safe = !d.name.is_empty()
                && d.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !safe {
                return bad(format!(
                    "dataset name {:?} must be nonempty and use [A-Za-z0-9._-]",
                    d.name
                ));
            }
            if !names.insert(&d.name) {
                return bad(format!("dataset name {:?} repeated", d.name));
            }
            if d.train.is_some() != d.test.is_some() {
                return bad(format!(
                    "dataset {:?}: give both train and test or neither",
                    d.name
                ));
            }
        }
        for (name, list) in [
            ("alpha_list", &self.alpha_list),
            ("beta_list", &self.beta_list),
            ("rho_list", &self.rho_list),
        ] {
            if list.is_empty() {
                return bad(format!("{name} is empty"));
            }
        }
        if self.feature_counts.is_empty() || self.feature_counts.contains(&0) {
            return bad("feature_counts must be nonempty and positive".into());
        }
        for &a in &self.alpha_list {
            for &b in &self.beta_list {
                for &r in &self.rho_list {
                    self.params(a, b, r)
                        .validate()
                        .map_err(|e| CliError::usage(format!("config: {e}")))?;
                }
            }
        }
        if self.repetitions == 0 || self.mlknn_k == 0 || self.walk.steps == 0 {
            return bad("repetitions, mlknn_k and walk.steps must be positive".into());
        }
        if self.mlknn_smooth.is_nan() || self.mlknn_smooth <= 0.0 {
            return bad("mlknn_smooth must be positive".into());
        }
        if !(self.noise_ratio.is_finite() && self.noise_ratio >= 0.0) {
            return bad("noise_ratio must be finite and non-negative".into());
        }
        if let Some(s) = self.walk.sigma {
            if !(s.is_finite() && s > 0.0) {
                return bad("walk.sigma must be positive".into());
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialization, ignoring the output
    /// directory. Key order in the source file does not matter.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn sigma_rule(&self) -> SigmaRule {
        self.walk.sigma.map_or(SigmaRule::Median, SigmaRule::Fixed)
    }
}

/// Parse a config file and resolve its relative paths against the file's
/// directory.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for d in &mut config.datasets {
        let resolved = d.source().resolved(base);
        d.path = resolved.path;
        d.test_path = resolved.test_path;
        d.labels = resolved.labels;
    }
    if let Some(out) = &config.output_dir {
        if out.is_relative() {
            config.output_dir = Some(base.join(out));
        }
    }
    config.validate()?;
    Ok(config)
}

/// Stage seeds for one repetition of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepSeeds {
    pub dataset: usize,
    pub rep: usize,
    pub split: u64,
    pub noise: u64,
    pub walk: u64,
}

pub fn rep_seeds(config: &ExperimentConfig, dataset: usize, rep: usize) -> RepSeeds {
    let (d, r) = (dataset as u64, rep as u64);
    RepSeeds {
        dataset,
        rep,
        split: derive_seed(config.master_seed, "split", &[d]),
        noise: derive_seed(config.master_seed, "noise", &[d, r]),
        walk: derive_seed(config.master_seed, "walk", &[d, r]),
    }
}

/// Train/test data and graph for one (dataset, repetition).
pub struct RepData {
    pub train: Dataset,
    pub test: Dataset,
    pub y: Array2<f64>,
    pub graph: NeighborhoodGraph,
    pub sigma: f64,
    pub isolated: usize,
    pub early_terminations: usize,
    pub prepare_seconds: f64,
    pub graph_seconds: f64,
}

fn load_full(
    config: &ExperimentConfig,
    dataset: usize,
) -> CliResult<(Dataset, msfs_core::SplitSpec)> {
    let d = &config.datasets[dataset];
    let (full, file_train_rows) = d.source().load()?;
    let counts = d.train.zip(d.test);
    let seeds = rep_seeds(config, dataset, 0);
    let split = resolve_split(counts, d.split_mode, seeds.split, &full, file_train_rows)?
        .ok_or_else(|| {
            CliError::usage(format!(
                "dataset {:?} needs train/test counts or a test_path",
                d.name
            ))
        })?;
    Ok((full, split))
}

fn build_rep(
    config: &ExperimentConfig,
    full: &Dataset,
    split: msfs_core::SplitSpec,
    seeds: RepSeeds,
) -> msfs_core::Result<RepData> {
    let t0 = Instant::now();
    let prepared = prepare(
        full,
        &PrepareOptions {
            split: Some(split),
            noise_ratio: config.noise_ratio,
            noise_seed: seeds.noise,
            standardize: config.standardize,
        },
    )
    .map_err(|e| msfs_core::Error::InvalidArgument(e.message))?;
    let prepare_seconds = t0.elapsed().as_secs_f64();
    let train = prepared.train;
    let test = prepared.test.expect("split requested");
    let t1 = Instant::now();
    let cfg = WalkConfig {
        steps: config.walk.steps,
        mode: config.walk.mode,
        seed: seeds.walk,
    };
    let (graph, diag) = build_graph(train.features(), train.labels(), config.sigma_rule(), &cfg)?;
    Ok(RepData {
        y: train.labels_f64(),
        train,
        test,
        graph,
        sigma: diag.sigma,
        isolated: diag.isolated.len(),
        early_terminations: diag.early_terminations.len(),
        prepare_seconds,
        graph_seconds: t1.elapsed().as_secs_f64(),
    })
}

/// One line of the summary: a (dataset, α, β, ρ, l, rep) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub dataset: String,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub l: usize,
    pub rep: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A finished (dataset, rep, α, β, ρ) fit with its rows for every `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub fingerprint: String,
    pub dataset: String,
    pub rep: usize,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
    pub rows: Vec<CellRow>,
}

#[derive(Debug, Clone, Copy)]
struct FitKey {
    dataset: usize,
    rep: usize,
    a: usize,
    b: usize,
    r: usize,
}

fn run_file(out: &Path, config: &ExperimentConfig, key: FitKey) -> PathBuf {
    out.join("runs").join(format!(
        "{}-rep{}-a{}-b{}-r{}.json",
        config.datasets[key.dataset].name, key.rep, key.a, key.b, key.r
    ))
}

fn cached(path: &Path, fingerprint: &str, expected_rows: usize) -> Option<FitRecord> {
    let text = fs::read_to_string(path).ok()?;
    let rec: FitRecord = serde_json::from_str(&text).ok()?;
    (rec.fingerprint == fingerprint && rec.rows.len() == expected_rows).then_some(rec)
}

fn run_fit(
    config: &ExperimentConfig,
    fingerprint: &str,
    key: FitKey,
    rep: Result<(&RepData, &FitContext<'_>), &String>,
) -> FitRecord {
    let name = &config.datasets[key.dataset].name;
    let (alpha, beta, rho) = (
        config.alpha_list[key.a],
        config.beta_list[key.b],
        config.rho_list[key.r],
    );
    let row = |l: usize, result: Result<MetricReport, String>| {
        let (metrics, error) = match result {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e)),
        };
        CellRow {
            dataset: name.clone(),
            alpha,
            beta,
            rho,
            l,
            rep: key.rep,
            metrics,
            error,
        }
    };
    let mut record = FitRecord {
        fingerprint: fingerprint.to_string(),
        dataset: name.clone(),
        rep: key.rep,
        alpha,
        beta,
        rho,
        iterations: None,
        converged: None,
        final_objective: None,
        fit_seconds: 0.0,
        eval_seconds: 0.0,
        rows: Vec::new(),
    };
    let (data, ctx) = match rep {
        Ok(pair) => pair,
        Err(e) => {
            record.rows = config
                .feature_counts
                .iter()
                .map(|&l| row(l, Err(e.clone())))
                .collect();
            return record;
        }
    };
    let t0 = Instant::now();
    let fitted = ctx.fit(&config.params(alpha, beta, rho));
    record.fit_seconds = t0.elapsed().as_secs_f64();
    let state = match fitted {
        Ok(s) => s,
        Err(e) => {
            let msg = format!("solver: {e}");
            record.rows = config
                .feature_counts
                .iter()
                .map(|&l| row(l, Err(msg.clone())))
                .collect();
            return record;
        }
    };
    record.iterations = Some(state.iterations);
    record.converged = Some(state.converged);
    record.final_objective = state.objective_trace.last().copied();
    let ranking = rank_features(&state);
    let t1 = Instant::now();
    record.rows = config
        .feature_counts
        .iter()
        .map(|&l| {
            let result = select_top(&ranking, l)
                .and_then(|idx| {
                    evaluate_subset(
                        &data.train,
                        &data.test,
                        &idx,
                        config.mlknn_k,
                        config.mlknn_smooth,
                    )
                })
                .map(|(report, _)| report)
                .map_err(|e| e.to_string());
            row(l, result)
        })
        .collect();
    record.eval_seconds = t1.elapsed().as_secs_f64();
    record
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepSummary {
    pub seeds: RepSeeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub isolated: usize,
    pub early_terminations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub load_seconds: f64,
    pub prepare_seconds: f64,
    pub graph_seconds: f64,
    /// Summed over fits, so it can exceed wall time when running in parallel.
    pub fit_seconds: f64,
    pub eval_seconds: f64,
    pub wall_seconds: f64,
}

/// How the noisy splits and repetitions were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub noise: String,
    pub repetitions: String,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            noise: "added to the full dataset before the train/test split".into(),
            repetitions: "repeated runs on a fixed split with fresh noise and walk seeds, not cross-validation".into(),
        }
    }
}

/// Written to `record.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub protocol: Protocol,
    pub config: ExperimentConfig,
    pub repetitions: Vec<RepSummary>,
    pub fits_total: usize,
    pub fits_computed: usize,
    pub fits_resumed: usize,
    pub cells: usize,
    pub failed_cells: usize,
    pub timings: StageTimes,
    pub summary: String,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::write_failed(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::write_failed(path, e))
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "dataset",
    "alpha",
    "beta",
    "rho",
    "l",
    "rep",
    "hamming_loss",
    "ranking_loss",
    "one_error",
    "coverage",
    "coverage_normalized",
    "average_precision",
    "skipped_instances",
    "error",
];

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn summary_csv(rows: &[CellRow]) -> Vec<u8> {
    csv_bytes(
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            let mut v = vec![
                r.dataset.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.rho.to_string(),
                r.l.to_string(),
                r.rep.to_string(),
            ];
            match &r.metrics {
                Some(m) => {
                    v.extend(Metric::ALL.iter().map(|k| k.value(m).to_string()));
                    v.push(m.skipped_instances.to_string());
                }
                None => v.extend(std::iter::repeat_n(String::new(), 7)),
            }
            v.push(r.error.clone().unwrap_or_default());
            v
        }),
    )
}

/// Mean and sample standard deviation of each metric over the successful
/// repetitions of one (dataset, α, β, ρ, l).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub dataset: String,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub l: usize,
    pub reps: usize,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

/// Rows must be sorted so that repetitions of a cell are adjacent.
pub fn aggregate(rows: &[CellRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for group in rows.chunk_by(|a, b| {
        (&a.dataset, a.alpha, a.beta, a.rho, a.l) == (&b.dataset, b.alpha, b.beta, b.rho, b.l)
    }) {
        let ok: Vec<&MetricReport> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
        if ok.is_empty() {
            continue;
        }
        let n = ok.len() as f64;
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for (k, metric) in Metric::ALL.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|m| metric.value(m)).collect();
            mean[k] = vals.iter().sum::<f64>() / n;
            if ok.len() > 1 {
                let ss: f64 = vals.iter().map(|v| (v - mean[k]).powi(2)).sum();
                std[k] = (ss / (n - 1.0)).sqrt();
            }
        }
        let first = &group[0];
        out.push(AggregateRow {
            dataset: first.dataset.clone(),
            alpha: first.alpha,
            beta: first.beta,
            rho: first.rho,
            l: first.l,
            reps: ok.len(),
            mean,
            std,
        });
    }
    out
}

fn aggregate_csv(agg: &[AggregateRow]) -> Vec<u8> {
    let mut header: Vec<String> = ["dataset", "alpha", "beta", "rho", "l", "reps"]
        .map(String::from)
        .to_vec();
    for m in Metric::ALL {
        header.push(format!("{}_mean", m.name()));
        header.push(format!("{}_std", m.name()));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header,
        agg.iter().map(|a| {
            let mut v = vec![
                a.dataset.clone(),
                a.alpha.to_string(),
                a.beta.to_string(),
                a.rho.to_string(),
                a.l.to_string(),
                a.reps.to_string(),
            ];
            for k in 0..6 {
                v.push(a.mean[k].to_string());
                v.push(a.std[k].to_string());
            }
            v
        }),
    )
}

/// The best aggregate row per dataset and metric; ties keep grid order.
pub fn best_rows<'a>(agg: &'a [AggregateRow], dataset: &str) -> Vec<(Metric, &'a AggregateRow)> {
    Metric::ALL
        .iter()
        .filter_map(|&metric| {
            let k = Metric::ALL
                .iter()
                .position(|&m| m == metric)
                .expect("listed");
            let mut best: Option<&AggregateRow> = None;
            for row in agg.iter().filter(|r| r.dataset == dataset) {
                if best.is_none_or(|b| metric.direction().better(row.mean[k], b.mean[k])) {
                    best = Some(row);
                }
            }
            best.map(|b| (metric, b))
        })
        .collect()
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::LowerIsBetter => "lower",
        Direction::HigherIsBetter => "higher",
    }
}

fn best_csv(config: &ExperimentConfig, agg: &[AggregateRow]) -> Vec<u8> {
    let mut rows = Vec::new();
    for d in &config.datasets {
        for (metric, row) in best_rows(agg, &d.name) {
            let k = Metric::ALL
                .iter()
                .position(|&m| m == metric)
                .expect("listed");
            rows.push(vec![
                d.name.clone(),
                metric.name().to_string(),
                direction_name(metric.direction()).to_string(),
                row.alpha.to_string(),
                row.beta.to_string(),
                row.rho.to_string(),
                row.l.to_string(),
                row.mean[k].to_string(),
                row.std[k].to_string(),
            ]);
        }
    }
    csv_bytes(
        &[
            "dataset",
            "metric",
            "direction",
            "alpha",
            "beta",
            "rho",
            "l",
            "mean",
            "std",
        ],
        rows,
    )
}

/// Friedman ranks of the ρ settings (best mean over α, β, l per dataset),
/// one CSV per metric, plus Bonferroni-Dunn summary lines against the
/// best-ranked setting.
fn rho_comparison(config: &ExperimentConfig, agg: &[AggregateRow], out: &Path) -> CliResult<()> {
    if config.rho_list.len() < 2 {
        return Ok(());
    }
    let methods: Vec<String> = config.rho_list.iter().map(|r| format!("rho={r}")).collect();
    let datasets: Vec<String> = config.datasets.iter().map(|d| d.name.clone()).collect();
    let (k, n) = (methods.len(), datasets.len());
    let mut lines = Vec::new();
    fs::create_dir_all(out.join("ranks")).map_err(|e| CliError::write_failed(out, e))?;
    for (mi, metric) in Metric::ALL.iter().enumerate() {
        let mut values = Array2::from_elem((k, n), f64::NAN);
        for (ri, &rho) in config.rho_list.iter().enumerate() {
            for (di, name) in datasets.iter().enumerate() {
                for row in agg.iter().filter(|r| &r.dataset == name && r.rho == rho) {
                    let v = row.mean[mi];
                    let cur = values[[ri, di]];
                    if cur.is_nan() || metric.direction().better(v, cur) {
                        values[[ri, di]] = v;
                    }
                }
            }
        }
        if values.iter().any(|v| v.is_nan()) {
            lines.push(format!(
                "{metric}: skipped, some rho setting has no successful cell"
            ));
            continue;
        }
        let table = friedman_ranks(
            methods.clone(),
            datasets.clone(),
            values,
            metric.direction(),
        )?;
        write_file(
            &out.join("ranks").join(format!("{metric}.csv")),
            table.to_csv().as_bytes(),
        )?;
        let control = table
            .avg_ranks
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| methods[i].clone())
            .expect("k >= 2");
        match bonferroni_dunn_q05(k) {
            Some(q) => {
                let cd = critical_difference(k, n, q)?;
                for line in table.cd_summary(&control, cd)? {
                    lines.push(format!("{metric}: {line}"));
                }
            }
            None => lines.push(format!(
                "{metric}: no tabulated Bonferroni-Dunn q for {k} settings; ranks only"
            )),
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    write_file(&out.join("cd_summary.txt"), text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::write_failed(path, e))
}

/// Run the whole grid, writing results into `out`.
pub fn run_bench(config: &ExperimentConfig, out: &Path) -> CliResult<RunRecord> {
    config.validate()?;
    let wall = Instant::now();
    let fingerprint = config.fingerprint();
    fs::create_dir_all(out.join("runs")).map_err(|e| CliError::write_failed(out, e))?;
    let mut times = StageTimes::default();

    let t0 = Instant::now();
    let loaded: Vec<(Dataset, msfs_core::SplitSpec)> = (0..config.datasets.len())
        .map(|d| load_full(config, d))
        .collect::<CliResult<_>>()?;
    times.load_seconds = t0.elapsed().as_secs_f64();

    let rep_keys: Vec<(usize, usize)> = (0..config.datasets.len())
        .flat_map(|d| (0..config.repetitions).map(move |r| (d, r)))
        .collect();
    let reps: Vec<(RepSeeds, Result<RepData, String>)> = rep_keys
        .par_iter()
        .map(|&(d, r)| {
            let seeds = rep_seeds(config, d, r);
            let (full, split) = &loaded[d];
            (
                seeds,
                build_rep(config, full, *split, seeds).map_err(|e| format!("prepare/graph: {e}")),
            )
        })
        .collect();
    let contexts: Vec<Result<(&RepData, FitContext<'_>), String>> = reps
        .iter()
        .map(|(_, data)| {
            let data = data.as_ref().map_err(Clone::clone)?;
            let ctx = FitContext::new(data.train.features(), &data.y, &data.graph.laplacian)
                .map_err(|e| e.to_string())?;
            Ok((data, ctx))
        })
        .collect();
    let mut summaries = Vec::new();
    for (seeds, data) in &reps {
        match data {
            Ok(d) => {
                times.prepare_seconds += d.prepare_seconds;
                times.graph_seconds += d.graph_seconds;
                summaries.push(RepSummary {
                    seeds: *seeds,
                    sigma: Some(d.sigma),
                    isolated: d.isolated,
                    early_terminations: d.early_terminations,
                    error: None,
                });
            }
            Err(e) => summaries.push(RepSummary {
                seeds: *seeds,
                sigma: None,
                isolated: 0,
                early_terminations: 0,
                error: Some(e.clone()),
            }),
        }
    }

    let mut keys = Vec::new();
    for (ri_flat, &(d, rep)) in rep_keys.iter().enumerate() {
        for a in 0..config.alpha_list.len() {
            for b in 0..config.beta_list.len() {
                for r in 0..config.rho_list.len() {
                    keys.push((
                        ri_flat,
                        FitKey {
                            dataset: d,
                            rep,
                            a,
                            b,
                            r,
                        },
                    ));
                }
            }
        }
    }
    let results: Vec<(FitRecord, bool)> = keys
        .par_iter()
        .map(|&(flat, key)| -> CliResult<(FitRecord, bool)> {
            let path = run_file(out, config, key);
            if let Some(rec) = cached(&path, &fingerprint, config.feature_counts.len()) {
                return Ok((rec, true));
            }
            let rep = contexts[flat].as_ref().map(|(d, c)| (*d, c));
            let rec = run_fit(config, &fingerprint, key, rep);
            let mut bytes = serde_json::to_vec_pretty(&rec).expect("record serializes");
            bytes.push(b'\n');
            write_atomic(&path, &bytes)?;
            Ok((rec, false))
        })
        .collect::<CliResult<_>>()?;

    // (dataset, alpha, beta, rho, l, rep) grid positions, for sorting
    let mut rows: Vec<([usize; 6], CellRow)> = Vec::new();
    let mut computed = 0;
    for ((_, key), (rec, resumed)) in keys.iter().zip(&results) {
        if !*resumed {
            computed += 1;
            times.fit_seconds += rec.fit_seconds;
            times.eval_seconds += rec.eval_seconds;
        }
        for (li, row) in rec.rows.iter().enumerate() {
            rows.push(([key.dataset, key.a, key.b, key.r, li, key.rep], row.clone()));
        }
    }
    rows.sort_by_key(|(k, _)| *k);
    let rows: Vec<CellRow> = rows.into_iter().map(|(_, r)| r).collect();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();

    let summary_path = out.join("summary.csv");
    write_file(&summary_path, &summary_csv(&rows))?;
    let agg = aggregate(&rows);
    write_file(&out.join("aggregate.csv"), &aggregate_csv(&agg))?;
    write_file(&out.join("best.csv"), &best_csv(config, &agg))?;
    rho_comparison(config, &agg, out)?;

    times.wall_seconds = wall.elapsed().as_secs_f64();
    let record = RunRecord {
        fingerprint,
        protocol: Protocol::default(),
        config: config.clone(),
        repetitions: summaries,
        fits_total: keys.len(),
        fits_computed: computed,
        fits_resumed: keys.len() - computed,
        cells: rows.len(),
        failed_cells: failed,
        timings: times,
        summary: summary_path.display().to_string(),
    };
    let mut bytes = serde_json::to_vec_pretty(&record).expect("record serializes");
    bytes.push(b'\n');
    write_file(&out.join("record.json"), &bytes)?;
    Ok(record)
}

/// Read `summary.csv` back into rows.
pub fn read_summary(path: &Path) -> CliResult<Vec<CellRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let f = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| {
            f(i).parse::<f64>().map_err(|_| {
                CliError::io(format!(
                    "{}: bad number in column {}",
                    path.display(),
                    i + 1
                ))
            })
        };
        let int = |i: usize| {
            f(i).parse::<usize>().map_err(|_| {
                CliError::io(format!(
                    "{}: bad integer in column {}",
                    path.display(),
                    i + 1
                ))
            })
        };
        let error = f(13);
        let metrics = if error.is_empty() {
            Some(MetricReport {
                hamming_loss: num(6)?,
                ranking_loss: num(7)?,
                one_error: num(8)?,
                coverage: num(9)?,
                coverage_normalized: num(10)?,
                average_precision: num(11)?,
                skipped_instances: int(12)?,
            })
        } else {
            None
        };
        rows.push(CellRow {
            dataset: f(0),
            alpha: num(1)?,
            beta: num(2)?,
            rho: num(3)?,
            l: int(4)?,
            rep: int(5)?,
            metrics,
            error: (!error.is_empty()).then_some(error),
        });
    }
    Ok(rows)
}

/// The noisy, split and standardized data plus graph for one repetition,
/// exactly as the grid sees it.
pub fn prepare_rep(config: &ExperimentConfig, dataset: usize, rep: usize) -> CliResult<RepData> {
    let (full, split) = load_full(config, dataset)?;
    Ok(build_rep(
        config,
        &full,
        split,
        rep_seeds(config, dataset, rep),
    )?)
}

/// Recompute a single cell from scratch, without the cache or any sharing.
pub fn evaluate_cell(
    config: &ExperimentConfig,
    dataset: usize,
    rep: usize,
    params: &SolverParams,
    l: usize,
) -> CliResult<MetricReport> {
    let data = prepare_rep(config, dataset, rep)?;
    let state =
        FitContext::new(data.train.features(), &data.y, &data.graph.laplacian)?.fit(params)?;
    let idx = select_top(&rank_features(&state), l)?;
    Ok(evaluate_subset(
        &data.train,
        &data.test,
        &idx,
        config.mlknn_k,
        config.mlknn_smooth,
    )?
    .0)
}

#[derive(Serialize)]
struct BenchReport<'a> {
    fingerprint: &'a str,
    out_dir: String,
    fits_total: usize,
    fits_computed: usize,
    fits_resumed: usize,
    cells: usize,
    failed_cells: usize,
    wall_seconds: f64,
}

pub fn cmd_bench(args: &BenchArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory: pass --out or set output_dir"))?;
    let record = run_bench(&config, &out)?;
    let report = BenchReport {
        fingerprint: &record.fingerprint,
        out_dir: out.display().to_string(),
        fits_total: record.fits_total,
        fits_computed: record.fits_computed,
        fits_resumed: record.fits_resumed,
        cells: record.cells,
        failed_cells: record.failed_cells,
        wall_seconds: record.timings.wall_seconds,
    };
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    stdout
        .write_all(&bytes)
        .map_err(|e| CliError::io(format!("cannot write to stdout: {e}")))
}
