//! Neighborhood graph construction by random walks over a joint
//! feature/label similarity.
//!
//! The pipeline is: Euclidean distances -> Gaussian weights `V` -> label
//! Jaccard matrix `R` -> joint similarity `T = V ⊙ R` -> row-stochastic
//! transition matrix -> per-origin walk counts `C` -> `S = (C + Cᵀ) / 2` and
//! its Laplacian `L = diag(S 1) - S`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Default walk length.
pub const DEFAULT_WALK_STEPS: usize = 80;

/// `d_ij = ‖x_i - x_j‖₂`.
pub fn pairwise_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..n)
                .map(|j| {
                    xi.iter()
                        .zip(x.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("n x n distances")
}

/// `v_ij = exp(-d_ij² / σ²)`.
pub fn gaussian_weights(dist: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let s2 = sigma * sigma;
    Ok(dist.mapv(|d| (-(d * d) / s2).exp()))
}

/// Jaccard index between label sets, with a zero diagonal and zero for pairs
/// of empty label sets.
pub fn jaccard_matrix(labels: &Array2<u8>) -> Array2<f64> {
    let n = labels.nrows();
    let sizes: Vec<u32> = labels
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| u32::from(v)).sum())
        .collect();
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let inter: u32 = labels
                .row(i)
                .iter()
                .zip(labels.row(j).iter())
                .map(|(&a, &b)| u32::from(a & b))
                .sum();
            let union = sizes[i] + sizes[j] - inter;
            if union > 0 {
                let v = f64::from(inter) / f64::from(union);
                r[[i, j]] = v;
                r[[j, i]] = v;
            }
        }
    }
    r
}

/// How the Gaussian bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// Median of the nonzero pairwise distances (1.0 if there are none).
    #[default]
    Median,
    Fixed(f64),
}

impl SigmaRule {
    pub fn resolve(&self, dist: &Array2<f64>) -> f64 {
        match *self {
            SigmaRule::Fixed(s) => s,
            SigmaRule::Median => median_nonzero_distance(dist).unwrap_or(1.0),
        }
    }
}

/// Median of the strictly positive upper-triangle entries.
pub fn median_nonzero_distance(dist: &Array2<f64>) -> Option<f64> {
    let n = dist.nrows();
    let mut values: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| dist[[i, j]])
        .filter(|&d| d > 0.0)
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// The intermediate matrices of the joint similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSimilarity {
    pub dist: Array2<f64>,
    pub gauss: Array2<f64>,
    pub jaccard: Array2<f64>,
    /// `gauss ⊙ jaccard`.
    pub joint: Array2<f64>,
    pub sigma: f64,
}

pub fn joint_similarity(
    features: &Array2<f64>,
    labels: &Array2<u8>,
    sigma_rule: SigmaRule,
) -> Result<JointSimilarity> {
    if features.nrows() != labels.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} label rows",
            features.nrows(),
            labels.nrows()
        )));
    }
    let dist = pairwise_distances(features);
    let sigma = sigma_rule.resolve(&dist);
    let gauss = gaussian_weights(&dist, sigma)?;
    let jaccard = jaccard_matrix(labels);
    let joint = &gauss * &jaccard;
    Ok(JointSimilarity {
        dist,
        gauss,
        jaccard,
        joint,
        sigma,
    })
}

/// A row-stochastic transition matrix plus bookkeeping for rows that had no
/// joint similarity mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub probs: Array2<f64>,
    /// Rows whose joint-similarity sum was zero.
    pub isolated: Vec<usize>,
    /// Isolated rows filled from the off-diagonal Gaussian row.
    pub fallback: Vec<usize>,
    /// Isolated rows with no usable fallback; these stay all-zero and walks
    /// from them record nothing.
    pub dead: Vec<usize>,
}

/// Normalize `joint` by its row sums. Zero-sum rows are replaced by the
/// normalized off-diagonal row of `fallback` when given and nonzero.
pub fn transition_matrix(
    joint: &Array2<f64>,
    fallback: Option<&Array2<f64>>,
) -> Result<TransitionMatrix> {
    let (n, cols) = joint.dim();
    if n != cols {
        return Err(Error::ShapeMismatch(format!("similarity is {n} x {cols}")));
    }
    if let Some(fb) = fallback {
        if fb.dim() != joint.dim() {
            return Err(Error::ShapeMismatch(
                "fallback weights differ in shape".into(),
            ));
        }
    }
    if joint.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "similarity entries must be finite and non-negative".into(),
        ));
    }
    let mut probs = joint.clone();
    let mut isolated = Vec::new();
    let mut fallback_rows = Vec::new();
    let mut dead = Vec::new();
    for i in 0..n {
        let sum: f64 = joint.row(i).sum();
        if sum > 0.0 {
            probs.row_mut(i).mapv_inplace(|v| v / sum);
            continue;
        }
        isolated.push(i);
        let replacement = fallback.and_then(|fb| {
            let mut row = fb.row(i).to_owned();
            row[i] = 0.0;
            let s = row.sum();
            (s > 0.0 && s.is_finite()).then(|| row / s)
        });
        match replacement {
            Some(row) => {
                probs.row_mut(i).assign(&row);
                fallback_rows.push(i);
            }
            None => {
                probs.row_mut(i).fill(0.0);
                dead.push(i);
            }
        }
    }
    Ok(TransitionMatrix {
        probs,
        isolated,
        fallback: fallback_rows,
        dead,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// A path of up to `steps` moves; each arrival forbids stepping straight
    /// back to the node just left.
    #[default]
    Dfs,
    /// `steps` independent one-step draws from the origin.
    Bfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub steps: usize,
    pub mode: WalkMode,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_WALK_STEPS,
            mode: WalkMode::Dfs,
            seed: 0,
        }
    }
}

/// A DFS walk that ran out of places to go before completing its steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyTermination {
    pub origin: usize,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCounts {
    /// `counts[[i, j]]`: landings on `j` by the walk originating at `i`.
    pub counts: Array2<u32>,
    pub early_terminations: Vec<EarlyTermination>,
}

fn sample_index(row: &[f64], total: f64, rng: &mut Rng) -> Option<usize> {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(j);
            if target < acc {
                return Some(j);
            }
        }
    }
    last
}

fn walk_dfs(probs: &Array2<f64>, origin: usize, steps: usize, rng: &mut Rng) -> (Vec<u32>, usize) {
    let n = probs.nrows();
    let mut counts = vec![0u32; n];
    // Per-origin copy-on-write rows of the transition matrix.
    let mut edited: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut current = origin;
    for step in 0..steps {
        let row: &[f64] = match edited.get(&current) {
            Some(r) => r,
            None => probs.row(current).to_slice().expect("standard layout"),
        };
        let total: f64 = row.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return (counts, step);
        }
        let Some(next) = sample_index(row, total, rng) else {
            return (counts, step);
        };
        counts[next] += 1;
        let mut next_row = edited
            .remove(&next)
            .unwrap_or_else(|| probs.row(next).to_vec());
        next_row[current] = 0.0;
        let s: f64 = next_row.iter().sum();
        if s > 0.0 {
            next_row.iter_mut().for_each(|v| *v /= s);
        }
        edited.insert(next, next_row);
        current = next;
    }
    (counts, steps)
}

fn walk_bfs(row: ArrayView1<f64>, steps: usize, rng: &mut Rng) -> Vec<u32> {
    let n = row.len();
    let mut counts = vec![0u32; n];
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &p in row.iter() {
        acc += p;
        cumulative.push(acc);
    }
    if acc.is_nan() || acc <= 0.0 {
        return counts;
    }
    let last_positive = row.iter().rposition(|&p| p > 0.0).expect("positive mass");
    for _ in 0..steps {
        let target = rng.random::<f64>() * acc;
        // first index whose cumulative mass exceeds the target
        let mut j = cumulative.partition_point(|&c| c <= target);
        if j > last_positive {
            j = last_positive;
        }
        counts[j] += 1;
    }
    counts
}

/// Run one walk per origin. Each origin draws from its own generator seeded by
/// `(cfg.seed, origin)`, so the result does not depend on scheduling.
pub fn random_walk_counts(transition: &TransitionMatrix, cfg: &WalkConfig) -> Result<WalkCounts> {
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument(
            "walk steps must be at least 1".into(),
        ));
    }
    let probs = transition.probs.as_standard_layout().into_owned();
    let n = probs.nrows();
    let dead: Vec<bool> = {
        let mut d = vec![false; n];
        transition.dead.iter().for_each(|&i| d[i] = true);
        d
    };
    let per_origin: Vec<(Vec<u32>, Option<EarlyTermination>)> = (0..n)
        .into_par_iter()
        .map(|origin| {
            if dead[origin] {
                return (vec![0; n], None);
            }
            let mut rng = rng_from_seed(derive_seed(cfg.seed, "walk", &[origin as u64]));
            match cfg.mode {
                WalkMode::Bfs => (walk_bfs(probs.row(origin), cfg.steps, &mut rng), None),
                WalkMode::Dfs => {
                    let (counts, taken) = walk_dfs(&probs, origin, cfg.steps, &mut rng);
                    let early = (taken < cfg.steps).then_some(EarlyTermination {
                        origin,
                        steps_taken: taken,
                    });
                    (counts, early)
                }
            }
        })
        .collect();

    let mut counts = Array2::zeros((n, n));
    let mut early_terminations = Vec::new();
    for (i, (row, early)) in per_origin.into_iter().enumerate() {
        counts.row_mut(i).assign(&Array1::from(row));
        early_terminations.extend(early);
    }
    Ok(WalkCounts {
        counts,
        early_terminations,
    })
}

/// Symmetrized walk counts and the derived graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGraph {
    pub counts: Array2<u32>,
    /// `(C + Cᵀ) / 2`.
    pub s: Array2<f64>,
    /// Row sums of `s`.
    pub degree: Array1<f64>,
    /// `diag(degree) - s`.
    pub laplacian: Array2<f64>,
}

impl NeighborhoodGraph {
    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    /// Build from an already symmetric similarity, e.g. one read back from a
    /// coordinate-list dump. `counts` is left empty (0 x 0).
    pub fn from_similarity(s: Array2<f64>) -> Result<Self> {
        let (n, cols) = s.dim();
        if n != cols {
            return Err(Error::ShapeMismatch(format!("similarity is {n} x {cols}")));
        }
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "similarity entries must be finite and non-negative".into(),
            ));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if s[[i, j]] != s[[j, i]] {
                    return Err(Error::InvalidArgument(format!(
                        "similarity is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let degree = s.sum_axis(ndarray::Axis(1));
        let mut laplacian = -&s;
        for i in 0..n {
            laplacian[[i, i]] += degree[i];
        }
        Ok(Self {
            counts: Array2::zeros((0, 0)),
            s,
            degree,
            laplacian,
        })
    }
}

pub fn neighborhood_graph(counts: &Array2<u32>) -> Result<NeighborhoodGraph> {
    let (n, cols) = counts.dim();
    if n != cols {
        return Err(Error::ShapeMismatch(format!("counts are {n} x {cols}")));
    }
    let c = counts.mapv(f64::from);
    let s = (&c + &c.t()) / 2.0;
    let mut graph = NeighborhoodGraph::from_similarity(s)?;
    graph.counts = counts.clone();
    Ok(graph)
}

/// Diagnostics emitted alongside a sampled graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagnostics {
    pub n: usize,
    pub sigma: f64,
    pub mode: WalkMode,
    pub steps: usize,
    pub seed: u64,
    pub isolated: Vec<usize>,
    pub fallback: Vec<usize>,
    pub dead: Vec<usize>,
    pub early_terminations: Vec<EarlyTermination>,
}

/// Full pipeline from a labelled feature matrix to the neighborhood graph.
pub fn build_graph(
    features: &Array2<f64>,
    labels: &Array2<u8>,
    sigma_rule: SigmaRule,
    cfg: &WalkConfig,
) -> Result<(NeighborhoodGraph, GraphDiagnostics)> {
    let sim = joint_similarity(features, labels, sigma_rule)?;
    let transition = transition_matrix(&sim.joint, Some(&sim.gauss))?;
    let walks = random_walk_counts(&transition, cfg)?;
    let graph = neighborhood_graph(&walks.counts)?;
    let diagnostics = GraphDiagnostics {
        n: features.nrows(),
        sigma: sim.sigma,
        mode: cfg.mode,
        steps: cfg.steps,
        seed: cfg.seed,
        isolated: transition.isolated,
        fallback: transition.fallback,
        dead: transition.dead,
        early_terminations: walks.early_terminations,
    };
    Ok((graph, diagnostics))
}

/// Write the nonzero entries of `s` as `i<TAB>j<TAB>value` lines, 0-based,
/// sorted by `(i, j)`.
pub fn write_coordinate_list<W: Write>(s: &Array2<f64>, mut out: W) -> std::io::Result<()> {
    for ((i, j), &v) in s.indexed_iter() {
        if v != 0.0 {
            writeln!(out, "{i}\t{j}\t{v}")?;
        }
    }
    Ok(())
}

/// Inverse of [`write_coordinate_list`] for an `n`-node graph.
pub fn read_coordinate_list<R: BufRead>(input: R, n: usize) -> Result<Array2<f64>> {
    let mut s = Array2::zeros((n, n));
    for (line_no, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: &str| Error::InvalidArgument(format!("graph line {}: {m}", line_no + 1));
        let mut parts = line.split('\t');
        let (Some(i), Some(j), Some(v), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected three tab-separated fields"));
        };
        let i: usize = i.parse().map_err(|_| bad("bad row index"))?;
        let j: usize = j.parse().map_err(|_| bad("bad column index"))?;
        let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
        if i >= n || j >= n {
            return Err(bad("index out of range"));
        }
        s[[i, j]] = v;
    }
    Ok(s)
}
