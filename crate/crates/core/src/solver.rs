//! Alternating least-squares solver for manifold-regularized regression with
//! a mixed ℓ2,1 / squared-Frobenius penalty:
//!
//! ```text
//! min_{W,b}  ½‖XW + 1b − Y‖²_F + (α/2) tr(WᵀXᵀLXW)
//!            + (β/2) (ρ‖W‖₂,₁ + (1−ρ)‖W‖²_F)
//! ```
//!
//! The ℓ2,1 term is handled by iterative reweighting: with `U` diagonal,
//! `U_ii = 1 / max(2‖w_i‖₂, ε)`, each W-step solves the SPD system
//! `(Xᵀ(H + αL)X + β(1−ρ)I + βρU) W = XᵀHY` where `H` is the centering
//! matrix, and the bias is recovered as the column means of `Y − XW`. Every
//! W-step minimizes a majorizer of the objective, so the objective trace is
//! non-increasing.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeighborhoodGraph;
use crate::linalg::solve_spd;

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 1e-64;

/// Relative slack allowed when checking that the objective never increases.
pub const MONOTONE_SLACK: f64 = 1e-9;

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Manifold weight.
    pub alpha: f64,
    /// Overall penalty weight.
    pub beta: f64,
    /// Share of the penalty given to ℓ2,1 (the rest goes to Frobenius).
    pub rho: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl SolverParams {
    pub fn new(alpha: f64, beta: f64, rho: f64) -> Self {
        Self {
            alpha,
            beta,
            rho,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Coefficients, p x m.
    pub w: Array2<f64>,
    /// Bias, length m.
    pub b: Array1<f64>,
    /// Diagonal of the reweighting matrix used for the final W-step, so that
    /// `w` is the exact minimizer of the smoothed objective with this `U`.
    pub u_diag: Array1<f64>,
    /// Objective value after each iteration (true ℓ2,1 norm).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `Σ_i ‖w_i‖₂`.
pub fn l21_norm(w: &Array2<f64>) -> f64 {
    row_norms(w).sum()
}

pub fn row_norms(w: &Array2<f64>) -> Array1<f64> {
    w.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}

fn check_shapes(x: &Array2<f64>, y: &Array2<f64>, laplacian: &Array2<f64>) -> Result<()> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "X has {n} rows, Y has {}",
            y.nrows()
        )));
    }
    if laplacian.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "Laplacian is {:?}, expected ({n}, {n})",
            laplacian.dim()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data"));
    }
    Ok(())
}

/// Quantities shared by every iteration (and every parameter setting) for a
/// fixed `(X, Y, L)`: `XᵀHX`, `XᵀLX` and `XᵀHY`.
#[derive(Debug, Clone)]
pub struct FitContext<'a> {
    x: &'a Array2<f64>,
    y: &'a Array2<f64>,
    xthx: Array2<f64>,
    xtlx: Array2<f64>,
    xthy: Array2<f64>,
}

impl<'a> FitContext<'a> {
    pub fn new(x: &'a Array2<f64>, y: &'a Array2<f64>, laplacian: &'a Array2<f64>) -> Result<Self> {
        check_shapes(x, y, laplacian)?;
        let n = x.nrows() as f64;
        let x_mean = x.sum_axis(Axis(0)) / n;
        let xc = x - &x_mean;
        let xthx = xc.t().dot(&xc);
        let xthy = xc.t().dot(y);
        let xtlx = xc.t().dot(&laplacian.dot(&xc));
        // Symmetrize away round-off so the factorization sees an exactly
        // symmetric matrix.
        let xtlx = (&xtlx + &xtlx.t()) / 2.0;
        Ok(Self {
            x,
            y,
            xthx,
            xtlx,
            xthy,
        })
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// W-step for a fixed reweighting diagonal.
    pub fn update_w(&self, u_diag: &Array1<f64>, params: &SolverParams) -> Result<Array2<f64>> {
        let p = self.n_features();
        if u_diag.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "U has {} entries, expected {p}",
                u_diag.len()
            )));
        }
        let mut system = &self.xthx + &(&self.xtlx * params.alpha);
        let ridge = params.beta * (1.0 - params.rho);
        for i in 0..p {
            system[[i, i]] += ridge + params.beta * params.rho * u_diag[i];
        }
        solve_spd(&system, &self.xthy)
    }

    pub fn update_b(&self, w: &Array2<f64>) -> Array1<f64> {
        update_b(self.x, self.y, w)
    }

    pub fn objective(&self, w: &Array2<f64>, b: &Array1<f64>, params: &SolverParams) -> f64 {
        let mut residual = self.x.dot(w) + b;
        residual -= self.y;
        let data = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
        // L rows sum to zero, so tr(WᵀXᵀLXW) = tr(WᵀXcᵀLXcW).
        let manifold = if params.alpha == 0.0 {
            0.0
        } else {
            0.5 * params.alpha * (&self.xtlx.dot(w) * w).sum()
        };
        data + manifold + penalty(w, params)
    }

    /// Run the alternating updates from `U = I`.
    pub fn fit(&self, params: &SolverParams) -> Result<SolverState> {
        params.validate()?;
        let p = self.n_features();
        let mut u = Array1::ones(p);
        let mut trace: Vec<f64> = Vec::with_capacity(params.max_iters);
        let mut converged = false;
        let mut w = Array2::zeros((p, self.y.ncols()));
        let mut b = Array1::zeros(self.y.ncols());
        let mut u_used = u.clone();
        for t in 0..params.max_iters {
            w = self.update_w(&u, params)?;
            b = self.update_b(&w);
            let f = self.objective(&w, &b, params);
            if !f.is_finite() {
                return Err(Error::NonFinite("objective"));
            }
            if let Some(&prev) = trace.last() {
                if f > prev + MONOTONE_SLACK * prev.abs().max(1.0) {
                    return Err(Error::NonMonotone {
                        iteration: t,
                        previous: prev,
                        current: f,
                    });
                }
            }
            trace.push(f);
            u_used = std::mem::replace(&mut u, update_u(&w, params.epsilon));
            if trace.len() >= 2 {
                let prev = trace[trace.len() - 2];
                if (prev - f).abs() / prev.abs().max(1.0) < params.tol {
                    converged = true;
                    break;
                }
            }
        }
        Ok(SolverState {
            w,
            b,
            u_diag: u_used,
            iterations: trace.len(),
            objective_trace: trace,
            converged,
        })
    }
}

fn penalty(w: &Array2<f64>, params: &SolverParams) -> f64 {
    let frob2: f64 = w.iter().map(|v| v * v).sum();
    0.5 * params.beta * (params.rho * l21_norm(w) + (1.0 - params.rho) * frob2)
}

/// Objective value with the true ℓ2,1 norm. Parameters are not range-checked
/// here, so degenerate settings such as `β = 0` can be evaluated.
pub fn objective(
    x: &Array2<f64>,
    y: &Array2<f64>,
    laplacian: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    params: &SolverParams,
) -> Result<f64> {
    check_shapes(x, y, laplacian)?;
    if w.dim() != (x.ncols(), y.ncols()) || b.len() != y.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "W is {:?} and b has {} entries for p={}, m={}",
            w.dim(),
            b.len(),
            x.ncols(),
            y.ncols()
        )));
    }
    let mut residual = x.dot(w) + b;
    residual -= y;
    let data = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
    let z = x.dot(w);
    let manifold = 0.5 * params.alpha * (&laplacian.dot(&z) * &z).sum();
    Ok(data + manifold + penalty(w, params))
}

/// Optimal bias for fixed W: column means of `Y − XW`.
pub fn update_b(x: &Array2<f64>, y: &Array2<f64>, w: &Array2<f64>) -> Array1<f64> {
    let residual = y - &x.dot(w);
    residual.sum_axis(Axis(0)) / x.nrows() as f64
}

/// `U_ii = 1 / max(2‖w_i‖₂, ε)`.
pub fn update_u(w: &Array2<f64>, epsilon: f64) -> Array1<f64> {
    row_norms(w).mapv(|r| 1.0 / (2.0 * r).max(epsilon))
}

/// One W-step from scratch. See [`FitContext::update_w`].
pub fn update_w(
    x: &Array2<f64>,
    y: &Array2<f64>,
    laplacian: &Array2<f64>,
    u_diag: &Array1<f64>,
    params: &SolverParams,
) -> Result<Array2<f64>> {
    FitContext::new(x, y, laplacian)?.update_w(u_diag, params)
}

pub fn fit(
    x: &Array2<f64>,
    y: &Array2<f64>,
    graph: &NeighborhoodGraph,
    params: &SolverParams,
) -> Result<SolverState> {
    FitContext::new(x, y, &graph.laplacian)?.fit(params)
}

/// Feature scores `‖w_i‖₂` and the descending order they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub scores: Vec<f64>,
    /// Feature indices by descending score; equal scores keep ascending index.
    pub order: Vec<usize>,
}

pub fn rank_by_scores(scores: Vec<f64>) -> FeatureRanking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    FeatureRanking { scores, order }
}

pub fn rank_features(state: &SolverState) -> FeatureRanking {
    rank_by_scores(row_norms(&state.w).to_vec())
}

/// The `l` highest-scoring features.
pub fn select_top(ranking: &FeatureRanking, l: usize) -> Result<Vec<usize>> {
    let p = ranking.order.len();
    if l == 0 || l > p {
        return Err(Error::InvalidArgument(format!(
            "cannot select {l} of {p} features"
        )));
    }
    Ok(ranking.order[..l].to_vec())
}

/// Serialized form of a feature-selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub params: SolverParams,
}

impl SelectionResult {
    pub fn from_state(state: &SolverState, params: &SolverParams, l: usize) -> Result<Self> {
        let ranking = rank_features(state);
        Ok(Self {
            selected_indices: select_top(&ranking, l)?,
            scores: ranking.scores,
            objective_trace: state.objective_trace.clone(),
            iterations: state.iterations,
            converged: state.converged,
            params: *params,
        })
    }
}
