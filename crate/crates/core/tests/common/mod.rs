//! Independent oracles and random-instance generators shared by the
//! integration tests. Everything here is written with plain loops so that it
//! does not share code paths with the library.
#![allow(dead_code)]

use msfs_core::seed::{rng_from_seed, Rng};
use msfs_core::SolverParams;
use ndarray::{Array1, Array2};
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    rng_from_seed(seed)
}

pub fn uniform(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

pub fn binary(rng: &mut Rng, rows: usize, cols: usize, p: f64) -> Array2<u8> {
    Array2::from_shape_simple_fn((rows, cols), || u8::from(rng.random_bool(p)))
}

/// Laplacian of a random sparse symmetric nonnegative similarity.
pub fn random_laplacian(rng: &mut Rng, n: usize) -> Array2<f64> {
    let mut s = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.3) {
                let v = f64::from(rng.random_range(1u32..6)) / 2.0;
                s[[i, j]] = v;
                s[[j, i]] = v;
            }
        }
    }
    let mut l = -s.clone();
    for i in 0..n {
        let d: f64 = s.row(i).sum();
        l[[i, i]] += d;
    }
    l
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = Array2::<f64>::zeros((n, n + m));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = a[[i, j]];
        }
        for j in 0..m {
            aug[[i, n + j]] = b[[i, j]];
        }
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[[x, col]].abs().total_cmp(&aug[[y, col]].abs()))
            .unwrap();
        for j in 0..n + m {
            aug.swap([col, j], [pivot, j]);
        }
        for r in 0..n {
            if r != col {
                let f = aug[[r, col]] / aug[[col, col]];
                for j in col..n + m {
                    aug[[r, j]] -= f * aug[[col, j]];
                }
            }
        }
    }
    let mut x = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            x[[i, j]] = aug[[i, n + j]] / aug[[i, i]];
        }
    }
    x
}

/// Closed-form centered ridge: `(XᵀHX + βI)⁻¹ XᵀHY`.
pub fn centered_ridge(x: &Array2<f64>, y: &Array2<f64>, beta: f64) -> Array2<f64> {
    let (n, p) = x.dim();
    let m = y.ncols();
    let mut xc = x.clone();
    let mut yc = y.clone();
    for j in 0..p {
        let mean: f64 = (0..n).map(|i| x[[i, j]]).sum::<f64>() / n as f64;
        for i in 0..n {
            xc[[i, j]] -= mean;
        }
    }
    for j in 0..m {
        let mean: f64 = (0..n).map(|i| y[[i, j]]).sum::<f64>() / n as f64;
        for i in 0..n {
            yc[[i, j]] -= mean;
        }
    }
    let mut a = Array2::<f64>::zeros((p, p));
    let mut rhs = Array2::<f64>::zeros((p, m));
    for r in 0..p {
        for c in 0..p {
            a[[r, c]] = (0..n).map(|i| xc[[i, r]] * xc[[i, c]]).sum();
        }
        a[[r, r]] += beta;
        for c in 0..m {
            rhs[[r, c]] = (0..n).map(|i| xc[[i, r]] * yc[[i, c]]).sum();
        }
    }
    gauss_solve(&a, &rhs)
}

/// Objective evaluated term by term with scalar loops.
pub fn loop_objective(
    x: &Array2<f64>,
    y: &Array2<f64>,
    l: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    params: &SolverParams,
) -> f64 {
    let (n, p) = x.dim();
    let m = y.ncols();
    let mut z = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            for k in 0..p {
                z[[i, j]] += x[[i, k]] * w[[k, j]];
            }
        }
    }
    let mut data = 0.0;
    for i in 0..n {
        for j in 0..m {
            data += (z[[i, j]] + b[j] - y[[i, j]]).powi(2);
        }
    }
    let mut manifold = 0.0;
    for c in 0..m {
        for i in 0..n {
            for k in 0..n {
                manifold += z[[i, c]] * l[[i, k]] * z[[k, c]];
            }
        }
    }
    let mut l21 = 0.0;
    let mut frob = 0.0;
    for k in 0..p {
        let mut row = 0.0;
        for j in 0..m {
            row += w[[k, j]] * w[[k, j]];
        }
        l21 += row.sqrt();
        frob += row;
    }
    0.5 * data
        + 0.5 * params.alpha * manifold
        + 0.5 * params.beta * (params.rho * l21 + (1.0 - params.rho) * frob)
}

/// The reweighted surrogate with `U` frozen:
/// ½‖XW + 1b − Y‖² + α/2 tr(WᵀXᵀLXW) + β(1−ρ)/2 ‖W‖² + βρ/2 tr(WᵀUW).
pub fn surrogate(
    x: &Array2<f64>,
    y: &Array2<f64>,
    l: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    u: &Array1<f64>,
    params: &SolverParams,
) -> f64 {
    let base = SolverParams {
        rho: 0.0,
        beta: params.beta * (1.0 - params.rho),
        ..*params
    };
    let mut utrace = 0.0;
    for k in 0..w.nrows() {
        for j in 0..w.ncols() {
            utrace += u[k] * w[[k, j]] * w[[k, j]];
        }
    }
    loop_objective(x, y, l, w, b, &base) + 0.5 * params.beta * params.rho * utrace
}

/// Central finite-difference gradient of `f` at `w`.
pub fn fd_gradient(w: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(w.dim());
    let mut probe = w.clone();
    for idx in 0..w.len() {
        let (r, c) = (idx / w.ncols(), idx % w.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + h;
        let up = f(&probe);
        probe[[r, c]] = orig - h;
        let down = f(&probe);
        probe[[r, c]] = orig;
        g[[r, c]] = (up - down) / (2.0 * h);
    }
    g
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Brute-force metric definitions over all label pairs, using exact rational
/// per-instance values (numerator, denominator) before the final average.
pub mod metrics {
    use ndarray::Array2;

    fn relevant(truth: &Array2<u8>, i: usize) -> Vec<usize> {
        (0..truth.ncols()).filter(|&j| truth[[i, j]] == 1).collect()
    }

    fn evaluable(truth: &Array2<u8>, i: usize) -> bool {
        let r = relevant(truth, i).len();
        r > 0 && r < truth.ncols()
    }

    /// Rank of label `j`: one plus the labels strictly above it, where "above"
    /// means higher score, or equal score and lower index.
    pub fn rank(scores: &Array2<f64>, i: usize, j: usize) -> usize {
        1 + (0..scores.ncols())
            .filter(|&k| {
                scores[[i, k]] > scores[[i, j]] || (scores[[i, k]] == scores[[i, j]] && k < j)
            })
            .count()
    }

    fn average(values: Vec<f64>) -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            let n = values.len() as f64;
            Some(values.into_iter().sum::<f64>() / n)
        }
    }

    pub fn skipped(truth: &Array2<u8>) -> usize {
        (0..truth.nrows()).filter(|&i| !evaluable(truth, i)).count()
    }

    pub fn hamming(pred: &Array2<u8>, truth: &Array2<u8>) -> f64 {
        let (n, m) = truth.dim();
        let mut sum = 0.0;
        for i in 0..n {
            let wrong = (0..m).filter(|&j| pred[[i, j]] != truth[[i, j]]).count();
            sum += wrong as f64 / m as f64;
        }
        sum / n as f64
    }

    pub fn ranking_loss(scores: &Array2<f64>, truth: &Array2<u8>) -> Option<f64> {
        let mut vals = Vec::new();
        for i in (0..truth.nrows()).filter(|&i| evaluable(truth, i)) {
            let mut half_units = 0u32;
            let mut pairs = 0u32;
            for k in 0..truth.ncols() {
                for j in 0..truth.ncols() {
                    if truth[[i, k]] == 1 && truth[[i, j]] == 0 {
                        pairs += 1;
                        if scores[[i, k]] < scores[[i, j]] {
                            half_units += 2;
                        } else if scores[[i, k]] == scores[[i, j]] {
                            half_units += 1;
                        }
                    }
                }
            }
            vals.push(f64::from(half_units) / 2.0 / f64::from(pairs));
        }
        average(vals)
    }

    pub fn one_error(scores: &Array2<f64>, truth: &Array2<u8>) -> Option<f64> {
        let mut vals = Vec::new();
        for i in (0..truth.nrows()).filter(|&i| evaluable(truth, i)) {
            let top = (0..truth.ncols())
                .find(|&j| rank(scores, i, j) == 1)
                .unwrap();
            vals.push(if truth[[i, top]] == 1 { 0.0 } else { 1.0 });
        }
        average(vals)
    }

    pub fn coverage(scores: &Array2<f64>, truth: &Array2<u8>) -> Option<f64> {
        let mut vals = Vec::new();
        for i in (0..truth.nrows()).filter(|&i| evaluable(truth, i)) {
            let deepest = relevant(truth, i)
                .into_iter()
                .map(|j| rank(scores, i, j))
                .max()
                .unwrap();
            vals.push((deepest - 1) as f64);
        }
        average(vals)
    }

    pub fn average_precision(scores: &Array2<f64>, truth: &Array2<u8>) -> Option<f64> {
        let mut vals = Vec::new();
        for i in (0..truth.nrows()).filter(|&i| evaluable(truth, i)) {
            let rel = relevant(truth, i);
            let mut sum = 0.0;
            for &k in &rel {
                let rk = rank(scores, i, k);
                let above = rel.iter().filter(|&&j| rank(scores, i, j) <= rk).count();
                sum += above as f64 / rk as f64;
            }
            vals.push(sum / rel.len() as f64);
        }
        average(vals)
    }
}
