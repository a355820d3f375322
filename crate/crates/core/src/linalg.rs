//! Dense symmetric positive definite solves.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

/// Normwise backward-error bound accepted from [`solve_spd`].
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix. Only the lower triangle of
    /// `a` is read.
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let (n, cols) = a.dim();
        if n != cols {
            return Err(Error::ShapeMismatch(format!(
                "system matrix is {n} x {cols}"
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("system matrix"));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = {
                    let li = l.row(i);
                    let lj = l.row(j);
                    li.iter().zip(lj.iter()).take(j).map(|(x, y)| x * y).sum()
                };
                let s = a[[i, j]] - dot;
                if i == j {
                    if !(s.is_finite() && s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[[i, i]] = s.sqrt();
                } else {
                    l[[i, j]] = s / l[[j, j]];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &Array2<f64> {
        &self.l
    }

    /// Solve `A X = B` column by column.
    pub fn solve(&self, b: &Array2<f64>) -> Array2<f64> {
        let n = self.l.nrows();
        assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
        let mut x = b.clone();
        for mut col in x.columns_mut() {
            // forward: L y = b
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= self.l[[i, k]] * col[k];
                }
                col[i] = s / self.l[[i, i]];
            }
            // backward: Lᵀ x = y
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s -= self.l[[k, i]] * col[k];
                }
                col[i] = s / self.l[[i, i]];
            }
        }
        x
    }
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖A X − B‖_F / (‖A‖_F ‖X‖_F + ‖B‖_F)`, zero when everything vanishes.
pub fn relative_residual(a: &Array2<f64>, x: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let r = a.dot(x) - b;
    let denom = frobenius(a) * frobenius(x) + frobenius(b);
    if denom == 0.0 {
        0.0
    } else {
        frobenius(&r) / denom
    }
}

/// Solve an SPD system by Cholesky with one step of iterative refinement,
/// then verify the backward error.
pub fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if b.nrows() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "system is {} x {}, right-hand side has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let chol = Cholesky::factor(a)?;
    let mut x = chol.solve(b);
    let correction = chol.solve(&(b - &a.dot(&x)));
    Zip::from(&mut x)
        .and(&correction)
        .for_each(|xi, ci| *xi += ci);
    let residual = relative_residual(a, &x, b);
    if residual.is_nan() || residual > RESIDUAL_TOLERANCE {
        return Err(Error::Residual {
            residual,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    Ok(x)
}
