use nalgebra::DVector;

use super::{LagMoments, GRAM_REL_TOL};
use crate::error::Result;
use crate::linalg::{numerical_rank, pseudo_inverse, DenseMatrix};
use crate::model::{CountMatrixSeries, NegativeCorrection};

/// Least-squares VAR(1) in `vec` form: `vec(X_t) ≈ Φ vec(X_{t-1}) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MginarFit {
    pub m: usize,
    pub n: usize,
    pub phi: DenseMatrix,
    pub intercept: DVector<f64>,
    /// The regressor Gram matrix was numerically singular; the minimum-norm
    /// pseudoinverse solution was used.
    pub rank_deficient: bool,
}

impl MginarFit {
    pub fn intercept_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_column_slice(self.m, self.n, self.intercept.as_slice())
    }

    /// Applies `mode` to `Φ` and the intercept; returns whether anything changed.
    pub fn correct(&mut self, mode: NegativeCorrection) -> bool {
        let a = mode.apply(&mut self.phi);
        mode.apply_vec(&mut self.intercept) | a
    }
}

/// Regression of `y` on `x` (plus intercept) from cross moments. Centering
/// makes the intercept equal to `ȳ − Φ x̄` and gives the minimum-norm slope
/// when the centered Gram matrix is singular.
pub(crate) fn moment_regression(
    gxx: &DenseMatrix,
    gyx: &DenseMatrix,
    sum_x: &DVector<f64>,
    sum_y: &DVector<f64>,
    count: usize,
    with_intercept: bool,
) -> (DenseMatrix, DVector<f64>, bool) {
    let d = gxx.nrows();
    let nf = count as f64;
    let (sxx, syx) = if with_intercept {
        (
            gxx - sum_x * sum_x.transpose() / nf,
            gyx - sum_y * sum_x.transpose() / nf,
        )
    } else {
        (gxx.clone(), gyx.clone())
    };
    let sxx = (&sxx + sxx.transpose()) * 0.5;
    let rank = numerical_rank(&sxx, GRAM_REL_TOL);
    let deficient = rank < d;
    if deficient {
        log::warn!("least squares: regressor Gram matrix has rank {rank} < {d}, using pseudoinverse");
    }
    let coef = syx * pseudo_inverse(&sxx, GRAM_REL_TOL);
    let intercept = if with_intercept {
        (sum_y - &coef * sum_x) / nf
    } else {
        DVector::zeros(gyx.nrows())
    };
    (coef, intercept, deficient)
}

/// Conditional least squares for the MGINAR(1) model on `vec(X_t)`.
pub fn fit_mginar_lse(series: &CountMatrixSeries, with_intercept: bool) -> Result<MginarFit> {
    let mn = series.m() * series.n();
    series.require_len(mn + 2, "MGINAR(1) least squares")?;
    let mom = LagMoments::from_series(series);
    let (phi, intercept, rank_deficient) =
        moment_regression(&mom.gxx, &mom.gyx, &mom.sum_x, &mom.sum_y, mom.pairs, with_intercept);
    Ok(MginarFit {
        m: series.m(),
        n: series.n(),
        phi,
        intercept,
        rank_deficient,
    })
}

/// One MGINAR(1) model per row of the matrix series.
#[derive(Debug, Clone, PartialEq)]
pub struct RowwiseMginar {
    pub m: usize,
    pub n: usize,
    pub rows: Vec<MginarFit>,
}

/// One MGINAR(1) model per column of the matrix series.
#[derive(Debug, Clone, PartialEq)]
pub struct ColwiseMginar {
    pub m: usize,
    pub n: usize,
    pub cols: Vec<MginarFit>,
}

pub fn fit_rowwise_mginar(series: &CountMatrixSeries) -> Result<RowwiseMginar> {
    let rows = (0..series.m())
        .map(|i| fit_mginar_lse(&series.row_series(i), true))
        .collect::<Result<Vec<_>>>()?;
    Ok(RowwiseMginar {
        m: series.m(),
        n: series.n(),
        rows,
    })
}

pub fn fit_colwise_mginar(series: &CountMatrixSeries) -> Result<ColwiseMginar> {
    let cols = (0..series.n())
        .map(|j| fit_mginar_lse(&series.col_series(j), true))
        .collect::<Result<Vec<_>>>()?;
    Ok(ColwiseMginar {
        m: series.m(),
        n: series.n(),
        cols,
    })
}

impl RowwiseMginar {
    /// Block-structured `mn x mn` coefficient matrix acting on `vec(X)`.
    pub fn to_phi(&self) -> DenseMatrix {
        let m = self.m;
        let mut phi = DenseMatrix::zeros(m * self.n, m * self.n);
        for (i, fit) in self.rows.iter().enumerate() {
            for j in 0..self.n {
                for l in 0..self.n {
                    phi[(j * m + i, l * m + i)] = fit.phi[(j, l)];
                }
            }
        }
        phi
    }

    pub fn intercept_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.m, self.n, |i, j| self.rows[i].intercept[j])
    }

    pub fn correct(&mut self, mode: NegativeCorrection) -> bool {
        self.rows.iter_mut().fold(false, |acc, f| f.correct(mode) | acc)
    }
}

impl ColwiseMginar {
    pub fn to_phi(&self) -> DenseMatrix {
        let m = self.m;
        let mut phi = DenseMatrix::zeros(m * self.n, m * self.n);
        for (j, fit) in self.cols.iter().enumerate() {
            for i in 0..m {
                for k in 0..m {
                    phi[(j * m + i, j * m + k)] = fit.phi[(i, k)];
                }
            }
        }
        phi
    }

    pub fn intercept_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.m, self.n, |i, j| self.cols[j].intercept[i])
    }

    pub fn correct(&mut self, mode: NegativeCorrection) -> bool {
        self.cols.iter_mut().fold(false, |acc, f| f.correct(mode) | acc)
    }
}
