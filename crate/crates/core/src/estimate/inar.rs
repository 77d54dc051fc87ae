use nalgebra::DVector;

use super::mginar::moment_regression;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{CountMatrixSeries, NegativeCorrection};

/// Univariate INAR(p) conditional least squares estimate:
/// `E(x_t | past) = λ + Σ_i α_i x_{t-i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InarFit {
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub rank_deficient: bool,
}

impl InarFit {
    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    /// Applies `mode` to the coefficients; returns whether anything changed.
    pub fn correct(&mut self, mode: NegativeCorrection) -> bool {
        let mut v = DVector::from_iterator(self.alphas.len() + 1, self.alphas.iter().copied().chain([self.lambda]));
        let changed = mode.apply_vec(&mut v);
        let p = self.alphas.len();
        self.alphas.copy_from_slice(&v.as_slice()[..p]);
        self.lambda = v[p];
        changed
    }

    /// One-step conditional mean given `history` (most recent value last).
    pub fn predict(&self, history: &[f64]) -> f64 {
        let len = history.len();
        self.lambda
            + self
                .alphas
                .iter()
                .enumerate()
                .map(|(i, a)| a * history[len - 1 - i])
                .sum::<f64>()
    }
}

/// CLS regression of `x_t` on `(x_{t-1}, …, x_{t-p})` with intercept.
pub fn fit_inar_cls(counts: &[f64], p: usize) -> Result<InarFit> {
    if p == 0 {
        return Err(Error::InvalidConfig("INAR order must be at least 1".into()));
    }
    if counts.len() < p + 2 {
        return Err(Error::InsufficientData {
            context: "INAR(p) least squares",
            needed: p + 2,
            got: counts.len(),
        });
    }
    let mut gxx = DenseMatrix::zeros(p, p);
    let mut gyx = DenseMatrix::zeros(1, p);
    let mut sx = DVector::zeros(p);
    let mut sy = DVector::zeros(1);
    for t in p..counts.len() {
        let z = DVector::from_fn(p, |i, _| counts[t - 1 - i]);
        let y = DVector::from_element(1, counts[t]);
        gxx.ger(1.0, &z, &z, 1.0);
        gyx.ger(1.0, &y, &z, 1.0);
        sx += z;
        sy += y;
    }
    let (coef, intercept, rank_deficient) =
        moment_regression(&gxx, &gyx, &sx, &sy, counts.len() - p, true);
    Ok(InarFit {
        alphas: coef.row(0).iter().copied().collect(),
        lambda: intercept[0],
        rank_deficient,
    })
}

/// Independent INAR(p) models, one per cell, stored in column-major cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellwiseInar {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub fits: Vec<InarFit>,
}

impl CellwiseInar {
    pub fn fit(&self, i: usize, j: usize) -> &InarFit {
        &self.fits[j * self.m + i]
    }

    /// Diagonal `mn x mn` matrix of first-lag coefficients.
    pub fn lag1_phi(&self) -> DenseMatrix {
        let mn = self.m * self.n;
        DenseMatrix::from_fn(mn, mn, |r, c| if r == c { self.fits[r].alphas[0] } else { 0.0 })
    }

    pub fn correct(&mut self, mode: NegativeCorrection) -> bool {
        self.fits.iter_mut().fold(false, |acc, f| f.correct(mode) | acc)
    }
}

pub fn fit_cellwise_inar(series: &CountMatrixSeries, p: usize) -> Result<CellwiseInar> {
    let (m, n) = (series.m(), series.n());
    let mut fits = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            fits.push(fit_inar_cls(&series.cell(i, j), p)?);
        }
    }
    Ok(CellwiseInar { m, n, p, fits })
}
