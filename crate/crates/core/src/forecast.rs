//! One-step forecasting, the E1–E4 accuracy metrics and simulation error
//! statistics.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{CellwiseInar, ColwiseMginar, MginarFit, RowwiseMginar};
use crate::linalg::{kron, vec_matrix, DenseMatrix};
use crate::model::{CountMatrixSeries, MinarCoefficients};

/// A model that predicts `X_t` from the frames before it.
pub trait Forecaster {
    /// Number of past frames the forecast needs.
    fn lags(&self) -> usize;

    fn dims(&self) -> (usize, usize);

    /// Conditional mean of the next frame; `history` ends with the most recent
    /// frame and holds at least `lags()` frames.
    fn forecast(&self, history: &[DenseMatrix]) -> DenseMatrix;
}

impl Forecaster for MinarCoefficients {
    fn lags(&self) -> usize {
        1
    }

    fn dims(&self) -> (usize, usize) {
        (self.m(), self.n())
    }

    fn forecast(&self, history: &[DenseMatrix]) -> DenseMatrix {
        &self.a * history.last().expect("non-empty history") * self.b.transpose() + &self.c
    }
}

impl Forecaster for MginarFit {
    fn lags(&self) -> usize {
        1
    }

    fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn forecast(&self, history: &[DenseMatrix]) -> DenseMatrix {
        let x = vec_matrix(history.last().expect("non-empty history"));
        let y = &self.phi * x + &self.intercept;
        DenseMatrix::from_column_slice(self.m, self.n, y.as_slice())
    }
}

impl Forecaster for RowwiseMginar {
    fn lags(&self) -> usize {
        1
    }

    fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn forecast(&self, history: &[DenseMatrix]) -> DenseMatrix {
        let x = history.last().expect("non-empty history");
        let mut out = DenseMatrix::zeros(self.m, self.n);
        for (i, fit) in self.rows.iter().enumerate() {
            let row = DVector::from_iterator(self.n, x.row(i).iter().copied());
            let y = &fit.phi * row + &fit.intercept;
            for j in 0..self.n {
                out[(i, j)] = y[j];
            }
        }
        out
    }
}

impl Forecaster for ColwiseMginar {
    fn lags(&self) -> usize {
        1
    }

    fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn forecast(&self, history: &[DenseMatrix]) -> DenseMatrix {
        let x = history.last().expect("non-empty history");
        let mut out = DenseMatrix::zeros(self.m, self.n);
        for (j, fit) in self.cols.iter().enumerate() {
            let y = &fit.phi * x.column(j) + &fit.intercept;
            out.set_column(j, &y);
        }
        out
    }
}

impl Forecaster for CellwiseInar {
    fn lags(&self) -> usize {
        self.p
    }

    fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn forecast(&self, history: &[DenseMatrix]) -> DenseMatrix {
        let recent = &history[history.len() - self.p..];
        DenseMatrix::from_fn(self.m, self.n, |i, j| {
            let cell: Vec<f64> = recent.iter().map(|f| f[(i, j)]).collect();
            self.fit(i, j).predict(&cell)
        })
    }
}

/// `A X_now Bᵀ + C`, real valued.
pub fn one_step_forecast(coeffs: &MinarCoefficients, x_now: &DenseMatrix) -> Result<DenseMatrix> {
    if x_now.shape() != (coeffs.m(), coeffs.n()) {
        return Err(Error::Dimension(format!(
            "frame is {}x{}, coefficients are for {}x{}",
            x_now.nrows(),
            x_now.ncols(),
            coeffs.m(),
            coeffs.n()
        )));
    }
    Ok(coeffs.forecast(std::slice::from_ref(x_now)))
}

/// Forecasts of frames `range.start..range.end`, each conditioned on the
/// observed frames before it.
pub fn one_step_forecasts(
    series: &CountMatrixSeries,
    model: &dyn Forecaster,
    range: std::ops::Range<usize>,
) -> Result<Vec<DenseMatrix>> {
    if model.dims() != (series.m(), series.n()) {
        return Err(Error::Dimension("model does not conform to the series".into()));
    }
    if range.start < model.lags() || range.end > series.len() || range.start > range.end {
        return Err(Error::Domain(format!(
            "forecast range {range:?} invalid for a {}-lag model on {} frames",
            model.lags(),
            series.len()
        )));
    }
    let frames = series.frames();
    Ok(range.map(|t| model.forecast(&frames[..t])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    InSample,
    OutOfSample,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::InSample => "in_sample",
            Scope::OutOfSample => "out_of_sample",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub horizon: usize,
    pub scope: Scope,
    /// Zero denominators replaced by 1: one per (cell, time) in E3 plus one
    /// per cell with zero window mean in E4.
    pub zero_denominator_substitutions: usize,
    /// Root mean squared error of each cell over the window.
    pub cell_rmse: DenseMatrix,
}

/// E1–E4 of `forecasts` against `actual`.
pub fn metrics(actual: &[DenseMatrix], forecasts: &[DenseMatrix], scope: Scope) -> Result<MetricsReport> {
    if actual.is_empty() || actual.len() != forecasts.len() {
        return Err(Error::Dimension(format!(
            "{} actual frames vs {} forecasts",
            actual.len(),
            forecasts.len()
        )));
    }
    let (m, n) = actual[0].shape();
    if actual.iter().chain(forecasts).any(|f| f.shape() != (m, n)) {
        return Err(Error::Dimension("frames differ in shape".into()));
    }
    let len = actual.len();
    let count = (len * m * n) as f64;
    let mut mean = DenseMatrix::zeros(m, n);
    for x in actual {
        mean += x;
    }
    mean /= len as f64;

    let mut subs = 0;
    let mean_den = mean.map(|v| {
        if v == 0.0 {
            subs += 1;
            1.0
        } else {
            v
        }
    });
    let (mut e1, mut sq, mut rel_sq, mut rel_abs) = (0.0, 0.0, 0.0, 0.0);
    let mut cell_sq = DenseMatrix::zeros(m, n);
    for (x, xh) in actual.iter().zip(forecasts) {
        let r = x - xh;
        let frame_sq = r.norm_squared();
        e1 += frame_sq.sqrt();
        sq += frame_sq;
        for j in 0..n {
            for i in 0..m {
                let (ri, xi) = (r[(i, j)], x[(i, j)]);
                cell_sq[(i, j)] += ri * ri;
                let den = if xi == 0.0 {
                    subs += 1;
                    1.0
                } else {
                    xi
                };
                rel_sq += (ri / den).powi(2);
                rel_abs += ri.abs() / mean_den[(i, j)];
            }
        }
    }
    Ok(MetricsReport {
        e1,
        e2: (sq / count).sqrt(),
        e3: (rel_sq / count).sqrt(),
        e4: rel_abs / count,
        horizon: len,
        scope,
        zero_denominator_substitutions: subs,
        cell_rmse: cell_sq.map(|v| (v / len as f64).sqrt()),
    })
}

/// In-sample metrics over `start..split_at` and out-of-sample metrics over
/// `split_at..T`. Every forecast conditions on observed frames.
pub fn evaluate_model(
    series: &CountMatrixSeries,
    model: &dyn Forecaster,
    split_at: usize,
    start: usize,
) -> Result<(MetricsReport, MetricsReport)> {
    let t_len = series.len();
    if split_at < 2 || split_at >= t_len {
        return Err(Error::Domain(format!("split_at {split_at} must lie in 2..{t_len}")));
    }
    if start < model.lags() || start >= split_at {
        return Err(Error::Domain(format!(
            "in-sample start {start} must lie in {}..{split_at}",
            model.lags()
        )));
    }
    let frames = series.frames();
    let fin = one_step_forecasts(series, model, start..split_at)?;
    let fout = one_step_forecasts(series, model, split_at..t_len)?;
    Ok((
        metrics(&frames[start..split_at], &fin, Scope::InSample)?,
        metrics(&frames[split_at..], &fout, Scope::OutOfSample)?,
    ))
}

/// [`evaluate_model`] for MINAR coefficients with the in-sample window
/// starting at the second frame.
pub fn evaluate(
    series: &CountMatrixSeries,
    coeffs: &MinarCoefficients,
    split_at: usize,
) -> Result<(MetricsReport, MetricsReport)> {
    evaluate_model(series, coeffs, split_at, 1)
}

/// `log` of a squared Frobenius error, floored at `log(1e-300)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogError {
    pub value: f64,
    pub floored: bool,
}

pub const ERROR_FLOOR: f64 = 1e-300;

fn log_error(sq: f64) -> LogError {
    if sq < ERROR_FLOOR {
        LogError {
            value: ERROR_FLOOR.ln(),
            floored: true,
        }
    } else {
        LogError {
            value: sq.ln(),
            floored: false,
        }
    }
}

/// `log ‖B̂⊗Â − B⊗A‖²_F`.
pub fn kron_error(
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    a_true: &DenseMatrix,
    b_true: &DenseMatrix,
) -> Result<LogError> {
    if a_hat.shape() != a_true.shape() || b_hat.shape() != b_true.shape() {
        return Err(Error::Dimension("estimated and true factors differ in shape".into()));
    }
    Ok(log_error((kron(b_hat, a_hat) - kron(b_true, a_true)).norm_squared()))
}

/// `log ‖Φ̂ − B⊗A‖²_F`.
pub fn mginar_error(phi_hat: &DenseMatrix, a_true: &DenseMatrix, b_true: &DenseMatrix) -> Result<LogError> {
    let phi = kron(b_true, a_true);
    if phi_hat.shape() != phi.shape() {
        return Err(Error::Dimension("Φ̂ does not match B⊗A".into()));
    }
    Ok(log_error((phi_hat - phi).norm_squared()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub model: String,
    #[serde(rename = "T")]
    pub t_len: usize,
    /// Mean of `exp(e)` over replications.
    pub mean_error: f64,
    /// `mean_error` divided by the largest `mean_error` in the grid.
    pub normalized: f64,
}

/// Normalizes per-(model, T) mean errors by the global maximum. `results`
/// maps `(model, T)` to the log errors of its replications.
pub fn normalized_error_curve(results: &BTreeMap<(String, usize), Vec<f64>>) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::with_capacity(results.len());
    for ((model, t_len), errs) in results {
        if errs.is_empty() {
            return Err(Error::Domain(format!("no replications for {model} at T={t_len}")));
        }
        let mean = errs.iter().map(|e| e.exp()).sum::<f64>() / errs.len() as f64;
        points.push(CurvePoint {
            model: model.clone(),
            t_len: *t_len,
            mean_error: mean,
            normalized: 0.0,
        });
    }
    let max = points.iter().map(|p| p.mean_error).fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() {
        return Err(Error::Domain("empty result grid".into()));
    }
    if !max.is_finite() || max <= 0.0 {
        return Err(Error::Domain(format!("cannot normalize by maximum mean error {max}")));
    }
    for p in &mut points {
        p.normalized = p.mean_error / max;
    }
    Ok(points)
}
