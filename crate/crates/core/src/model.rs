//! Core data types: count matrix series and MINAR coefficient triples.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, numerical_rank, spectral_radius, vec_matrix, DenseMatrix, RANK_REL_TOL};

/// An ordered sequence of `m x n` matrices.
///
/// Frames built with [`CountMatrixSeries::from_counts`] are validated as
/// nonnegative integers. [`CountMatrixSeries::from_real_frames`] admits any
/// finite values, which is what noiseless recursions produce; estimators work
/// with either.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrixSeries {
    m: usize,
    n: usize,
    frames: Vec<DenseMatrix>,
    integer_valued: bool,
}

impl CountMatrixSeries {
    pub fn from_counts(m: usize, n: usize, frames: Vec<DenseMatrix>) -> Result<Self> {
        Self::check_shape(m, n, &frames)?;
        for (t, f) in frames.iter().enumerate() {
            if let Some(v) = f.iter().find(|v| !(v.is_finite() && **v >= 0.0 && v.fract() == 0.0)) {
                return Err(Error::Domain(format!(
                    "frame {t} contains {v}, which is not a nonnegative integer"
                )));
            }
        }
        Ok(Self {
            m,
            n,
            frames,
            integer_valued: true,
        })
    }

    pub fn from_real_frames(m: usize, n: usize, frames: Vec<DenseMatrix>) -> Result<Self> {
        Self::check_shape(m, n, &frames)?;
        if frames.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(Error::Domain("series contains non-finite values".into()));
        }
        let integer_valued = frames
            .iter()
            .all(|f| f.iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
        Ok(Self {
            m,
            n,
            frames,
            integer_valued,
        })
    }

    fn check_shape(m: usize, n: usize, frames: &[DenseMatrix]) -> Result<()> {
        if m == 0 || n == 0 {
            return Err(Error::Dimension("series dimensions must be positive".into()));
        }
        if let Some((t, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.shape() != (m, n))
        {
            return Err(Error::Dimension(format!(
                "frame {t} is {}x{}, expected {m}x{n}",
                f.nrows(),
                f.ncols()
            )));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_integer_valued(&self) -> bool {
        self.integer_valued
    }

    pub fn frame(&self, t: usize) -> &DenseMatrix {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[DenseMatrix] {
        &self.frames
    }

    /// Frames `range.start..range.end` as a new series.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            m: self.m,
            n: self.n,
            frames: self.frames[range].to_vec(),
            integer_valued: self.integer_valued,
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.n,
            n: self.m,
            frames: self.frames.iter().map(|f| f.transpose()).collect(),
            integer_valued: self.integer_valued,
        }
    }

    /// Row `i` as a `1 x n` series.
    pub fn row_series(&self, i: usize) -> Self {
        Self {
            m: 1,
            n: self.n,
            frames: self.frames.iter().map(|f| f.rows(i, 1).into_owned()).collect(),
            integer_valued: self.integer_valued,
        }
    }

    /// Column `j` as an `m x 1` series.
    pub fn col_series(&self, j: usize) -> Self {
        Self {
            m: self.m,
            n: 1,
            frames: self.frames.iter().map(|f| f.columns(j, 1).into_owned()).collect(),
            integer_valued: self.integer_valued,
        }
    }

    /// Values of cell `(i, j)` over time.
    pub fn cell(&self, i: usize, j: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[(i, j)]).collect()
    }

    pub fn vec_frame(&self, t: usize) -> DVector<f64> {
        vec_matrix(&self.frames[t])
    }

    pub fn require_len(&self, needed: usize, context: &'static str) -> Result<()> {
        if self.len() < needed {
            return Err(Error::InsufficientData {
                context,
                needed,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// The triple `(A, B, C)` of a MINAR(1) model with declared ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinarCoefficients {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub k1: usize,
    pub k2: usize,
}

impl MinarCoefficients {
    /// Builds a triple, checking shapes; ranks default to full.
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        let (m, n) = c.shape();
        if a.shape() != (m, m) || b.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}, C is {m}x{n}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, c, k1: m, k2: n })
    }

    pub fn with_ranks(mut self, k1: usize, k2: usize) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn n(&self) -> usize {
        self.c.ncols()
    }

    /// `ρ(A)·ρ(B)`, which equals `ρ(B⊗A)`.
    pub fn rho_product(&self) -> f64 {
        spectral_radius(&self.a).unwrap_or(f64::INFINITY)
            * spectral_radius(&self.b).unwrap_or(f64::INFINITY)
    }

    pub fn is_stationary(&self) -> bool {
        self.rho_product() < 1.0
    }

    pub fn require_stationary(&self) -> Result<()> {
        let product = self.rho_product();
        if product < 1.0 {
            Ok(())
        } else {
            Err(Error::NonStationary { product })
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        [&self.a, &self.b, &self.c]
            .iter()
            .all(|m| m.iter().all(|v| *v >= 0.0))
    }

    pub fn require_nonnegative(&self) -> Result<()> {
        if self.is_nonnegative() {
            Ok(())
        } else {
            Err(Error::Domain("coefficient matrices must be entrywise nonnegative".into()))
        }
    }

    /// `B⊗A`, the MGINAR form of the coefficient pair.
    pub fn kron_product(&self) -> DenseMatrix {
        kron(&self.b, &self.a)
    }

    pub fn numerical_ranks(&self) -> (usize, usize) {
        (
            numerical_rank(&self.a, RANK_REL_TOL),
            numerical_rank(&self.b, RANK_REL_TOL),
        )
    }

    /// Rescales to `‖A‖_F = 1` (compensating in `B`) and fixes the shared sign
    /// so the entries of `A` sum to a nonnegative value. `A X Bᵀ` is unchanged.
    pub fn normalized(mut self) -> Self {
        let an = self.a.norm();
        if an > 0.0 {
            let s = if self.a.sum() < 0.0 { -1.0 } else { 1.0 };
            self.a *= s / an;
            self.b *= s * an;
        }
        self
    }
}

/// How negative entries are removed before coefficients are used as
/// thinning parameters or for forecasting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeCorrection {
    #[default]
    None,
    Absolute,
    ClampZero,
}

impl NegativeCorrection {
    /// Applies the correction; returns whether any entry changed.
    pub fn apply(self, m: &mut DenseMatrix) -> bool {
        let mut changed = false;
        match self {
            NegativeCorrection::None => {}
            NegativeCorrection::Absolute => m.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = -*v;
                    changed = true;
                }
            }),
            NegativeCorrection::ClampZero => m.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0;
                    changed = true;
                }
            }),
        }
        changed
    }

    pub fn apply_vec(self, v: &mut DVector<f64>) -> bool {
        let mut m = DenseMatrix::from_column_slice(v.len(), 1, v.as_slice());
        let changed = self.apply(&mut m);
        v.copy_from_slice(m.as_slice());
        changed
    }
}

impl std::str::FromStr for NegativeCorrection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "absolute" => Ok(Self::Absolute),
            "clamp_zero" => Ok(Self::ClampZero),
            other => Err(Error::InvalidConfig(format!(
                "unknown negative correction '{other}' (expected none|absolute|clamp_zero)"
            ))),
        }
    }
}
