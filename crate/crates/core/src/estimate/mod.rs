//! Estimators: MGINAR(1) least squares, the projection initializer, MINAR(1)
//! and reduced-rank MINAR(1) ICLSE, and univariate INAR(p) baselines.

mod iclse;
mod inar;
mod mginar;
pub mod moments;

use serde::{Deserialize, Serialize};

pub use iclse::{fit_minar_iclse, fit_rrminar_iclse, projection_init};
pub use inar::{fit_cellwise_inar, fit_inar_cls, CellwiseInar, InarFit};
pub use mginar::{
    fit_colwise_mginar, fit_mginar_lse, fit_rowwise_mginar, ColwiseMginar, MginarFit, RowwiseMginar,
};
pub use moments::LagMoments;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, pseudo_inverse, DenseMatrix};
use crate::model::{CountMatrixSeries, MinarCoefficients, NegativeCorrection};

/// Relative cut-off for pseudoinverses of Gram matrices.
pub const GRAM_REL_TOL: f64 = 1e-10;

/// Stop threshold `δ_T` for the ICLSE block changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    /// `δ_T = 1/T`.
    InverseT,
    Fixed(f64),
}

impl DeltaRule {
    pub fn threshold(self, t_len: usize) -> f64 {
        match self {
            DeltaRule::InverseT => 1.0 / t_len.max(1) as f64,
            DeltaRule::Fixed(d) => d,
        }
    }
}

impl std::str::FromStr for DeltaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inv_t" {
            return Ok(Self::InverseT);
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let d: f64 = v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad delta value '{v}'")))?;
            if d > 0.0 {
                return Ok(Self::Fixed(d));
            }
        }
        Err(Error::InvalidConfig(format!(
            "delta rule '{s}' must be inv_t or fixed:<positive number>"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub delta_rule: DeltaRule,
    /// Added to the diagonal of `S1xx`/`S2xx` before inversion.
    pub ridge: f64,
    pub negative_correction: NegativeCorrection,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            delta_rule: DeltaRule::InverseT,
            ridge: 0.0,
            negative_correction: NegativeCorrection::None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if let DeltaRule::Fixed(d) = self.delta_rule {
            if d.is_nan() || d <= 0.0 {
                return Err(Error::InvalidConfig("delta must be positive".into()));
            }
        }
        if self.ridge.is_nan() || self.ridge < 0.0 {
            return Err(Error::InvalidConfig("ridge must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_delta(mut self, rule: DeltaRule) -> Self {
        self.delta_rule = rule;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub coefficients: MinarCoefficients,
    /// Objective at the initial point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest of the three block changes at the final iteration.
    pub stop_delta: f64,
    pub negatives_corrected: bool,
    /// Number of Gram inversions that fell back to a rank-deficient
    /// pseudoinverse.
    pub gram_fallbacks: usize,
}

impl EstimationResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// `Σ_{t=2}^{T} ‖X_t − A X_{t-1} Bᵀ − C‖_F²`, computed frame by frame.
pub fn objective_value(
    series: &CountMatrixSeries,
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
) -> Result<f64> {
    series.require_len(2, "objective")?;
    let (m, n) = (series.m(), series.n());
    if a.shape() != (m, m) || b.shape() != (n, n) || c.shape() != (m, n) {
        return Err(Error::Dimension("coefficients do not conform to the series".into()));
    }
    let bt = b.transpose();
    Ok((1..series.len())
        .map(|t| (series.frame(t) - a * series.frame(t - 1) * &bt - c).norm_squared())
        .sum())
}

/// Pseudoinverse of a (ridged) Gram matrix; also reports rank deficiency.
pub(crate) fn invert_gram(
    gram: &DenseMatrix,
    ridge: f64,
    what: &'static str,
) -> Result<(DenseMatrix, bool)> {
    let mut g = (gram + gram.transpose()) * 0.5;
    if ridge > 0.0 {
        for i in 0..g.nrows() {
            g[(i, i)] += ridge;
        }
    }
    let rank = numerical_rank(&g, GRAM_REL_TOL);
    if rank == 0 {
        return Err(Error::DegenerateGram(what));
    }
    let deficient = rank < g.nrows();
    if deficient {
        log::warn!("{what}: Gram matrix has rank {rank} < {}, using pseudoinverse", g.nrows());
    }
    Ok((pseudo_inverse(&g, GRAM_REL_TOL), deficient))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_rule_parsing() {
        assert_eq!("inv_t".parse::<DeltaRule>().unwrap(), DeltaRule::InverseT);
        assert_eq!("fixed:0.001".parse::<DeltaRule>().unwrap(), DeltaRule::Fixed(0.001));
        assert!("fixed:-1".parse::<DeltaRule>().is_err());
        assert!("sometimes".parse::<DeltaRule>().is_err());
        assert_eq!(DeltaRule::InverseT.threshold(500), 0.002);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        assert!(FitConfig::default().with_max_iterations(0).validate().is_err());
    }

    #[test]
    fn objective_closed_forms() {
        let frames: Vec<_> = (0..5)
            .map(|t| DenseMatrix::from_fn(2, 2, |i, j| (t + i + 2 * j) as f64))
            .collect();
        let s = CountMatrixSeries::from_counts(2, 2, frames).unwrap();
        let z = DenseMatrix::zeros(2, 2);
        let c = DenseMatrix::from_element(2, 2, 1.5);
        let expect: f64 = (1..5).map(|t| (s.frame(t) - &c).norm_squared()).sum();
        assert_eq!(objective_value(&s, &z, &z, &c).unwrap(), expect);
        let short = s.slice(0..1);
        assert!(objective_value(&short, &z, &z, &c).is_err());
    }

    #[test]
    fn objective_matches_elementwise_reference() {
        use crate::thinning::seeded_rng;
        use rand::Rng;
        let mut rng = seeded_rng(3, 0);
        let (m, n) = (3, 2);
        let frames: Vec<_> = (0..15)
            .map(|_| DenseMatrix::from_fn(m, n, |_, _| rng.random_range(0..9) as f64))
            .collect();
        let s = CountMatrixSeries::from_counts(m, n, frames).unwrap();
        let a = DenseMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let b = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = DenseMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..2.0));
        let mut reference = 0.0;
        for t in 1..s.len() {
            for i in 0..m {
                for j in 0..n {
                    let mut fit = c[(i, j)];
                    for k in 0..m {
                        for l in 0..n {
                            fit += a[(i, k)] * s.frame(t - 1)[(k, l)] * b[(j, l)];
                        }
                    }
                    reference += (s.frame(t)[(i, j)] - fit).powi(2);
                }
            }
        }
        let got = objective_value(&s, &a, &b, &c).unwrap();
        assert!((got - reference).abs() <= 1e-10 * reference.max(1.0));
    }

    #[test]
    fn gram_inversion() {
        let (inv, def) = invert_gram(&DenseMatrix::identity(3, 3), 0.0, "test").unwrap();
        assert!(!def);
        assert!((inv - DenseMatrix::identity(3, 3)).amax() < 1e-12);
        let mut rank1 = DenseMatrix::zeros(2, 2);
        rank1[(0, 0)] = 2.0;
        let (inv, def) = invert_gram(&rank1, 0.0, "test").unwrap();
        assert!(def);
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-12);
        assert!(invert_gram(&DenseMatrix::zeros(2, 2), 0.0, "test").is_err());
        let (_, def) = invert_gram(&rank1, 1e-3, "test").unwrap();
        assert!(!def);
    }
}
