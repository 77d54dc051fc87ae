//! Reduced-rank matrix integer-valued autoregression.
//!
//! `X_t = A ⊛ X_{t-1} ⊛ Bᵀ + E_t` with Poisson thinning and Poisson
//! innovations of rate `C`, optionally with `rank(A) = k1`, `rank(B) = k2`.

pub mod error;
pub mod estimate;
pub mod experiment;
pub mod forecast;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod rank_select;
pub mod theory;
pub mod thinning;

pub use error::{Error, Result};
pub use estimate::{
    fit_minar_iclse, fit_rrminar_iclse, projection_init, DeltaRule, EstimationResult, FitConfig,
};
pub use linalg::DenseMatrix;
pub use model::{CountMatrixSeries, MinarCoefficients, NegativeCorrection};
pub use thinning::{InnovationScheme, SimulationSetting};
