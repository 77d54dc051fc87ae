//! Poisson thinning operators and MINAR(1) sample-path generation.
//!
//! All randomness flows through an explicit generator. [`seeded_rng`] builds
//! the ChaCha8 generator (`rand_chacha` 0.9) used throughout, so runs are
//! reproducible across builds.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, spectral_radius, DenseMatrix, RANK_REL_TOL};
use crate::model::{CountMatrixSeries, MinarCoefficients};
use crate::theory::stationary_mean;

pub const DEFAULT_BURN_IN: usize = 200;
pub const DEFAULT_SPECTRAL_TARGET: f64 = 0.9;

/// ChaCha8 generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Poisson(`lambda`) draw; `lambda = 0` gives 0.
pub fn draw_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("finite positive Poisson rate");
    let v: f64 = d.sample(rng);
    v as u64
}

fn check_rate(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!("thinning parameter {alpha} must be finite and >= 0")));
    }
    Ok(())
}

/// `alpha ∘ x`: the sum of `x` i.i.d. Poisson(`alpha`) variables.
///
/// Drawn as a single Poisson(`alpha * x`) variate, which has the same
/// distribution by Poisson additivity.
pub fn poisson_thin<R: Rng + ?Sized>(alpha: f64, x: u64, rng: &mut R) -> Result<u64> {
    check_rate(alpha)?;
    if x == 0 || alpha == 0.0 {
        return Ok(0);
    }
    Ok(draw_poisson(alpha * x as f64, rng))
}

/// `alpha ∘ x` drawn literally as `x` separate Poisson(`alpha`) variables.
pub fn poisson_thin_summed<R: Rng + ?Sized>(alpha: f64, x: u64, rng: &mut R) -> Result<u64> {
    check_rate(alpha)?;
    if alpha == 0.0 {
        return Ok(0);
    }
    Ok((0..x).map(|_| draw_poisson(alpha, rng)).sum())
}

fn check_thin_args(a: &DenseMatrix, y: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    let (m, n) = y.shape();
    if a.shape() != (m, m) || b.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "matrix thinning needs A {m}x{m} and B {n}x{n} for Y {m}x{n}, got A {}x{} and B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain("thinning coefficients must be nonnegative".into()));
    }
    if y.iter().any(|v| !(*v >= 0.0 && v.fract() == 0.0)) {
        return Err(Error::Domain("thinned matrix must hold nonnegative integers".into()));
    }
    Ok(())
}

/// `A ⊛ Y ⊛ Bᵀ`.
///
/// Entry `(i, j)` is `Σ_l Σ_k (β_jl α_ik) ∘ y_kl` with independent thinnings;
/// the independent Poisson terms are aggregated into one Poisson draw with
/// rate `(A Y Bᵀ)_ij`.
pub fn matrix_thin<R: Rng + ?Sized>(
    a: &DenseMatrix,
    y: &DenseMatrix,
    b: &DenseMatrix,
    rng: &mut R,
) -> Result<DenseMatrix> {
    check_thin_args(a, y, b)?;
    let rates = a * y * b.transpose();
    Ok(rates.map(|lambda| draw_poisson(lambda, rng) as f64))
}

/// `A ⊛ Y ⊛ Bᵀ` with one thinning per `(i, j, k, l)` term.
pub fn matrix_thin_per_term<R: Rng + ?Sized>(
    a: &DenseMatrix,
    y: &DenseMatrix,
    b: &DenseMatrix,
    rng: &mut R,
) -> Result<DenseMatrix> {
    check_thin_args(a, y, b)?;
    let (m, n) = y.shape();
    let mut out = DenseMatrix::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            let mut s = 0u64;
            for l in 0..n {
                for k in 0..m {
                    s += poisson_thin(b[(j, l)] * a[(i, k)], y[(k, l)] as u64, rng)?;
                }
            }
            out[(i, j)] = s as f64;
        }
    }
    Ok(out)
}

fn poisson_matrix<R: Rng + ?Sized>(c: &DenseMatrix, rng: &mut R) -> DenseMatrix {
    c.map(|lambda| draw_poisson(lambda, rng) as f64)
}

/// Simulates `X_t = A ⊛ X_{t-1} ⊛ Bᵀ + E_t` with `E_t(i,j) ~ Poisson(C(i,j))`.
///
/// The chain starts at the rounded stationary mean, runs `burn_in` discarded
/// steps, then records `t_len` frames.
pub fn simulate_minar<R: Rng + ?Sized>(
    coeffs: &MinarCoefficients,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<CountMatrixSeries> {
    simulate_with(coeffs, t_len, burn_in, rng, matrix_thin)
}

/// As [`simulate_minar`], but thinning every `(i, j, k, l)` term separately.
pub fn simulate_minar_per_term<R: Rng + ?Sized>(
    coeffs: &MinarCoefficients,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<CountMatrixSeries> {
    simulate_with(coeffs, t_len, burn_in, rng, matrix_thin_per_term)
}

type ThinFn<R> = fn(&DenseMatrix, &DenseMatrix, &DenseMatrix, &mut R) -> Result<DenseMatrix>;

fn simulate_with<R: Rng + ?Sized>(
    coeffs: &MinarCoefficients,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
    thin: ThinFn<R>,
) -> Result<CountMatrixSeries> {
    if t_len == 0 {
        return Err(Error::InvalidConfig("series length must be positive".into()));
    }
    coeffs.require_nonnegative()?;
    coeffs.require_stationary()?;
    let (m, n) = (coeffs.m(), coeffs.n());
    let mut x = stationary_mean(coeffs)?.map(f64::round);
    let mut frames = Vec::with_capacity(t_len);
    for step in 0..burn_in + t_len {
        let next = thin(&coeffs.a, &x, &coeffs.b, rng)? + poisson_matrix(&coeffs.c, rng);
        x = next;
        if step >= burn_in {
            frames.push(x.clone());
        }
    }
    CountMatrixSeries::from_counts(m, n, frames)
}

/// Innovation covariance scheme of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InnovationScheme {
    /// `Σ = I`: every Poisson rate is 1.
    I,
    /// Diagonal `Σ` with U(0,1) entries.
    II,
    /// `Σ = Σ_c ⊗ Σ_r` with random eigenvectors and |N(0,1)| eigenvalues.
    III,
}

impl std::str::FromStr for InnovationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            other => Err(Error::InvalidConfig(format!("unknown setting '{other}' (expected I|II|III)"))),
        }
    }
}

impl std::fmt::Display for InnovationScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
        };
        f.write_str(s)
    }
}

/// A simulation configuration: scheme, dimensions, ranks, length and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetting {
    pub scheme: InnovationScheme,
    pub m: usize,
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl SimulationSetting {
    pub fn validate(&self) -> Result<()> {
        check_ranks(self.m, self.n, self.k1, self.k2)?;
        if self.t_len == 0 {
            return Err(Error::InvalidConfig("T must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_ranks(m: usize, n: usize, k1: usize, k2: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig("dimensions must be positive".into()));
    }
    if k1 == 0 || k1 > m {
        return Err(Error::RankBounds { name: "k1", value: k1, max: m });
    }
    if k2 == 0 || k2 > n {
        return Err(Error::RankBounds { name: "k2", value: k2, max: n });
    }
    Ok(())
}

/// Poisson rate matrix and, for scheme III, the covariance factors it came
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationRates {
    pub c: DenseMatrix,
    /// `m x m` row covariance factor (scheme III only).
    pub sigma_r: Option<DenseMatrix>,
    /// `n x n` column covariance factor (scheme III only).
    pub sigma_c: Option<DenseMatrix>,
}

fn random_orthonormal<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DenseMatrix {
    let g = DenseMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

fn random_covariance<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DenseMatrix {
    let lambda = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal).abs());
    let q = random_orthonormal(k, rng);
    &q * DenseMatrix::from_diagonal(&lambda) * q.transpose()
}

/// Poisson rates `C` with `vec(C) = diag(Σ)` for the given scheme.
///
/// Independent Poisson innovations have a diagonal covariance, so only the
/// diagonal of `Σ` is used.
pub fn gen_innovation_rates<R: Rng + ?Sized>(
    scheme: InnovationScheme,
    m: usize,
    n: usize,
    rng: &mut R,
) -> InnovationRates {
    match scheme {
        InnovationScheme::I => InnovationRates {
            c: DenseMatrix::from_element(m, n, 1.0),
            sigma_r: None,
            sigma_c: None,
        },
        InnovationScheme::II => InnovationRates {
            c: DenseMatrix::from_fn(m, n, |_, _| loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            }),
            sigma_r: None,
            sigma_c: None,
        },
        InnovationScheme::III => {
            log::warn!(
                "setting III: Poisson rates taken from diag(Sigma_c ⊗ Sigma_r); off-diagonal covariance is not reproduced"
            );
            let sigma_c = random_covariance(n, rng);
            let sigma_r = random_covariance(m, rng);
            let c = DenseMatrix::from_fn(m, n, |i, j| sigma_r[(i, i)] * sigma_c[(j, j)]);
            InnovationRates {
                c,
                sigma_r: Some(sigma_r),
                sigma_c: Some(sigma_c),
            }
        }
    }
}

fn abs_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal).abs())
}

fn low_rank_nonnegative<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DenseMatrix {
    loop {
        let p = abs_gaussian(dim, rank, rng);
        let q = abs_gaussian(dim, rank, rng);
        let m = p * q.transpose();
        if numerical_rank(&m, RANK_REL_TOL) == rank {
            return m;
        }
    }
}

/// Random nonnegative `A` (`m x m`, rank `k1`, `‖A‖_F = 1`) and `B`
/// (`n x n`, rank `k2`) with `ρ(A)ρ(B) = spectral_target`.
///
/// Factors are products of entrywise `|N(0,1)|` matrices; `B` alone is
/// rescaled to hit the spectral target.
pub fn gen_ab<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    k1: usize,
    k2: usize,
    spectral_target: f64,
    rng: &mut R,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_ranks(m, n, k1, k2)?;
    if !(spectral_target > 0.0 && spectral_target < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "spectral target {spectral_target} must lie in (0, 1)"
        )));
    }
    let mut a = low_rank_nonnegative(m, k1, rng);
    a /= a.norm();
    let mut b = low_rank_nonnegative(n, k2, rng);
    let rho = spectral_radius(&a)? * spectral_radius(&b)?;
    b *= spectral_target / rho;
    Ok((a, b))
}

/// Coefficients and innovation rates for a simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedModel {
    pub coefficients: MinarCoefficients,
    pub rates: InnovationRates,
}

/// Draws `(A, B)` then the innovation rates `C` for the setting's scheme.
pub fn gen_coefficients<R: Rng + ?Sized>(
    scheme: InnovationScheme,
    m: usize,
    n: usize,
    k1: usize,
    k2: usize,
    rng: &mut R,
) -> Result<GeneratedModel> {
    let (a, b) = gen_ab(m, n, k1, k2, DEFAULT_SPECTRAL_TARGET, rng)?;
    let rates = gen_innovation_rates(scheme, m, n, rng);
    let coefficients = MinarCoefficients::new(a, b, rates.c.clone())?.with_ranks(k1, k2);
    Ok(GeneratedModel { coefficients, rates })
}

/// Generates coefficients and a series for a full setting, using
/// `seeded_rng(setting.seed, 0)` for coefficients and stream 1 for the path.
pub fn simulate_setting(setting: &SimulationSetting) -> Result<(GeneratedModel, CountMatrixSeries)> {
    setting.validate()?;
    let mut coef_rng = seeded_rng(setting.seed, 0);
    let model = gen_coefficients(setting.scheme, setting.m, setting.n, setting.k1, setting.k2, &mut coef_rng)?;
    let mut path_rng = seeded_rng(setting.seed, 1);
    let series = simulate_minar(&model.coefficients, setting.t_len, setting.burn_in, &mut path_rng)?;
    Ok((model, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, vec_matrix};

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn thinning_degenerate_cases() {
        let mut rng = seeded_rng(1, 0);
        assert_eq!(poisson_thin(0.0, 25, &mut rng).unwrap(), 0);
        assert_eq!(poisson_thin(0.7, 0, &mut rng).unwrap(), 0);
        assert_eq!(poisson_thin_summed(0.7, 0, &mut rng).unwrap(), 0);
        assert!(poisson_thin(-0.1, 3, &mut rng).is_err());
        assert!(poisson_thin(f64::NAN, 3, &mut rng).is_err());
    }

    #[test]
    fn thinning_moments() {
        let reps = 100_000;
        let mut rng = seeded_rng(2, 0);
        let draws: Vec<f64> = (0..reps)
            .map(|_| poisson_thin(0.7, 10, &mut rng).unwrap() as f64)
            .collect();
        let (mean, var) = mean_var(&draws);
        assert!((mean - 7.0).abs() < 3.0 * (7.0 / reps as f64).sqrt(), "mean {mean}");
        // Var of the sample variance of a Poisson(λ): (λ + 2λ²)/N
        let var_se = ((7.0 + 2.0 * 49.0) / reps as f64).sqrt();
        assert!((var - 7.0).abs() < 4.0 * var_se, "var {var}");

        let summed: Vec<f64> = (0..reps / 10)
            .map(|_| poisson_thin_summed(0.7, 10, &mut rng).unwrap() as f64)
            .collect();
        let (mean_s, _) = mean_var(&summed);
        assert!((mean_s - 7.0).abs() < 4.0 * (7.0 / (reps / 10) as f64).sqrt());
    }

    #[test]
    fn matrix_thin_zero_cases() {
        let mut rng = seeded_rng(3, 0);
        let y = DenseMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 5.0]);
        let a = DenseMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.3, 0.4]);
        let z2 = DenseMatrix::zeros(2, 2);
        assert_eq!(matrix_thin(&z2, &y, &a, &mut rng).unwrap(), z2);
        assert_eq!(matrix_thin(&a, &y, &z2, &mut rng).unwrap(), z2);
        assert_eq!(matrix_thin(&a, &z2, &a, &mut rng).unwrap(), z2);
        assert!(matrix_thin(&(-a.clone()), &y, &a, &mut rng).is_err());
        assert!(matrix_thin(&a, &DenseMatrix::zeros(2, 3), &a, &mut rng).is_err());
    }

    #[test]
    fn matrix_thin_conditional_moments() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.3, 0.4]);
        let b = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.1, 0.6]);
        let y = DenseMatrix::from_row_slice(2, 2, &[3.0, 1.0, 2.0, 5.0]);
        let expect = vec_matrix(&(&a * &y * b.transpose()));
        for per_term in [false, true] {
            let reps = if per_term { 20_000 } else { 100_000 };
            let mut rng = seeded_rng(4, per_term as u64);
            let mut sum = DVector::<f64>::zeros(4);
            let mut sq = DenseMatrix::zeros(4, 4);
            for _ in 0..reps {
                let d = if per_term {
                    matrix_thin_per_term(&a, &y, &b, &mut rng).unwrap()
                } else {
                    matrix_thin(&a, &y, &b, &mut rng).unwrap()
                };
                let v = vec_matrix(&d);
                sq += &v * v.transpose();
                sum += v;
            }
            let r = reps as f64;
            let mean = &sum / r;
            let cov = (sq - &mean * mean.transpose() * r) / (r - 1.0);
            for i in 0..4 {
                let se = (expect[i] / r).sqrt();
                assert!((mean[i] - expect[i]).abs() < 4.0 * se);
                // variance equals the rate
                let var_se = ((expect[i] + 2.0 * expect[i].powi(2)) / r).sqrt();
                assert!((cov[(i, i)] - expect[i]).abs() < 4.0 * var_se);
                for j in 0..4 {
                    if i != j {
                        let se = (expect[i] * expect[j] / r).sqrt();
                        assert!(cov[(i, j)].abs() < 4.0 * se, "cov[{i},{j}]={}", cov[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn pure_innovation_and_all_zero() {
        let c = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.5, 0.5, 4.0]);
        let z = DenseMatrix::zeros(2, 2);
        let coef = MinarCoefficients::new(z.clone(), z.clone(), c.clone()).unwrap();
        let mut rng = seeded_rng(5, 0);
        let s = simulate_minar(&coef, 20_000, 10, &mut rng).unwrap();
        let mean = s.frames().iter().fold(DenseMatrix::zeros(2, 2), |acc, f| acc + f) / 20_000.0;
        for (m, c) in mean.iter().zip(c.iter()) {
            assert!((m - c).abs() <= 0.05 * c);
        }
        let zero = MinarCoefficients::new(z.clone(), z.clone(), z.clone()).unwrap();
        let s = simulate_minar(&zero, 50, 5, &mut rng).unwrap();
        assert!(s.frames().iter().all(|f| f.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn simulation_matches_stationary_mean() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.2, 0.6]);
        let b = DenseMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.1, 0.5]);
        let c = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.5]);
        let coef = MinarCoefficients::new(a.clone(), b.clone(), c.clone()).unwrap();
        assert!(coef.is_stationary());
        // (I − B⊗A)⁻¹ vec(C), solved independently of the library helper
        let phi = kron(&b, &a);
        let lhs = DenseMatrix::identity(4, 4) - phi;
        let mu = lhs.lu().solve(&vec_matrix(&c)).unwrap();
        let mut rng = seeded_rng(6, 0);
        let s = simulate_minar(&coef, 20_000, 200, &mut rng).unwrap();
        let mean = s.frames().iter().fold(DenseMatrix::zeros(2, 2), |acc, f| acc + f) / 20_000.0;
        for (got, want) in vec_matrix(&mean).iter().zip(mu.iter()) {
            assert!((got - want).abs() <= 0.05 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn per_term_and_aggregated_paths_share_moments() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.4, 0.2, 0.1, 0.3]);
        let b = DenseMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.3, 0.5]);
        let c = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.5, 2.0, 1.0]);
        let coef = MinarCoefficients::new(a, b, c).unwrap();
        let t = 20_000;
        let s1 = simulate_minar(&coef, t, 100, &mut seeded_rng(7, 0)).unwrap();
        let s2 = simulate_minar_per_term(&coef, t, 100, &mut seeded_rng(7, 1)).unwrap();
        let stats = |s: &CountMatrixSeries| {
            let v: Vec<DVector<f64>> = (0..s.len()).map(|i| s.vec_frame(i)).collect();
            let mean = v.iter().fold(DVector::zeros(4), |a, x| a + x) / v.len() as f64;
            let var = v.iter().fold(DVector::zeros(4), |acc: DVector<f64>, x| {
                acc + (x - &mean).map(|d| d * d)
            }) / v.len() as f64;
            (mean, var)
        };
        let (m1, v1) = stats(&s1);
        let (m2, v2) = stats(&s2);
        for i in 0..4 {
            assert!((m1[i] - m2[i]).abs() <= 0.05 * m1[i], "mean {i}: {} vs {}", m1[i], m2[i]);
            assert!((v1[i] - v2[i]).abs() <= 0.10 * v1[i], "var {i}: {} vs {}", v1[i], v2[i]);
        }
    }

    #[test]
    fn simulation_rejects_bad_coefficients() {
        let a = DenseMatrix::identity(2, 2);
        let c = DenseMatrix::from_element(2, 2, 1.0);
        let coef = MinarCoefficients::new(a.clone(), a.clone(), c.clone()).unwrap();
        let mut rng = seeded_rng(8, 0);
        assert!(matches!(
            simulate_minar(&coef, 10, 0, &mut rng),
            Err(Error::NonStationary { .. })
        ));
        let neg = MinarCoefficients::new(a.clone() * -0.1, a.clone() * 0.1, c).unwrap();
        assert!(matches!(simulate_minar(&neg, 10, 0, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn generated_coefficients_meet_constraints() {
        let mut rng = seeded_rng(9, 0);
        for &(m, n, k1, k2) in &[(6, 4, 1, 1), (6, 4, 3, 2), (3, 3, 3, 3), (1, 1, 1, 1)] {
            for _ in 0..5 {
                let g = gen_coefficients(InnovationScheme::I, m, n, k1, k2, &mut rng).unwrap();
                let c = &g.coefficients;
                assert!(c.is_nonnegative());
                assert_eq!(c.numerical_ranks(), (k1, k2));
                assert!((c.a.norm() - 1.0).abs() < 1e-10);
                assert!(c.rho_product() < 1.0);
                assert!((c.rho_product() - DEFAULT_SPECTRAL_TARGET).abs() < 1e-8);
            }
        }
        assert!(gen_coefficients(InnovationScheme::I, 3, 3, 5, 1, &mut rng).is_err());
        assert!(gen_coefficients(InnovationScheme::I, 3, 3, 1, 0, &mut rng).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let g1 = gen_coefficients(InnovationScheme::III, 4, 3, 2, 1, &mut seeded_rng(11, 0)).unwrap();
        let g2 = gen_coefficients(InnovationScheme::III, 4, 3, 2, 1, &mut seeded_rng(11, 0)).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn innovation_rate_schemes() {
        let mut rng = seeded_rng(12, 0);
        let r1 = gen_innovation_rates(InnovationScheme::I, 3, 3, &mut rng);
        assert_eq!(r1.c, DenseMatrix::from_element(3, 3, 1.0));
        let r2 = gen_innovation_rates(InnovationScheme::II, 4, 5, &mut rng);
        assert!(r2.c.iter().all(|v| *v > 0.0 && *v < 1.0));
        let r3 = gen_innovation_rates(InnovationScheme::III, 3, 2, &mut rng);
        assert!(r3.c.iter().all(|v| *v > 0.0));
        let sr = r3.sigma_r.unwrap();
        let sc = r3.sigma_c.unwrap();
        let sigma = kron(&sc, &sr);
        let diag = sigma.diagonal();
        assert!((vec_matrix(&r3.c) - diag).amax() < 1e-12);
        // factors are symmetric PSD
        for f in [&sr, &sc] {
            assert!((f - f.transpose()).amax() < 1e-12);
            assert!(f.clone().symmetric_eigenvalues().iter().all(|v| *v > -1e-12));
        }
    }

    #[test]
    fn setting_validation() {
        let mut s = SimulationSetting {
            scheme: InnovationScheme::I,
            m: 3,
            n: 3,
            k1: 1,
            k2: 1,
            t_len: 50,
            burn_in: 10,
            seed: 1,
        };
        assert!(s.validate().is_ok());
        let (model, series) = simulate_setting(&s).unwrap();
        assert_eq!(series.len(), 50);
        assert_eq!(model.coefficients.k1, 1);
        s.k1 = 4;
        assert!(matches!(s.validate(), Err(Error::RankBounds { .. })));
    }
}
