//! Stationary moments, innovation covariance, residual whiteness and the
//! plug-in asymptotic covariance of the reduced-rank ICLSE.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{LagMoments, GRAM_REL_TOL};
use crate::linalg::{kron, numerical_rank, pseudo_inverse, symmetric_eigen, unvec, vec_matrix, DenseMatrix};
use crate::model::{CountMatrixSeries, MinarCoefficients};
use crate::thinning::check_ranks;

fn resolvent_times_c(coeffs: &MinarCoefficients) -> Result<DVector<f64>> {
    coeffs.require_stationary()?;
    let phi = coeffs.kron_product();
    let mn = phi.nrows();
    let lhs = DenseMatrix::identity(mn, mn) - phi;
    lhs.lu()
        .solve(&vec_matrix(&coeffs.c))
        .ok_or_else(|| Error::NonStationary {
            product: coeffs.rho_product(),
        })
}

/// `unvec((I − B⊗A)⁻¹ vec C)`.
pub fn stationary_mean(coeffs: &MinarCoefficients) -> Result<DenseMatrix> {
    let v = resolvent_times_c(coeffs)?;
    unvec(&v, coeffs.m(), coeffs.n())
}

/// `diag{(I − B⊗A)⁻¹ vec C}`: the covariance of `vec Δ_t`.
pub fn innovation_cov_theoretical(coeffs: &MinarCoefficients) -> Result<DenseMatrix> {
    Ok(DenseMatrix::from_diagonal(&resolvent_times_c(coeffs)?))
}

/// `Δ_t = X_t − A X_{t-1} Bᵀ − C` for `t = 1..T-1` (0-based), vectorized.
pub fn innovations(series: &CountMatrixSeries, coeffs: &MinarCoefficients) -> Result<Vec<DVector<f64>>> {
    if coeffs.m() != series.m() || coeffs.n() != series.n() {
        return Err(Error::Dimension("coefficients do not conform to the series".into()));
    }
    let bt = coeffs.b.transpose();
    Ok((1..series.len())
        .map(|t| vec_matrix(&(series.frame(t) - &coeffs.a * series.frame(t - 1) * &bt - &coeffs.c)))
        .collect())
}

fn mean_of(v: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(v[0].len());
    for x in v {
        acc += x;
    }
    acc / v.len() as f64
}

/// Sample cross-covariance `N⁻¹ Σ (u_s − ū)(v_s − v̄)ᵀ` together with the
/// entrywise standard errors of each entry.
fn cross_cov_with_se(u: &[DVector<f64>], v: &[DVector<f64>]) -> (DenseMatrix, DenseMatrix) {
    let n = u.len() as f64;
    let (ub, vb) = (mean_of(u), mean_of(v));
    let (p, q) = (ub.len(), vb.len());
    let mut cov = DenseMatrix::zeros(p, q);
    let mut sq = DenseMatrix::zeros(p, q);
    for (x, y) in u.iter().zip(v) {
        let dx = x - &ub;
        let dy = y - &vb;
        for j in 0..q {
            for i in 0..p {
                let prod = dx[i] * dy[j];
                cov[(i, j)] += prod;
                sq[(i, j)] += prod * prod;
            }
        }
    }
    cov /= n;
    let se = DenseMatrix::from_fn(p, q, |i, j| ((sq[(i, j)] / n - cov[(i, j)].powi(2)).max(0.0) / n).sqrt());
    (cov, se)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhitenessDiagnostics {
    /// Sample mean of `Δ_t` (m×n).
    pub mean_residual: DenseMatrix,
    pub mean_se: DenseMatrix,
    /// Sample covariance of `vec Δ_t`.
    pub lag0_cov: DenseMatrix,
    pub lag0_cov_se: DenseMatrix,
    /// Cross-covariance between `vec Δ_t` and `vec X_{t-1}`.
    pub lag1_crosscov: DenseMatrix,
    pub lag1_crosscov_se: DenseMatrix,
    /// Covariance between `vec Δ_t` and `vec Δ_{t-1}`.
    pub lag1_autocov: DenseMatrix,
    pub lag1_autocov_se: DenseMatrix,
}

fn max_z(stat: &DenseMatrix, se: &DenseMatrix) -> f64 {
    stat.iter()
        .zip(se.iter())
        .map(|(s, e)| {
            if *e > 0.0 {
                (s / e).abs()
            } else if *s == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

impl WhitenessDiagnostics {
    pub fn mean_max_z(&self) -> f64 {
        max_z(&self.mean_residual, &self.mean_se)
    }

    pub fn crosscov_max_z(&self) -> f64 {
        max_z(&self.lag1_crosscov, &self.lag1_crosscov_se)
    }

    pub fn autocov_max_z(&self) -> f64 {
        max_z(&self.lag1_autocov, &self.lag1_autocov_se)
    }
}

pub fn residual_whiteness(series: &CountMatrixSeries, coeffs: &MinarCoefficients) -> Result<WhitenessDiagnostics> {
    series.require_len(10, "residual whiteness")?;
    let (m, n) = (series.m(), series.n());
    let delta = innovations(series, coeffs)?;
    let count = delta.len() as f64;
    let mean = mean_of(&delta);
    let (lag0_cov, lag0_cov_se) = cross_cov_with_se(&delta, &delta);
    let mean_se = lag0_cov.diagonal().map(|v| (v / count).sqrt());

    // Δ_t paired with X_{t-1}: delta[s] is Δ at frame s+1
    let lagged: Vec<_> = (0..delta.len()).map(|s| series.vec_frame(s)).collect();
    let (lag1_crosscov, lag1_crosscov_se) = cross_cov_with_se(&delta, &lagged);
    let (lag1_autocov, lag1_autocov_se) = cross_cov_with_se(&delta[1..], &delta[..delta.len() - 1]);
    Ok(WhitenessDiagnostics {
        mean_residual: unvec(&mean, m, n)?,
        mean_se: unvec(&mean_se, m, n)?,
        lag0_cov,
        lag0_cov_se,
        lag1_crosscov,
        lag1_crosscov_se,
        lag1_autocov,
        lag1_autocov_se,
    })
}

/// Plug-in pieces of the asymptotic covariance of
/// `√T (vec(Â − A), vec(B̂ᵀ − Bᵀ), vec(Ĉ − C))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticComponents {
    pub gamma1: DenseMatrix,
    pub gamma2: DenseMatrix,
    pub p1: DenseMatrix,
    pub p2: DenseMatrix,
    pub sigma_delta: DenseMatrix,
    pub h: DenseMatrix,
    pub xi2: DenseMatrix,
    /// `Ĥ` was rank deficient and was inverted by pseudoinverse.
    pub singular: bool,
}

impl AsymptoticComponents {
    /// `Ξ̂₂ / T`: the approximate covariance of the estimator itself.
    pub fn estimator_cov(&self, t_len: usize) -> DenseMatrix {
        &self.xi2 / t_len as f64
    }
}

fn projector(eig_target: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let u = symmetric_eigen(eig_target)?.top(k);
    Ok(&u * u.transpose())
}

fn set_block(dst: &mut DenseMatrix, r: usize, c: usize, src: &DenseMatrix) {
    dst.view_mut((r, c), src.shape()).copy_from(src);
}

pub fn asymptotic_cov_plugin(
    series: &CountMatrixSeries,
    coeffs: &MinarCoefficients,
    k1: usize,
    k2: usize,
) -> Result<AsymptoticComponents> {
    series.require_len(50, "asymptotic covariance plug-in")?;
    let (m, n) = (series.m(), series.n());
    check_ranks(m, n, k1, k2)?;
    let (a, b, c) = (&coeffs.a, &coeffs.b, &coeffs.c);
    let delta = innovations(series, coeffs)?;
    let pairs = delta.len() as f64;
    let lagged = &series.frames()[..series.len() - 1];

    let mom = LagMoments::from_series(series);
    let (s1yx, s1xx) = mom.s1(b, c);
    let p1 = projector(&(&s1yx * pseudo_inverse(&s1xx, GRAM_REL_TOL) * s1yx.transpose()), k1)?;
    let (s2yx, s2xx) = mom.s2(a, c);
    let p2 = projector(&(&s2yx * pseudo_inverse(&s2xx, GRAM_REL_TOL) * s2yx.transpose()), k2)?;

    let ata = a.transpose() * a;
    let btb = b.transpose() * b;
    let mut gamma1 = DenseMatrix::zeros(n, n);
    let mut gamma2 = DenseMatrix::zeros(m, m);
    for x in lagged {
        gamma1 += x.transpose() * &ata * x;
        gamma2 += x * &btb * x.transpose();
    }
    gamma1 /= pairs;
    gamma2 /= pairs;

    let (sigma_delta, _) = cross_cov_with_se(&delta, &delta);

    let (im, in_, imn) = (
        DenseMatrix::identity(m, m),
        DenseMatrix::identity(n, n),
        DenseMatrix::identity(m * n, m * n),
    );
    let l1 = &gamma2 * a.transpose() * pseudo_inverse(&(a * &gamma2 * a.transpose()), GRAM_REL_TOL) * a;
    let l2 = &gamma1 * b.transpose() * pseudo_inverse(&(b * &gamma1 * b.transpose()), GRAM_REL_TOL) * b;
    let (qp1, qp2) = (&im - &p1, &in_ - &p2);

    let dim = m * m + n * n + m * n;
    let (o2, o3) = (m * m, m * m + n * n);
    let mut w_bar = DenseMatrix::zeros(dim, dim);
    let mut m_bar = DenseMatrix::zeros(dim, dim);
    let mut q = DenseMatrix::zeros(dim, m * n);
    let mut w = DenseMatrix::zeros(dim, dim);
    set_block(&mut q, o3, 0, &imn);
    set_block(&mut w, o3, o3, &imn);
    for x in lagged {
        let xbt = x * b.transpose();
        let ax = a * x;
        let xtat = ax.transpose();
        let bxt = xbt.transpose();
        set_block(&mut q, 0, 0, &(kron(&xbt, &p1) + kron(&(&l1 * &xbt), &qp1)));
        set_block(&mut q, o2, 0, &(kron(&p2, &xtat) + kron(&qp2, &(&l2 * &xtat))));
        m_bar += &q * &sigma_delta * q.transpose();

        set_block(&mut w, 0, 0, &kron(&(&xbt * &bxt), &im));
        set_block(&mut w, 0, o2, &kron(&xbt, &ax));
        set_block(&mut w, 0, o3, &kron(&xbt, &p1));
        set_block(&mut w, o2, 0, &kron(&bxt, &xtat));
        set_block(&mut w, o2, o2, &kron(&in_, &(&xtat * &ax)));
        set_block(&mut w, o2, o3, &kron(&p2, &xtat));
        set_block(&mut w, o3, 0, &kron(&bxt, &im));
        set_block(&mut w, o3, o2, &kron(&in_, &ax));
        w_bar += &w;
    }
    w_bar /= pairs;
    m_bar /= pairs;

    let mut gamma = DVector::zeros(dim);
    gamma.rows_mut(0, m * m).copy_from(&vec_matrix(a));
    let h = w_bar + &gamma * gamma.transpose();
    let singular = numerical_rank(&h, GRAM_REL_TOL) < dim;
    if singular {
        log::warn!("plug-in H is singular; using its pseudoinverse");
    }
    let h_inv = pseudo_inverse(&h, GRAM_REL_TOL);
    let xi = &h_inv * m_bar * h_inv.transpose();
    let xi2 = (&xi + xi.transpose()) * 0.5;
    Ok(AsymptoticComponents {
        gamma1,
        gamma2,
        p1,
        p2,
        sigma_delta,
        h,
        xi2,
        singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thinning::{seeded_rng, simulate_minar};

    fn scalar(a: f64, b: f64, c: f64) -> MinarCoefficients {
        let f = |v| DenseMatrix::from_element(1, 1, v);
        MinarCoefficients::new(f(a), f(b), f(c)).unwrap()
    }

    fn two_by_two() -> MinarCoefficients {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.4]);
        let b = DenseMatrix::from_row_slice(2, 2, &[0.6, 0.3, 0.2, 0.5]);
        let c = DenseMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 1.5]);
        MinarCoefficients::new(a, b, c).unwrap()
    }

    #[test]
    fn scalar_geometric_series() {
        let s = scalar(0.5, 0.5, 3.0);
        assert!((stationary_mean(&s).unwrap()[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((innovation_cov_theoretical(&s).unwrap()[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_dynamics_collapse_to_c() {
        let c = DenseMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let coef = MinarCoefficients::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(3, 3), c.clone()).unwrap();
        assert_eq!(stationary_mean(&coef).unwrap(), c);
        let cov = innovation_cov_theoretical(&coef).unwrap();
        assert_eq!(cov, DenseMatrix::from_diagonal(&vec_matrix(&c)));
    }

    #[test]
    fn nonstationary_is_rejected() {
        let s = scalar(1.0, 1.2, 1.0);
        assert!(matches!(stationary_mean(&s), Err(Error::NonStationary { .. })));
        assert!(innovation_cov_theoretical(&s).is_err());
    }

    #[test]
    fn stationary_mean_is_nonnegative_and_matches_simulation() {
        let coef = two_by_two();
        let mu = stationary_mean(&coef).unwrap();
        assert!(mu.iter().all(|v| *v >= 0.0));
        let s = simulate_minar(&coef, 20_000, 200, &mut seeded_rng(11, 0)).unwrap();
        let mean = s.frames().iter().fold(DenseMatrix::zeros(2, 2), |acc, f| acc + f) / 20_000.0;
        for (got, want) in mean.iter().zip(mu.iter()) {
            assert!((got - want).abs() < 0.05 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn whiteness_under_truth_and_misspecification() {
        let coef = two_by_two();
        let s = simulate_minar(&coef, 20_000, 200, &mut seeded_rng(12, 0)).unwrap();
        let d = residual_whiteness(&s, &coef).unwrap();
        assert!(d.mean_max_z() < 4.0, "mean z {}", d.mean_max_z());
        assert!(d.crosscov_max_z() < 4.0, "cross z {}", d.crosscov_max_z());
        assert!(d.autocov_max_z() < 4.0, "auto z {}", d.autocov_max_z());

        let mut wrong = coef.clone();
        wrong.a.add_scalar_mut(0.3);
        let d = residual_whiteness(&s, &wrong).unwrap();
        assert!(d.crosscov_max_z() > 4.0);
    }

    #[test]
    fn whiteness_is_exactly_zero_on_deterministic_data() {
        let c = DenseMatrix::from_element(2, 2, 3.0);
        let coef = MinarCoefficients::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2), c.clone()).unwrap();
        let s = CountMatrixSeries::from_counts(2, 2, vec![c; 20]).unwrap();
        let d = residual_whiteness(&s, &coef).unwrap();
        assert_eq!(d.mean_residual.amax(), 0.0);
        assert_eq!(d.lag1_crosscov.amax(), 0.0);
        assert_eq!(d.lag1_autocov.amax(), 0.0);
        assert_eq!(d.crosscov_max_z(), 0.0);
    }

    #[test]
    fn plugin_shapes_and_contracts() {
        let coef = two_by_two().normalized();
        let s = simulate_minar(&coef, 400, 100, &mut seeded_rng(13, 0)).unwrap();
        for (k1, k2) in [(1, 1), (2, 2)] {
            let comp = asymptotic_cov_plugin(&s, &coef, k1, k2).unwrap();
            assert_eq!(comp.xi2.shape(), (12, 12));
            assert_eq!(comp.h.shape(), (12, 12));
            for p in [&comp.p1, &comp.p2] {
                assert!((p * p - p).amax() < 1e-8);
                assert!((p - p.transpose()).amax() < 1e-8);
            }
            assert!((&comp.xi2 - comp.xi2.transpose()).amax() < 1e-8);
            let eig = comp.xi2.clone().symmetric_eigen();
            let scale = eig.eigenvalues.amax();
            assert!(eig.eigenvalues.iter().all(|v| *v >= -1e-8 * scale.max(1.0)));
            let sd = comp.sigma_delta.clone().symmetric_eigen();
            assert!(sd.eigenvalues.iter().all(|v| *v >= -1e-8));
        }
        assert!(asymptotic_cov_plugin(&s.slice(0..40), &coef, 1, 1).is_err());
        assert!(asymptotic_cov_plugin(&s, &coef, 3, 1).is_err());
    }
}
