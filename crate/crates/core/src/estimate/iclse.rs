//! Iterative conditional least squares for MINAR(1) and RRMINAR(1).

use super::{fit_mginar_lse, invert_gram, EstimationResult, FitConfig, LagMoments};
use crate::error::{Error, Result};
use crate::linalg::{nkp_rearrange_project, symmetric_eigen, truncate_rank, DenseMatrix};
use crate::model::{CountMatrixSeries, MinarCoefficients};
use crate::thinning::check_ranks;

/// Initial `(A0, B0, C0)`: nearest Kronecker factors of the MGINAR(1) least
/// squares `Φ̂`, with `C0` the mean residual. `‖A0‖_F = 1`; entries may be
/// negative.
pub fn projection_init(series: &CountMatrixSeries) -> Result<MinarCoefficients> {
    let (m, n) = (series.m(), series.n());
    let fit = fit_mginar_lse(series, true)?;
    let (a0, b0) = nkp_rearrange_project(&fit.phi, m, n)?;
    let mom = LagMoments::from_series(series);
    let c0 = mom.c_update(&a0, &b0);
    MinarCoefficients::new(a0, b0, c0)
}

/// One block update. Without a rank cap this is `S_yx S_xx⁻¹`; with rank
/// `k` it is `U Uᵀ S_yx S_xx⁻¹` where `U` holds the top-`k` eigenvectors of
/// the symmetrized `S_yx S_xx⁻¹ S_yxᵀ`.
fn block_step(
    syx: &DenseMatrix,
    sxx: &DenseMatrix,
    rank: Option<usize>,
    ridge: f64,
    what: &'static str,
) -> Result<(DenseMatrix, bool)> {
    let (inv, deficient) = invert_gram(sxx, ridge, what)?;
    let unconstrained = syx * inv;
    match rank {
        Some(k) if k < syx.nrows() => {
            let target = &unconstrained * syx.transpose();
            let eig = symmetric_eigen(&target)?;
            let u = eig.top(k);
            Ok((&u * u.transpose() * unconstrained, deficient))
        }
        _ => Ok((unconstrained, deficient)),
    }
}

fn iclse(
    series: &CountMatrixSeries,
    ranks: Option<(usize, usize)>,
    init: &MinarCoefficients,
    config: &FitConfig,
) -> Result<EstimationResult> {
    config.validate()?;
    series.require_len(2, "ICLSE")?;
    let (m, n) = (series.m(), series.n());
    if init.m() != m || init.n() != n {
        return Err(Error::Dimension(format!(
            "initial coefficients are for {}x{}, series is {m}x{n}",
            init.m(),
            init.n()
        )));
    }
    let mom = LagMoments::from_series(series);
    let delta = config.delta_rule.threshold(series.len());
    let (rank_a, rank_b) = match ranks {
        Some((k1, k2)) => (Some(k1), Some(k2)),
        None => (None, None),
    };

    // positive rescaling only; the sign is fixed once at the end
    let scale = |a: &mut DenseMatrix, b: &mut DenseMatrix| {
        let an = a.norm();
        if an > 0.0 {
            *a /= an;
            *b *= an;
        }
    };

    // start from a point that satisfies the rank constraint so the first
    // block step cannot raise the objective
    let (mut a_prev, mut b_prev, mut c_prev) = match ranks {
        Some((k1, k2)) => {
            let a = truncate_rank(&init.a, k1);
            let b = truncate_rank(&init.b, k2);
            let c = if k1 < m || k2 < n { mom.c_update(&a, &b) } else { init.c.clone() };
            (a, b, c)
        }
        None => (init.a.clone(), init.b.clone(), init.c.clone()),
    };
    scale(&mut a_prev, &mut b_prev);

    let mut trace = vec![mom.objective(&a_prev, &b_prev, &c_prev)];
    let mut converged = false;
    let mut iterations = 0;
    let mut stop_delta = f64::INFINITY;
    let mut fallbacks = 0;

    for _ in 0..config.max_iterations {
        iterations += 1;
        let (s1yx, s1xx) = mom.s1(&b_prev, &c_prev);
        let (mut a, def_a) = block_step(&s1yx, &s1xx, rank_a, config.ridge, "A-step S1xx")?;
        let (s2yx, s2xx) = mom.s2(&a, &c_prev);
        let (mut b, def_b) = block_step(&s2yx, &s2xx, rank_b, config.ridge, "B-step S2xx")?;
        fallbacks += def_a as usize + def_b as usize;
        let c = mom.c_update(&a, &b);
        scale(&mut a, &mut b);

        let da = (&a - &a_prev).norm();
        let db = (&b - &b_prev).norm();
        let dc = (&c - &c_prev).norm();
        stop_delta = da.max(db).max(dc);
        trace.push(mom.objective(&a, &b, &c));
        a_prev = a;
        b_prev = b;
        c_prev = c;
        if da < delta && db < delta && dc < delta {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "ICLSE stopped after {iterations} iterations without meeting delta {delta:.3e} (last change {stop_delta:.3e})"
        );
    }

    let (k1, k2) = ranks.unwrap_or((m, n));
    let mut coefficients = MinarCoefficients::new(a_prev, b_prev, c_prev)?
        .with_ranks(k1, k2)
        .normalized();
    let mode = config.negative_correction;
    let mut negatives_corrected = mode.apply(&mut coefficients.a);
    negatives_corrected |= mode.apply(&mut coefficients.b);
    negatives_corrected |= mode.apply(&mut coefficients.c);
    if negatives_corrected {
        coefficients = coefficients.normalized();
    }
    Ok(EstimationResult {
        coefficients,
        objective_trace: trace,
        iterations,
        converged,
        stop_delta,
        negatives_corrected,
        gram_fallbacks: fallbacks,
    })
}

/// Unconstrained MINAR(1) ICLSE: alternating exact least-squares updates of
/// `A`, `B` and `C`.
pub fn fit_minar_iclse(
    series: &CountMatrixSeries,
    init: &MinarCoefficients,
    config: &FitConfig,
) -> Result<EstimationResult> {
    iclse(series, None, init, config)
}

/// Reduced-rank ICLSE with `rank(A) ≤ k1`, `rank(B) ≤ k2`.
pub fn fit_rrminar_iclse(
    series: &CountMatrixSeries,
    k1: usize,
    k2: usize,
    init: &MinarCoefficients,
    config: &FitConfig,
) -> Result<EstimationResult> {
    check_ranks(series.m(), series.n(), k1, k2)?;
    iclse(series, Some((k1, k2)), init, config)
}
