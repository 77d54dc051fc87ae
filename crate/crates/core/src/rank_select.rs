//! Rank selection by Mallows' Cp over three contiguous segments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit_minar_iclse, fit_rrminar_iclse, projection_init, FitConfig};
use crate::model::CountMatrixSeries;

pub const SEGMENTS: usize = 3;

/// Lower bound on `σ²` relative to the mean squared observation.
pub const SIGMA2_REL_FLOOR: f64 = 1e-8;

/// `RSS_s/σ² − (n_obs − 2k)`.
pub fn cp_score(rss_sub: f64, sigma2_full: f64, n_obs: usize, k_params: usize) -> Result<f64> {
    if sigma2_full.is_nan() || sigma2_full <= 0.0 {
        return Err(Error::Domain(format!("sigma^2 must be positive, got {sigma2_full}")));
    }
    if n_obs == 0 {
        return Err(Error::Domain("n_obs must be positive".into()));
    }
    Ok(rss_sub / sigma2_full - (n_obs as f64 - 2.0 * k_params as f64))
}

/// Free parameters of RRMINAR(1) with ranks `(k1, k2)`, including `C`.
pub fn rrminar_param_count(m: usize, n: usize, k1: usize, k2: usize) -> usize {
    m * m + n * n - (m - k1).pow(2) - (n - k2).pow(2) + m * n
}

/// Shortest segment on which the full model leaves positive residual
/// degrees of freedom and the projection initializer is defined.
pub fn min_segment_len(m: usize, n: usize) -> usize {
    let mn = m * n;
    let p_full = m * m + n * n + mn;
    // (L − 1)·mn > p_full
    let by_dof = p_full / mn + 2;
    by_dof.max(mn + 2)
}

pub fn min_series_len(m: usize, n: usize) -> usize {
    SEGMENTS * min_segment_len(m, n)
}

/// Contiguous, near-equal `[start, end)` ranges covering `0..t_len`.
pub fn segment_bounds(t_len: usize) -> Vec<(usize, usize)> {
    (0..SEGMENTS)
        .map(|s| (s * t_len / SEGMENTS, (s + 1) * t_len / SEGMENTS))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpEntry {
    pub k1: usize,
    pub k2: usize,
    pub k_params: usize,
    pub segment_cp: Vec<f64>,
    pub mean_cp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpReport {
    pub grid: Vec<CpEntry>,
    pub selected: (usize, usize),
    /// Full-model residual variance on each segment.
    pub sigma2_full: Vec<f64>,
    pub segment_bounds: Vec<(usize, usize)>,
}

impl CpReport {
    pub fn entry(&self, k1: usize, k2: usize) -> Option<&CpEntry> {
        self.grid.iter().find(|e| e.k1 == k1 && e.k2 == k2)
    }
}

struct SegmentFits {
    sigma2: f64,
    n_obs: usize,
    /// RSS in grid order
    rss: Vec<f64>,
}

fn fit_segment(
    seg: &CountMatrixSeries,
    grid: &[(usize, usize)],
    config: &FitConfig,
) -> Result<SegmentFits> {
    let (m, n) = (seg.m(), seg.n());
    let init = projection_init(seg)?;
    let full = fit_minar_iclse(seg, &init, config)?;
    let n_obs = (seg.len() - 1) * m * n;
    let p_full = m * m + n * n + m * n;
    // an exact full fit would make σ² zero; floor it relative to the data
    // scale so that the penalty decides among (numerically) exact fits
    let scale: f64 = seg.frames()[1..].iter().map(|f| f.norm_squared()).sum::<f64>() / n_obs as f64;
    let floor = SIGMA2_REL_FLOOR * scale.max(f64::MIN_POSITIVE);
    let mut sigma2 = full.final_objective() / (n_obs - p_full) as f64;
    if sigma2 < floor {
        log::warn!("full-model residual variance {sigma2:.3e} is at the numerical floor");
        sigma2 = floor;
    }
    let rss = grid
        .par_iter()
        .map(|&(k1, k2)| Ok(fit_rrminar_iclse(seg, k1, k2, &init, config)?.final_objective()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentFits { sigma2, n_obs, rss })
}

/// Evaluates every `(k1, k2)` on each of three contiguous segments and picks
/// the smallest mean Cp; ties go to smaller `k1 + k2`, then smaller `k1`.
pub fn select_rank(series: &CountMatrixSeries, config: &FitConfig) -> Result<CpReport> {
    config.validate()?;
    let (m, n) = (series.m(), series.n());
    let needed = min_series_len(m, n);
    if series.len() < needed {
        return Err(Error::InsufficientData {
            context: "Cp rank selection (three segments)",
            needed,
            got: series.len(),
        });
    }
    let bounds = segment_bounds(series.len());
    let grid: Vec<(usize, usize)> = (1..=m).flat_map(|k1| (1..=n).map(move |k2| (k1, k2))).collect();
    let fits = bounds
        .iter()
        .map(|&(s, e)| fit_segment(&series.slice(s..e), &grid, config))
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(grid.len());
    for (g, &(k1, k2)) in grid.iter().enumerate() {
        let k_params = rrminar_param_count(m, n, k1, k2);
        let segment_cp = fits
            .iter()
            .map(|f| cp_score(f.rss[g], f.sigma2, f.n_obs, k_params))
            .collect::<Result<Vec<_>>>()?;
        let mean_cp = segment_cp.iter().sum::<f64>() / segment_cp.len() as f64;
        entries.push(CpEntry {
            k1,
            k2,
            k_params,
            segment_cp,
            mean_cp,
        });
    }
    let best = entries
        .iter()
        .min_by(|a, b| {
            a.mean_cp
                .total_cmp(&b.mean_cp)
                .then((a.k1 + a.k2).cmp(&(b.k1 + b.k2)))
                .then(a.k1.cmp(&b.k1))
        })
        .expect("grid is never empty");
    Ok(CpReport {
        selected: (best.k1, best.k2),
        grid: entries,
        sigma2_full: fits.iter().map(|f| f.sigma2).collect(),
        segment_bounds: bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::model::MinarCoefficients;
    use crate::thinning::{gen_coefficients, seeded_rng, simulate_minar, InnovationScheme};

    #[test]
    fn cp_formula() {
        assert_eq!(cp_score(100.0, 2.0, 60, 10).unwrap(), 10.0);
        let (s2, n) = (1.7, 40);
        assert!((cp_score(s2 * n as f64, s2, n, n / 2).unwrap() - n as f64).abs() < 1e-12);
        assert!(cp_score(1.0, 0.0, 10, 1).is_err());
        assert!(cp_score(1.0, 1.0, 0, 1).is_err());
    }

    #[test]
    fn cp_full_model_plug_in_identity() {
        let (n_obs, p_full) = (90, 27);
        let sigma2 = 2.5;
        let rss_full = sigma2 * (n_obs - p_full) as f64;
        let cp = cp_score(rss_full, sigma2, n_obs, p_full).unwrap();
        assert!((cp - p_full as f64).abs() < 1e-12);
    }

    #[test]
    fn cp_monotone_in_k_and_rss() {
        let a = cp_score(10.0, 1.0, 50, 3).unwrap();
        assert!(cp_score(10.0, 1.0, 50, 4).unwrap() > a);
        assert!(cp_score(11.0, 1.0, 50, 3).unwrap() > a);
    }

    #[test]
    fn parameter_count_bounds() {
        assert_eq!(rrminar_param_count(3, 3, 3, 3), 27);
        assert_eq!(rrminar_param_count(3, 3, 1, 1), 9 + 9 - 4 - 4 + 9);
        assert_eq!(rrminar_param_count(1, 1, 1, 1), 3);
    }

    #[test]
    fn segments_partition_the_series() {
        let b = segment_bounds(100);
        assert_eq!(b, vec![(0, 33), (33, 66), (66, 100)]);
    }

    #[test]
    fn short_series_is_rejected_with_minimum() {
        let (m, n) = (2, 2);
        let need = min_series_len(m, n);
        let frames = vec![DenseMatrix::from_element(m, n, 1.0); need - 1];
        let s = CountMatrixSeries::from_counts(m, n, frames).unwrap();
        match select_rank(&s, &FitConfig::default()) {
            Err(Error::InsufficientData { needed, got, .. }) => {
                assert_eq!(needed, need);
                assert_eq!(got, need - 1);
            }
            other => panic!("expected InsufficientData, got {other:?}"),
        }
    }

    #[test]
    fn grid_is_complete_and_selection_is_argmin() {
        let mut rng = seeded_rng(21, 0);
        let g = gen_coefficients(InnovationScheme::I, 3, 2, 1, 1, &mut rng).unwrap();
        let s = simulate_minar(&g.coefficients, 600, 100, &mut rng).unwrap();
        let rep = select_rank(&s, &FitConfig::default()).unwrap();
        assert_eq!(rep.grid.len(), 6);
        assert_eq!(rep.sigma2_full.len(), 3);
        let min = rep.grid.iter().map(|e| e.mean_cp).fold(f64::INFINITY, f64::min);
        assert_eq!(rep.entry(rep.selected.0, rep.selected.1).unwrap().mean_cp, min);
        let again = select_rank(&s, &FitConfig::default()).unwrap();
        assert_eq!(again.selected, rep.selected);
    }

    #[test]
    fn noiseless_rank_one_data_selects_rank_one() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.3, 0.6, 0.15, 0.3]);
        let b = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.4]);
        let c = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let coef = MinarCoefficients::new(a, b, c).unwrap();
        let mut x = DenseMatrix::from_row_slice(2, 2, &[40.0, 3.0, 7.0, 90.0]);
        let mut frames = vec![x.clone()];
        for _ in 1..60 {
            x = &coef.a * &x * coef.b.transpose() + &coef.c;
            frames.push(x.clone());
        }
        let s = CountMatrixSeries::from_real_frames(2, 2, frames).unwrap();
        let rep = select_rank(&s, &FitConfig::default()).unwrap();
        assert_eq!(rep.selected, (1, 1));
    }

    #[test]
    fn pure_noise_prefers_smallest_rank() {
        let c = DenseMatrix::from_element(2, 2, 5.0);
        let coef = MinarCoefficients::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2), c).unwrap();
        let s = simulate_minar(&coef, 900, 0, &mut seeded_rng(22, 0)).unwrap();
        let rep = select_rank(&s, &FitConfig::default()).unwrap();
        assert_eq!(rep.selected, (1, 1));
    }
}
