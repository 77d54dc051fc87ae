//! Seven-model comparison on an observed count matrix series: fit on a
//! training prefix, then score one-step forecasts in and out of sample.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    fit_cellwise_inar, fit_colwise_mginar, fit_mginar_lse, fit_minar_iclse, fit_rowwise_mginar,
    fit_rrminar_iclse, projection_init, FitConfig,
};
use crate::experiment::ModelKind;
use crate::forecast::{evaluate_model, one_step_forecasts, Forecaster, MetricsReport};
use crate::linalg::DenseMatrix;
use crate::model::{CountMatrixSeries, MinarCoefficients, NegativeCorrection};
use crate::rank_select::{select_rank, CpReport};

/// Default number of held-out frames.
pub const DEFAULT_TEST_LEN: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    /// First test frame; `None` holds out the last `test_len` frames.
    pub split_at: Option<usize>,
    pub test_len: usize,
    /// First frame scored in sample. Shared by all models so that their
    /// in-sample windows coincide; must be at least the largest lag (2).
    pub eval_start: usize,
    /// RRMINAR ranks; `None` selects them by Cp on the training frames.
    pub rank: Option<(usize, usize)>,
    pub fit: FitConfig,
    pub models: Vec<ModelKind>,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            split_at: None,
            test_len: DEFAULT_TEST_LEN,
            eval_start: 2,
            rank: None,
            fit: FitConfig {
                negative_correction: NegativeCorrection::Absolute,
                ..FitConfig::default()
            },
            models: ModelKind::ALL.to_vec(),
        }
    }
}

impl ComparisonConfig {
    pub fn split_for(&self, t_len: usize) -> Result<usize> {
        let split = match self.split_at {
            Some(s) => s,
            None => t_len.checked_sub(self.test_len).ok_or_else(|| Error::InsufficientData {
                context: "train/test split",
                needed: self.test_len + self.eval_start + 1,
                got: t_len,
            })?,
        };
        if split <= self.eval_start || split >= t_len {
            return Err(Error::InsufficientData {
                context: "train/test split",
                needed: self.eval_start + 2,
                got: t_len,
            });
        }
        Ok(split)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub in_sample: MetricsReport,
    pub out_of_sample: MetricsReport,
    pub negatives_corrected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub split_at: usize,
    pub eval_start: usize,
    pub rank: (usize, usize),
    pub cp_report: Option<CpReport>,
    pub rows: Vec<ComparisonRow>,
    /// Fitted MINAR and RRMINAR coefficients.
    pub minar: Option<MinarCoefficients>,
    pub rrminar: Option<MinarCoefficients>,
    /// Forecasts of frames `eval_start..T`, per model in `rows` order.
    #[serde(skip)]
    pub forecasts: Vec<Vec<DenseMatrix>>,
}

pub fn run_comparison(series: &CountMatrixSeries, config: &ComparisonConfig) -> Result<Comparison> {
    config.fit.validate()?;
    if config.models.is_empty() {
        return Err(Error::InvalidConfig("no models requested".into()));
    }
    if config.eval_start < 2 {
        return Err(Error::InvalidConfig("eval_start must be at least 2".into()));
    }
    let split = config.split_for(series.len())?;
    let train = series.slice(0..split);
    let mode = config.fit.negative_correction;

    let (rank, cp_report) = match config.rank {
        Some(r) => (r, None),
        None if config.models.contains(&ModelKind::Rrminar) => {
            let rep = select_rank(&train, &config.fit)?;
            log::info!("Cp selected ranks {:?}", rep.selected);
            (rep.selected, Some(rep))
        }
        None => ((series.m(), series.n()), None),
    };

    let needs_init = config.models.iter().any(|k| matches!(k, ModelKind::Minar | ModelKind::Rrminar));
    let init = if needs_init { Some(projection_init(&train)?) } else { None };

    let mut rows = Vec::new();
    let mut forecasts = Vec::new();
    let (mut minar, mut rrminar) = (None, None);
    for &kind in &config.models {
        let (model, corrected): (Box<dyn Forecaster>, bool) = match kind {
            ModelKind::Minar | ModelKind::Rrminar => {
                let init = init.as_ref().expect("initialized above");
                let res = if kind == ModelKind::Minar {
                    fit_minar_iclse(&train, init, &config.fit)?
                } else {
                    fit_rrminar_iclse(&train, rank.0, rank.1, init, &config.fit)?
                };
                if !res.converged {
                    log::warn!("{kind} did not converge in {} iterations", res.iterations);
                }
                let coef = res.coefficients;
                if kind == ModelKind::Minar {
                    minar = Some(coef.clone());
                } else {
                    rrminar = Some(coef.clone());
                }
                (Box::new(coef), res.negatives_corrected)
            }
            ModelKind::Mginar => {
                let mut f = fit_mginar_lse(&train, true)?;
                let c = f.correct(mode);
                (Box::new(f), c)
            }
            ModelKind::MginarRow => {
                let mut f = fit_rowwise_mginar(&train)?;
                let c = f.correct(mode);
                (Box::new(f), c)
            }
            ModelKind::MginarCol => {
                let mut f = fit_colwise_mginar(&train)?;
                let c = f.correct(mode);
                (Box::new(f), c)
            }
            ModelKind::IInar1 | ModelKind::IInar2 => {
                let p = if kind == ModelKind::IInar1 { 1 } else { 2 };
                let mut f = fit_cellwise_inar(&train, p)?;
                let c = f.correct(mode);
                (Box::new(f), c)
            }
        };
        let (in_sample, out_of_sample) = evaluate_model(series, model.as_ref(), split, config.eval_start)?;
        forecasts.push(one_step_forecasts(series, model.as_ref(), config.eval_start..series.len())?);
        rows.push(ComparisonRow {
            model: kind,
            in_sample,
            out_of_sample,
            negatives_corrected: corrected,
        });
    }
    Ok(Comparison {
        split_at: split,
        eval_start: config.eval_start,
        rank,
        cp_report,
        rows,
        minar,
        rrminar,
        forecasts,
    })
}

/// One line per (model, scope) with E1–E4.
pub fn write_metrics_csv<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "scope", "E1", "E2", "E3", "E4", "horizon", "zero_denominator_substitutions"])?;
    for r in &cmp.rows {
        for m in [&r.in_sample, &r.out_of_sample] {
            w.write_record([
                r.model.to_string(),
                m.scope.to_string(),
                m.e1.to_string(),
                m.e2.to_string(),
                m.e3.to_string(),
                m.e4.to_string(),
                m.horizon.to_string(),
                m.zero_denominator_substitutions.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready per-cell forecasts next to the observed counts.
pub fn write_forecasts_csv<W: Write>(
    out: W,
    cmp: &Comparison,
    series: &CountMatrixSeries,
    row_labels: &[String],
    col_labels: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "t", "row_label", "col_label", "scope", "actual", "forecast"])?;
    for (r, f) in cmp.rows.iter().zip(&cmp.forecasts) {
        for (k, xh) in f.iter().enumerate() {
            let t = cmp.eval_start + k;
            let scope = if t < cmp.split_at { "in_sample" } else { "out_of_sample" };
            for (i, rl) in row_labels.iter().enumerate() {
                for (j, cl) in col_labels.iter().enumerate() {
                    w.write_record([
                        r.model.to_string(),
                        t.to_string(),
                        rl.clone(),
                        cl.clone(),
                        scope.to_string(),
                        series.frame(t)[(i, j)].to_string(),
                        xh[(i, j)].to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
