//! `rrminar` command-line tool.
//!
//! Every JSON file written here carries a `schema_version` field. Output
//! layouts:
//!
//! * `simulate`: `series.csv` (`t,i,j,count`) and `series.json` with the
//!   setting, seed and true coefficients.
//! * `fit`: `A.csv`, `B.csv`, `C.csv` (`i,j,value`) and `trace.csv` for the
//!   MINAR family; `phi.csv` and `intercept.csv` for the MGINAR family;
//!   `alpha_<lag>.csv` and `intercept.csv` for cellwise INAR. Always
//!   `fit.json`.
//! * `select`: `cp.csv` and `cp.json`.
//! * `evaluate`: `metrics.csv` and `metrics.json`.
//! * `crime`: `series.csv`, `metrics.csv`, `forecasts.csv`, `report.json`.
//! * `experiment`: `records.csv`, `curves.csv`, `rank_success.csv`,
//!   `summary.json`.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use rrminar::experiment::{self, ExperimentPlan, ModelKind};
use rrminar::estimate::{
    fit_cellwise_inar, fit_colwise_mginar, fit_mginar_lse, fit_rowwise_mginar, EstimationResult,
};
use rrminar::forecast::{evaluate, MetricsReport};
use rrminar::io::{self, LabelOrder, SCHEMA_VERSION};
use rrminar::pipeline::{self, ComparisonConfig};
use rrminar::rank_select::{select_rank, CpReport};
use rrminar::thinning::{simulate_setting, DEFAULT_BURN_IN};
use rrminar::{
    fit_minar_iclse, fit_rrminar_iclse, projection_init, CountMatrixSeries, DeltaRule, DenseMatrix, FitConfig,
    InnovationScheme, MinarCoefficients, NegativeCorrection, SimulationSetting,
};

#[derive(Parser)]
#[command(name = "rrminar", version, about = "Reduced-rank matrix INAR(1) modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a MINAR(1) series with random coefficients.
    Simulate(SimulateArgs),
    /// Fit one model to a series CSV.
    Fit(FitArgs),
    /// Choose RRMINAR ranks by segment-averaged Cp.
    Select(SelectArgs),
    /// Score one-step forecasts of saved MINAR coefficients.
    Evaluate(EvaluateArgs),
    /// Ingest long-format daily counts and compare all seven models.
    Crime(CrimeArgs),
    /// Run a Monte Carlo experiment plan.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Random seed; for `experiment` it replaces the plan's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitFlags {
    /// Stop threshold: inv_t or fixed:<x>.
    #[arg(long, default_value = "inv_t", value_parser = parse_via::<DeltaRule>)]
    delta_rule: DeltaRule,
    /// none, absolute or clamp_zero.
    #[arg(long, value_parser = parse_via::<NegativeCorrection>)]
    negative_correction: Option<NegativeCorrection>,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
}

impl FitFlags {
    fn config(&self, default_correction: NegativeCorrection) -> FitConfig {
        FitConfig {
            max_iterations: self.max_iter,
            delta_rule: self.delta_rule,
            negative_correction: self.negative_correction.unwrap_or(default_correction),
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k1: usize,
    #[arg(long)]
    k2: usize,
    #[arg(long = "T")]
    t_len: usize,
    /// Innovation scheme I, II or III.
    #[arg(long, default_value = "I", value_parser = parse_via::<InnovationScheme>)]
    setting: InnovationScheme,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
}

#[derive(Clone, Copy, Debug)]
enum RankArg {
    Auto,
    Fixed(usize, usize),
}

fn parse_rank(s: &str) -> std::result::Result<RankArg, String> {
    if s == "auto" {
        return Ok(RankArg::Auto);
    }
    let (a, b) = s.split_once(',').ok_or("expected 'auto' or 'k1,k2'")?;
    let k1 = a.trim().parse().map_err(|_| format!("bad k1 '{a}'"))?;
    let k2 = b.trim().parse().map_err(|_| format!("bad k2 '{b}'"))?;
    Ok(RankArg::Fixed(k1, k2))
}

fn parse_via<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: FitFlags,
    /// Series CSV with header t,i,j,count.
    #[arg(long)]
    input: PathBuf,
    /// minar, rrminar, mginar, mginar_row, mginar_col, iinar1 or iinar2.
    #[arg(long, value_parser = parse_via::<ModelKind>)]
    model: ModelKind,
    /// RRMINAR ranks, `auto` or `k1,k2`.
    #[arg(long, value_parser = parse_rank)]
    rank: Option<RankArg>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: FitFlags,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Directory holding A.csv, B.csv and C.csv.
    #[arg(long)]
    coef_dir: PathBuf,
    /// First out-of-sample frame.
    #[arg(long)]
    split_at: usize,
}

#[derive(Args)]
struct CrimeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: FitFlags,
    /// Long CSV with header date,row_label,col_label,count.
    #[arg(long)]
    input: PathBuf,
    /// JSON file `{"rows": [...], "cols": [...]}`; labels sort
    /// lexicographically without it.
    #[arg(long)]
    order: Option<PathBuf>,
    #[arg(long, default_value_t = io::DEFAULT_FILL_THRESHOLD)]
    fill_threshold: f64,
    /// First test frame; defaults to holding out the last --test-len frames.
    #[arg(long)]
    split_at: Option<usize>,
    #[arg(long, default_value_t = pipeline::DEFAULT_TEST_LEN)]
    test_len: usize,
    #[arg(long, default_value = "auto", value_parser = parse_rank)]
    rank: RankArg,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// Plan JSON.
    #[arg(long)]
    plan: PathBuf,
    /// Override the plan's replication count.
    #[arg(long)]
    replications: Option<usize>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RRMINAR_LOG", "warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Crime(a) => crime(a),
        Command::Experiment(a) => run_experiment(a),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_csv_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> rrminar::Result<()>,
{
    io::atomic_write(path, f).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_json(path, value).with_context(|| format!("writing {}", path.display()))
}

fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_csv_file(path, |w| io::write_matrix_csv(w, m))
}

fn read_series(path: &Path) -> Result<CountMatrixSeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    io::read_series_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    io::read_matrix_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let setting = SimulationSetting {
        scheme: a.setting,
        m: a.m,
        n: a.n,
        k1: a.k1,
        k2: a.k2,
        t_len: a.t_len,
        burn_in: a.burn_in,
        seed: a.common.seed.unwrap_or(0),
    };
    let (model, series) = simulate_setting(&setting)?;
    let out = &a.common.out_dir;
    prepare_out(out)?;
    write_csv_file(&out.join("series.csv"), |w| io::write_series_csv(w, &series))?;
    write_json(
        &out.join("series.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "setting": setting,
            "seed": setting.seed,
            "coefficients": model.coefficients,
            "rates": model.rates,
        }),
    )?;
    log::info!("wrote {} frames of {}x{}", series.len(), series.m(), series.n());
    Ok(())
}

fn write_iclse(out: &Path, res: &EstimationResult) -> Result<()> {
    let c = &res.coefficients;
    write_matrix(&out.join("A.csv"), &c.a)?;
    write_matrix(&out.join("B.csv"), &c.b)?;
    write_matrix(&out.join("C.csv"), &c.c)?;
    write_csv_file(&out.join("trace.csv"), |w| {
        writeln!(w, "iteration,objective")?;
        for (i, v) in res.objective_trace.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    })
}

fn fit(a: FitArgs) -> Result<()> {
    let series = read_series(&a.input)?;
    let cfg = a.flags.config(NegativeCorrection::None);
    cfg.validate()?;
    if a.rank.is_some() && a.model != ModelKind::Rrminar {
        bail!("--rank applies to rrminar only, not {}", a.model);
    }
    let out = &a.common.out_dir;
    prepare_out(out)?;
    let mode = cfg.negative_correction;
    let (m, n) = (series.m(), series.n());
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "model": a.model,
        "input": a.input,
        "T": series.len(),
        "m": m,
        "n": n,
        "fit_config": cfg,
    });
    match a.model {
        ModelKind::Minar | ModelKind::Rrminar => {
            let init = projection_init(&series)?;
            let res = if a.model == ModelKind::Minar {
                fit_minar_iclse(&series, &init, &cfg)?
            } else {
                let (k1, k2, cp) = match a.rank.unwrap_or(RankArg::Auto) {
                    RankArg::Fixed(k1, k2) => (k1, k2, None),
                    RankArg::Auto => {
                        let rep = select_rank(&series, &cfg)?;
                        log::info!("Cp selected ranks {:?}", rep.selected);
                        (rep.selected.0, rep.selected.1, Some(rep))
                    }
                };
                report["rank"] = json!([k1, k2]);
                report["cp_report"] = json!(cp);
                fit_rrminar_iclse(&series, k1, k2, &init, &cfg)?
            };
            if !res.converged {
                log::warn!("ICLSE did not converge in {} iterations", res.iterations);
            }
            write_iclse(out, &res)?;
            report["iterations"] = json!(res.iterations);
            report["converged"] = json!(res.converged);
            report["stop_delta"] = json!(res.stop_delta);
            report["negatives_corrected"] = json!(res.negatives_corrected);
            report["final_objective"] = json!(res.final_objective());
            report["gram_fallbacks"] = json!(res.gram_fallbacks);
            report["coefficients"] = json!(res.coefficients);
        }
        ModelKind::Mginar | ModelKind::MginarRow | ModelKind::MginarCol => {
            let mn = m * n;
            let params = if a.model == ModelKind::Mginar { mn * mn } else { mn * m.max(n) };
            if params > series.len() {
                log::warn!(
                    "{} has {params} autoregressive parameters for {} frames; the fit is under-determined and uses a pseudoinverse",
                    a.model,
                    series.len()
                );
            }
            let (phi, intercept, deficient, corrected) = match a.model {
                ModelKind::Mginar => {
                    let mut f = fit_mginar_lse(&series, true)?;
                    let c = f.correct(mode);
                    (f.phi.clone(), f.intercept_matrix(), f.rank_deficient, c)
                }
                ModelKind::MginarRow => {
                    let mut f = fit_rowwise_mginar(&series)?;
                    let c = f.correct(mode);
                    let d = f.rows.iter().any(|r| r.rank_deficient);
                    (f.to_phi(), f.intercept_matrix(), d, c)
                }
                _ => {
                    let mut f = fit_colwise_mginar(&series)?;
                    let c = f.correct(mode);
                    let d = f.cols.iter().any(|r| r.rank_deficient);
                    (f.to_phi(), f.intercept_matrix(), d, c)
                }
            };
            write_matrix(&out.join("phi.csv"), &phi)?;
            write_matrix(&out.join("intercept.csv"), &intercept)?;
            report["rank_deficient"] = json!(deficient);
            report["negatives_corrected"] = json!(corrected);
        }
        ModelKind::IInar1 | ModelKind::IInar2 => {
            let p = if a.model == ModelKind::IInar1 { 1 } else { 2 };
            let mut f = fit_cellwise_inar(&series, p)?;
            let corrected = f.correct(mode);
            for lag in 0..p {
                let alpha = DenseMatrix::from_fn(m, n, |i, j| f.fit(i, j).alphas[lag]);
                write_matrix(&out.join(format!("alpha_{}.csv", lag + 1)), &alpha)?;
            }
            let lambda = DenseMatrix::from_fn(m, n, |i, j| f.fit(i, j).lambda);
            write_matrix(&out.join("intercept.csv"), &lambda)?;
            report["rank_deficient"] = json!(f.fits.iter().any(|x| x.rank_deficient));
            report["negatives_corrected"] = json!(corrected);
        }
    }
    write_json(&out.join("fit.json"), &report)
}

fn write_cp_csv(path: &Path, rep: &CpReport) -> Result<()> {
    write_csv_file(path, |w| {
        write!(w, "k1,k2,k_params,mean_cp")?;
        for s in 0..rep.segment_bounds.len() {
            write!(w, ",cp_segment_{}", s + 1)?;
        }
        writeln!(w, ",selected")?;
        for e in &rep.grid {
            write!(w, "{},{},{},{}", e.k1, e.k2, e.k_params, e.mean_cp)?;
            for v in &e.segment_cp {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", (e.k1, e.k2) == rep.selected)?;
        }
        Ok(())
    })
}

fn select(a: SelectArgs) -> Result<()> {
    let series = read_series(&a.input)?;
    let cfg = a.flags.config(NegativeCorrection::None);
    let rep = select_rank(&series, &cfg)?;
    let out = &a.common.out_dir;
    prepare_out(out)?;
    write_cp_csv(&out.join("cp.csv"), &rep)?;
    write_json(
        &out.join("cp.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "selected": rep.selected, "report": rep }),
    )?;
    println!("{} {}", rep.selected.0, rep.selected.1);
    Ok(())
}

fn metrics_row(w: &mut dyn Write, model: &str, r: &MetricsReport) -> rrminar::Result<()> {
    writeln!(
        w,
        "{model},{},{},{},{},{},{},{}",
        r.scope, r.e1, r.e2, r.e3, r.e4, r.horizon, r.zero_denominator_substitutions
    )?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let series = read_series(&a.input)?;
    let coeffs = MinarCoefficients::new(
        read_matrix(&a.coef_dir.join("A.csv"))?,
        read_matrix(&a.coef_dir.join("B.csv"))?,
        read_matrix(&a.coef_dir.join("C.csv"))?,
    )?;
    let (ins, oos) = evaluate(&series, &coeffs, a.split_at)?;
    let out = &a.common.out_dir;
    prepare_out(out)?;
    write_csv_file(&out.join("metrics.csv"), |w| {
        writeln!(w, "model,scope,E1,E2,E3,E4,horizon,zero_denominator_substitutions")?;
        metrics_row(w, "MINAR", &ins)?;
        metrics_row(w, "MINAR", &oos)
    })?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "split_at": a.split_at,
            "in_sample": ins,
            "out_of_sample": oos,
        }),
    )
}

fn crime(a: CrimeArgs) -> Result<()> {
    let order = match &a.order {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let o: LabelOrder = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            Some(o)
        }
        None => None,
    };
    let f = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let ing = io::ingest_long_csv(BufReader::new(f), order.as_ref(), a.fill_threshold)
        .with_context(|| format!("ingesting {}", a.input.display()))?;
    if ing.zero_filled > 0 {
        log::warn!("{} missing (date, row, col) cells filled with 0", ing.zero_filled);
    }
    if ing.dropped > 0 {
        log::warn!("{} records outside the label order dropped", ing.dropped);
    }
    let cfg = ComparisonConfig {
        split_at: a.split_at,
        test_len: a.test_len,
        rank: match a.rank {
            RankArg::Auto => None,
            RankArg::Fixed(k1, k2) => Some((k1, k2)),
        },
        fit: a.flags.config(NegativeCorrection::Absolute),
        ..ComparisonConfig::default()
    };
    let cmp = pipeline::run_comparison(&ing.series, &cfg)?;

    let out = &a.common.out_dir;
    prepare_out(out)?;
    write_csv_file(&out.join("series.csv"), |w| io::write_series_csv(w, &ing.series))?;
    write_csv_file(&out.join("metrics.csv"), |w| pipeline::write_metrics_csv(w, &cmp))?;
    write_csv_file(&out.join("forecasts.csv"), |w| {
        pipeline::write_forecasts_csv(w, &cmp, &ing.series, &ing.row_labels, &ing.col_labels)
    })?;
    let dates: Vec<String> = ing.dates.iter().map(|d| d.format("%Y-%m-%d").to_string()).collect();
    write_json(
        &out.join("report.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "row_labels": ing.row_labels,
            "col_labels": ing.col_labels,
            "first_date": dates.first(),
            "last_date": dates.last(),
            "T": ing.series.len(),
            "zero_filled": ing.zero_filled,
            "dropped": ing.dropped,
            "split_date": dates.get(cmp.split_at),
            "comparison": cmp,
        }),
    )?;
    for r in &cmp.rows {
        println!("{:<11} out-of-sample E1 {:.4}", r.model.name(), r.out_of_sample.e1);
    }
    Ok(())
}

fn run_experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let mut plan: ExperimentPlan = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.plan.display()))?;
    if let Some(r) = a.replications {
        plan.replications = r;
    }
    if let Some(seed) = a.common.seed {
        plan.base_seed = seed;
    }
    plan.validate()?;
    let records = experiment::run_plan(&plan)?;
    let curves = experiment::error_curves(&records)?;
    let ranks = experiment::rank_success_table(&plan, &records);
    let summary = experiment::summarize(&records);

    let out = &a.common.out_dir;
    prepare_out(out)?;
    write_csv_file(&out.join("records.csv"), |w| experiment::write_records_csv(w, &records))?;
    write_csv_file(&out.join("curves.csv"), |w| experiment::write_curves_csv(w, &curves))?;
    write_csv_file(&out.join("rank_success.csv"), |w| experiment::write_rank_table_csv(w, &ranks))?;
    let failures = records.iter().filter(|r| !r.ok()).count();
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "plan": plan,
            "records": records.len(),
            "failures": failures,
            "summary": summary,
            "rank_success": ranks,
        }),
    )?;
    for s in &summary {
        match s.median_error {
            Some(e) => println!("{} {:<10} T={:<6} median log error {e:.4}", s.setting, s.model.name(), s.t_len),
            None => println!("{} {:<10} T={:<6} no successful fits", s.setting, s.model.name(), s.t_len),
        }
    }
    Ok(())
}
