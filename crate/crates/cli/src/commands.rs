use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fracfit_core::dataset::{average_traces_on, rmse_values};
use fracfit_core::model::settling_time;
use fracfit_core::pso::PARAM_NAMES;
use fracfit_core::{
    dc_gain, export_csv, gen_synthetic, load_csv, normalize, run_pso, simulate_nonlinear,
    step_response, Dataset, ErrorMetrics, FitResult, FracTransferFunction, NonlinearParams,
    ResponseOptions, SimGrid, StepTrace,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_OPTIMIZATION};

const SETTLING_BAND: f64 = 0.02;
const MAX_COUNT: usize = 8;

fn response_options(step: f64) -> ResponseOptions {
    ResponseOptions {
        gl_step: step.min(ResponseOptions::default().gl_step),
        ..ResponseOptions::default()
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    text.push('\n');
    write_file(path, &text)
}

/// Comma-separated table with a header row.
fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_file(path, &text)
}

fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").expect("writing to a String");
    s
}

/// Every CSV under `path` (sorted by name), or the single file itself.
pub fn load_data(path: &Path) -> Result<Vec<Dataset>, CliError> {
    if !path.exists() {
        return Err(CliError::data(format!(
            "data path {} does not exist",
            path.display()
        )));
    }
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::data(format!("cannot list {}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(CliError::data(format!(
            "no CSV files in {}",
            path.display()
        )));
    }
    files
        .iter()
        .map(|f| load_csv(f).map_err(CliError::from))
        .collect()
}

fn normalized(raw: &[Dataset]) -> Result<Vec<Dataset>, CliError> {
    raw.iter()
        .map(|d| normalize(d).map_err(CliError::from))
        .collect()
}

fn model_label(cfg: &RunConfig) -> String {
    cfg.preset.clone().unwrap_or_else(|| "model".into())
}

#[derive(Serialize)]
struct EvaluationPaths {
    series: usize,
    gl: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "parameters")]
enum ModelBlock {
    Fractional(FracTransferFunction),
    Baseline(NonlinearParams),
}

#[derive(Serialize)]
struct SimulateSummary {
    model: ModelBlock,
    setpoint_deg: f64,
    dc_gain: f64,
    final_value: f64,
    settling_time_2pct: Option<f64>,
    n_points: usize,
    grid: SimGrid,
    evaluation: Option<EvaluationPaths>,
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let frac = cfg.fractional()?;
    let (block, times, values, paths, gain) = match (frac, cfg.baseline) {
        (Some(tf), None) => {
            let times = cfg.grid.times();
            let resp = step_response(&tf, &times, &response_options(cfg.grid.step))?;
            let paths = EvaluationPaths {
                series: resp.series_count(),
                gl: resp.gl_count(),
            };
            let labels = resp.paths.iter().map(|p| {
                if *p == fracfit_core::EvalPath::Series {
                    "series"
                } else {
                    "gl"
                }
            });
            let labels: Vec<&str> = labels.collect();
            (
                ModelBlock::Fractional(tf),
                times,
                resp.values,
                Some((paths, labels)),
                dc_gain(&tf),
            )
        }
        (None, Some(b)) => {
            b.validate().map_err(CliError::config)?;
            let tr = simulate_nonlinear(&b, &cfg.grid)?;
            (
                ModelBlock::Baseline(b),
                tr.times,
                tr.values,
                None,
                b.steady_state(),
            )
        }
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "simulate takes exactly one model block, found two",
            ))
        }
        (None, None) => {
            return Err(CliError::config(
                "simulate needs a model block (`preset`, `model` or `baseline`)",
            ))
        }
    };
    let sp = cfg.setpoint;
    prepare_out(&cfg.out)?;

    let raw = StepTrace::new(
        "model",
        times.clone(),
        values.iter().map(|v| v * sp).collect(),
        sp,
    )?;
    export_csv(
        &Dataset::new(vec![raw], model_label(cfg))?,
        cfg.out.join("trace.csv"),
    )?;

    let labels = paths.as_ref().map(|(_, l)| l.clone());
    write_table(
        &cfg.out.join("response.csv"),
        &["t_s", "theta_deg", "y_norm", "path"],
        times.iter().zip(&values).enumerate().map(|(i, (t, y))| {
            let path = labels.as_ref().map_or("rk4", |l| l[i]);
            vec![num(*t), num(y * sp), num(*y), path.to_string()]
        }),
    )?;

    let summary = SimulateSummary {
        model: block,
        setpoint_deg: sp,
        dc_gain: gain,
        final_value: *values.last().expect("grid has at least one point"),
        settling_time_2pct: settling_time(&times, &values, gain, SETTLING_BAND),
        n_points: times.len(),
        grid: cfg.grid,
        evaluation: paths.map(|(p, _)| p),
    };
    write_json(&cfg.out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct FitReport<'a> {
    parameters: FracTransferFunction,
    dc_gain: f64,
    fitness: f64,
    n_datasets: usize,
    n_traces: usize,
    n_points: usize,
    warnings: &'a [String],
    result: &'a FitResult,
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let norm = normalized(&load_data(cfg.require_data()?)?)?;
    let result = run_pso(&cfg.pso, &norm, &cfg.grid)?;
    let tf = result.transfer_function().ok_or_else(|| CliError {
        code: EXIT_OPTIMIZATION,
        message: format!(
            "best position {:?} is not a valid model",
            result.best_position
        ),
    })?;
    prepare_out(&cfg.out)?;

    let opts = response_options(cfg.grid.step);
    let mut rows = Vec::new();
    for ds in &norm {
        for tr in &ds.traces {
            let pred = step_response(&tf, &tr.times, &opts)?;
            for ((t, y), f) in tr.times.iter().zip(&tr.values).zip(&pred.values) {
                rows.push(vec![
                    tr.trial_id.clone(),
                    num(*t),
                    num(y * tr.setpoint),
                    num(f * tr.setpoint),
                    num(*y),
                    num(*f),
                    num(y - f),
                ]);
            }
        }
    }
    write_table(
        &cfg.out.join("fitted.csv"),
        &[
            "trial_id",
            "t_s",
            "theta_deg",
            "theta_fit_deg",
            "y_norm",
            "y_fit_norm",
            "residual_norm",
        ],
        rows.into_iter(),
    )?;

    let report = FitReport {
        parameters: tf,
        dc_gain: dc_gain(&tf),
        fitness: result.best_fitness,
        n_datasets: norm.len(),
        n_traces: norm.iter().map(|d| d.traces.len()).sum(),
        n_points: norm.iter().map(|d| d.total_points()).sum(),
        warnings: &result.warnings,
        result: &result,
    };
    write_json(&cfg.out.join("fit.json"), &report)
}

#[derive(Serialize)]
struct CompareReport {
    setpoint_deg: f64,
    n_traces: usize,
    n_points: usize,
    fractional: ErrorMetrics,
    baseline: ErrorMetrics,
    fractional_parameters: FracTransferFunction,
    baseline_parameters: NonlinearParams,
}

/// Sample times of the first trace inside the span shared by every trace.
fn common_times(traces: &[&StepTrace]) -> Result<Vec<f64>, CliError> {
    let lo = traces
        .iter()
        .map(|t| t.times[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = traces
        .iter()
        .map(|t| t.times[t.len() - 1])
        .fold(f64::INFINITY, f64::min);
    let times: Vec<f64> = traces[0]
        .times
        .iter()
        .copied()
        .filter(|t| *t >= lo && *t <= hi)
        .collect();
    if times.is_empty() {
        return Err(CliError::data("traces share no common time span"));
    }
    Ok(times)
}

fn shared_setpoint(raw: &[Dataset], fallback: f64) -> f64 {
    let mut sps = raw.iter().flat_map(|d| d.traces.iter().map(|t| t.setpoint));
    let first = sps.next().unwrap_or(fallback);
    if sps.all(|s| s == first) {
        first
    } else {
        fallback
    }
}

fn as_normalized(id: &str, times: &[f64], values: Vec<f64>) -> StepTrace {
    StepTrace {
        times: times.to_vec(),
        values,
        setpoint: 1.0,
        trial_id: id.into(),
        normalized: true,
    }
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let tf = cfg.require_fractional()?;
    let base = cfg.require_baseline()?;
    let raw = load_data(cfg.require_data()?)?;
    let sp = shared_setpoint(&raw, cfg.setpoint);
    let norm = normalized(&raw)?;
    let pooled: Vec<StepTrace> = norm.iter().flat_map(|d| d.traces.iter().cloned()).collect();
    let n_traces = pooled.len();
    let refs: Vec<&StepTrace> = pooled.iter().collect();
    let times = common_times(&refs)?;
    let mean = average_traces_on(&Dataset::new(pooled, "pooled")?, &times)?;

    let frac = step_response(&tf, &times, &response_options(cfg.grid.step))?.values;
    let t_last = *times.last().expect("non-empty");
    let bgrid = SimGrid::new(t_last + cfg.grid.step, cfg.grid.step)?;
    let base_vals = simulate_nonlinear(&base, &bgrid)?.resample(&times)?.values;

    let frac_tr = as_normalized("fractional", &times, frac);
    let base_tr = as_normalized("baseline", &times, base_vals);
    let report = CompareReport {
        setpoint_deg: sp,
        n_traces,
        n_points: times.len(),
        fractional: ErrorMetrics::between(&mean, &frac_tr, sp)?,
        baseline: ErrorMetrics::between(&mean, &base_tr, sp)?,
        fractional_parameters: tf,
        baseline_parameters: base,
    };
    prepare_out(&cfg.out)?;
    write_table(
        &cfg.out.join("compare.csv"),
        &[
            "t_s",
            "mean_deg",
            "fractional_deg",
            "baseline_deg",
            "mean_norm",
            "fractional_norm",
            "baseline_norm",
        ],
        (0..times.len()).map(|i| {
            let (m, f, b) = (mean.values[i], frac_tr.values[i], base_tr.values[i]);
            vec![
                num(times[i]),
                num(m * sp),
                num(f * sp),
                num(b * sp),
                num(m),
                num(f),
                num(b),
            ]
        }),
    )?;
    write_json(&cfg.out.join("compare.json"), &report)
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let tf = cfg.require_fractional()?;
    let o = &cfg.synth;
    if o.n_trials == 0 {
        return Err(CliError::config("synth.n_trials must be at least 1"));
    }
    if !(o.noise_sigma >= 0.0) || !o.noise_sigma.is_finite() {
        return Err(CliError::config(format!(
            "synth.noise_sigma must be >= 0, got {}",
            o.noise_sigma
        )));
    }
    let mut ds = gen_synthetic(
        &tf,
        &cfg.grid,
        cfg.setpoint,
        o.n_trials,
        o.noise_sigma,
        o.seed,
    )?;
    ds.material = model_label(cfg);
    prepare_out(&cfg.out)?;
    export_csv(&ds, cfg.out.join("synthetic.csv"))?;
    Ok(())
}

#[derive(Serialize)]
struct ValidateEntry {
    count: usize,
    n_points: usize,
    fitness: f64,
    fitted: FracTransferFunction,
    rel_error: [f64; 5],
    max_rel_error: f64,
    heldout_rmse: f64,
    truth_rmse: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ValidateReport {
    truth: FracTransferFunction,
    parameter_order: [&'static str; 5],
    noise_sigma: f64,
    setpoint_deg: f64,
    points_per_trace: usize,
    heldout_points: usize,
    entries: Vec<ValidateEntry>,
}

/// Mixes the study seed into an independent stream for held-out data.
const HELDOUT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let o = &cfg.validate;
    if o.counts.is_empty() {
        return Err(CliError::config("validate.counts is empty"));
    }
    if let Some(c) = o.counts.iter().find(|c| !(1..=MAX_COUNT).contains(*c)) {
        return Err(CliError::config(format!(
            "dataset count {c} outside 1..={MAX_COUNT}"
        )));
    }
    if !(o.noise_sigma >= 0.0) || !o.noise_sigma.is_finite() {
        return Err(CliError::config(format!(
            "validate.noise_sigma must be >= 0, got {}",
            o.noise_sigma
        )));
    }
    o.data_grid.validate().map_err(CliError::config)?;
    o.heldout_grid.validate().map_err(CliError::config)?;
    let tf = cfg.require_fractional()?;
    let truth = tf.to_array();

    // One pool of traces; count c trains on its first c members.
    let pool = normalize(&gen_synthetic(
        &tf,
        &o.data_grid,
        cfg.setpoint,
        MAX_COUNT,
        o.noise_sigma,
        o.seed,
    )?)?;
    let held = normalize(&gen_synthetic(
        &tf,
        &o.heldout_grid,
        cfg.setpoint,
        1,
        o.noise_sigma,
        o.seed ^ HELDOUT_SALT,
    )?)?;
    let held = &held.traces[0];
    let opts = response_options(cfg.grid.step);
    let clean = step_response(&tf, &held.times, &opts)?.values;

    let mut entries = Vec::with_capacity(o.counts.len());
    for &count in &o.counts {
        let sets: Vec<Dataset> = pool.traces[..count]
            .iter()
            .map(|t| Dataset::new(vec![t.clone()], "synthetic"))
            .collect::<Result<_, _>>()?;
        let result = run_pso(&cfg.pso, &sets, &cfg.grid)?;
        let fitted = result.transfer_function().ok_or_else(|| CliError {
            code: EXIT_OPTIMIZATION,
            message: format!("count {count}: best position is not a valid model"),
        })?;
        let pred = step_response(&fitted, &held.times, &opts)?.values;
        let rel_error: [f64; 5] =
            std::array::from_fn(|i| ((result.best_position[i] - truth[i]) / truth[i]).abs());
        log::info!("count {count}: fitness {:.3e}", result.best_fitness);
        entries.push(ValidateEntry {
            count,
            n_points: sets.iter().map(|d| d.total_points()).sum(),
            fitness: result.best_fitness,
            fitted,
            rel_error,
            max_rel_error: rel_error.iter().copied().fold(0.0, f64::max),
            heldout_rmse: rmse_values(&pred, &held.values),
            truth_rmse: rmse_values(&pred, &clean),
            warnings: result.warnings,
        });
    }
    let report = ValidateReport {
        truth: tf,
        parameter_order: PARAM_NAMES,
        noise_sigma: o.noise_sigma,
        setpoint_deg: cfg.setpoint,
        points_per_trace: o.data_grid.n_points(),
        heldout_points: held.len(),
        entries,
    };
    prepare_out(&cfg.out)?;
    write_json(&cfg.out.join("validate.json"), &report)
}
