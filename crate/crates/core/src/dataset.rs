//! Step-response traces: CSV ingestion and export, setpoint normalization,
//! averaging onto a common grid, synthetic generation, and RMS error metrics.
//!
//! CSV schema (UTF-8, LF line endings, `.` decimal separator):
//!
//! ```text
//! trial_id,t_s,theta_deg,setpoint_deg
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::model::{step_response, FracTransferFunction, ResponseOptions, SimGrid};

pub const CSV_HEADER: [&str; 4] = ["trial_id", "t_s", "theta_deg", "setpoint_deg"];

/// One sampled step response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub times: Vec<f64>,
    /// Degrees when raw; fraction of the setpoint when normalized.
    pub values: Vec<f64>,
    pub setpoint: f64,
    pub trial_id: String,
    pub normalized: bool,
}

impl StepTrace {
    /// A raw trace in degrees.
    pub fn new(
        trial_id: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        setpoint: f64,
    ) -> Result<Self, DataError> {
        let tr = Self {
            times,
            values,
            setpoint,
            trial_id: trial_id.into(),
            normalized: false,
        };
        tr.validate()?;
        Ok(tr)
    }

    /// A unit-step model output; already in normalized units.
    pub(crate) fn model(times: Vec<f64>, values: Vec<f64>, id: &str) -> Self {
        Self {
            times,
            values,
            setpoint: 1.0,
            trial_id: id.to_string(),
            normalized: true,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.times.len() != self.values.len() {
            return Err(DataError::InvalidTrace(format!(
                "trial '{}' has {} times but {} values",
                self.trial_id,
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.is_empty() {
            return Err(DataError::InvalidTrace(format!(
                "trial '{}' is empty",
                self.trial_id
            )));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DataError::NonMonotonic(self.trial_id.clone()));
        }
        if !self.normalized && !(self.setpoint > 0.0) {
            return Err(DataError::InvalidTrace(format!(
                "trial '{}' has non-positive setpoint {}",
                self.trial_id, self.setpoint
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values in degrees regardless of normalization.
    pub fn degrees(&self) -> Vec<f64> {
        if self.normalized {
            self.values.iter().map(|v| v * self.setpoint).collect()
        } else {
            self.values.clone()
        }
    }

    /// Linear interpolation; `None` outside `[times[0], times[last]]`.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let first = *self.times.first()?;
        let last = *self.times.last()?;
        if t < first || t > last {
            return None;
        }
        let i = self.times.partition_point(|&x| x <= t);
        if i == 0 {
            return Some(self.values[0]);
        }
        let j = i - 1;
        if self.times[j] == t || j + 1 == self.times.len() {
            return Some(self.values[j]);
        }
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[j] + w * (self.values[j + 1] - self.values[j]))
    }

    /// This trace linearly interpolated onto `times`.
    pub fn resample(&self, times: &[f64]) -> Result<StepTrace, DataError> {
        let values = times
            .iter()
            .map(|&t| self.interpolate(t))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| DataError::Extrapolation {
                trial: self.trial_id.clone(),
                start: times.first().copied().unwrap_or(0.0),
                end: times.last().copied().unwrap_or(0.0),
            })?;
        Ok(StepTrace {
            times: times.to_vec(),
            values,
            setpoint: self.setpoint,
            trial_id: self.trial_id.clone(),
            normalized: self.normalized,
        })
    }
}

/// Traces recorded for one material or prototype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub traces: Vec<StepTrace>,
    pub material: String,
    #[serde(default)]
    pub notes: String,
}

impl Dataset {
    pub fn new(traces: Vec<StepTrace>, material: impl Into<String>) -> Result<Self, DataError> {
        let ds = Self {
            traces,
            material: material.into(),
            notes: String::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let first = self
            .traces
            .first()
            .ok_or_else(|| DataError::InvalidTrace("dataset has no traces".into()))?;
        for tr in &self.traces {
            tr.validate()?;
            if tr.normalized != first.normalized {
                return Err(DataError::InvalidTrace(
                    "dataset mixes raw and normalized traces".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        self.traces.first().is_some_and(|t| t.normalized)
    }

    pub fn total_points(&self) -> usize {
        self.traces.iter().map(StepTrace::len).sum()
    }
}

/// Reads a dataset from a CSV file; the material label is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let material = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, material)
}

/// Parses CSV text into raw traces, one per distinct `trial_id` in order of
/// first appearance, each sorted by time.
pub fn read_csv<R: Read>(reader: R, material: impl Into<String>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let idx: Vec<Option<usize>> = CSV_HEADER.iter().map(|c| col(c)).collect();
    let missing: Vec<&str> = CSV_HEADER
        .iter()
        .zip(&idx)
        .filter(|(_, i)| i.is_none())
        .map(|(c, _)| *c)
        .collect();
    if !missing.is_empty() {
        return Err(DataError::Schema(format!(
            "missing columns: {}",
            missing.join(", ")
        )));
    }
    let [i_id, i_t, i_th, i_sp] = [
        idx[0].unwrap(),
        idx[1].unwrap(),
        idx[2].unwrap(),
        idx[3].unwrap(),
    ];

    // trial -> (setpoint, rows)
    let mut trials: IndexMap<String, (f64, Vec<(f64, f64)>)> = IndexMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64, DataError> {
            let raw = field(i);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    line,
                    message: format!(
                        "column '{}' is not a finite number: '{raw}'",
                        CSV_HEADER[idx.iter().position(|x| *x == Some(i)).unwrap_or(0)]
                    ),
                })
        };
        let id = field(i_id).to_string();
        if id.is_empty() {
            return Err(DataError::Parse {
                line,
                message: "empty trial_id".into(),
            });
        }
        let (t, th, sp) = (num(i_t)?, num(i_th)?, num(i_sp)?);
        let entry = trials.entry(id.clone()).or_insert((sp, Vec::new()));
        if entry.0 != sp {
            return Err(DataError::Schema(format!(
                "trial '{id}' changes setpoint on line {line}"
            )));
        }
        entry.1.push((t, th));
    }
    if trials.is_empty() {
        return Err(DataError::Schema("no data rows".into()));
    }
    let mut traces = Vec::with_capacity(trials.len());
    for (id, (sp, mut rows)) in trials {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, values) = rows.into_iter().unzip();
        traces.push(StepTrace::new(id, times, values, sp)?);
    }
    Dataset::new(traces, material)
}

/// Writes a dataset in the CSV schema. Normalized traces are written back in
/// degrees. Floats use the shortest representation that round-trips.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io_err = |e: csv::Error| DataError::Io {
        path: "<csv writer>".into(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for tr in &ds.traces {
        let sp = tr.setpoint.to_string();
        for (t, v) in tr.times.iter().zip(tr.degrees()) {
            w.write_record([tr.trial_id.as_str(), &t.to_string(), &v.to_string(), &sp])
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<csv writer>".into(),
        source,
    })
}

pub fn export_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(ds, std::io::BufWriter::new(file))
}

/// Divides every trace by its setpoint.
pub fn normalize(ds: &Dataset) -> Result<Dataset, DataError> {
    if ds.traces.iter().any(|t| t.normalized) {
        return Err(DataError::AlreadyNormalized);
    }
    let mut out = ds.clone();
    for tr in &mut out.traces {
        if !(tr.setpoint > 0.0) {
            return Err(DataError::InvalidTrace(format!(
                "trial '{}' has non-positive setpoint {}",
                tr.trial_id, tr.setpoint
            )));
        }
        for v in &mut tr.values {
            *v /= tr.setpoint;
        }
        tr.normalized = true;
    }
    Ok(out)
}

/// Pointwise mean of all traces after interpolation onto `grid`.
pub fn average_traces(ds: &Dataset, grid: &SimGrid) -> Result<StepTrace, DataError> {
    grid.validate()?;
    average_traces_on(ds, &grid.times())
}

/// Pointwise mean of all traces after interpolation onto `times`.
pub fn average_traces_on(ds: &Dataset, times: &[f64]) -> Result<StepTrace, DataError> {
    ds.validate()?;
    let first = &ds.traces[0];
    let same_setpoint = ds.traces.iter().all(|t| t.setpoint == first.setpoint);
    if !first.normalized && !same_setpoint {
        return Err(DataError::InvalidTrace(
            "cannot average raw traces with different setpoints".into(),
        ));
    }
    let mut acc = vec![0.0; times.len()];
    for tr in &ds.traces {
        let r = tr.resample(times)?;
        for (a, v) in acc.iter_mut().zip(r.values) {
            *a += v;
        }
    }
    let n = ds.traces.len() as f64;
    Ok(StepTrace {
        times: times.to_vec(),
        values: acc.into_iter().map(|v| v / n).collect(),
        setpoint: if same_setpoint { first.setpoint } else { 1.0 },
        trial_id: "mean".into(),
        normalized: first.normalized,
    })
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0))
}

/// Root-mean-square difference of two traces on the same time grid, in the
/// traces' own units.
pub fn rmse(a: &StepTrace, b: &StepTrace) -> Result<f64, DataError> {
    if !same_grid(&a.times, &b.times) {
        return Err(DataError::GridMismatch);
    }
    if a.normalized != b.normalized {
        return Err(DataError::InvalidTrace(
            "cannot compare raw with normalized traces".into(),
        ));
    }
    Ok(rmse_values(&a.values, &b.values))
}

/// Root-mean-square difference of two equal-length sample vectors.
pub fn rmse_values(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// An RMS error in degrees expressed as a percentage of the setpoint.
pub fn percent_of_setpoint(rmse_deg: f64, setpoint: f64) -> f64 {
    100.0 * rmse_deg / setpoint
}

/// RMS error in degrees; normalized traces are scaled by `setpoint` first.
pub fn rmse_deg(a: &StepTrace, b: &StepTrace, setpoint: f64) -> Result<f64, DataError> {
    let r = rmse(a, b)?;
    Ok(if a.normalized { r * setpoint } else { r })
}

/// `100 · rmse / setpoint` with the RMS error taken in degrees.
pub fn rmse_percent(a: &StepTrace, b: &StepTrace, setpoint: f64) -> Result<f64, DataError> {
    if !(setpoint > 0.0) {
        return Err(DataError::InvalidTrace(format!(
            "setpoint must be positive, got {setpoint}"
        )));
    }
    Ok(percent_of_setpoint(rmse_deg(a, b, setpoint)?, setpoint))
}

/// Error summary as exported to JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rmse_deg: f64,
    pub rmse_percent: f64,
    pub setpoint_deg: f64,
}

impl ErrorMetrics {
    pub fn between(a: &StepTrace, b: &StepTrace, setpoint: f64) -> Result<Self, DataError> {
        let rmse_deg = rmse_deg(a, b, setpoint)?;
        Ok(Self {
            rmse_deg,
            rmse_percent: percent_of_setpoint(rmse_deg, setpoint),
            setpoint_deg: setpoint,
        })
    }
}

/// Noisy synthetic trials of `tf` on `grid`: `setpoint · y(t) + N(0, (σ·setpoint)²)`.
pub fn gen_synthetic(
    tf: &FracTransferFunction,
    grid: &SimGrid,
    setpoint: f64,
    n_trials: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    grid.validate()?;
    gen_synthetic_at(tf, &grid.times(), setpoint, n_trials, noise_sigma, seed)
}

/// [`gen_synthetic`] on explicit sample times.
pub fn gen_synthetic_at(
    tf: &FracTransferFunction,
    times: &[f64],
    setpoint: f64,
    n_trials: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n_trials == 0 {
        return Err(DataError::InvalidTrace(
            "n_trials must be at least 1".into(),
        ));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(DataError::InvalidTrace(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    if !(setpoint > 0.0) {
        return Err(DataError::InvalidTrace(format!(
            "setpoint must be positive, got {setpoint}"
        )));
    }
    let response = step_response(tf, times, &ResponseOptions::default())?;
    let clean: Vec<f64> = response.values.iter().map(|v| v * setpoint).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma * setpoint).expect("sigma is finite and non-negative");
    let traces = (1..=n_trials)
        .map(|i| {
            let values = clean
                .iter()
                .map(|v| {
                    if noise_sigma > 0.0 {
                        v + noise.sample(&mut rng)
                    } else {
                        *v
                    }
                })
                .collect();
            StepTrace::new(format!("trial_{i}"), times.to_vec(), values, setpoint)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut ds = Dataset::new(traces, "synthetic")?;
    ds.notes = format!("seed={seed} noise_sigma={noise_sigma}");
    Ok(ds)
}
