use std::path::{Path, PathBuf};

use fracfit_core::presets::{preset, preset_names};
use fracfit_core::{FracTransferFunction, NonlinearParams, PsoConfig, SimGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a command needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: Option<FracTransferFunction>,
    pub baseline: Option<NonlinearParams>,
    pub pso: PsoConfig,
    /// Output grid for `simulate`; its step also drives the simulation
    /// fallback inside `fit`, `compare` and `validate`.
    pub grid: SimGrid,
    pub setpoint: f64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub synth: SynthOptions,
    pub validate: ValidateOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub n_trials: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateOptions {
    pub counts: Vec<usize>,
    pub noise_sigma: f64,
    /// Sampling of every training trace.
    pub data_grid: SimGrid,
    /// Sampling of the held-out trace.
    pub heldout_grid: SimGrid,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            model: None,
            baseline: None,
            pso: PsoConfig::default(),
            grid: SimGrid::default(),
            setpoint: 30.0,
            data: None,
            out: PathBuf::from("out"),
            synth: SynthOptions::default(),
            validate: ValidateOptions::default(),
        }
    }
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n_trials: 7,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            counts: (1..=8).collect(),
            noise_sigma: 0.01,
            data_grid: SimGrid {
                t_end: 9.8,
                step: 0.2,
            },
            heldout_grid: SimGrid {
                t_end: 10.0,
                step: 0.05,
            },
            seed: 0,
        }
    }
}

/// Flag values that replace config entries when present.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub grid_step: Option<f64>,
    pub horizon: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("bad config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(flags);
        cfg.check()?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Overrides) {
        if let Some(d) = &f.data {
            self.data = Some(d.clone());
        }
        if let Some(o) = &f.out {
            self.out = o.clone();
        }
        if let Some(s) = f.seed {
            self.pso.seed = s;
            self.synth.seed = s;
            self.validate.seed = s;
        }
        if let Some(p) = &f.preset {
            self.preset = Some(p.clone());
            self.model = None;
        }
        if let Some(h) = f.grid_step {
            self.grid.step = h;
        }
        if let Some(t) = f.horizon {
            self.grid.t_end = t;
        }
    }

    fn check(&self) -> Result<(), CliError> {
        self.grid.validate().map_err(CliError::config)?;
        if !(self.setpoint > 0.0) || !self.setpoint.is_finite() {
            return Err(CliError::config(format!(
                "setpoint must be positive, got {}",
                self.setpoint
            )));
        }
        if self.preset.is_some() && self.model.is_some() {
            return Err(CliError::config(
                "give either `preset` or `model`, not both",
            ));
        }
        if let Some(data) = &self.data {
            if same_path(data, &self.out) {
                return Err(CliError::config(format!(
                    "input and output paths must differ (both {})",
                    data.display()
                )));
            }
        }
        self.pso.validate().map_err(CliError::config)?;
        Ok(())
    }

    /// The fractional model from `preset` or `model`, if either is set.
    pub fn fractional(&self) -> Result<Option<FracTransferFunction>, CliError> {
        if let Some(name) = &self.preset {
            return preset(name).map(Some).ok_or_else(|| {
                CliError::config(format!(
                    "unknown preset '{name}' (known: {})",
                    preset_names().join(", ")
                ))
            });
        }
        match self.model {
            Some(tf) => {
                tf.validate().map_err(CliError::config)?;
                Ok(Some(tf))
            }
            None => Ok(None),
        }
    }

    pub fn require_fractional(&self) -> Result<FracTransferFunction, CliError> {
        self.fractional()?
            .ok_or_else(|| CliError::config("a fractional model is required (`preset` or `model`)"))
    }

    pub fn require_baseline(&self) -> Result<NonlinearParams, CliError> {
        let b = self
            .baseline
            .ok_or_else(|| CliError::config("a `baseline` block is required"))?;
        b.validate().map_err(CliError::config)?;
        Ok(b)
    }

    pub fn require_data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::config("no data given (`--data` or `data`)"))
    }
}

fn same_path(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}
