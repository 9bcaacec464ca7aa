//! Resolved run configuration.
//!
//! Values are layered: built-in defaults, then a flat `key = value` file, then
//! command-line flags. Keys may be written with `-` or `_`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use dsw_core::{Error as CoreError, ExampleId};

use crate::experiments::{ExperimentSpec, NOISE_LEVELS, TABLE1_SEEDS};
use crate::output::num;

/// Every key accepted in a config file, in manifest order.
pub const KEYS: [&str; 18] = [
    "example",
    "h",
    "dt",
    "noise",
    "seed",
    "seeds",
    "delta",
    "rho_inf",
    "newton_tol",
    "max_newton",
    "step_stop",
    "max_cg",
    "out",
    "fine_data",
    "z",
    "f",
    "u0",
    "grad_floor",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("line {line} of {path}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ConfigError {
    /// The config key at fault, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key } | ConfigError::InvalidValue { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` means `cont` for single runs and all examples for the sweep.
    pub example: Option<ExampleId>,
    /// `None` uses the mesh size of the example.
    pub h: Option<f64>,
    pub dt: f64,
    /// `None` means noise-free single runs and all levels for the sweep.
    pub noise: Option<f64>,
    pub seed: u64,
    /// Number of consecutive seeds per sweep cell, starting at `seed`.
    pub seeds: u64,
    /// `None` uses the tuned weight for the example and noise level.
    pub delta: Option<f64>,
    pub rho_inf: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub step_stop: f64,
    pub max_cg: usize,
    pub out: PathBuf,
    pub fine_data: bool,
    /// Constant bed elevation.
    pub z: f64,
    /// Constant source term.
    pub f: f64,
    /// Constant initial height; `None` uses the benchmark profile.
    pub u0: Option<f64>,
    pub grad_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = ExperimentSpec::new(ExampleId::Cont, 0.0, 0);
        Self {
            example: None,
            h: None,
            dt: spec.dt,
            noise: None,
            seed: 0,
            seeds: TABLE1_SEEDS,
            delta: None,
            rho_inf: spec.integrator.rho_inf,
            newton_tol: spec.integrator.newton_tol,
            max_newton: spec.integrator.max_iter,
            step_stop: spec.step_stop,
            max_cg: spec.max_cg_iters,
            out: PathBuf::from("out"),
            fine_data: false,
            z: spec.bathymetry,
            f: spec.forcing,
            u0: None,
            grad_floor: spec.grad_floor,
        }
    }
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    match value.trim() {
        "" | "default" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_else(|| "default".into())
}

fn show_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "default".into())
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = normalize(key);
        let k = key.as_str();
        match k {
            "example" => self.example = optional(k, value)?,
            "h" => self.h = optional(k, value)?,
            "dt" => self.dt = parse(k, value)?,
            "noise" => self.noise = optional(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "seeds" => self.seeds = parse(k, value)?,
            "delta" => self.delta = optional(k, value)?,
            "rho_inf" => self.rho_inf = parse(k, value)?,
            "newton_tol" => self.newton_tol = parse(k, value)?,
            "max_newton" => self.max_newton = parse(k, value)?,
            "step_stop" => self.step_stop = parse(k, value)?,
            "max_cg" => self.max_cg = parse(k, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "fine_data" => self.fine_data = parse(k, value)?,
            "z" => self.z = parse(k, value)?,
            "f" => self.f = parse(k, value)?,
            "u0" => self.u0 = optional(k, value)?,
            "grad_floor" => self.grad_floor = parse(k, value)?,
            _ => return Err(ConfigError::UnknownKey { key }),
        }
        Ok(())
    }

    /// Applies a `key = value` text. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_path_buf(),
                line: i + 1,
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text, path)
    }

    /// Current value of every key, as accepted by [`RunConfig::set`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "example" => show(&self.example),
                    "h" => show_num(self.h),
                    "dt" => num(self.dt),
                    "noise" => show_num(self.noise),
                    "seed" => self.seed.to_string(),
                    "seeds" => self.seeds.to_string(),
                    "delta" => show_num(self.delta),
                    "rho_inf" => num(self.rho_inf),
                    "newton_tol" => num(self.newton_tol),
                    "max_newton" => self.max_newton.to_string(),
                    "step_stop" => num(self.step_stop),
                    "max_cg" => self.max_cg.to_string(),
                    "out" => self.out.display().to_string(),
                    "fine_data" => self.fine_data.to_string(),
                    "z" => num(self.z),
                    "f" => num(self.f),
                    "u0" => show_num(self.u0),
                    "grad_floor" => num(self.grad_floor),
                    _ => unreachable!("key list and match out of sync"),
                };
                (k, v)
            })
            .collect()
    }

    /// The config in file form; feeding it back reproduces `self`.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn examples(&self) -> Vec<ExampleId> {
        match self.example {
            Some(id) => vec![id],
            None => ExampleId::ALL.to_vec(),
        }
    }

    pub fn noise_levels(&self) -> Vec<f64> {
        match self.noise {
            Some(eps) => vec![eps],
            None => NOISE_LEVELS.to_vec(),
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (self.seed..self.seed + self.seeds).collect()
    }

    /// Experiment for one sweep cell with every override applied.
    pub fn spec_for(&self, example: ExampleId, noise: f64, seed: u64) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(example, noise, seed);
        if let Some(h) = self.h {
            spec.h = h;
        }
        if let Some(delta) = self.delta {
            spec.delta = delta;
        }
        spec.dt = self.dt;
        spec.fine_data = self.fine_data;
        spec.bathymetry = self.z;
        spec.forcing = self.f;
        spec.initial_height = self.u0;
        spec.grad_floor = self.grad_floor;
        spec.integrator.rho_inf = self.rho_inf;
        spec.integrator.newton_tol = self.newton_tol;
        spec.integrator.max_iter = self.max_newton;
        spec.step_stop = self.step_stop;
        spec.max_cg_iters = self.max_cg;
        spec
    }

    /// The single experiment of `forward` and `invert`.
    pub fn spec(&self) -> ExperimentSpec {
        self.spec_for(
            self.example.unwrap_or(ExampleId::Cont),
            self.noise.unwrap_or(0.0),
            self.seed,
        )
    }

    /// Checks all overrides before anything is solved.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, value: String, reason: String| ConfigError::InvalidValue {
            key: key.into(),
            value,
            reason,
        };
        if self.seeds == 0 {
            return Err(invalid("seeds", "0".into(), "must be at least 1".into()));
        }
        if self.max_cg == 0 {
            return Err(invalid("max_cg", "0".into(), "must be at least 1".into()));
        }
        for example in self.examples() {
            for noise in self.noise_levels() {
                let spec = self.spec_for(example, noise, self.seed);
                spec.validate().map_err(|e| {
                    let key = offending_key(&e, self);
                    let value = self
                        .entries()
                        .into_iter()
                        .find(|(k, _)| *k == key)
                        .map(|(_, v)| v)
                        .unwrap_or_default();
                    invalid(key, value, format!("{e} (example {example})"))
                })?;
            }
        }
        Ok(())
    }
}

/// Config key responsible for a validation error.
fn offending_key(e: &CoreError, config: &RunConfig) -> &'static str {
    match e {
        CoreError::NonDivisibleInterval { .. } | CoreError::InvalidInterval { .. } => "h",
        CoreError::InvalidTimeGrid { .. } => "dt",
        CoreError::DryState { .. } if config.u0.is_some() && config.z == 0.0 => "u0",
        CoreError::DryState { .. } => "z",
        CoreError::InvalidParameter { name, .. } => match *name {
            "max_iter" => "max_newton",
            "abs_tol" => "newton_tol",
            "initial_guess" | "positivity_floor" => "delta",
            other => KEYS.iter().find(|k| **k == other).copied().unwrap_or("config"),
        },
        _ => "config",
    }
}
