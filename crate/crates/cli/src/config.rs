//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use widecl_core::dmft::{DmftConfig, ResidualMode, XiMode};
use widecl_core::finite_net::TrainOptions;
use widecl_core::{Activation, ParamConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; data, initialization and Monte-Carlo streams derive from it.
    #[serde(default)]
    pub seed: u64,
    pub data: DataSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSpec {
    /// Tasks with cross-task Gram exactly `rho I`.
    Rotated {
        tasks: usize,
        samples: usize,
        dim: usize,
        rho: f64,
        /// Shared per-sample targets; all ones when omitted.
        #[serde(default)]
        targets: Option<Vec<f64>>,
    },
    /// A synthetic image-like base task plus partially permuted copies.
    Permuted {
        tasks: usize,
        rho: f64,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_per_class")]
        samples_per_class: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
    },
    /// A dataset CSV written by `gen-data`.
    File { path: PathBuf },
}

fn default_classes() -> usize {
    10
}
fn default_per_class() -> usize {
    3
}
fn default_dim() -> usize {
    100
}
fn default_density() -> f64 {
    0.1
}
fn default_noise() -> f64 {
    0.3
}
fn default_intensity() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Finite(ParamConfig),
    Dmft(DmftSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmftSpec {
    pub gamma0: f64,
    pub samples: usize,
    pub dt: f64,
    pub activation: Activation,
    pub xi_mode: XiMode,
    pub antithetic: bool,
    pub residual_mode: ResidualMode,
}

impl Default for DmftSpec {
    fn default() -> Self {
        let d = DmftConfig::default();
        Self {
            gamma0: d.gamma0,
            samples: d.samples,
            dt: d.dt,
            activation: d.activation,
            xi_mode: d.xi_mode,
            antithetic: d.antithetic,
            residual_mode: d.residual_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub steps_per_task: usize,
    pub checkpoint_every: usize,
    pub overflow_bound: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps_per_task: 1000,
            checkpoint_every: 10,
            overflow_bound: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Gamma0,
    Width,
    Rho,
    Steps,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma0 => "gamma0",
            SweepParam::Width => "width",
            SweepParam::Rho => "rho",
            SweepParam::Steps => "steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Root seeds; the config's own seed when omitted.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Also write `K_t{step}.csv` for every checkpoint.
    pub kernel_dumps: bool,
    /// Also write `fields_t{step}.csv` for the final DMFT ensemble.
    pub field_dump: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            kernel_dumps: false,
            field_dump: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks every field before anything runs.
    pub fn validate(&self) -> CliResult<()> {
        match &self.data {
            DataSpec::Rotated {
                tasks,
                samples,
                dim,
                rho,
                targets,
            } => {
                positive("data.tasks", *tasks)?;
                positive("data.samples", *samples)?;
                unit_interval("data.rho", *rho)?;
                if *dim < (tasks + 1) * samples {
                    return Err(CliError::field(
                        "data.dim",
                        format!("must be at least (tasks + 1) * samples = {}", (tasks + 1) * samples),
                    ));
                }
                if let Some(t) = targets {
                    if t.len() != *samples {
                        return Err(CliError::field(
                            "data.targets",
                            format!("expected {samples} values, got {}", t.len()),
                        ));
                    }
                }
            }
            DataSpec::Permuted {
                tasks,
                rho,
                classes,
                samples_per_class,
                dim,
                density,
                intensity,
                ..
            } => {
                positive("data.tasks", *tasks)?;
                positive("data.classes", *classes)?;
                positive("data.samples_per_class", *samples_per_class)?;
                positive("data.dim", *dim)?;
                unit_interval("data.rho", *rho)?;
                unit_interval("data.density", *density)?;
                if !(*intensity > 0.0) {
                    return Err(CliError::field("data.intensity", "must be positive"));
                }
            }
            DataSpec::File { .. } => {}
        }
        positive("schedule.steps_per_task", self.schedule.steps_per_task)?;
        positive("schedule.checkpoint_every", self.schedule.checkpoint_every)?;
        if !(self.schedule.overflow_bound > 0.0) {
            return Err(CliError::field("schedule.overflow_bound", "must be positive"));
        }
        match &self.model {
            ModelSpec::Finite(p) => p
                .validate()
                .map_err(|e| CliError::field("model", e))?,
            ModelSpec::Dmft(d) => self
                .dmft_config(d)
                .validate()
                .map_err(|e| CliError::field("model", e))?,
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CliError::field("sweep.values", "must not be empty"));
            }
            for &v in &sweep.values {
                self.with_value(sweep.param, v)
                    .and_then(|c| {
                        let mut c = c;
                        c.sweep = None;
                        c.validate()
                    })
                    .map_err(|e| CliError::field("sweep.values", e))?;
            }
        }
        Ok(())
    }

    pub fn dmft_config(&self, d: &DmftSpec) -> DmftConfig {
        DmftConfig {
            gamma0: d.gamma0,
            samples: d.samples,
            dt: d.dt,
            steps_per_task: self.schedule.steps_per_task,
            activation: d.activation,
            xi_mode: d.xi_mode,
            antithetic: d.antithetic,
            seed: widecl_core::rng::derive_seed(self.seed, widecl_core::rng::Stream::Fields),
            checkpoint_every: self.schedule.checkpoint_every,
            overflow_bound: self.schedule.overflow_bound,
            record_kernels: self.output.kernel_dumps,
            residual_mode: d.residual_mode,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            checkpoint_every: self.schedule.checkpoint_every,
            overflow_bound: self.schedule.overflow_bound,
            record_kernels: self.output.kernel_dumps,
        }
    }

    /// Copy of the config with one sweep parameter replaced.
    pub fn with_value(&self, param: SweepParam, value: f64) -> CliResult<Self> {
        let mut c = self.clone();
        let whole = |v: f64, path: &str| -> CliResult<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::field(path, format!("{v} is not a positive integer")))
            }
        };
        match param {
            SweepParam::Gamma0 => match &mut c.model {
                ModelSpec::Finite(p) => p.gamma0 = value,
                ModelSpec::Dmft(d) => d.gamma0 = value,
            },
            SweepParam::Width => match &mut c.model {
                ModelSpec::Finite(p) => p.width = whole(value, "model.width")?,
                ModelSpec::Dmft(_) => {
                    return Err(CliError::field("sweep.param", "width sweeps need a finite model"))
                }
            },
            SweepParam::Rho => match &mut c.data {
                DataSpec::Rotated { rho, .. } | DataSpec::Permuted { rho, .. } => *rho = value,
                DataSpec::File { .. } => {
                    return Err(CliError::field("sweep.param", "rho sweeps need generated data"))
                }
            },
            SweepParam::Steps => c.schedule.steps_per_task = whole(value, "schedule.steps_per_task")?,
        }
        Ok(c)
    }
}

fn positive(path: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        Err(CliError::field(path, "must be >= 1"))
    } else {
        Ok(())
    }
}

fn unit_interval(path: &str, v: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::field(path, format!("{v} outside [0, 1]")))
    }
}
