//! Full experiment description: the macroscopic setup plus the knobs of the
//! particle runs, the Euler scheme and the convergence study.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ConvergenceSettings;
use crate::macro_solver::MacroConfig;
use crate::micro_sim::{MicroConfig, Sampling};
use crate::presets;

fn default_particles() -> usize {
    800
}

fn default_runs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSettings {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    /// First seed; `runs` consecutive seeds are simulated.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub record_every: Option<usize>,
    /// Also write every particle of every recorded frame.
    #[serde(default)]
    pub dump_particles: bool,
}

impl Default for MicroSettings {
    fn default() -> Self {
        Self {
            n_particles: default_particles(),
            seed: 0,
            runs: default_runs(),
            sampling: Sampling::default(),
            record_every: None,
            dump_particles: false,
        }
    }
}

fn default_level() -> u32 {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerSettings {
    /// Time step `t_final / 2^k`.
    #[serde(default = "default_level")]
    pub k: u32,
}

impl Default for EulerSettings {
    fn default() -> Self {
        Self { k: default_level() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "macro")]
    pub macro_cfg: MacroConfig,
    #[serde(default)]
    pub micro: MicroSettings,
    #[serde(default)]
    pub euler: EulerSettings,
    #[serde(default)]
    pub convergence: ConvergenceSettings,
}

impl ExperimentConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        Ok(Self {
            preset: Some(name.to_string()),
            macro_cfg: presets::preset(name)?,
            micro: MicroSettings::default(),
            euler: EulerSettings::default(),
            convergence: ConvergenceSettings::default(),
        })
    }

    pub fn micro_config(&self, seed: u64) -> MicroConfig {
        let mut cfg = MicroConfig::from_macro(&self.macro_cfg, self.micro.n_particles, seed);
        cfg.sampling = self.micro.sampling;
        cfg.record_every = self.micro.record_every;
        cfg
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.micro.runs as u64)
            .map(|i| self.micro.seed + i)
            .collect()
    }

    /// Validates every section; failing keys are reported with their section
    /// prefix (`macro.dt`, `micro.n_particles`, ...).
    pub fn validate(&self) -> Result<()> {
        let prefix = |section: &'static str| {
            move |e: Error| match e {
                Error::InvalidConfig { key, reason } => {
                    let key = if key.starts_with(section) {
                        key
                    } else {
                        format!("{section}.{key}")
                    };
                    Error::InvalidConfig { key, reason }
                }
                other => other,
            }
        };
        self.macro_cfg.validate().map_err(prefix("macro"))?;
        if self.micro.runs == 0 {
            return Err(Error::config("micro.runs", "need at least one run"));
        }
        self.micro_config(self.micro.seed)
            .validate()
            .map_err(prefix("micro"))?;
        if self.euler.k > 30 {
            return Err(Error::config("euler.k", "refinement level above 30"));
        }
        self.convergence.validate()
    }
}
