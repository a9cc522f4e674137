//! Experiment configuration: a versioned JSON document holding everything a
//! run needs, including stage templates and frozen normalization statistics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::baselines::DispatchMode;
use crate::constraint::ProblemScale;
use crate::env::{
    compute_norm_stats, DisturbanceConfig, EnvConfig, NormStat, RewardWeights, StageTemplate,
    DEFAULT_MAX_STEPS,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Rollouts and seed used when statistics have to be regenerated.
pub const NORM_ROLLOUTS: usize = 100;
pub const NORM_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleNorms {
    pub makespan: NormStat,
    pub energy: NormStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub noise_levels: Vec<f64>,
    pub failure_levels: Vec<f64>,
    pub episodes: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            noise_levels: vec![0.1, 0.3, 0.5],
            failure_levels: vec![0.01, 0.03, 0.05],
            episodes: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scale: ProblemScale,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "StageTemplate::defaults")]
    pub templates: Vec<StageTemplate>,
    /// Frozen statistics keyed by scale label.
    #[serde(default)]
    pub norm_stats: BTreeMap<String, ScaleNorms>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub baseline_mode: DispatchMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Wall-clock timings make metrics files differ between runs; off by default.
    #[serde(default)]
    pub record_wallclock: bool,
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

fn default_eval_episodes() -> usize {
    30
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// The α grid `{0.1, 0.2, …, 0.9}`.
pub fn alpha_on_grid(alpha: f64) -> bool {
    let k = (alpha * 10.0).round();
    (1.0..=9.0).contains(&k) && (alpha * 10.0 - k).abs() < 1e-9
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !alpha_on_grid(self.alpha) {
            return Err(Error::Config(format!("alpha {} is not one of 0.1, 0.2, ..., 0.9", self.alpha)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.max_steps == 0 || self.eval_episodes == 0 || self.robustness.episodes == 0 {
            return Err(Error::Config("step and episode counts must be positive".into()));
        }
        for t in &self.templates {
            t.validate()?;
        }
        self.disturbance.validate()?;
        self.agent.validate()?;
        for (label, n) in &self.norm_stats {
            label
                .parse::<ProblemScale>()
                .map_err(|_| Error::Config(format!("norm_stats key `{label}` is not a scale label")))?;
            if !(n.makespan.std > 0.0 && n.energy.std > 0.0) {
                return Err(Error::Config(format!("norm_stats for {label} need positive std")));
            }
        }
        Ok(())
    }

    /// Frozen statistics for the configured scale, regenerated from random
    /// rollouts when absent.
    pub fn norms(&self) -> Result<ScaleNorms> {
        if let Some(n) = self.norm_stats.get(&self.scale.label) {
            return Ok(*n);
        }
        let (makespan, energy) = compute_norm_stats(&self.scale, &self.templates, NORM_ROLLOUTS, NORM_SEED)?;
        Ok(ScaleNorms { makespan, energy })
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let n = self.norms()?;
        Ok(EnvConfig {
            scale: self.scale.clone(),
            templates: self.templates.clone(),
            disturbance: self.disturbance,
            weights: RewardWeights {
                alpha: self.alpha,
                makespan_norm: n.makespan,
                energy_norm: n.energy,
            },
            max_steps: self.max_steps,
        })
    }
}

/// The shipped reference configuration.
pub fn reference_json() -> &'static str {
    include_str!("../../../../configs/reference.json")
}

pub fn reference() -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(reference_json())
}
