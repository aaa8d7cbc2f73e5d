use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pwa::{CovarianceUpdate, ExplorationMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "CEM")]
    Cem,
    #[serde(rename = "CMAES")]
    Cmaes,
    #[serde(rename = "PI2")]
    Pi2,
    #[serde(rename = "PI2CMA")]
    Pi2Cma,
    #[serde(rename = "PI2CMAES")]
    Pi2Cmaes,
}

impl AlgorithmKind {
    pub fn is_pi2(self) -> bool {
        matches!(self, Self::Pi2 | Self::Pi2Cma | Self::Pi2Cmaes)
    }

    fn default_covariance(self) -> CovarianceKind {
        match self {
            Self::Pi2 => CovarianceKind::None,
            Self::Cem | Self::Pi2Cma => CovarianceKind::Cem,
            Self::Cmaes | Self::Pi2Cmaes => CovarianceKind::Cmaes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    Constant,
    PerBasis,
    TimeVarying,
}

impl From<ExplorationKind> for ExplorationMode {
    fn from(k: ExplorationKind) -> Self {
        match k {
            ExplorationKind::Constant => ExplorationMode::Constant,
            ExplorationKind::PerBasis => ExplorationMode::PerBasis,
            ExplorationKind::TimeVarying => ExplorationMode::TimeVarying,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    None,
    Cem,
    Cmaes,
}

impl From<CovarianceKind> for CovarianceUpdate {
    fn from(k: CovarianceKind) -> Self {
        match k {
            CovarianceKind::None => CovarianceUpdate::None,
            CovarianceKind::Cem => CovarianceUpdate::CemStyle,
            CovarianceKind::Cmaes => CovarianceUpdate::CmaesStyle,
        }
    }
}

fn default_exploration() -> ExplorationKind {
    ExplorationKind::Constant
}
fn default_replications() -> usize {
    1
}
fn default_dt() -> f64 {
    0.01
}
fn default_duration() -> f64 {
    0.5
}
fn default_via() -> f64 {
    0.5
}
fn default_via_time() -> f64 {
    0.3
}
fn default_viapoint_weight() -> f64 {
    1e8
}
fn default_dofs() -> usize {
    10
}
fn default_basis() -> usize {
    5
}
fn default_arm_length() -> f64 {
    1.0
}

/// One experiment. Serialized as flat TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used as the prefix of output files; defaults to the config file stem.
    #[serde(default)]
    pub name: String,
    pub algorithm: AlgorithmKind,
    /// Exploring rollouts per update (K); the noise-free rollout is extra.
    pub trials_per_update: usize,
    /// PI² eliteness h (PI2, PI2CMA, PI2CMAES).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eliteness_h: Option<f64>,
    /// Elite count K_e (CEM, CMAES).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elite_count: Option<usize>,
    #[serde(default = "default_exploration")]
    pub exploration_mode: ExplorationKind,
    /// Overrides the covariance update implied by `algorithm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_update: Option<CovarianceKind>,
    /// Initial covariance is `lambda_init * I` for every DOF.
    pub lambda_init: f64,
    #[serde(default)]
    pub base_noise_level: f64,
    pub updates: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_via")]
    pub viapoint_x: f64,
    #[serde(default = "default_via")]
    pub viapoint_y: f64,
    #[serde(default = "default_via_time")]
    pub viapoint_time: f64,
    /// Multiplier on the squared viapoint distance in the step cost.
    #[serde(default = "default_viapoint_weight")]
    pub viapoint_weight: f64,
    #[serde(default = "default_dofs")]
    pub dofs: usize,
    #[serde(default = "default_basis")]
    pub basis_functions: usize,
    #[serde(default = "default_arm_length")]
    pub arm_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_x: Option<f64>,
}

impl ExperimentConfig {
    /// Viapoint-task defaults for `algorithm`, with `K = 10`, `h = 10` or
    /// `K_e = K/2`, `lambda_init = 1e4` and 100 updates.
    pub fn viapoint(name: &str, algorithm: AlgorithmKind) -> Self {
        let pi2 = algorithm.is_pi2();
        Self {
            name: name.to_string(),
            algorithm,
            trials_per_update: 10,
            eliteness_h: pi2.then_some(10.0),
            elite_count: (!pi2).then_some(5),
            exploration_mode: ExplorationKind::Constant,
            covariance_update: None,
            lambda_init: 1e4,
            base_noise_level: 0.0,
            updates: 100,
            replications: 1,
            seed: 0,
            dt: default_dt(),
            duration: default_duration(),
            viapoint_x: default_via(),
            viapoint_y: default_via(),
            viapoint_time: default_via_time(),
            viapoint_weight: default_viapoint_weight(),
            dofs: default_dofs(),
            basis_functions: default_basis(),
            arm_length: default_arm_length(),
            alpha_z: None,
            beta_z: None,
            alpha_x: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text)?;
        if config.name.is_empty() {
            config.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn covariance(&self) -> CovarianceKind {
        self.covariance_update
            .unwrap_or_else(|| self.algorithm.default_covariance())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials_per_update < 2 {
            return Err(field("trials_per_update", "must be at least 2"));
        }
        if self.algorithm.is_pi2() {
            match self.eliteness_h {
                Some(h) if h > 0.0 && h.is_finite() => {}
                Some(h) => return Err(field("eliteness_h", format!("must be positive, got {h}"))),
                None => return Err(field("eliteness_h", "required for PI2 algorithms")),
            }
            if self.elite_count.is_some() {
                return Err(field("elite_count", "only applies to CEM and CMAES"));
            }
        } else {
            let k = self.trials_per_update;
            match self.elite_count {
                Some(e) if e >= 1 && e <= k => {}
                Some(e) => return Err(field("elite_count", format!("{e} outside 1..={k}"))),
                None => return Err(field("elite_count", "required for CEM and CMAES")),
            }
            if self.algorithm == AlgorithmKind::Cmaes {
                let e = self.elite_count.unwrap_or(0);
                if (0.5 * (k as f64 + 1.0)).ln() - (e as f64).ln() <= 0.0 {
                    return Err(field("elite_count", format!("log-rank weight of rank {e} is not positive for K = {k}")));
                }
            }
            if self.eliteness_h.is_some() {
                return Err(field("eliteness_h", "only applies to PI2 algorithms"));
            }
            if self.exploration_mode != ExplorationKind::Constant {
                return Err(field("exploration_mode", "CEM and CMAES need constant exploration"));
            }
        }
        if !(self.lambda_init > 0.0 && self.lambda_init.is_finite()) {
            return Err(field("lambda_init", "must be positive"));
        }
        if !(self.base_noise_level >= 0.0 && self.base_noise_level.is_finite()) {
            return Err(field("base_noise_level", "must be non-negative"));
        }
        if self.replications == 0 {
            return Err(field("replications", "must be at least 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(field("duration", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= self.duration / 10.0) {
            return Err(field("dt", "must lie in (0, duration/10]"));
        }
        if !(self.viapoint_time > 0.0 && self.viapoint_time < self.duration) {
            return Err(field("viapoint_time", "must lie strictly inside the movement"));
        }
        if !(self.viapoint_weight > 0.0 && self.viapoint_weight.is_finite()) {
            return Err(field("viapoint_weight", "must be positive"));
        }
        if self.dofs == 0 {
            return Err(field("dofs", "must be at least 1"));
        }
        if self.basis_functions < 2 {
            return Err(field("basis_functions", "must be at least 2"));
        }
        if !(self.arm_length > 0.0 && self.arm_length.is_finite()) {
            return Err(field("arm_length", "must be positive"));
        }
        for (name, v) in [("alpha_z", self.alpha_z), ("beta_z", self.beta_z), ("alpha_x", self.alpha_x)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::Field {
                        field: name,
                        message: "must be positive".into(),
                    });
                }
            }
        }
        Ok(())
    }
}
