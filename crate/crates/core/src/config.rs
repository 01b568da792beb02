//! Plain-text run configuration (TOML: `key = value` lines under `[section]` headers).
//!
//! Every key has a default, so an empty file is a valid configuration.
//!
//! ```toml
//! [display]
//! side = 1024
//! black_luminance = 0.0
//!
//! [bank]
//! pixels_per_degree = 32.0
//! center_sigma_0_deg = 0.047
//! n_scales = 7
//! orientation_step_deg = 15.0
//!
//! [stage.t2]
//! sigma_e_deg = 25.0
//! theta_k_deg = 90.0
//! alpha = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filterbank::BankParams;
use crate::orientation::{FeedbackCoefficients, ImpulseParams, Stage};
use crate::pooling::ModelConfig;
use crate::stimuli::{Placement, WhiteSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisplayConfig {
    pub side: usize,
    pub black_luminance: f64,
    /// Multiplies every luminance of every generated display.
    pub luminance_scale: f64,
}

impl Default for DisplayConfig {
    fn default() -> Self {
        Self {
            side: 1024,
            black_luminance: 0.0,
            luminance_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GratingConfig {
    pub thin_stripe_width: usize,
    pub wide_stripe_width: usize,
}

impl Default for GratingConfig {
    fn default() -> Self {
        Self {
            thin_stripe_width: 31,
            wide_stripe_width: 340,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhiteConfig {
    pub stripe_width: usize,
    pub test_width: usize,
    pub test_height: usize,
    pub black_luminance: f64,
    pub white_luminance: f64,
    pub test_luminance: f64,
}

impl Default for WhiteConfig {
    fn default() -> Self {
        let s = WhiteSpec::standard(Placement::OnBlack);
        Self {
            stripe_width: s.stripe_width,
            test_width: s.test_width,
            test_height: s.test_height,
            black_luminance: s.black_luminance,
            white_luminance: s.white_luminance,
            test_luminance: s.test_luminance,
        }
    }
}

impl WhiteConfig {
    pub fn spec(&self, placement: Placement) -> WhiteSpec {
        WhiteSpec {
            stripe_width: self.stripe_width,
            test_width: self.test_width,
            test_height: self.test_height,
            black_luminance: self.black_luminance,
            white_luminance: self.white_luminance,
            test_luminance: self.test_luminance,
            placement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub pixels_per_degree: f64,
    pub center_sigma_0_deg: f64,
    pub n_scales: usize,
    pub orientation_step_deg: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        let p = BankParams::default();
        Self {
            pixels_per_degree: p.pixels_per_degree,
            center_sigma_0_deg: p.center_sigma_0_deg,
            n_scales: p.n_scales,
            orientation_step_deg: p.orientation_step_deg,
        }
    }
}

/// A coefficient given once for all scales or once per scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerScale {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerScale {
    fn expand(&self, n: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerScale::Scalar(v) => Ok(vec![*v; n]),
            PerScale::List(v) if v.len() == n => Ok(v.clone()),
            PerScale::List(v) => Err(ConfigError::Invalid(format!(
                "{key} lists {} values for {n} scales",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub sigma_e_deg: f64,
    pub sigma_i_deg: f64,
    pub theta_k_deg: f64,
    pub theta_l_deg: f64,
    pub eta: PerScale,
    pub alpha: PerScale,
}

impl StageConfig {
    fn from_params(p: ImpulseParams) -> Self {
        Self {
            sigma_e_deg: p.sigma_e_deg,
            sigma_i_deg: p.sigma_i_deg,
            theta_k_deg: p.theta_k_deg,
            theta_l_deg: p.theta_l_deg,
            eta: PerScale::Scalar(1.0),
            alpha: PerScale::Scalar(1.0),
        }
    }

    pub fn impulse(&self) -> ImpulseParams {
        ImpulseParams {
            sigma_e_deg: self.sigma_e_deg,
            sigma_i_deg: self.sigma_i_deg,
            theta_k_deg: self.theta_k_deg,
            theta_l_deg: self.theta_l_deg,
        }
    }

    pub fn feedback(&self, n_scales: usize) -> Result<FeedbackCoefficients, ConfigError> {
        Ok(FeedbackCoefficients {
            eta: self.eta.expand(n_scales, "eta")?,
            alpha: self.alpha.expand(n_scales, "alpha")?,
        })
    }
}

/// Missing keys inside a stage section fall back to that stage's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialStage {
    sigma_e_deg: Option<f64>,
    sigma_i_deg: Option<f64>,
    theta_k_deg: Option<f64>,
    theta_l_deg: Option<f64>,
    eta: Option<PerScale>,
    alpha: Option<PerScale>,
}

impl PartialStage {
    fn resolve(self, stage: Stage) -> StageConfig {
        let d = StageConfig::from_params(ImpulseParams::for_stage(stage));
        StageConfig {
            sigma_e_deg: self.sigma_e_deg.unwrap_or(d.sigma_e_deg),
            sigma_i_deg: self.sigma_i_deg.unwrap_or(d.sigma_i_deg),
            theta_k_deg: self.theta_k_deg.unwrap_or(d.theta_k_deg),
            theta_l_deg: self.theta_l_deg.unwrap_or(d.theta_l_deg),
            eta: self.eta.unwrap_or(d.eta),
            alpha: self.alpha.unwrap_or(d.alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawStages")]
pub struct StagesConfig {
    pub t1: StageConfig,
    pub t2: StageConfig,
}

impl Default for StagesConfig {
    fn default() -> Self {
        RawStages::default().into()
    }
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawStages {
    t1: PartialStage,
    t2: PartialStage,
}

impl From<RawStages> for StagesConfig {
    fn from(r: RawStages) -> Self {
        Self {
            t1: r.t1.resolve(Stage::T1),
            t2: r.t2.resolve(Stage::T2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolingConfig {
    pub window_extent: usize,
    pub beta_exponent: f64,
    pub observation_x: usize,
    pub observation_y: usize,
    /// Rows below the black/stimulus interface for the interface observation point.
    pub interface_offset: usize,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            window_extent: 256,
            beta_exponent: 0.1,
            observation_x: 512,
            observation_y: 768,
            interface_offset: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Stage identifiers (`t1`, `t2`).
    pub stages: Vec<String>,
    /// Stimulus identifiers; empty means all ten.
    pub stimuli: Vec<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            stages: vec!["t1".into(), "t2".into()],
            stimuli: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub display: DisplayConfig,
    pub grating: GratingConfig,
    pub white: WhiteConfig,
    pub bank: BankConfig,
    pub stage: StagesConfig,
    pub pooling: PoolingConfig,
    pub experiment: ExperimentSection,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Settings = toml::from_str(text)?;
        s.model()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn bank_params(&self) -> BankParams {
        BankParams {
            pixels_per_degree: self.bank.pixels_per_degree,
            center_sigma_0_deg: self.bank.center_sigma_0_deg,
            n_scales: self.bank.n_scales,
            orientation_step_deg: self.bank.orientation_step_deg,
        }
    }

    pub fn model(&self) -> Result<ModelConfig, ConfigError> {
        let n = self.bank.n_scales;
        let model = ModelConfig {
            bank: self.bank_params(),
            impulse_t1: self.stage.t1.impulse(),
            impulse_t2: self.stage.t2.impulse(),
            feedback_t1: self.stage.t1.feedback(n)?,
            feedback_t2: self.stage.t2.feedback(n)?,
            beta_exponent: self.pooling.beta_exponent,
        };
        for p in [&model.impulse_t1, &model.impulse_t2] {
            p.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(model)
    }

    pub fn stages(&self) -> Result<Vec<Stage>, ConfigError> {
        let mut stages = self
            .experiment
            .stages
            .iter()
            .map(|s| {
                s.parse::<Stage>()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        stages.sort();
        stages.dedup();
        Ok(stages)
    }

    /// Same settings with every luminance multiplied by `factor`.
    pub fn with_luminance_scale(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.display.luminance_scale *= factor;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = Settings::from_toml("").unwrap();
        assert_eq!(s, Settings::default());
        let m = s.model().unwrap();
        assert_eq!(m, ModelConfig::default());
        assert_eq!(s.stages().unwrap(), vec![Stage::T1, Stage::T2]);
    }

    #[test]
    fn per_stage_overrides_and_lists() {
        let s = Settings::from_toml(
            "[stage.t2]\nsigma_e_deg = 20.0\nalpha = [0, 0, 0, 0, 1, 1, 1]\n\n[pooling]\nbeta_exponent = 0.01\n",
        )
        .unwrap();
        assert_eq!(s.stage.t2.sigma_e_deg, 20.0);
        assert_eq!(s.stage.t2.sigma_i_deg, 60.0);
        assert_eq!(s.stage.t2.theta_k_deg, 90.0);
        let m = s.model().unwrap();
        assert_eq!(m.feedback_t2.alpha, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(m.feedback_t2.eta, vec![1.0; 7]);
        assert_eq!(m.beta_exponent, 0.01);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lists() {
        assert!(Settings::from_toml("[bank]\nsigma = 1.0\n").is_err());
        assert!(Settings::from_toml("[stage.t1]\neta = [1.0, 2.0]\n").is_err());
        assert!(Settings::from_toml("[stage.t1]\nsigma_e_deg = 90.0\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut s = Settings::default();
        s.stage.t1.alpha = PerScale::List(vec![0.5; 7]);
        s.display.black_luminance = 3.0;
        let back = Settings::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
