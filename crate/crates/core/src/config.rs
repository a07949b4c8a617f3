//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, Scheme, SdeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NoiseCheck,
    Moments,
    Dufresne,
    CoupledVsDecoupled,
    RiderValko,
    Lyapunov,
    MicroscopicCheck,
    Resolvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInfo {
    pub name: String,
    pub module: String,
    pub description: String,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::NoiseCheck,
        Self::Moments,
        Self::Dufresne,
        Self::CoupledVsDecoupled,
        Self::RiderValko,
        Self::Lyapunov,
        Self::MicroscopicCheck,
        Self::Resolvent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoiseCheck => "noise-check",
            Self::Moments => "moments",
            Self::Dufresne => "dufresne",
            Self::CoupledVsDecoupled => "coupled-vs-decoupled",
            Self::RiderValko => "rider-valko",
            Self::Lyapunov => "lyapunov",
            Self::MicroscopicCheck => "microscopic-check",
            Self::Resolvent => "resolvent",
        }
    }

    pub fn module(self) -> &'static str {
        match self {
            Self::NoiseCheck => "noise",
            Self::Moments => "moments",
            Self::Dufresne => "rmt",
            Self::CoupledVsDecoupled | Self::RiderValko | Self::Lyapunov => "sde",
            Self::MicroscopicCheck => "microscopic",
            Self::Resolvent => "resolvent",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::NoiseCheck => "empirical four-index correlator of the Hermitian white noise",
            Self::Moments => "closed-form, ODE and Monte Carlo first and second moments of tr Q",
            Self::Dufresne => "inverse exponential functional at large L against the Laguerre ensemble",
            Self::CoupledVsDecoupled => "tr Q moments from the coupled (U_L, U_R, q) system and the autonomous q equation",
            Self::RiderValko => "non-Hermitian multiplicative noise against the Hermitian process at equal drift",
            Self::Lyapunov => "Lyapunov spectra of the noise-only product and of Lambda",
            Self::MicroscopicCheck => "transfer-matrix scattering off a random potential: Krein-Friedel and tr Q moments",
            Self::Resolvent => "large-N resolvent flow, eigenvalue density and Monte Carlo histograms",
        }
    }

    pub fn info(self) -> ExperimentInfo {
        ExperimentInfo { name: self.name().into(), module: self.module().into(), description: self.description().into() }
    }
}

fn default_dx() -> f64 {
    1e-3
}
fn default_renorm() -> usize {
    100
}
fn default_n_traj() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dx")]
    pub dx: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_renorm")]
    pub renorm_every: usize,
    #[serde(default)]
    pub disable_noise: bool,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl SimConfig {
    pub fn sde(&self) -> SdeConfig {
        SdeConfig { dx: self.dx, scheme: self.scheme, renorm_every: self.renorm_every, disable_noise: self.disable_noise }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelParams,
    #[serde(default = "default_sim")]
    pub sim: SimConfig,
    pub output: OutputConfig,
    /// Experiment-specific options, parsed strictly by the experiment.
    #[serde(default = "empty_object")]
    pub settings: serde_json::Value,
}

fn default_sim() -> SimConfig {
    serde_json::from_str("{}").expect("defaults")
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sim.sde().validate()?;
        if self.output.formats.is_empty() {
            return Err(Error::InvalidParameter("no output format selected".into()));
        }
        if !self.settings.is_object() {
            return Err(Error::Parse("settings must be a JSON object".into()));
        }
        Ok(())
    }

    /// Strict parse of `settings` into an experiment's option struct.
    pub fn settings<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.settings.clone()).map_err(|e| Error::Parse(format!("settings: {e}")))
    }
}
