//! Physical configuration and integrator settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{SymmetryClass, MAX_DIM};

/// Wire of `N` channels with isotropic white-noise disorder of strength `σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n_channels: usize,
    pub beta: SymmetryClass,
    /// Wave number (1/length).
    pub k: f64,
    /// Disorder strength (1/length³).
    pub sigma: f64,
}

pub const WEAK_DISORDER_LIMIT: f64 = 1e-2;

impl ModelParams {
    pub fn new(n_channels: usize, beta: SymmetryClass, k: f64, sigma: f64) -> Result<Self> {
        let p = Self { n_channels, beta, k, sigma };
        p.validate()?;
        Ok(p)
    }

    /// `k = 1` and `σ = 8`, so that `ξ = 1` and `τ_ξ = 1/2`.
    pub fn unit(n_channels: usize, beta: SymmetryClass) -> Self {
        Self { n_channels, beta, k: 1.0, sigma: 8.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.n_channels > MAX_DIM {
            return Err(Error::InvalidParameter(format!("channel count {} out of range", self.n_channels)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!("k = {} must be positive", self.k)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }

    /// Logs a warning outside the weak-disorder regime `σ/k³ ≤ 1e-2`.
    pub fn check_weak_disorder(&self) -> bool {
        let weak = self.is_weak_disorder();
        if !weak {
            log::warn!("sigma/k^3 = {:.3e} exceeds the weak-disorder limit {WEAK_DISORDER_LIMIT:e}", self.disorder_ratio());
        }
        weak
    }

    pub fn disorder_ratio(&self) -> f64 {
        self.sigma / self.k.powi(3)
    }

    pub fn is_weak_disorder(&self) -> bool {
        self.disorder_ratio() <= WEAK_DISORDER_LIMIT
    }

    pub fn beta_f64(&self) -> f64 {
        self.beta.beta_f64()
    }

    pub fn mu(&self) -> f64 {
        1.0 + 0.5 * self.beta_f64() * (self.n_channels as f64 - 1.0)
    }

    /// Localisation length `8k²/σ`.
    pub fn xi(&self) -> f64 {
        8.0 * self.k * self.k / self.sigma
    }

    /// Group velocity `2k`.
    pub fn v(&self) -> f64 {
        2.0 * self.k
    }

    pub fn tau_xi(&self) -> f64 {
        self.xi() / self.v()
    }

    /// Elastic mean free path `ξ/(4μ)`.
    pub fn ell_e(&self) -> f64 {
        self.xi() / (4.0 * self.mu())
    }

    pub fn length_over_xi(&self, length: f64) -> f64 {
        length / self.xi()
    }

    /// Converts a value in units of `τ_ξ^power` to time units.
    pub fn to_time(&self, value: f64, power: i32) -> f64 {
        value * self.tau_xi().powi(power)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ItoEuler,
    #[default]
    StratonovichHeun,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    /// Step in units of ξ.
    pub dx: f64,
    pub scheme: Scheme,
    /// Steps between re-unitarization of unitary states.
    pub renorm_every: usize,
    /// Test hook: integrate with the noise switched off.
    #[serde(default)]
    pub disable_noise: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { dx: 1e-3, scheme: Scheme::StratonovichHeun, renorm_every: 100, disable_noise: false }
    }
}

impl SdeConfig {
    pub fn with_dx(dx: f64) -> Self {
        Self { dx, ..Self::default() }
    }

    pub fn with_scheme(self, scheme: Scheme) -> Self {
        Self { scheme, ..self }
    }

    pub fn noiseless(self) -> Self {
        Self { disable_noise: true, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidParameter(format!("dx = {} must be positive", self.dx)));
        }
        if self.renorm_every == 0 {
            return Err(Error::InvalidParameter("renorm_every must be at least 1".into()));
        }
        if self.dx > 1e-2 {
            log::warn!("dx = {} is coarse for weak-order-1 moment targets", self.dx);
        }
        Ok(())
    }

    /// Number of uniform steps covering `length` (units of ξ) and the step actually used.
    pub fn steps_for(&self, length: f64) -> (usize, f64) {
        if length <= 0.0 {
            return (0, self.dx);
        }
        let n = (length / self.dx).ceil().max(1.0) as usize;
        (n, length / n as f64)
    }
}
