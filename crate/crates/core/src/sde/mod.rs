//! Effective matrix SDEs in the dimensionless coordinate `s = x/ξ`.
//!
//! Stratonovich equations are integrated with the Heun predictor-corrector
//! (same increment in both stages); the Itô scheme is Euler–Maruyama with the
//! converted drift.

mod coupled;
mod lambda;
mod lyapunov;
mod qtilde;
mod rider_valko;
mod stilde;

pub use coupled::{integrate_coupled, integrate_coupled_from, CoupledState};
pub use lambda::{exp_functional, exp_functional_snapshots, integrate_lambda};
pub use lyapunov::{lyapunov_spectrum, LyapunovEstimate, LyapunovProcess};
pub use qtilde::{integrate_qtilde, qtilde_snapshots};
pub use rider_valko::{integrate_rider_valko, rider_valko_functional};
pub use stilde::{integrate_stilde, StildeOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{adjoint_mul_into, mul_into, unitarize, ComplexMatrix, HermitianMatrix, SymmetryClass, C64};
use crate::noise::fill_increment;
use crate::params::{Scheme, SdeConfig};
use crate::rng::{RngStream, Sampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    Lambda,
    RiderValko,
}

/// Sampled path on a uniform grid (units of ξ).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
    pub process: Process,
    pub stream: RngStream,
    pub dx: f64,
}

impl Trajectory {
    pub fn last(&self) -> &ComplexMatrix {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// Trapezoid rule for `∫ M†M dx` over the stored states.
    pub fn gram_integral(&self) -> HermitianMatrix {
        let n = self.states[0].dim();
        let mut acc = ComplexMatrix::zeros(n);
        let mut f = ComplexMatrix::zeros(n);
        for (i, m) in self.states.iter().enumerate() {
            adjoint_mul_into(m, m, &mut f);
            let w = if i == 0 || i + 1 == self.states.len() { 0.5 } else { 1.0 };
            acc.axpy(C64::new(w * self.dx, 0.0), &f);
        }
        HermitianMatrix::from_matrix(acc)
    }
}

/// Noise driving a multiplicative process `dY = c Y dx + K Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Driver {
    /// Isotropic Hermitian increments.
    Hermitian,
    /// Independent entries: real `N(0, dx)` for β=1, complex with `E|χ|² = 2dx` for β=2.
    NonHermitian,
}

pub(crate) fn fill_nonhermitian(n: usize, beta: SymmetryClass, dx: f64, s: &mut Sampler, out: &mut ComplexMatrix) {
    let sd = dx.sqrt();
    for z in out.as_mut_slice().iter_mut().take(n * n) {
        *z = match beta {
            SymmetryClass::Orthogonal => C64::new(sd * s.normal(), 0.0),
            SymmetryClass::Unitary => C64::new(sd * s.normal(), sd * s.normal()),
        };
    }
}

/// Advances `Y ← P Y` with `P = 1 + A + A²/2` (Heun) or `1 + A` (Euler),
/// `A = c dx + K`, where `c` is the drift in the integrator's convention.
pub(crate) struct MultStepper {
    n: usize,
    beta: SymmetryClass,
    driver: Driver,
    drift: f64,
    heun: bool,
    noise: bool,
    a: ComplexMatrix,
    a2: ComplexMatrix,
    tmp: ComplexMatrix,
    sampler: Sampler,
}

impl MultStepper {
    /// `mu` is the Stratonovich decay rate of `dY = −μ Y dx + K Y`.
    pub(crate) fn new(n: usize, beta: SymmetryClass, driver: Driver, mu: f64, cfg: &SdeConfig, stream: RngStream) -> Self {
        let heun = cfg.scheme == Scheme::StratonovichHeun;
        // Itô drift = Stratonovich drift + E[K²]/(2dx).
        let half_k2 = match driver {
            Driver::Hermitian => 0.5 * (1.0 + 0.5 * beta.beta_f64() * (n as f64 - 1.0)),
            Driver::NonHermitian => match beta {
                SymmetryClass::Orthogonal => 0.5,
                SymmetryClass::Unitary => 0.0,
            },
        };
        let drift = if heun || cfg.disable_noise { -mu } else { -mu + half_k2 };
        Self {
            n,
            beta,
            driver,
            drift,
            heun,
            noise: !cfg.disable_noise,
            a: ComplexMatrix::zeros(n),
            a2: ComplexMatrix::zeros(n),
            tmp: ComplexMatrix::zeros(n),
            sampler: stream.sampler(),
        }
    }

    pub(crate) fn advance(&mut self, y: &mut ComplexMatrix, h: f64) {
        if self.noise {
            match self.driver {
                Driver::Hermitian => fill_increment(self.n, self.beta, h, &mut self.sampler, &mut self.a),
                Driver::NonHermitian => fill_nonhermitian(self.n, self.beta, h, &mut self.sampler, &mut self.a),
            }
        } else {
            self.a.fill(C64::new(0.0, 0.0));
        }
        self.a.add_diag(C64::new(self.drift * h, 0.0));
        if self.heun {
            mul_into(&self.a, &self.a, &mut self.a2);
            self.a2.scale_mut(0.5);
            self.a2 += &self.a;
        } else {
            self.a2.copy_from(&self.a);
        }
        self.a2.add_diag(C64::new(1.0, 0.0));
        mul_into(&self.a2, y, &mut self.tmp);
        std::mem::swap(y, &mut self.tmp);
    }
}

/// Splits `[0, x_last]` into segments ending at each snapshot, each with a
/// uniform step no larger than `cfg.dx`.
pub(crate) fn segments(cfg: &SdeConfig, xs: &[f64]) -> Result<Vec<(usize, f64)>> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        if !(x >= prev && x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "snapshot lengths must be finite, non-negative and ascending (got {x} after {prev})"
            )));
        }
        out.push(cfg.steps_for(x - prev));
        prev = x;
    }
    Ok(out)
}

pub(crate) fn check_finite(m: &ComplexMatrix, process: &'static str, step: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { process, step })
    }
}

pub(crate) fn require_heun(cfg: &SdeConfig, what: &str) -> Result<()> {
    match cfg.scheme {
        Scheme::StratonovichHeun => Ok(()),
        Scheme::ItoEuler => Err(Error::Unsupported(format!("{what} is integrated with the Stratonovich-Heun scheme only"))),
    }
}

/// Re-unitarizes and returns the residual found before correction.
pub(crate) fn renormalize_unitary(u: &mut ComplexMatrix) -> Result<f64> {
    let r = u.unitarity_residual();
    *u = unitarize(u)?.into_matrix();
    Ok(r)
}
