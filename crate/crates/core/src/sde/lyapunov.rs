//! Lyapunov spectrum of the propagator by periodic QR re-orthonormalization.

use serde::{Deserialize, Serialize};

use super::{check_finite, segments, Driver, MultStepper};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::params::{ModelParams, SdeConfig};
use crate::rng::RngStream;
use crate::stats::RunningStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovProcess {
    /// `dΛ = −μΛ dx + dB Λ`.
    Lambda,
    /// `dX = dB X`.
    NoiseOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Units of 1/ξ.
    pub value: f64,
    pub stderr: f64,
}

pub const LYAPUNOV_BLOCKS: usize = 20;

/// Exponents in descending order; the standard error comes from the spread of
/// per-block estimates over `LYAPUNOV_BLOCKS` consecutive blocks.
pub fn lyapunov_spectrum(
    params: &ModelParams,
    length_over_xi: f64,
    process: LyapunovProcess,
    cfg: &SdeConfig,
    stream: RngStream,
) -> Result<Vec<LyapunovEstimate>> {
    params.validate()?;
    cfg.validate()?;
    if !(length_over_xi > 0.0) {
        return Err(Error::InvalidParameter("Lyapunov estimation needs a positive length".into()));
    }
    let n = params.n_channels;
    let mu = match process {
        LyapunovProcess::Lambda => params.mu(),
        LyapunovProcess::NoiseOnly => 0.0,
    };
    let block_len = length_over_xi / LYAPUNOV_BLOCKS as f64;
    let (count, h) = segments(cfg, &[block_len])?[0];
    let mut stepper = MultStepper::new(n, params.beta, Driver::Hermitian, mu, cfg, stream);
    let mut y = ComplexMatrix::identity(n);
    let mut stats = vec![RunningStats::new(); n];
    let mut step = 0;
    for _ in 0..LYAPUNOV_BLOCKS {
        let mut logs = vec![0.0; n];
        for i in 1..=count {
            step += 1;
            stepper.advance(&mut y, h);
            if i % cfg.renorm_every == 0 || i == count {
                check_finite(&y, "lyapunov", step)?;
                let qr = y.to_dmatrix().qr();
                let r = qr.r();
                for (k, l) in logs.iter_mut().enumerate() {
                    *l += r[(k, k)].norm().ln();
                }
                y = ComplexMatrix::from_dmatrix(&qr.q());
            }
        }
        for (s, l) in stats.iter_mut().zip(&logs) {
            s.push(l / block_len);
        }
    }
    let mut out: Vec<LyapunovEstimate> =
        stats.iter().map(|s| LyapunovEstimate { value: s.mean(), stderr: s.stderr() }).collect();
    out.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(out)
}
