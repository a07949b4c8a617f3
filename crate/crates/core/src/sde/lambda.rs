//! `dΛ = −μΛ dx + dB Λ` (Stratonovich), `Λ(0) = 1`, and its exponential
//! functional `Q̃ = 2τ_ξ ∫₀^{L/ξ} Λ†Λ dx`.

use super::{check_finite, segments, Driver, MultStepper, Process, Trajectory};
use crate::error::Result;
use crate::matrix::{adjoint_mul_into, ComplexMatrix, HermitianMatrix, C64};
use crate::params::{ModelParams, SdeConfig};
use crate::rng::RngStream;

pub fn integrate_lambda(params: &ModelParams, length_over_xi: f64, cfg: &SdeConfig, stream: RngStream) -> Result<Trajectory> {
    params.validate()?;
    cfg.validate()?;
    let n = params.n_channels;
    let seg = segments(cfg, &[length_over_xi])?[0];
    let mut stepper = MultStepper::new(n, params.beta, Driver::Hermitian, params.mu(), cfg, stream);
    let mut lam = ComplexMatrix::identity(n);
    let mut grid = vec![0.0];
    let mut states = vec![lam.clone()];
    for i in 1..=seg.0 {
        stepper.advance(&mut lam, seg.1);
        if i % cfg.renorm_every == 0 || i == seg.0 {
            check_finite(&lam, "lambda", i)?;
        }
        grid.push(i as f64 * seg.1);
        states.push(lam.clone());
    }
    Ok(Trajectory { grid, states, process: Process::Lambda, stream, dx: seg.1 })
}

/// One sample of `Q̃` (time units) at physical length `length`.
pub fn exp_functional(params: &ModelParams, length: f64, cfg: &SdeConfig, stream: RngStream) -> Result<HermitianMatrix> {
    Ok(exp_functional_snapshots(params, &[length], cfg, stream)?.pop().unwrap())
}

/// `Q̃` at each of the ascending physical `lengths`, all along one path.
pub fn exp_functional_snapshots(
    params: &ModelParams,
    lengths: &[f64],
    cfg: &SdeConfig,
    stream: RngStream,
) -> Result<Vec<HermitianMatrix>> {
    params.validate()?;
    cfg.validate()?;
    let n = params.n_channels;
    let xs: Vec<f64> = lengths.iter().map(|&l| params.length_over_xi(l)).collect();
    let segs = segments(cfg, &xs)?;
    let mut stepper = MultStepper::new(n, params.beta, Driver::Hermitian, params.mu(), cfg, stream);
    let mut lam = ComplexMatrix::identity(n);
    let mut f_prev = ComplexMatrix::identity(n);
    let mut f = ComplexMatrix::zeros(n);
    let mut acc = ComplexMatrix::zeros(n);
    let scale = 2.0 * params.tau_xi();
    let mut out = Vec::with_capacity(lengths.len());
    let mut step = 0;
    for (count, h) in segs {
        for _ in 0..count {
            step += 1;
            stepper.advance(&mut lam, h);
            adjoint_mul_into(&lam, &lam, &mut f);
            acc.axpy(C64::new(0.5 * h, 0.0), &f_prev);
            acc.axpy(C64::new(0.5 * h, 0.0), &f);
            std::mem::swap(&mut f, &mut f_prev);
            if step % cfg.renorm_every == 0 {
                check_finite(&lam, "exp-functional", step)?;
            }
        }
        check_finite(&acc, "exp-functional", step)?;
        out.push(HermitianMatrix::from_matrix(acc.scale_real(scale)));
    }
    Ok(out)
}
