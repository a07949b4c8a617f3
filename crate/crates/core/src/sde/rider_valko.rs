//! `dM = −μM dx + χM` (Stratonovich) with non-Hermitian `χ`.

use super::{check_finite, segments, Driver, MultStepper, Process, Trajectory};
use crate::error::{Error, Result};
use crate::matrix::{adjoint_mul_into, ComplexMatrix, HermitianMatrix, SymmetryClass, C64};
use crate::params::SdeConfig;
use crate::rng::RngStream;

fn validate(mu: f64, n: usize) -> Result<()> {
    if !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("drift mu = {mu} must be finite")));
    }
    if n == 0 || n > crate::matrix::MAX_DIM {
        return Err(Error::InvalidParameter(format!("dimension {n} out of range")));
    }
    Ok(())
}

pub fn integrate_rider_valko(
    mu: f64,
    n: usize,
    beta: SymmetryClass,
    length_over_xi: f64,
    cfg: &SdeConfig,
    stream: RngStream,
) -> Result<Trajectory> {
    validate(mu, n)?;
    cfg.validate()?;
    let (count, h) = segments(cfg, &[length_over_xi])?[0];
    let mut stepper = MultStepper::new(n, beta, Driver::NonHermitian, mu, cfg, stream);
    let mut m = ComplexMatrix::identity(n);
    let mut grid = vec![0.0];
    let mut states = vec![m.clone()];
    for i in 1..=count {
        stepper.advance(&mut m, h);
        if i % cfg.renorm_every == 0 || i == count {
            check_finite(&m, "rider-valko", i)?;
        }
        grid.push(i as f64 * h);
        states.push(m.clone());
    }
    Ok(Trajectory { grid, states, process: Process::RiderValko, stream, dx: h })
}

/// `∫₀^{length_over_xi} M†M dx` without storing the path.
pub fn rider_valko_functional(
    mu: f64,
    n: usize,
    beta: SymmetryClass,
    length_over_xi: f64,
    cfg: &SdeConfig,
    stream: RngStream,
) -> Result<HermitianMatrix> {
    validate(mu, n)?;
    cfg.validate()?;
    let (count, h) = segments(cfg, &[length_over_xi])?[0];
    let mut stepper = MultStepper::new(n, beta, Driver::NonHermitian, mu, cfg, stream);
    let mut m = ComplexMatrix::identity(n);
    let mut f_prev = ComplexMatrix::identity(n);
    let mut f = ComplexMatrix::zeros(n);
    let mut acc = ComplexMatrix::zeros(n);
    for i in 1..=count {
        stepper.advance(&mut m, h);
        adjoint_mul_into(&m, &m, &mut f);
        acc.axpy(C64::new(0.5 * h, 0.0), &f_prev);
        acc.axpy(C64::new(0.5 * h, 0.0), &f);
        std::mem::swap(&mut f, &mut f_prev);
        if i % cfg.renorm_every == 0 {
            check_finite(&m, "rider-valko", i)?;
        }
    }
    check_finite(&acc, "rider-valko", count)?;
    Ok(HermitianMatrix::from_matrix(acc))
}
