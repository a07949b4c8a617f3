//! `dS̃ = −i{A + S̃ A† S̃ + √2(S̃ dB + dB S̃)}`, `A = dB₁ − i dB₂`, with three
//! independent isotropic increments (Stratonovich), `S̃(0) = −1`.

use serde::{Deserialize, Serialize};

use super::{check_finite, renormalize_unitary, require_heun, segments};
use crate::error::Result;
use crate::matrix::{mul_into, ComplexMatrix, SymmetryClass, UnitaryMatrix, C64};
use crate::noise::fill_increment;
use crate::params::{ModelParams, SdeConfig};
use crate::rng::{RngStream, Sampler};

pub const UNITARITY_WARN: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StildeOutcome {
    pub s: UnitaryMatrix,
    /// Renormalizations that found a unitarity residual above `1e-6`.
    pub unitarity_warnings: usize,
}

pub(crate) struct Increments {
    pub db1: ComplexMatrix,
    pub db2: ComplexMatrix,
    pub db: ComplexMatrix,
}

impl Increments {
    pub fn new(n: usize) -> Self {
        Self { db1: ComplexMatrix::zeros(n), db2: ComplexMatrix::zeros(n), db: ComplexMatrix::zeros(n) }
    }

    pub fn fill(&mut self, n: usize, beta: SymmetryClass, h: f64, noise: bool, s: &mut Sampler) {
        if noise {
            fill_increment(n, beta, h, s, &mut self.db1);
            fill_increment(n, beta, h, s, &mut self.db2);
            fill_increment(n, beta, h, s, &mut self.db);
        } else {
            let z = C64::new(0.0, 0.0);
            self.db1.fill(z);
            self.db2.fill(z);
            self.db.fill(z);
        }
    }
}

struct Rhs {
    a: ComplexMatrix,
    ad: ComplexMatrix,
    t1: ComplexMatrix,
    t2: ComplexMatrix,
}

impl Rhs {
    fn new(n: usize) -> Self {
        Self { a: ComplexMatrix::zeros(n), ad: ComplexMatrix::zeros(n), t1: ComplexMatrix::zeros(n), t2: ComplexMatrix::zeros(n) }
    }

    fn load(&mut self, inc: &Increments) {
        let i = C64::new(0.0, 1.0);
        let (a, ad) = (self.a.as_mut_slice(), self.ad.as_mut_slice());
        for ((x, y), (b1, b2)) in a.iter_mut().zip(ad.iter_mut()).zip(inc.db1.as_slice().iter().zip(inc.db2.as_slice())) {
            *x = b1 - i * b2;
            *y = b1 + i * b2;
        }
    }

    fn eval(&mut self, s: &ComplexMatrix, db: &ComplexMatrix, out: &mut ComplexMatrix) {
        let r2 = std::f64::consts::SQRT_2;
        mul_into(s, &self.ad, &mut self.t1);
        mul_into(&self.t1, s, out);
        *out += &self.a;
        mul_into(s, db, &mut self.t1);
        mul_into(db, s, &mut self.t2);
        self.t1 += &self.t2;
        out.axpy(C64::new(r2, 0.0), &self.t1);
        for z in out.as_mut_slice() {
            *z = C64::new(z.im, -z.re);
        }
    }
}

pub fn integrate_stilde(params: &ModelParams, length: f64, cfg: &SdeConfig, stream: RngStream) -> Result<StildeOutcome> {
    params.validate()?;
    cfg.validate()?;
    require_heun(cfg, "the S-tilde equation")?;
    let n = params.n_channels;
    let (count, h) = segments(cfg, &[params.length_over_xi(length)])?[0];
    let mut sampler = stream.sampler();
    let mut inc = Increments::new(n);
    let mut rhs = Rhs::new(n);
    let mut s = ComplexMatrix::scalar(n, C64::new(-1.0, 0.0));
    let mut sp = ComplexMatrix::zeros(n);
    let mut g = ComplexMatrix::zeros(n);
    let mut gp = ComplexMatrix::zeros(n);
    let mut warnings = 0;
    for step in 1..=count {
        inc.fill(n, params.beta, h, !cfg.disable_noise, &mut sampler);
        rhs.load(&inc);
        rhs.eval(&s, &inc.db, &mut g);
        sp.copy_from(&s);
        sp += &g;
        rhs.eval(&sp, &inc.db, &mut gp);
        g += &gp;
        s.axpy(C64::new(0.5, 0.0), &g);
        if step % cfg.renorm_every == 0 || step == count {
            check_finite(&s, "stilde", step)?;
            if params.beta == SymmetryClass::Orthogonal {
                s = (&s + &s.transpose()).scale_real(0.5);
            }
            if renormalize_unitary(&mut s)? > UNITARITY_WARN {
                warnings += 1;
                log::warn!("S-tilde unitarity drift above {UNITARITY_WARN:e} at step {step}");
            }
        }
    }
    Ok(StildeOutcome { s: UnitaryMatrix::new_unchecked(s), unitarity_warnings: warnings })
}
