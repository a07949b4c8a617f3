//! Coupled system for `(U_L, U_R, q)` with `S̃ = U_L U_R` and `q = Q̃/τ_ξ`:
//!
//! `dU_L = −i(U_L W_u + √2 dB U_L)`, `dU_R = −i(W_u U_R + √2 U_R dB)`,
//! `dq = 2 dx + q W + W q`, where with `P_k = U_R dB_k U_L`
//! `W = (P₁ − P₁†)/(2i) + (P₂ + P₂†)/2` and `W_u = (P₁ + P₁†)/2 + (P₂† − P₂)/(2i)`.

use serde::{Deserialize, Serialize};

use super::stilde::{Increments, UNITARITY_WARN};
use super::{check_finite, renormalize_unitary, require_heun, segments};
use crate::error::{Error, Result};
use crate::matrix::{hermitize_in_place, mul_into, ComplexMatrix, HermitianMatrix, SymmetryClass, UnitaryMatrix, C64};
use crate::params::{ModelParams, SdeConfig};
use crate::rng::RngStream;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledState {
    pub u_l: UnitaryMatrix,
    pub u_r: UnitaryMatrix,
    /// Time units.
    pub q: HermitianMatrix,
    /// Largest `‖U_R − U_Lᵀ‖_F` seen at any step (β=1 only, else 0).
    pub max_transpose_residual: f64,
    /// Largest unitarity residual found before a renormalization.
    pub max_unitarity_residual: f64,
    pub unitarity_warnings: usize,
}

struct Work {
    p1: ComplexMatrix,
    p2: ComplexMatrix,
    t: ComplexMatrix,
    w: ComplexMatrix,
    wu: ComplexMatrix,
}

struct Deriv {
    ul: ComplexMatrix,
    ur: ComplexMatrix,
    q: ComplexMatrix,
}

impl Deriv {
    fn new(n: usize) -> Self {
        Self { ul: ComplexMatrix::zeros(n), ur: ComplexMatrix::zeros(n), q: ComplexMatrix::zeros(n) }
    }
}

fn times_minus_i(m: &mut ComplexMatrix) {
    for z in m.as_mut_slice() {
        *z = C64::new(z.im, -z.re);
    }
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            p1: ComplexMatrix::zeros(n),
            p2: ComplexMatrix::zeros(n),
            t: ComplexMatrix::zeros(n),
            w: ComplexMatrix::zeros(n),
            wu: ComplexMatrix::zeros(n),
        }
    }

    /// Noise terms of all three equations at `(ul, ur, q)`.
    fn eval(&mut self, ul: &ComplexMatrix, ur: &ComplexMatrix, q: &ComplexMatrix, inc: &Increments, d: &mut Deriv) {
        let n = ul.dim();
        mul_into(ur, &inc.db1, &mut self.t);
        mul_into(&self.t, ul, &mut self.p1);
        mul_into(ur, &inc.db2, &mut self.t);
        mul_into(&self.t, ul, &mut self.p2);
        let (p1, p2) = (self.p1.as_slice(), self.p2.as_slice());
        let (w, wu) = (self.w.as_mut_slice(), self.wu.as_mut_slice());
        let mhalf_i = C64::new(0.0, -0.5);
        for i in 0..n {
            for j in 0..n {
                let (a, ad) = (p1[i * n + j], p1[j * n + i].conj());
                let (b, bd) = (p2[i * n + j], p2[j * n + i].conj());
                w[i * n + j] = mhalf_i * (a - ad) + 0.5 * (b + bd);
                wu[i * n + j] = 0.5 * (a + ad) + mhalf_i * (bd - b);
            }
        }
        let r2 = C64::new(std::f64::consts::SQRT_2, 0.0);
        mul_into(ul, &self.wu, &mut d.ul);
        mul_into(&inc.db, ul, &mut self.t);
        d.ul.axpy(r2, &self.t);
        times_minus_i(&mut d.ul);
        mul_into(&self.wu, ur, &mut d.ur);
        mul_into(ur, &inc.db, &mut self.t);
        d.ur.axpy(r2, &self.t);
        times_minus_i(&mut d.ur);
        mul_into(q, &self.w, &mut self.t);
        let (t, dq) = (self.t.as_slice(), d.q.as_mut_slice());
        for i in 0..n {
            for j in 0..n {
                dq[i * n + j] = t[i * n + j] + t[j * n + i].conj();
            }
        }
    }
}

/// Starts from `U_L = U_R = i·1`.
pub fn integrate_coupled(params: &ModelParams, length: f64, cfg: &SdeConfig, stream: RngStream) -> Result<CoupledState> {
    let u0 = UnitaryMatrix::new_unchecked(ComplexMatrix::scalar(params.n_channels, C64::new(0.0, 1.0)));
    integrate_coupled_from(params, length, cfg, stream, &u0)
}

/// Starts from `U_L = u_l0`, `U_R = −u_l0†`, so that `U_L U_R = −1`.
/// For β=1 the splitting must also satisfy `U_R = U_Lᵀ`.
pub fn integrate_coupled_from(
    params: &ModelParams,
    length: f64,
    cfg: &SdeConfig,
    stream: RngStream,
    u_l0: &UnitaryMatrix,
) -> Result<CoupledState> {
    params.validate()?;
    cfg.validate()?;
    require_heun(cfg, "the coupled (U_L, U_R, Q) system")?;
    let n = params.n_channels;
    if u_l0.dim() != n {
        return Err(Error::InvalidParameter("initial U_L has the wrong dimension".into()));
    }
    let beta1 = params.beta == SymmetryClass::Orthogonal;
    let mut ul = u_l0.as_matrix().clone();
    let mut ur = ul.adjoint().scale_real(-1.0);
    if beta1 && ur.distance(&ul.transpose()) > 1e-12 {
        return Err(Error::InvalidParameter("for beta = 1 the initial splitting must satisfy U_R = U_L^T".into()));
    }
    let mut q = ComplexMatrix::zeros(n);
    let (count, h) = segments(cfg, &[params.length_over_xi(length)])?[0];
    let mut sampler = stream.sampler();
    let mut inc = Increments::new(n);
    let mut work = Work::new(n);
    let mut d0 = Deriv::new(n);
    let mut d1 = Deriv::new(n);
    let (mut ulp, mut urp, mut qp) = (ComplexMatrix::zeros(n), ComplexMatrix::zeros(n), ComplexMatrix::zeros(n));
    let mut max_tr: f64 = 0.0;
    let mut max_un: f64 = 0.0;
    let mut warnings = 0;
    let half = C64::new(0.5, 0.0);
    let one = C64::new(1.0, 0.0);
    for step in 1..=count {
        inc.fill(n, params.beta, h, !cfg.disable_noise, &mut sampler);
        work.eval(&ul, &ur, &q, &inc, &mut d0);
        ulp.copy_from(&ul);
        ulp.axpy(one, &d0.ul);
        urp.copy_from(&ur);
        urp.axpy(one, &d0.ur);
        qp.copy_from(&q);
        qp.axpy(one, &d0.q);
        qp.add_diag(C64::new(2.0 * h, 0.0));
        work.eval(&ulp, &urp, &qp, &inc, &mut d1);
        ul.axpy(half, &d0.ul);
        ul.axpy(half, &d1.ul);
        ur.axpy(half, &d0.ur);
        ur.axpy(half, &d1.ur);
        q.axpy(half, &d0.q);
        q.axpy(half, &d1.q);
        q.add_diag(C64::new(2.0 * h, 0.0));
        hermitize_in_place(&mut q);
        if beta1 {
            max_tr = max_tr.max(ur.distance(&ul.transpose()));
        }
        if step % cfg.renorm_every == 0 || step == count {
            check_finite(&ul, "coupled", step)?;
            check_finite(&ur, "coupled", step)?;
            check_finite(&q, "coupled", step)?;
            let r = renormalize_unitary(&mut ul)?.max(renormalize_unitary(&mut ur)?);
            max_un = max_un.max(r);
            if r > UNITARITY_WARN {
                warnings += 1;
                log::warn!("U_L/U_R unitarity drift {r:.2e} at step {step}");
            }
        }
    }
    Ok(CoupledState {
        u_l: UnitaryMatrix::new_unchecked(ul),
        u_r: UnitaryMatrix::new_unchecked(ur),
        q: HermitianMatrix::from_matrix(q.scale_real(params.tau_xi())),
        max_transpose_residual: max_tr,
        max_unitarity_residual: max_un,
        unitarity_warnings: warnings,
    })
}
