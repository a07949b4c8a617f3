//! Direct equation for `q = Q̃/τ_ξ`:
//! Stratonovich `dq = (2 − 2μq) dx + q dB + dB q`,
//! Itô `dq = (2 + (β/2)(tr q − N q)) dx + q dB + dB q`.

use super::{check_finite, segments};
use crate::error::Result;
use crate::matrix::{hermitize_in_place, mul_into, ComplexMatrix, HermitianMatrix, C64};
use crate::noise::fill_increment;
use crate::params::{ModelParams, Scheme, SdeConfig};
use crate::rng::RngStream;

pub fn integrate_qtilde(params: &ModelParams, length: f64, cfg: &SdeConfig, stream: RngStream) -> Result<HermitianMatrix> {
    Ok(qtilde_snapshots(params, &[length], cfg, stream)?.pop().unwrap())
}

/// `X + X†` with `X = q·dB`; equals `q dB + dB q` for Hermitian `q`, `dB`.
fn noise_term(q: &ComplexMatrix, db: &ComplexMatrix, x: &mut ComplexMatrix, out: &mut ComplexMatrix) {
    mul_into(q, db, x);
    let n = q.dim();
    let (xs, o) = (x.as_slice(), out.as_mut_slice());
    for i in 0..n {
        for j in 0..n {
            o[i * n + j] = xs[i * n + j] + xs[j * n + i].conj();
        }
    }
}

pub fn qtilde_snapshots(params: &ModelParams, lengths: &[f64], cfg: &SdeConfig, stream: RngStream) -> Result<Vec<HermitianMatrix>> {
    params.validate()?;
    cfg.validate()?;
    let n = params.n_channels;
    let nf = n as f64;
    let beta = params.beta;
    let hb = 0.5 * params.beta_f64();
    let mu = params.mu();
    let xs: Vec<f64> = lengths.iter().map(|&l| params.length_over_xi(l)).collect();
    let segs = segments(cfg, &xs)?;
    let mut s = stream.sampler();
    let mut q = ComplexMatrix::zeros(n);
    let mut qp = ComplexMatrix::zeros(n);
    let mut db = ComplexMatrix::zeros(n);
    let mut x = ComplexMatrix::zeros(n);
    let mut g = ComplexMatrix::zeros(n);
    let mut gp = ComplexMatrix::zeros(n);
    let mut out = Vec::with_capacity(lengths.len());
    let mut step = 0;
    for (count, h) in segs {
        for _ in 0..count {
            step += 1;
            if cfg.disable_noise {
                db.fill(C64::new(0.0, 0.0));
            } else {
                fill_increment(n, beta, h, &mut s, &mut db);
            }
            noise_term(&q, &db, &mut x, &mut g);
            match cfg.scheme {
                Scheme::StratonovichHeun => {
                    // predictor q* = q + f(q) h + G(q)
                    qp.copy_from(&q);
                    qp.scale_mut(1.0 - 2.0 * mu * h);
                    qp.add_diag(C64::new(2.0 * h, 0.0));
                    qp += &g;
                    noise_term(&qp, &db, &mut x, &mut gp);
                    // q ← q + ½(f(q) + f(q*)) h + ½(G(q) + G(q*))
                    let qs = q.as_mut_slice();
                    let (qps, gs, gps) = (qp.as_slice(), g.as_slice(), gp.as_slice());
                    for i in 0..n * n {
                        qs[i] += -mu * h * (qs[i] + qps[i]) + 0.5 * (gs[i] + gps[i]);
                    }
                    q.add_diag(C64::new(2.0 * h, 0.0));
                }
                Scheme::ItoEuler => {
                    let tr = q.trace().re;
                    q.scale_mut(1.0 - hb * nf * h);
                    q.add_diag(C64::new((2.0 + hb * tr) * h, 0.0));
                    q += &g;
                }
            }
            hermitize_in_place(&mut q);
            if step % cfg.renorm_every == 0 {
                check_finite(&q, "qtilde", step)?;
            }
        }
        check_finite(&q, "qtilde", step)?;
        out.push(HermitianMatrix::from_matrix(q.scale_real(params.tau_xi())));
    }
    Ok(out)
}
