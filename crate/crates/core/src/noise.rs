//! Isotropic Hermitian white-noise increments.
//!
//! `E[ΔB_ab ΔB*_cd] = C_{ab,cd} dx` with
//! `C_{ab,cd} = (β/2) δ_ac δ_bd + (1 − β/2) δ_ad δ_bc`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{mul_into, ComplexMatrix, HermitianMatrix, SymmetryClass, C64};
use crate::rng::{RngStream, Sampler};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub dim: usize,
    pub beta: SymmetryClass,
    pub dx: f64,
}

impl NoiseSpec {
    pub fn new(dim: usize, beta: SymmetryClass, dx: f64) -> Result<Self> {
        let s = Self { dim, beta, dx };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > crate::matrix::MAX_DIM {
            return Err(Error::InvalidParameter(format!("noise dimension {} out of range", self.dim)));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise step dx = {} must be positive", self.dx)));
        }
        Ok(())
    }

    /// `μ = Σ_b C_{ab,ab} = 1 + (β/2)(N − 1)`.
    pub fn mu(&self) -> f64 {
        1.0 + 0.5 * self.beta.beta_f64() * (self.dim as f64 - 1.0)
    }
}

pub fn correlator(beta: SymmetryClass, a: usize, b: usize, c: usize, d: usize) -> f64 {
    let hb = 0.5 * beta.beta_f64();
    let k = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
    hb * k(a, c) * k(b, d) + (1.0 - hb) * k(a, d) * k(b, c)
}

/// Writes one increment into `out`, which must be `dim × dim`.
pub fn fill_increment(n: usize, beta: SymmetryClass, dx: f64, s: &mut Sampler, out: &mut ComplexMatrix) {
    let sd_diag = dx.sqrt();
    let sd_off = (0.5 * dx).sqrt();
    let m = out.as_mut_slice();
    match beta {
        SymmetryClass::Orthogonal => {
            for i in 0..n {
                m[i * n + i] = C64::new(sd_diag * s.normal(), 0.0);
                for j in i + 1..n {
                    let v = C64::new(sd_off * s.normal(), 0.0);
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
        }
        SymmetryClass::Unitary => {
            for i in 0..n {
                m[i * n + i] = C64::new(sd_diag * s.normal(), 0.0);
                for j in i + 1..n {
                    let v = C64::new(sd_off * s.normal(), sd_off * s.normal());
                    m[i * n + j] = v;
                    m[j * n + i] = v.conj();
                }
            }
        }
    }
}

pub fn sample_increment(spec: &NoiseSpec, s: &mut Sampler) -> HermitianMatrix {
    let mut m = ComplexMatrix::zeros(spec.dim);
    fill_increment(spec.dim, spec.beta, spec.dx, s, &mut m);
    HermitianMatrix::from_matrix(m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelatorEntry {
    pub index: [usize; 4],
    pub expected: f64,
    pub mean_re: f64,
    pub mean_im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

impl CorrelatorEntry {
    /// Largest deviation in units of standard error; exact matches count as zero.
    pub fn z_score(&self) -> f64 {
        let z = |dev: f64, se: f64| {
            if dev.abs() <= 1e-12 {
                0.0
            } else if se > 0.0 {
                dev.abs() / se
            } else {
                f64::INFINITY
            }
        };
        z(self.mean_re - self.expected, self.stderr_re).max(z(self.mean_im, self.stderr_im))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelatorReport {
    pub spec: NoiseSpec,
    pub n_samples: usize,
    pub entries: Vec<CorrelatorEntry>,
    /// Entries off by more than `flag_sigma` standard errors.
    pub flagged: Vec<[usize; 4]>,
    pub flag_sigma: f64,
}

impl CorrelatorReport {
    pub fn entry(&self, a: usize, b: usize, c: usize, d: usize) -> &CorrelatorEntry {
        let n = self.spec.dim;
        &self.entries[((a * n + b) * n + c) * n + d]
    }

    pub fn max_z(&self) -> f64 {
        self.entries.iter().map(CorrelatorEntry::z_score).fold(0.0, f64::max)
    }
}

/// Empirical `C_{ab,cd}` over all index quadruples.
pub fn verify_correlator(spec: &NoiseSpec, n_samples: usize, stream: RngStream) -> Result<CorrelatorReport> {
    spec.validate()?;
    let n = spec.dim;
    let n2 = n * n;
    let mut s = stream.sampler();
    let mut inc = ComplexMatrix::zeros(n);
    let mut sum = vec![C64::new(0.0, 0.0); n2 * n2];
    let mut sum_sq = vec![(0.0f64, 0.0f64); n2 * n2];
    for _ in 0..n_samples {
        fill_increment(n, spec.beta, spec.dx, &mut s, &mut inc);
        let v = inc.as_slice();
        for p in 0..n2 {
            let x = v[p] / spec.dx;
            for q in 0..n2 {
                let prod = x * v[q].conj();
                sum[p * n2 + q] += prod;
                let e = &mut sum_sq[p * n2 + q];
                e.0 += prod.re * prod.re;
                e.1 += prod.im * prod.im;
            }
        }
    }
    let m = n_samples as f64;
    let se = |s2: f64, mean: f64| ((s2 / m - mean * mean).max(0.0) / (m - 1.0)).sqrt();
    let mut entries = Vec::with_capacity(n2 * n2);
    let mut flagged = Vec::new();
    let flag_sigma = 4.0;
    for p in 0..n2 {
        for q in 0..n2 {
            let (a, b, c, d) = (p / n, p % n, q / n, q % n);
            let mean = sum[p * n2 + q] / m;
            let (s2re, s2im) = sum_sq[p * n2 + q];
            let entry = CorrelatorEntry {
                index: [a, b, c, d],
                expected: correlator(spec.beta, a, b, c, d),
                mean_re: mean.re,
                mean_im: mean.im,
                stderr_re: se(s2re, mean.re),
                stderr_im: se(s2im, mean.im),
            };
            if entry.z_score() > flag_sigma {
                flagged.push(entry.index);
            }
            entries.push(entry);
        }
    }
    Ok(CorrelatorReport { spec: *spec, n_samples, entries, flagged, flag_sigma })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    /// Empirical `E[ΔB O ΔB] / dx`.
    pub mean: ComplexMatrix,
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
    /// `(β/2) tr(O) 1 + (1 − β/2) Oᵀ`.
    pub expected: ComplexMatrix,
}

impl SandwichReport {
    pub fn max_z(&self) -> f64 {
        let n = self.mean.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n * n {
            let d = self.mean.as_slice()[i] - self.expected.as_slice()[i];
            for (dev, se) in [(d.re, self.stderr_re[i]), (d.im, self.stderr_im[i])] {
                if dev.abs() > 1e-12 {
                    worst = worst.max(if se > 0.0 { dev.abs() / se } else { f64::INFINITY });
                }
            }
        }
        worst
    }
}

pub fn sandwich_expected(beta: SymmetryClass, o: &ComplexMatrix) -> ComplexMatrix {
    let hb = 0.5 * beta.beta_f64();
    let mut e = o.transpose().scale_real(1.0 - hb);
    e.add_diag(o.trace() * hb);
    e
}

pub fn sandwich_check(spec: &NoiseSpec, o: &ComplexMatrix, n_samples: usize, stream: RngStream) -> Result<SandwichReport> {
    spec.validate()?;
    if o.dim() != spec.dim {
        return Err(Error::InvalidParameter("sandwich operand has the wrong dimension".into()));
    }
    let n = spec.dim;
    let mut s = stream.sampler();
    let mut inc = ComplexMatrix::zeros(n);
    let mut t = ComplexMatrix::zeros(n);
    let mut r = ComplexMatrix::zeros(n);
    let mut sum = ComplexMatrix::zeros(n);
    let mut sq = vec![(0.0f64, 0.0f64); n * n];
    for _ in 0..n_samples {
        fill_increment(n, spec.beta, spec.dx, &mut s, &mut inc);
        mul_into(&inc, o, &mut t);
        mul_into(&t, &inc, &mut r);
        r.scale_mut(1.0 / spec.dx);
        sum += &r;
        for (acc, z) in sq.iter_mut().zip(r.as_slice()) {
            acc.0 += z.re * z.re;
            acc.1 += z.im * z.im;
        }
    }
    let m = n_samples as f64;
    let mean = sum.scale_real(1.0 / m);
    let mut stderr_re = Vec::with_capacity(n * n);
    let mut stderr_im = Vec::with_capacity(n * n);
    for (z, (s2re, s2im)) in mean.as_slice().iter().zip(&sq) {
        stderr_re.push(((s2re / m - z.re * z.re).max(0.0) / (m - 1.0)).sqrt());
        stderr_im.push(((s2im / m - z.im * z.im).max(0.0) / (m - 1.0)).sqrt());
    }
    Ok(SandwichReport { mean, stderr_re, stderr_im, expected: sandwich_expected(spec.beta, o) })
}
