//! Exact multichannel scattering off a piecewise-constant random potential.
//!
//! `−Ψ″ + VΨ = εΨ` on `[0, L]` with `Ψ(0) = 0`, `Ψ′(0) = 1`. Each cell is
//! propagated exactly in the eigenbasis of its potential, so the only
//! approximations are the disorder discretization and the energy difference
//! used for `Q`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    adjoint_mul_into, eigh, hermitize_in_place, mul_into, ComplexMatrix, HermitianMatrix, SymmetryClass, UnitaryMatrix, C64,
};
use crate::noise::fill_increment;
use crate::params::ModelParams;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialRealization {
    pub n_channels: usize,
    pub beta: SymmetryClass,
    /// Cell width (length units).
    pub h: f64,
    pub length: f64,
    pub seed: Option<RngStream>,
    pub cells: Vec<HermitianMatrix>,
}

/// Largest admissible cell width, `min(0.05/k, ξ/10⁴)`.
pub fn max_cell_width(params: &ModelParams) -> f64 {
    (0.05 / params.k).min(params.xi() / 1e4)
}

/// Independent cells with entry covariance `σ C_{ab,cd} / h`.
pub fn build_potential(params: &ModelParams, h: f64, length: f64, stream: RngStream) -> Result<PotentialRealization> {
    params.validate()?;
    let max = max_cell_width(params);
    if !(h > 0.0) || h > max * (1.0 + 1e-12) {
        return Err(Error::CoarseGrid { h, max });
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("length {length} must be non-negative")));
    }
    let n = params.n_channels;
    let n_cells = (length / h).round() as usize;
    if (n_cells as f64 * h - length).abs() > 1e-9 * length.max(h) {
        return Err(Error::InvalidParameter(format!("length {length} is not a multiple of the cell width {h}")));
    }
    let mut s = stream.sampler();
    let mut m = ComplexMatrix::zeros(n);
    let cells = (0..n_cells)
        .map(|_| {
            fill_increment(n, params.beta, params.sigma / h, &mut s, &mut m);
            HermitianMatrix::from_matrix(m.clone())
        })
        .collect();
    Ok(PotentialRealization { n_channels: n, beta: params.beta, h, length, seed: Some(stream), cells })
}

impl PotentialRealization {
    pub fn zero(n_channels: usize, beta: SymmetryClass, h: f64, n_cells: usize) -> Self {
        Self {
            n_channels,
            beta,
            h,
            length: h * n_cells as f64,
            seed: None,
            cells: vec![HermitianMatrix::zeros(n_channels); n_cells],
        }
    }

    /// First `n_cells` cells.
    pub fn truncated(&self, n_cells: usize) -> Self {
        let cells = self.cells[..n_cells.min(self.cells.len())].to_vec();
        Self { length: self.h * cells.len() as f64, cells, seed: self.seed, ..*self }
    }

    fn header(&self) -> String {
        let (seed, stream) = self.seed.map(|s| (s.master_seed.to_string(), s.stream_id.to_string())).unwrap_or_default();
        format!("{},{},{:e},{:e},{},{},{}", self.n_channels, self.beta, self.h, self.length, seed, stream, self.cells.len())
    }

    /// Text format: a header line `N,beta,h,L,seed,stream,n_cells`, then one
    /// line per cell with the row-major entries as `re,im` pairs.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,beta,h,L,seed,stream,n_cells")?;
        writeln!(w, "{}", self.header())?;
        for c in &self.cells {
            let row: Vec<String> = c.as_matrix().as_slice().iter().flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)]).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || lines.next().ok_or_else(|| Error::Parse("truncated potential file".into())).and_then(|l| Ok(l?));
        if next()?.trim() != "N,beta,h,L,seed,stream,n_cells" {
            return Err(Error::Parse("missing potential header".into()));
        }
        let head = next()?;
        let f: Vec<&str> = head.trim().split(',').collect();
        if f.len() != 7 {
            return Err(Error::Parse("malformed potential header".into()));
        }
        let p = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))) };
        let u = |s: &str| -> Result<u64> { s.parse::<u64>().map_err(|e| Error::Parse(format!("{s}: {e}"))) };
        let n = u(f[0])? as usize;
        let beta = SymmetryClass::from_beta(u(f[1])? as u8)?;
        let (h, length) = (p(f[2])?, p(f[3])?);
        let seed = if f[4].is_empty() { None } else { Some(RngStream::new(u(f[4])?, u(f[5])?)) };
        let n_cells = u(f[6])? as usize;
        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let line = next()?;
            let vals = line.trim().split(',').map(p).collect::<Result<Vec<f64>>>()?;
            if vals.len() != 2 * n * n {
                return Err(Error::Parse("cell row has the wrong number of entries".into()));
            }
            let entries: Vec<C64> = vals.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            cells.push(HermitianMatrix::from_matrix(ComplexMatrix::from_row_slice(n, &entries)?));
        }
        Ok(Self { n_channels: n, beta, h, length, seed, cells })
    }

    const MAGIC: &'static [u8; 8] = b"WSPOT001";

    /// Little-endian binary: magic, `N: u64`, `beta: u8`, `h: f64`, `L: f64`,
    /// seed flag `u8` with `seed, stream: u64`, `n_cells: u64`, then `f64` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.n_channels as u64).to_le_bytes())?;
        w.write_all(&[self.beta.beta()])?;
        w.write_all(&self.h.to_le_bytes())?;
        w.write_all(&self.length.to_le_bytes())?;
        let s = self.seed.unwrap_or(RngStream::new(0, 0));
        w.write_all(&[self.seed.is_some() as u8])?;
        w.write_all(&s.master_seed.to_le_bytes())?;
        w.write_all(&s.stream_id.to_le_bytes())?;
        w.write_all(&(self.cells.len() as u64).to_le_bytes())?;
        for c in &self.cells {
            for z in c.as_matrix().as_slice() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Parse("not a potential file".into()));
        }
        let mut b8 = [0u8; 8];
        let mut b1 = [0u8; 1];
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = u64_(&mut r)? as usize;
        r.read_exact(&mut b1)?;
        let beta = SymmetryClass::from_beta(b1[0])?;
        let h = f64::from_bits(u64_(&mut r)?);
        let length = f64::from_bits(u64_(&mut r)?);
        r.read_exact(&mut b1)?;
        let has_seed = b1[0] != 0;
        let (ms, sid) = (u64_(&mut r)?, u64_(&mut r)?);
        let n_cells = u64_(&mut r)? as usize;
        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let mut entries = Vec::with_capacity(n * n);
            for _ in 0..n * n {
                let re = f64::from_bits(u64_(&mut r)?);
                let im = f64::from_bits(u64_(&mut r)?);
                entries.push(C64::new(re, im));
            }
            cells.push(HermitianMatrix::from_matrix(ComplexMatrix::from_row_slice(n, &entries)?));
        }
        Ok(Self { n_channels: n, beta, h, length, seed: has_seed.then(|| RngStream::new(ms, sid)), cells })
    }
}

/// Cell potentials diagonalized once and reused across energies.
pub struct PreparedPotential {
    n: usize,
    h: f64,
    cells: Vec<(Vec<f64>, ComplexMatrix)>,
}

impl PreparedPotential {
    pub fn new(pot: &PotentialRealization) -> Result<Self> {
        let cells = pot
            .cells
            .iter()
            .map(|v| eigh_small(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n: pot.n_channels, h: pot.h, cells })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Closed form for `N ≤ 2`, library solver otherwise.
fn eigh_small(v: &HermitianMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    match v.dim() {
        1 => Ok((vec![v[(0, 0)].re], ComplexMatrix::identity(1))),
        2 => {
            let (a, d, b) = (v[(0, 0)].re, v[(1, 1)].re, v[(0, 1)]);
            let mean = 0.5 * (a + d);
            let half = 0.5 * (a - d);
            let r = (half * half + b.norm_sqr()).sqrt();
            if b.norm() <= 1e-300 {
                let (lo, hi, o) = if a <= d {
                    (a, d, ComplexMatrix::identity(2))
                } else {
                    (d, a, ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]))
                };
                return Ok((vec![lo, hi], o));
            }
            // For λ: (a − λ) x + b y = 0, with the better-conditioned branch.
            let vec_for = |lam: f64| -> (C64, C64) {
                let (x1, y1) = (b, C64::new(lam - a, 0.0));
                let (x2, y2) = (C64::new(lam - d, 0.0), b.conj());
                let (x, y) = if x1.norm_sqr() + y1.norm_sqr() >= x2.norm_sqr() + y2.norm_sqr() { (x1, y1) } else { (x2, y2) };
                let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
                (x / nrm, y / nrm)
            };
            let (l1, l2) = (mean - r, mean + r);
            let (x1, y1) = vec_for(l1);
            let (x2, y2) = vec_for(l2);
            Ok((vec![l1, l2], ComplexMatrix::from_row_slice(2, &[x1, x2, y1, y2])?))
        }
        _ => eigh(v),
    }
}

/// `cos(κh)` and `sin(κh)/κ` (hyperbolic for `κ² < 0`) as entire functions of `θ = κ²h²`.
fn cell_functions(kappa2: f64, h: f64) -> (f64, f64) {
    let theta = kappa2 * h * h;
    if theta.abs() < 1e-2 {
        let c = 1.0 - theta / 2.0 * (1.0 - theta / 12.0 * (1.0 - theta / 30.0 * (1.0 - theta / 56.0)));
        let s = h * (1.0 - theta / 6.0 * (1.0 - theta / 20.0 * (1.0 - theta / 42.0 * (1.0 - theta / 72.0))));
        (c, s)
    } else if kappa2 > 0.0 {
        let k = kappa2.sqrt();
        let (sn, cs) = (k * h).sin_cos();
        (cs, sn / k)
    } else {
        let k = (-kappa2).sqrt();
        ((k * h).cosh(), (k * h).sinh() / k)
    }
}

/// `∫₀ʰ c²`, `∫₀ʰ c s̃`, `∫₀ʰ s̃²` for the cell functions above.
fn cell_integrals(kappa2: f64, h: f64, c: f64, s: f64) -> (f64, f64, f64) {
    let theta = kappa2 * h * h;
    let icc = 0.5 * h + 0.5 * c * s;
    let ics = 0.5 * s * s;
    let iss = if theta.abs() < 1e-2 {
        let h3 = h * h * h;
        h3 * (1.0 / 3.0 - theta / 15.0 + 2.0 * theta * theta / 315.0 - theta * theta * theta / 2835.0)
    } else {
        (h - c * s) / (2.0 * kappa2)
    };
    (icc, ics, iss)
}

/// Solution at `x = L`, with the frame divided by `exp(log_scale)`.
#[derive(Clone, Debug)]
pub struct TransferSolution {
    pub psi: ComplexMatrix,
    pub dpsi: ComplexMatrix,
    pub log_scale: f64,
    /// `∫₀ᴸ Ψ†Ψ dx` in the same scaling (`exp(−2 log_scale)`), if requested.
    pub gram: Option<HermitianMatrix>,
}

const RESCALE_AT: f64 = 1e100;

pub fn transfer_prepared(pp: &PreparedPotential, energy: f64, with_gram: bool) -> Result<TransferSolution> {
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter(format!("energy {energy} must be positive")));
    }
    let n = pp.n;
    let h = pp.h;
    let mut y = ComplexMatrix::zeros(n);
    let mut yp = ComplexMatrix::identity(n);
    let mut yh = ComplexMatrix::zeros(n);
    let mut yph = ComplexMatrix::zeros(n);
    let mut gram = ComplexMatrix::zeros(n);
    let mut log_scale = 0.0;
    for (d, o) in &pp.cells {
        adjoint_mul_into(o, &y, &mut yh);
        adjoint_mul_into(o, &yp, &mut yph);
        for m in 0..n {
            let kappa2 = energy - d[m];
            let (c, s) = cell_functions(kappa2, h);
            if with_gram {
                let (icc, ics, iss) = cell_integrals(kappa2, h, c, s);
                let a = &yh.as_slice()[m * n..(m + 1) * n];
                let b = &yph.as_slice()[m * n..(m + 1) * n];
                let g = gram.as_mut_slice();
                for i in 0..n {
                    let (ai, bi) = (a[i].conj(), b[i].conj());
                    for j in 0..n {
                        g[i * n + j] += icc * ai * a[j] + ics * (ai * b[j] + bi * a[j]) + iss * bi * b[j];
                    }
                }
            }
            let row = m * n..(m + 1) * n;
            let (ys, yps) = (&mut yh.as_mut_slice()[row.clone()], &mut yph.as_mut_slice()[row]);
            for (u, v) in ys.iter_mut().zip(yps.iter_mut()) {
                let (u0, v0) = (*u, *v);
                *u = c * u0 + s * v0;
                *v = -kappa2 * s * u0 + c * v0;
            }
        }
        mul_into(o, &yh, &mut y);
        mul_into(o, &yph, &mut yp);
        let big = y.max_abs().max(yp.max_abs());
        if big > RESCALE_AT {
            let inv = 1.0 / big;
            y.scale_mut(inv);
            yp.scale_mut(inv);
            gram.scale_mut(inv * inv);
            log_scale += big.ln();
        }
    }
    if !(y.is_finite() && yp.is_finite()) {
        return Err(Error::Overflow { norm: f64::INFINITY });
    }
    let gram = with_gram.then(|| HermitianMatrix::from_matrix(gram));
    Ok(TransferSolution { psi: y, dpsi: yp, log_scale, gram })
}

/// `(Ψ(L), Ψ′(L))` up to the common factor `exp(log_scale)`.
pub fn transfer_solve(pot: &PotentialRealization, energy: f64) -> Result<TransferSolution> {
    transfer_prepared(&PreparedPotential::new(pot)?, energy, false)
}

/// `(kΨ − iΨ′)` and `(kΨ + iΨ′)` at `x = L`.
fn wave_combinations(sol: &TransferSolution, energy: f64) -> (ComplexMatrix, ComplexMatrix) {
    let k = energy.sqrt();
    let i = C64::new(0.0, 1.0);
    let mut minus = sol.psi.scale_real(k);
    minus.axpy(-i, &sol.dpsi);
    let mut plus = sol.psi.scale_real(k);
    plus.axpy(i, &sol.dpsi);
    (minus, plus)
}

/// `S = (kΨ − iΨ′)(kΨ + iΨ′)⁻¹`, i.e. `(k − iZ)(k + iZ)⁻¹` with `Z = Ψ′Ψ⁻¹`,
/// without inverting `Ψ(L)`.
fn smatrix_from(sol: &TransferSolution, energy: f64) -> Result<ComplexMatrix> {
    let (minus, plus) = wave_combinations(sol, energy);
    let inv = plus.inverse()?;
    Ok(&minus * &inv)
}

pub fn smatrix_prepared(pp: &PreparedPotential, energy: f64) -> Result<UnitaryMatrix> {
    let s = smatrix_from(&transfer_prepared(pp, energy, false)?, energy)?;
    let r = s.unitarity_residual();
    if r > 1e-8 {
        return Err(Error::Singular(format!("scattering matrix not unitary (residual {r:.2e})")));
    }
    Ok(UnitaryMatrix::new_unchecked(s))
}

pub fn smatrix(pot: &PotentialRealization, energy: f64) -> Result<UnitaryMatrix> {
    smatrix_prepared(&PreparedPotential::new(pot)?, energy)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WignerSmith {
    /// Central difference at `δε`, Hermitized.
    pub q: HermitianMatrix,
    /// Richardson combination of the `δε` and `δε/2` estimates.
    pub q_richardson: HermitianMatrix,
    /// `‖Q − Q†‖_F` before Hermitization.
    pub hermiticity_residual: f64,
    /// `‖Q(δε/2) − Q(δε)‖_F / 3`.
    pub richardson_error: f64,
}

fn central_q(pp: &PreparedPotential, s0: &ComplexMatrix, energy: f64, delta: f64) -> Result<(ComplexMatrix, f64)> {
    let sp = smatrix_prepared(pp, energy + delta)?.into_matrix();
    let sm = smatrix_prepared(pp, energy - delta)?.into_matrix();
    let diff = &sp - &sm;
    let mut q = ComplexMatrix::zeros(s0.dim());
    adjoint_mul_into(s0, &diff, &mut q);
    q = q.scale(C64::new(0.0, -1.0 / (2.0 * delta)));
    // The S(ε ± δε) difference loses about log10(1/‖ΔS‖) digits.
    let rel_change = diff.frobenius_norm() / (s0.dim() as f64).sqrt();
    Ok((q, rel_change))
}

pub fn wigner_smith_prepared(pp: &PreparedPotential, energy: f64, delta: f64) -> Result<WignerSmith> {
    let ratio = delta / energy;
    if !(1e-8 * (1.0 - 1e-9)..=1e-4 * (1.0 + 1e-9)).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("delta/energy = {ratio:.2e} outside [1e-8, 1e-4]")));
    }
    let s0 = smatrix_prepared(pp, energy)?.into_matrix();
    let (q1, change) = central_q(pp, &s0, energy, delta)?;
    if change < 1e-10 {
        return Err(Error::Roundoff(format!(
            "S changes by only {change:.1e} over 2*delta; increase delta above {delta:.1e}"
        )));
    }
    let (q2, _) = central_q(pp, &s0, energy, 0.5 * delta)?;
    let herm = q1.hermiticity_residual();
    let mut rich = q2.scale_real(4.0 / 3.0);
    rich.axpy(C64::new(-1.0 / 3.0, 0.0), &q1);
    hermitize_in_place(&mut rich);
    let err = q2.distance(&q1) / 3.0;
    Ok(WignerSmith {
        q: HermitianMatrix::from_matrix(q1),
        q_richardson: HermitianMatrix::from_matrix(rich),
        hermiticity_residual: herm,
        richardson_error: err,
    })
}

pub fn wigner_smith(pot: &PotentialRealization, energy: f64, delta: f64) -> Result<WignerSmith> {
    wigner_smith_prepared(&PreparedPotential::new(pot)?, energy, delta)
}

/// Only `Q` by a single central difference; the ensemble fast path.
pub fn wigner_smith_central(pp: &PreparedPotential, energy: f64, delta: f64) -> Result<HermitianMatrix> {
    let s0 = smatrix_prepared(pp, energy)?.into_matrix();
    Ok(HermitianMatrix::from_matrix(central_q(pp, &s0, energy, delta)?.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KreinFriedel {
    /// `2π ∫₀ᴸ Ψ†Ψ` with the scattering-state normalization.
    pub lhs: ComplexMatrix,
    /// `Q + (S − S†)/(4iε)`.
    pub rhs: ComplexMatrix,
    /// `‖lhs − rhs‖_F / ‖rhs‖_F`.
    pub residual: f64,
    /// `|tr lhs − tr rhs| / |tr rhs|`.
    pub trace_residual: f64,
}

/// Checks `∫₀ᴸ Ψ†Ψ dx = (1/2π)[Q + (S − S†)/(4iε)]`, where the scattering state
/// is `Ψ = Y C` with `C = (2k/√(4πk)) (kY + iY′)⁻¹` and `Q` is the plain central
/// difference at `δε`.
pub fn krein_friedel_residual(pot: &PotentialRealization, energy: f64, delta: f64) -> Result<KreinFriedel> {
    let pp = PreparedPotential::new(pot)?;
    krein_friedel_prepared(&pp, energy, delta)
}

pub fn krein_friedel_prepared(pp: &PreparedPotential, energy: f64, delta: f64) -> Result<KreinFriedel> {
    let sol = transfer_prepared(pp, energy, true)?;
    let s = smatrix_from(&sol, energy)?;
    let (q, _) = central_q(pp, &s, energy, delta)?;
    let k = energy.sqrt();
    let (_, plus) = wave_combinations(&sol, energy);
    let c = plus.inverse()?.scale_real(2.0 * k / (4.0 * std::f64::consts::PI * k).sqrt());
    let gram = sol.gram.as_ref().expect("gram requested").as_matrix();
    let mut lhs = &(&c.adjoint() * gram) * &c;
    lhs.scale_mut(2.0 * std::f64::consts::PI);
    let mut rhs = q;
    let ss = &s - &s.adjoint();
    rhs.axpy(C64::new(0.0, -1.0 / (4.0 * energy)), &ss);
    let residual = lhs.distance(&rhs) / rhs.frobenius_norm();
    let (tl, tr) = (lhs.trace(), rhs.trace());
    Ok(KreinFriedel { trace_residual: (tl - tr).norm() / tr.norm(), lhs, rhs, residual })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatteringState {
    pub energy: f64,
    pub s: UnitaryMatrix,
    pub q: HermitianMatrix,
    /// `∫₀ᴸ Ψ†Ψ` for the normalized scattering state.
    pub wavefunction_integral: HermitianMatrix,
}

pub fn scattering_state(pot: &PotentialRealization, energy: f64, delta: f64) -> Result<ScatteringState> {
    let pp = PreparedPotential::new(pot)?;
    let kf = krein_friedel_prepared(&pp, energy, delta)?;
    let ws = wigner_smith_prepared(&pp, energy, delta)?;
    Ok(ScatteringState {
        energy,
        s: smatrix_prepared(&pp, energy)?,
        q: ws.q_richardson,
        wavefunction_integral: HermitianMatrix::from_matrix(kf.lhs.scale_real(0.5 / std::f64::consts::PI)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_functions_branches_agree() {
        for &k2 in &[1e-3, -1e-3, 0.5, -0.5] {
            let h = 0.05;
            let (c, s) = cell_functions(k2, h);
            let theta = k2 * h * h;
            let (c_ref, s_ref) = if k2 > 0.0 {
                let k = k2.sqrt();
                ((k * h).cos(), (k * h).sin() / k)
            } else {
                let k = (-k2).sqrt();
                ((k * h).cosh(), (k * h).sinh() / k)
            };
            assert!((c - c_ref).abs() < 1e-15 && (s - s_ref).abs() < 1e-15 * h, "theta {theta}");
        }
    }

    #[test]
    fn iss_series_matches_closed_form_at_switch() {
        let h = 1.0;
        for &k2 in &[0.0099999, -0.0099999] {
            let (c, s) = cell_functions(k2, h);
            let (_, _, series) = cell_integrals(k2, h, c, s);
            let closed = (h - c * s) / (2.0 * k2);
            assert!((series - closed).abs() < 1e-12, "{series} {closed}");
        }
    }

    #[test]
    fn two_by_two_eigh() {
        let v = HermitianMatrix::from_matrix(ComplexMatrix::from_row_slice(
            2,
            &[C64::new(0.3, 0.0), C64::new(0.1, -0.2), C64::new(0.1, 0.2), C64::new(-0.4, 0.0)],
        ).unwrap());
        let (d, o) = eigh_small(&v).unwrap();
        let dm = ComplexMatrix::from_diag(&[C64::new(d[0], 0.0), C64::new(d[1], 0.0)]);
        let rec = &(&o * &dm) * &o.adjoint();
        assert!(rec.distance(v.as_matrix()) < 1e-14);
        assert!(o.unitarity_residual() < 1e-14);
    }

    #[test]
    fn free_wire_reflects_with_phase() {
        let pot = PotentialRealization::zero(2, SymmetryClass::Unitary, 0.01, 300);
        let e = 1.3;
        let s = smatrix(&pot, e).unwrap();
        let k = e.sqrt();
        let expect = -C64::from_polar(1.0, 2.0 * k * pot.length);
        assert!((s.as_matrix()[(0, 0)] - expect).norm() < 1e-12);
        assert!(s.as_matrix()[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn krein_friedel_random_potential() {
        let params = ModelParams::new(2, SymmetryClass::Orthogonal, 1.0, 0.05).unwrap();
        let pot = build_potential(&params, 0.01, 20.0, RngStream::new(7, 0)).unwrap();
        let kf = krein_friedel_residual(&pot, 1.0, 1e-5).unwrap();
        assert!(kf.residual < 1e-6, "{}", kf.residual);
        let ws = wigner_smith(&pot, 1.0, 1e-5).unwrap();
        assert!(ws.hermiticity_residual < 1e-6 * ws.q.as_matrix().frobenius_norm());
    }

    #[test]
    fn persistence_round_trip() {
        let params = ModelParams::new(2, SymmetryClass::Unitary, 1.0, 0.05).unwrap();
        let pot = build_potential(&params, 0.01, 0.5, RngStream::new(3, 1)).unwrap();
        let mut buf = Vec::new();
        pot.write_binary(&mut buf).unwrap();
        assert_eq!(PotentialRealization::read_binary(&buf[..]).unwrap(), pot);
        let mut txt = Vec::new();
        pot.write_csv(&mut txt).unwrap();
        let back = PotentialRealization::read_csv(&txt[..]).unwrap();
        for (a, b) in back.cells.iter().zip(&pot.cells) {
            assert!(a.as_matrix().distance(b.as_matrix()) < 1e-14);
        }
    }
}
