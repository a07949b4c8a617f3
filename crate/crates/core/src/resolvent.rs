//! Large-N resolvent `g(z; s)` of `N Q̃ / (2τ_ξ)` and its eigenvalue density.
//!
//! Lengths are rescaled as `s = N L / ξ`. The leading-order flow
//! `∂_s g = ∂_z[(2βz − 1) g − β z² g²]` with `g(z; 0) = 1/z` is a complex
//! inviscid Burgers equation and is solved along its exact characteristics:
//!
//! `z(s) = (z₀/2)(1 + cosh ωs) + sinh(ωs)/ω`, `ω² = 4β/z₀`,
//! `g = (2βz − 1 + ∂_s z) / (2βz²)`.
//!
//! For each target `z` the starting point `z₀` is found by Newton iteration,
//! continued in `s` from `z₀ = z` and then swept along the `λ` grid.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::matrix::{eigvals_hermitian, SymmetryClass, C64};
use crate::params::{ModelParams, SdeConfig};
use crate::rmt::stationary_density;
use crate::sde::qtilde_snapshots;
use crate::stats::Histogram;

pub const DEFAULT_EPS: [f64; 2] = [1e-2, 5e-3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventConfig {
    pub beta: SymmetryClass,
    /// Rescaled lengths `N L / ξ`, increasing.
    pub s_grid: Vec<f64>,
    /// Imaginary offsets; Richardson needs the second to be half the first.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_dlambda")]
    pub d_lambda: f64,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    /// Defaults to `max(20, 4 s_max)` or past the support edge.
    #[serde(default)]
    pub lambda_max: Option<f64>,
    /// Keep the `(2 − β)/N` term (grid solver only).
    #[serde(default)]
    pub n_subleading: Option<usize>,
}

fn default_eps() -> Vec<f64> {
    DEFAULT_EPS.to_vec()
}
fn default_dlambda() -> f64 {
    2.5e-3
}
fn default_lambda_min() -> f64 {
    -2.0
}

impl ResolventConfig {
    pub fn new(beta: SymmetryClass, s_grid: Vec<f64>) -> Self {
        Self {
            beta,
            s_grid,
            eps: default_eps(),
            d_lambda: default_dlambda(),
            lambda_min: default_lambda_min(),
            lambda_max: None,
            n_subleading: None,
        }
    }

    /// `max(20, 4 s_max)`, widened to clear the support edge at `s_max`.
    pub fn lambda_max(&self) -> f64 {
        let s_max = self.s_grid.iter().cloned().fold(0.0, f64::max);
        self.lambda_max.unwrap_or_else(|| {
            let edge = if s_max > 0.0 { support_edges(self.beta, s_max).map(|e| e.1).unwrap_or(0.0) } else { 0.0 };
            20f64.max(4.0 * s_max).max(1.1 * edge + 1.0)
        })
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        let hi = self.lambda_max();
        let n = ((hi - self.lambda_min) / self.d_lambda).round() as usize;
        let d = (hi - self.lambda_min) / n as f64;
        (0..=n).map(|i| self.lambda_min + i as f64 * d).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.s_grid.is_empty() {
            return bad("empty s grid".into());
        }
        if self.s_grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || self.s_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("s grid must be non-negative and increasing".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("eps must be positive".into());
        }
        if !(self.d_lambda > 0.0) || !(self.lambda_max() > self.lambda_min) {
            return bad("empty lambda window".into());
        }
        if self.n_subleading == Some(0) {
            return bad("n_subleading must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventField {
    pub beta: SymmetryClass,
    pub lambda_grid: Vec<f64>,
    pub eps: Vec<f64>,
    pub s_grid: Vec<f64>,
    /// `g[e][j][i]` at `z = λ_i + i ε_e`, `s = s_j`.
    pub g: Vec<Vec<Vec<C64>>>,
    pub n_effective: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
struct CharPoint {
    z: C64,
    z0: C64,
    dz_dtheta: C64,
    /// `∂z/∂s` at fixed `θ`.
    dz_ds_theta: C64,
    /// `∂z/∂s` along the characteristic.
    dz_ds: C64,
    /// Magnitude of the terms summed into `z`, for the roundoff floor.
    scale: f64,
}

/// `cosh √x`, `sinh √x / √x` and `(cosh √x − sinh √x / √x) / x`, even in the root.
fn cosh_sinhc(x: C64) -> Option<(C64, C64, C64)> {
    if x.norm() < 1e-2 {
        let (mut c, mut sh, mut d) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let mut term = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for n in 0..8 {
            // term = xⁿ, fact = (2n)!
            c += term / fact;
            sh += term / (fact * (2 * n + 1) as f64);
            d += term * ((2 * n + 2) as f64 / (fact * ((2 * n + 1) * (2 * n + 2) * (2 * n + 3)) as f64));
            term *= x;
            fact *= ((2 * n + 1) * (2 * n + 2)) as f64;
        }
        Some((c, sh, d))
    } else {
        let w = x.sqrt();
        if w.re.abs() > 600.0 {
            return None;
        }
        let (c, sh) = (w.cosh(), w.sinh() / w);
        Some((c, sh, (c - sh) / x))
    }
}

/// The characteristic through `θ = ωs`, i.e. `z₀ = 4βs²/θ²`. Unlike `z₀`, `θ`
/// stays well conditioned as `s → ∞`, where `θ → iπ`.
fn characteristic(theta: C64, s: f64, beta: f64) -> Option<CharPoint> {
    let x = theta * theta;
    if x.norm() == 0.0 || s <= 0.0 {
        return None;
    }
    let (c, sh, d) = cosh_sinhc(x)?;
    let z0 = 4.0 * beta * s * s / x;
    let head = 0.5 * z0 * (1.0 + c);
    let z = head + s * sh;
    let dz_dtheta = -2.0 * head / theta + 0.5 * z0 * theta * sh + s * theta * d;
    let dz_ds_theta = 2.0 * head / s + sh;
    let dz_ds = c + 2.0 * beta * s * sh;
    let scale = 0.5 * z0.norm() * (1.0 + c.norm()) + (s * sh).norm();
    Some(CharPoint { z, z0, dz_dtheta, dz_ds_theta, dz_ds, scale })
}

fn resolvent_from(p: &CharPoint, beta: f64) -> C64 {
    (2.0 * beta * p.z - 1.0 + p.dz_ds) / (2.0 * beta * p.z * p.z)
}

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX: usize = 30;

/// Newton for `z(s; θ) = z` from `guess`.
fn newton(z: C64, s: f64, beta: f64, guess: C64, max_iter: usize) -> Option<(C64, CharPoint)> {
    let mut theta = guess;
    for _ in 0..max_iter {
        let p = characteristic(theta, s, beta)?;
        let r = p.z - z;
        if r.norm() <= NEWTON_TOL * (1.0 + p.scale) {
            return Some((theta, p));
        }
        if p.dz_dtheta.norm() == 0.0 {
            return None;
        }
        let mut step = r / p.dz_dtheta;
        // Keep the iterate away from θ = 0.
        if step.norm() > 0.5 * theta.norm() {
            step *= 0.5 * theta.norm() / step.norm();
        }
        theta -= step;
        if !(theta.re.is_finite() && theta.im.is_finite()) {
            return None;
        }
    }
    let p = characteristic(theta, s, beta)?;
    ((p.z - z).norm() <= 1e3 * NEWTON_TOL * (1.0 + p.scale)).then_some((theta, p))
}

/// Continue `θ` in `s` from the short-length limit `θ ≈ 2s√(β/z)` through the
/// increasing `targets`. Returns `(θ, z₀, g)` per target.
fn continue_in_s(z: C64, targets: &[f64], beta: f64) -> Result<Vec<(C64, C64, C64)>> {
    let stalled = |s: f64| Error::Resolvent(format!("continuation stalled at z = {z}, s = {s:.6}"));
    let mut out = Vec::with_capacity(targets.len());
    let mut s = 1e-4 * z.norm().min(1.0);
    let mut theta = 2.0 * s * (beta / z).sqrt();
    theta = newton(z, s, beta, theta, NEWTON_MAX).ok_or_else(|| stalled(s))?.0;
    let mut ds = s;
    for &target in targets {
        if target == 0.0 {
            out.push((C64::new(0.0, 0.0), z, 1.0 / z));
            continue;
        }
        while s < target {
            let step = ds.min(target - s);
            let p = characteristic(theta, s, beta).ok_or_else(|| stalled(s))?;
            let guess = theta - p.dz_ds_theta / p.dz_dtheta * step;
            let accepted = newton(z, s + step, beta, guess, 6).filter(|(t1, p)| {
                // Small corrector relative to the step, and the Herglotz sign.
                (t1 - guess).norm() <= 0.1 * (t1 - theta).norm() + 1e-13 * t1.norm() && resolvent_from(p, beta).im <= 1e-10
            });
            match accepted {
                Some((t1, _)) => {
                    s = if step == target - s { target } else { s + step };
                    theta = t1;
                    ds = (ds * 1.5).min(0.25 * (1.0 + s));
                }
                None => {
                    ds *= 0.5;
                    if ds < 1e-12 * (1.0 + s) {
                        return Err(stalled(s));
                    }
                }
            }
        }
        let (t, p) = newton(z, target, beta, theta, NEWTON_MAX)
            .ok_or_else(|| Error::Resolvent(format!("Newton failed at z = {z}, s = {target}")))?;
        theta = t;
        out.push((t, p.z0, resolvent_from(&p, beta)));
    }
    Ok(out)
}

/// `g(z; s)` at one point of the upper half plane.
pub fn g_at(beta: SymmetryClass, z: C64, s: f64) -> Result<C64> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidParameter(format!("z = {z} must lie in the upper half plane")));
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("s = {s} must be non-negative")));
    }
    Ok(continue_in_s(z, &[s], beta.beta_f64())?[0].2)
}

/// Starting point `z₀` of the characteristic that reaches `z` at `s`.
pub fn characteristic_origin(beta: SymmetryClass, z: C64, s: f64) -> Result<C64> {
    Ok(continue_in_s(z, &[s], beta.beta_f64())?[0].1)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

/// Support `[λ₋, λ₊]` of the density at `s > 0`: real `θ` (z₀ > 0) covers the
/// real axis right of the support with minimum `λ₊`, imaginary `θ ∈ (0, iπ)`
/// covers the left part with maximum `λ₋`.
pub fn support_edges(beta: SymmetryClass, s: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("s = {s} must be positive")));
    }
    let b = beta.beta_f64();
    let z_of = |theta: C64| characteristic(theta, s, b).map(|p| p.z.re).unwrap_or(f64::INFINITY);
    let scan = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, log: bool| -> (f64, f64) {
        let n = 400;
        let at = |i: usize| {
            let t = i as f64 / n as f64;
            if log { lo * (hi / lo).powf(t) } else { lo + (hi - lo) * t }
        };
        let i = (0..=n).min_by(|&i, &j| f(at(i)).total_cmp(&f(at(j)))).unwrap();
        (at(i.saturating_sub(1)), at((i + 1).min(n)))
    };
    let right = |t: f64| z_of(C64::new(t, 0.0));
    let (a, c) = scan(&right, 1e-4, 60.0, true);
    let hi = golden_min(right, a, c);
    let left = |p: f64| -z_of(C64::new(0.0, p));
    let (a, c) = scan(&left, 1e-6, std::f64::consts::PI * (1.0 - 1e-12), false);
    let lo = -golden_min(left, a, c);
    Ok((lo, hi))
}

/// Stationary `s → ∞` resolvent `[(2βz − 1) + √(1 − 4βz)] / (2βz²)`, principal
/// root, cut along `[1/(4β), ∞)`.
pub fn g_stationary(beta: SymmetryClass, z: C64) -> C64 {
    let b = beta.beta_f64();
    ((2.0 * b * z - 1.0) + (1.0 - 4.0 * b * z).sqrt()) / (2.0 * b * z * z)
}

pub fn solve_resolvent(cfg: &ResolventConfig) -> Result<ResolventField> {
    cfg.validate()?;
    if cfg.n_subleading.is_some() {
        return Err(Error::Unsupported("the (2 - beta)/N term needs the grid solver".into()));
    }
    let beta = cfg.beta.beta_f64();
    let lambda = cfg.lambda_grid();
    let ns = cfg.s_grid.len();
    let mut g = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        let mut ge = vec![vec![C64::new(0.0, 0.0); lambda.len()]; ns];
        let mut prev: Option<Vec<C64>> = None;
        for (i, &lam) in lambda.iter().enumerate() {
            let z = C64::new(lam, eps);
            let swept = prev.as_ref().and_then(|thetas: &Vec<C64>| {
                let mut next = Vec::with_capacity(ns);
                for (j, &s) in cfg.s_grid.iter().enumerate() {
                    if s == 0.0 {
                        next.push(C64::new(0.0, 0.0));
                        ge[j][i] = 1.0 / z;
                        continue;
                    }
                    let (t, p) = newton(z, s, beta, thetas[j], 12)?;
                    let gv = resolvent_from(&p, beta);
                    if gv.im > 1e-10 || (t - thetas[j]).norm() > 0.1 * (1.0 + thetas[j].norm()) {
                        return None;
                    }
                    next.push(t);
                    ge[j][i] = gv;
                }
                Some(next)
            });
            let thetas = match swept {
                Some(v) => v,
                None => {
                    let sol = continue_in_s(z, &cfg.s_grid, beta)?;
                    for (j, &(_, _, gv)) in sol.iter().enumerate() {
                        ge[j][i] = gv;
                    }
                    sol.into_iter().map(|(t, _, _)| t).collect()
                }
            };
            prev = Some(thetas);
        }
        for (j, row) in ge.iter().enumerate() {
            if let Some((i, v)) = row.iter().enumerate().find(|(_, v)| v.im > 1e-10 || !v.re.is_finite()) {
                return Err(Error::Resolvent(format!(
                    "Herglotz sign violated at lambda = {}, s = {}, eps = {eps}: g = {v}",
                    lambda[i], cfg.s_grid[j]
                )));
            }
        }
        g.push(ge);
    }
    Ok(ResolventField { beta: cfg.beta, lambda_grid: lambda, eps: cfg.eps.clone(), s_grid: cfg.s_grid.clone(), g, n_effective: cfg.n_subleading })
}

/// Explicit finite-volume solve of the flux form on each line `Im z = ε`:
/// Rusanov fluxes for `(2βz − 1)g − βz²g²`, centered differences for the
/// optional `((2 − β)/N) ∂(z²g)` term, SSP-RK2 in `s`, `g = 1/z` pinned at both
/// ends. The restriction of the flow to a horizontal line is not well posed
/// (modes of one sign grow at a rate set by `Im ∂F/∂g`), so the solve is
/// monitored and aborted once the Herglotz sign breaks.
pub fn solve_resolvent_grid(cfg: &ResolventConfig) -> Result<ResolventField> {
    cfg.validate()?;
    let beta = cfg.beta.beta_f64();
    let lambda = cfg.lambda_grid();
    let m = lambda.len();
    let dl = lambda[1] - lambda[0];
    let diff = cfg.n_subleading.map(|n| (2.0 - beta) / n as f64).unwrap_or(0.0);
    let mut g_all = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        let z: Vec<C64> = lambda.iter().map(|&l| C64::new(l, eps)).collect();
        let mut g: Vec<C64> = z.iter().map(|z| 1.0 / z).collect();
        let mut snaps = Vec::with_capacity(cfg.s_grid.len());
        let mut s = 0.0;
        let rhs = |g: &[C64], out: &mut Vec<C64>| -> f64 {
            let flux = |i: usize| (2.0 * beta * z[i] - 1.0) * g[i] - beta * z[i] * z[i] * g[i] * g[i];
            let speed = |i: usize| ((2.0 * beta * z[i] - 1.0) - 2.0 * beta * z[i] * z[i] * g[i]).norm();
            let mut amax: f64 = 0.0;
            let mut fh = vec![C64::new(0.0, 0.0); m - 1];
            let (mut fl, mut sl) = (flux(0), speed(0));
            for i in 0..m - 1 {
                let (fr, sr) = (flux(i + 1), speed(i + 1));
                let a = sl.max(sr);
                amax = amax.max(a);
                fh[i] = 0.5 * (fl + fr) + 0.5 * a * (g[i + 1] - g[i]);
                fl = fr;
                sl = sr;
            }
            out.clear();
            out.resize(m, C64::new(0.0, 0.0));
            for i in 1..m - 1 {
                let mut r = (fh[i] - fh[i - 1]) / dl;
                if diff != 0.0 {
                    let h = |j: usize| z[j] * z[j] * g[j];
                    r += diff * (h(i + 1) - 2.0 * h(i) + h(i - 1)) / (dl * dl);
                }
                out[i] = r;
            }
            amax
        };
        let mut k1 = Vec::new();
        let mut k2 = Vec::new();
        let zmax = z.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        for &target in &cfg.s_grid {
            while s < target {
                let amax = rhs(&g, &mut k1);
                let mut ds = 0.4 * dl / amax.max(1e-12);
                if diff != 0.0 {
                    ds = ds.min(0.2 * dl * dl / (diff * zmax));
                }
                let ds = ds.min(target - s);
                let g1: Vec<C64> = g.iter().zip(&k1).map(|(g, k)| g + ds * k).collect();
                rhs(&g1, &mut k2);
                for i in 0..m {
                    g[i] = 0.5 * (g[i] + g1[i] + ds * k2[i]);
                }
                s = if ds == target - s { target } else { s + ds };
                if let Some(i) = g.iter().position(|v| !(v.im <= 1e-10 && v.re.is_finite())) {
                    return Err(Error::Resolvent(format!(
                        "grid solution lost the Herglotz sign at lambda = {:.4}, s = {s:.4} (eps = {eps}); \
                         the line restriction amplifies one Fourier sign, use the characteristic solver",
                        lambda[i]
                    )));
                }
            }
            snaps.push(g.clone());
        }
        g_all.push(snaps);
    }
    Ok(ResolventField { beta: cfg.beta, lambda_grid: lambda, eps: cfg.eps.clone(), s_grid: cfg.s_grid.clone(), g: g_all, n_effective: cfg.n_subleading })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityCurve {
    pub lambda_grid: Vec<f64>,
    /// Richardson-extrapolated density when two offsets are available.
    pub rho: Vec<f64>,
    /// Density at the smallest offset.
    pub rho_raw: Vec<f64>,
    pub s: f64,
    pub eps: f64,
}

fn trapezoid(x: &[f64], y: impl Fn(usize) -> f64) -> f64 {
    (1..x.len()).map(|i| 0.5 * (x[i] - x[i - 1]) * (y(i) + y(i - 1))).sum()
}

impl DensityCurve {
    pub fn mass(&self) -> f64 {
        trapezoid(&self.lambda_grid, |i| self.rho[i])
    }

    pub fn first_moment(&self) -> f64 {
        trapezoid(&self.lambda_grid, |i| self.lambda_grid[i] * self.rho[i])
    }

    /// `∫|ρ − f| dλ` over the grid.
    pub fn l1_distance(&self, f: impl Fn(f64) -> f64) -> f64 {
        trapezoid(&self.lambda_grid, |i| (self.rho[i] - f(self.lambda_grid[i])).abs())
    }

    /// Linear interpolation, zero outside the grid.
    pub fn at(&self, lambda: f64) -> f64 {
        let x = &self.lambda_grid;
        if lambda < x[0] || lambda > x[x.len() - 1] {
            return 0.0;
        }
        let j = x.partition_point(|&v| v <= lambda).clamp(1, x.len() - 1);
        let t = (lambda - x[j - 1]) / (x[j] - x[j - 1]);
        (1.0 - t) * self.rho[j - 1] + t * self.rho[j]
    }

    /// Mean of the curve over `[lo, hi]`.
    pub fn bin_average(&self, lo: f64, hi: f64) -> f64 {
        let x = &self.lambda_grid;
        let a = x.partition_point(|&v| v < lo);
        let b = x.partition_point(|&v| v <= hi);
        let mut pts: Vec<(f64, f64)> = vec![(lo, self.at(lo))];
        pts.extend((a..b).map(|i| (x[i], self.rho[i])));
        pts.push((hi, self.at(hi)));
        let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1)).sum();
        area / (hi - lo)
    }

    /// Smallest `λ` where `ρ` first exceeds `frac` of its maximum.
    pub fn left_edge(&self, frac: f64) -> f64 {
        let max = self.rho.iter().cloned().fold(0.0, f64::max);
        let i = self.rho.iter().position(|&r| r >= frac * max).unwrap_or(0);
        self.lambda_grid[i]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        Self::write_all(std::slice::from_ref(self), w)
    }

    /// Several curves in one table, stacked by `s`.
    pub fn write_all<W: Write>(curves: &[DensityCurve], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "lambda", "rho", "rho_raw"])?;
        for c in curves {
            for i in 0..c.lambda_grid.len() {
                wr.write_record([
                    format!("{}", c.s),
                    format!("{:.10e}", c.lambda_grid[i]),
                    format!("{:.10e}", c.rho[i]),
                    format!("{:.10e}", c.rho_raw[i]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

impl ResolventField {
    pub fn s_index(&self, s: f64) -> Result<usize> {
        self.s_grid
            .iter()
            .position(|&v| (v - s).abs() <= 1e-12 * (1.0 + s))
            .ok_or_else(|| Error::InvalidParameter(format!("s = {s} is not on the solved grid")))
    }

    /// Mass `∮ g dz / 2πi`-free check: `Im g ≤ tol` everywhere.
    pub fn max_im(&self) -> f64 {
        self.g.iter().flatten().flatten().map(|v| v.im).fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV rows `eps, s, lambda, re_g, im_g, rho`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["eps", "s", "lambda", "re_g", "im_g", "rho"])?;
        for (e, ge) in self.g.iter().enumerate() {
            for (j, row) in ge.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    wr.write_record([
                        format!("{}", self.eps[e]),
                        format!("{}", self.s_grid[j]),
                        format!("{:.10e}", self.lambda_grid[i]),
                        format!("{:.12e}", v.re),
                        format!("{:.12e}", v.im),
                        format!("{:.10e}", -v.im / std::f64::consts::PI),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// `ρ = −Im g / π` at the smallest offset, Richardson-extrapolated with the
/// next one when they differ by a factor of two.
pub fn density_from_resolvent(field: &ResolventField, s: f64) -> Result<DensityCurve> {
    let j = field.s_index(s)?;
    let mut order: Vec<usize> = (0..field.eps.len()).collect();
    order.sort_by(|&a, &b| field.eps[a].total_cmp(&field.eps[b]));
    let fine = order[0];
    let rho_of = |e: usize| -> Vec<f64> { field.g[e][j].iter().map(|v| -v.im / std::f64::consts::PI).collect() };
    let rho_raw = rho_of(fine);
    let rho = match order.get(1) {
        Some(&coarse) if (field.eps[coarse] / field.eps[fine] - 2.0).abs() < 1e-9 => {
            let rc = rho_of(coarse);
            rho_raw.iter().zip(&rc).map(|(f, c)| 2.0 * f - c).collect()
        }
        _ => rho_raw.clone(),
    };
    if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| **r < -1e-3) {
        return Err(Error::Resolvent(format!("negative density {r:.3e} at lambda = {}", field.lambda_grid[i])));
    }
    Ok(DensityCurve { lambda_grid: field.lambda_grid.clone(), rho, rho_raw, s, eps: field.eps[fine] })
}

/// Stationary density sampled on a grid.
pub fn stationary_curve(beta: SymmetryClass, lambda_grid: &[f64]) -> Vec<f64> {
    lambda_grid.iter().map(|&l| stationary_density(beta, l)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalDensity {
    pub n_channels: usize,
    pub s: f64,
    pub lo: f64,
    pub hi: f64,
    pub centers: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fraction of eigenvalues outside `[lo, hi]`.
    pub outside: f64,
    pub mean: f64,
    pub mean_stderr: f64,
}

impl EmpiricalDensity {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.centers.len() as f64
    }

    /// `Σ |ρ̂_b − ⟨ρ⟩_b| Δ` with the curve averaged over each bin.
    pub fn l1_distance(&self, curve: &DensityCurve) -> f64 {
        let w = self.width();
        self.centers
            .iter()
            .zip(&self.rho)
            .map(|(&c, &r)| (r - curve.bin_average(c - 0.5 * w, c + 0.5 * w)).abs() * w)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        Self::write_all(std::slice::from_ref(self), w)
    }

    pub fn write_all<W: Write>(hists: &[EmpiricalDensity], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "lambda", "rho", "stderr"])?;
        for h in hists {
            for i in 0..h.centers.len() {
                wr.write_record([
                    format!("{}", h.s),
                    format!("{:.10e}", h.centers[i]),
                    format!("{:.10e}", h.rho[i]),
                    format!("{:.10e}", h.stderr[i]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Histograms of the eigenvalues of `N Q̃ / (2τ_ξ)` at the rescaled lengths `s_values`,
/// one trajectory per draw with snapshots at every `s`; `bins[j] = (lo, hi, count)`.
pub fn empirical_density(
    params: &ModelParams,
    s_values: &[f64],
    n_draws: usize,
    cfg: &SdeConfig,
    bins: &[(f64, f64, usize)],
    ensemble: &Ensemble,
) -> Result<Vec<EmpiricalDensity>> {
    params.validate()?;
    if bins.len() != s_values.len() {
        return Err(Error::InvalidParameter("one histogram range per length is required".into()));
    }
    let n = params.n_channels;
    let lengths: Vec<f64> = s_values.iter().map(|s| s * params.xi() / n as f64).collect();
    let scale = n as f64 / (2.0 * params.tau_xi());
    let draws = ensemble.try_map(n_draws, |stream| {
        let snaps = qtilde_snapshots(params, &lengths, cfg, stream)?;
        snaps.iter().map(|q| Ok(eigvals_hermitian(q)?.into_iter().map(|e| e * scale).collect::<Vec<f64>>())).collect::<Result<Vec<_>>>()
    })?;
    Ok(s_values
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let (lo, hi, nb) = bins[j];
            let mut h = Histogram::new(lo, hi, nb);
            let mut st = crate::stats::RunningStats::new();
            for d in &draws {
                let ev = &d[j];
                for &e in ev {
                    h.push(e);
                }
                st.push(ev.iter().sum::<f64>() / n as f64);
            }
            EmpiricalDensity {
                n_channels: n,
                s,
                lo,
                hi,
                centers: h.centers(),
                rho: h.density(),
                stderr: h.density_stderr(),
                outside: (h.below + h.above) as f64 / h.total() as f64,
                mean: st.mean(),
                mean_stderr: st.stderr(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_condition() {
        let z = C64::new(0.3, 0.01);
        let g = g_at(SymmetryClass::Orthogonal, z, 0.0).unwrap();
        assert!((g - 1.0 / z).norm() < 1e-15);
    }

    #[test]
    fn far_field_is_one_over_z() {
        let z = C64::new(500.0, 3.0);
        let g = g_at(SymmetryClass::Unitary, z, 1.0).unwrap();
        assert!((g * z - 1.0).norm() < 5e-3);
    }

    #[test]
    fn stationary_branch() {
        let g = g_stationary(SymmetryClass::Orthogonal, C64::new(1.0, 1e-9));
        let rho = -g.im / std::f64::consts::PI;
        assert!((rho - stationary_density(SymmetryClass::Orthogonal, 1.0)).abs() < 1e-6);
    }
}
