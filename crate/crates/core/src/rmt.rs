//! β-Laguerre (Wishart) spectra and the infinite-length limit of the
//! exponential functional.

use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::matrix::{HermitianMatrix, SymmetryClass};
use crate::params::{ModelParams, SdeConfig};
use crate::rng::{RngStream, Sampler};
use crate::sde::exp_functional;

/// Joint eigenvalue law `∏|γᵢ − γⱼ|^β ∏ γᵢ^a e^{−γᵢ/2}`, `a = μ − 1 − β(N−1)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WishartSpec {
    pub dim: usize,
    pub beta: SymmetryClass,
    pub mu: f64,
}

impl WishartSpec {
    pub fn new(dim: usize, beta: SymmetryClass, mu: f64) -> Result<Self> {
        let s = Self { dim, beta, mu };
        s.validate()?;
        Ok(s)
    }

    /// The wire's drift `μ = 1 + (β/2)(N−1)`, for which `a = 0`.
    pub fn wire(dim: usize, beta: SymmetryClass) -> Self {
        Self { dim, beta, mu: 1.0 + 0.5 * beta.beta_f64() * (dim as f64 - 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("Wishart dimension must be positive".into()));
        }
        let bound = 0.5 * self.beta.beta_f64() * (self.dim as f64 - 1.0);
        if !(self.mu > bound) {
            return Err(Error::InvalidParameter(format!(
                "mu = {} must exceed beta(N-1)/2 = {bound} for the law to exist",
                self.mu
            )));
        }
        Ok(())
    }

    pub fn exponent(&self) -> f64 {
        self.mu - 1.0 - 0.5 * self.beta.beta_f64() * (self.dim as f64 - 1.0)
    }

    /// Unnormalized log density of an unordered eigenvalue tuple.
    pub fn log_density(&self, g: &[f64]) -> f64 {
        if g.iter().any(|&x| x <= 0.0) {
            return f64::NEG_INFINITY;
        }
        let b = self.beta.beta_f64();
        let a = self.exponent();
        let mut s = 0.0;
        for i in 0..g.len() {
            s += a * g[i].ln() - 0.5 * g[i];
            for j in i + 1..g.len() {
                s += b * (g[i] - g[j]).abs().ln();
            }
        }
        s
    }
}

/// Sorted eigenvalues of many independent draws.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub draws: Vec<Vec<f64>>,
}

impl SpectralSample {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn traces(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.iter().sum()).collect()
    }

    pub fn trace_squares(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.iter().map(|x| x * x).sum()).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if let Some(first) = self.draws.first() {
            wr.write_record((1..=first.len()).map(|i| format!("gamma_{i}")))?;
        }
        for d in &self.draws {
            wr.write_record(d.iter().map(|x| format!("{x:.15e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn chi(k: f64, s: &mut Sampler) -> f64 {
    ChiSquared::new(k).expect("positive degrees of freedom").sample(s.rng_mut()).sqrt()
}

/// One draw from the bidiagonal model: `B` has diagonal `χ_{2μ − βi}`,
/// `i = 0..N−1`, and subdiagonal `χ_{β(N−1)}, …, χ_β`; the spectrum is that of `BBᵀ`.
pub fn sample_wishart_eigs(spec: &WishartSpec, s: &mut Sampler) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.dim;
    let b = spec.beta.beta_f64();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = chi(2.0 * spec.mu - b * i as f64, s);
        if i + 1 < n {
            m[(i + 1, i)] = chi(b * (n - 1 - i) as f64, s);
        }
    }
    let mut g: Vec<f64> = m.singular_values().iter().map(|x| x * x).collect();
    g.sort_by(f64::total_cmp);
    Ok(g)
}

pub fn sample_wishart_spectra(spec: &WishartSpec, n_draws: usize, ensemble: &Ensemble) -> Result<SpectralSample> {
    let draws = ensemble.try_map(n_draws, |stream| sample_wishart_eigs(spec, &mut stream.sampler()))?;
    Ok(SpectralSample { draws })
}

/// Metropolis chain on the joint eigenvalue law with multiplicative
/// single-site proposals. Returns every `thin`-th state after `burn_in` sweeps.
pub fn mcmc_wishart(spec: &WishartSpec, sweeps: usize, burn_in: usize, thin: usize, stream: RngStream) -> Result<SpectralSample> {
    spec.validate()?;
    if spec.dim > 4 {
        return Err(Error::Unsupported("the Metropolis cross-check is meant for N <= 4".into()));
    }
    let n = spec.dim;
    let mut s = stream.sampler();
    let mut g: Vec<f64> = (0..n).map(|i| 2.0 * spec.mu * (i as f64 + 1.0) / n as f64).collect();
    let mut lp = spec.log_density(&g);
    let step = 0.8;
    let mut draws = Vec::new();
    for sweep in 0..burn_in + sweeps {
        for i in 0..n {
            let old = g[i];
            let z = step * s.normal();
            g[i] = old * z.exp();
            let lp_new = spec.log_density(&g);
            // log-space proposal: Jacobian γ'/γ
            if (lp_new - lp + z) >= s.uniform_open0().ln() {
                lp = lp_new;
            } else {
                g[i] = old;
            }
        }
        if sweep >= burn_in && (sweep - burn_in) % thin.max(1) == 0 {
            let mut d = g.clone();
            d.sort_by(f64::total_cmp);
            draws.push(d);
        }
    }
    Ok(SpectralSample { draws })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DufresneDraw {
    /// `Γ̂ = 2τ_ξ Q̃⁻¹ = (∫Λ†Λ)⁻¹`, dimensionless.
    pub gamma: HermitianMatrix,
    /// Number of rejected numerically singular functionals.
    pub resampled: u32,
}

pub const DUFRESNE_MIN_LENGTH: f64 = 8.0;

pub fn dufresne_limit_sample(params: &ModelParams, l_over_xi: f64, cfg: &SdeConfig, stream: RngStream) -> Result<DufresneDraw> {
    if l_over_xi < DUFRESNE_MIN_LENGTH {
        return Err(Error::InvalidParameter(format!(
            "the functional saturates only for L/xi >= {DUFRESNE_MIN_LENGTH}, got {l_over_xi}"
        )));
    }
    let length = l_over_xi * params.xi();
    let mut resampled = 0;
    let mut current = stream;
    loop {
        let q = exp_functional(params, length, cfg, current)?;
        if q.as_matrix().rcond() > 1e-13 {
            let gamma = q.inverse()?.scale(2.0 * params.tau_xi());
            return Ok(DufresneDraw { gamma, resampled });
        }
        resampled += 1;
        if resampled > 16 {
            return Err(Error::Singular("exponential functional repeatedly singular".into()));
        }
        current = stream.substream(resampled as u64);
    }
}

/// `ρ_∞(λ) = √(βλ − 1/4)/(πβλ²)` on `λ ≥ 1/(4β)`.
pub fn stationary_density(beta: SymmetryClass, lambda: f64) -> f64 {
    let b = beta.beta_f64();
    let d = b * lambda - 0.25;
    if d <= 0.0 {
        0.0
    } else {
        d.sqrt() / (std::f64::consts::PI * b * lambda * lambda)
    }
}

/// `∫_{edge}^{λ} ρ_∞`, in closed form.
pub fn stationary_cdf(beta: SymmetryClass, lambda: f64) -> f64 {
    let u = 4.0 * beta.beta_f64() * lambda;
    if u <= 1.0 {
        return 0.0;
    }
    // ∫₁^u 2√(v−1)/(πv²) dv
    let r = (u - 1.0).sqrt();
    (2.0 / std::f64::consts::PI) * (r.atan() - r / u)
}

pub fn stationary_edge(beta: SymmetryClass) -> f64 {
    0.25 / beta.beta_f64()
}
