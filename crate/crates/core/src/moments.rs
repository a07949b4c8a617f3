//! Closed-form moments of the Wigner-Smith matrix, the linear moment ODE and
//! Monte Carlo estimates. All values are in units of `τ_ξ` (first moments)
//! and `τ_ξ²` (second moments).

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::params::{ModelParams, SdeConfig};
use crate::sde::{exp_functional_snapshots, qtilde_snapshots};
use crate::stats::{median_of_means, Estimate, RunningStats, MOM_BLOCKS};

/// `eˣ − 1 − x`, by series for `|x| < 1e-3`.
pub fn exp_m1_m_x(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        x * x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        x.exp_m1() - x
    }
}

/// `⟨tr Q⟩ = NL/k`, i.e. `2N L/ξ` in units of `τ_ξ`.
pub fn mean_trace(params: &ModelParams, length: f64) -> f64 {
    2.0 * params.n_channels as f64 * params.length_over_xi(length)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    /// `⟨(tr Q)²⟩`
    pub sq_tr: f64,
    /// `⟨tr Q²⟩`
    pub tr_sq: f64,
}

pub fn second_moments(params: &ModelParams, length: f64) -> SecondMoments {
    let t = params.length_over_xi(length);
    let n = params.n_channels as f64;
    let b = params.beta_f64();
    let e4 = exp_m1_m_x(4.0 * t);
    let e2 = exp_m1_m_x(-2.0 * b * t);
    let d = 1.0 + 0.5 * b;
    let growing = (1.0 + 0.5 * b * n) / d * e4;
    let sq_tr = 0.5 * n * (growing + (2.0 / b).powi(2) * (n - 1.0) / d * e2);
    let tr_sq = 0.5 * n * (growing - (2.0 / b) * (n - 1.0) / d * e2);
    SecondMoments { sq_tr, tr_sq }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// `⟨τ_a τ_b⟩`, `a ≠ b`.
    pub tau_ab: f64,
    /// `Cov(τ_a, τ_b)`.
    pub cov: f64,
    /// Large-L asymptote `−(2L/ξ)²`.
    pub cov_large_l: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProperTimeStats {
    pub tau_mean: f64,
    pub tau_sq: f64,
    /// Large-L asymptote `Nβ/(2(β+2)) e^{4L/ξ}`.
    pub tau_sq_large_l: f64,
    pair: Option<PairStats>,
}

impl ProperTimeStats {
    pub fn pair(&self) -> Result<&PairStats> {
        self.pair
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("pair statistics need at least two channels".into()))
    }
}

pub fn proper_time_stats(params: &ModelParams, length: f64) -> ProperTimeStats {
    let t = params.length_over_xi(length);
    let n = params.n_channels as f64;
    let b = params.beta_f64();
    let m = second_moments(params, length);
    let tau_mean = mean_trace(params, length) / n;
    let pair = (params.n_channels >= 2).then(|| {
        let tau_ab = (m.sq_tr - m.tr_sq) / (n * (n - 1.0));
        PairStats { tau_ab, cov: tau_ab - tau_mean * tau_mean, cov_large_l: -(2.0 * t).powi(2) }
    });
    ProperTimeStats {
        tau_mean,
        tau_sq: m.tr_sq / n,
        tau_sq_large_l: n * b / (2.0 * (b + 2.0)) * (4.0 * t).exp(),
        pair,
    }
}

/// Numerical solution of `d/dt [sq_tr; tr_sq] = 8N t [N; 1] + 4 M_β [sq_tr; tr_sq]`,
/// `t = L/ξ`, with `M_β = [[0, 1], [β/2, 1 − β/2]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentOde {
    pub sq_tr: f64,
    pub tr_sq: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub proj_plus: [[f64; 2]; 2],
    pub proj_minus: [[f64; 2]; 2],
}

pub fn moment_matrix(beta: f64) -> [[f64; 2]; 2] {
    [[0.0, 1.0], [0.5 * beta, 1.0 - 0.5 * beta]]
}

pub fn integrate_moment_ode(params: &ModelParams, length: f64) -> MomentOde {
    let t_end = params.length_over_xi(length);
    let n = params.n_channels as f64;
    let b = params.beta_f64();
    let m = moment_matrix(b);
    let rhs = |t: f64, y: [f64; 2]| {
        [
            8.0 * n * t * n + 4.0 * (m[0][0] * y[0] + m[0][1] * y[1]),
            8.0 * n * t + 4.0 * (m[1][0] * y[0] + m[1][1] * y[1]),
        ]
    };
    let steps = ((t_end / 2e-4).ceil() as usize).max(1000);
    let h = t_end / steps as f64;
    let mut y = [0.0, 0.0];
    let axpy = |y: [f64; 2], c: f64, k: [f64; 2]| [y[0] + c * k[0], y[1] + c * k[1]];
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k1));
        let k3 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k2));
        let k4 = rhs(t + h, axpy(y, h, k3));
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    let d = 1.0 + 0.5 * b;
    MomentOde {
        sq_tr: y[0],
        tr_sq: y[1],
        lambda_plus: 1.0,
        lambda_minus: -0.5 * b,
        proj_plus: [[0.5 * b / d, 1.0 / d], [0.5 * b / d, 1.0 / d]],
        proj_minus: [[1.0 / d, -1.0 / d], [-0.5 * b / d, 0.5 * b / d]],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McBackend {
    ExpFunctional,
    Qtilde,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean_tr: f64,
    pub tr_sq: f64,
    pub sq_tr: f64,
    pub cov_ab: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McMoments {
    pub n_traj: usize,
    pub mean_tr: Estimate,
    pub tr_sq: Estimate,
    pub sq_tr: Estimate,
    pub tau_ab: Option<Estimate>,
    pub cov_ab: Option<Estimate>,
    /// Median-of-means (16 blocks) versions of the three trace moments.
    pub mom_mean_tr: Estimate,
    pub mom_tr_sq: Estimate,
    pub mom_sq_tr: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n_channels: usize,
    pub beta: u8,
    pub l_over_xi: f64,
    pub closed_form: MomentSet,
    pub ode: MomentSet,
    pub mc: Option<McMoments>,
}

/// One Monte Carlo sample: `tr q` and `tr q²` with `q = Q̃/τ_ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub tr: f64,
    pub tr_sq: f64,
}

impl McMoments {
    pub fn from_samples(n_channels: usize, samples: &[TraceSample]) -> Self {
        let n = n_channels as f64;
        let tr: Vec<f64> = samples.iter().map(|s| s.tr).collect();
        let sq: Vec<f64> = samples.iter().map(|s| s.tr * s.tr).collect();
        let trsq: Vec<f64> = samples.iter().map(|s| s.tr_sq).collect();
        let mean_tr = RunningStats::from_slice(&tr).estimate();
        let (tau_ab, cov_ab) = if n_channels >= 2 {
            let pairs: Vec<f64> = samples.iter().map(|s| (s.tr * s.tr - s.tr_sq) / (n * (n - 1.0))).collect();
            let p = RunningStats::from_slice(&pairs).estimate();
            // Cov = ⟨τ_aτ_b⟩ − (⟨tr⟩/N)², delta-method standard error from the
            // per-sample influence function.
            let m = mean_tr.value / n;
            let infl: Vec<f64> = samples
                .iter()
                .zip(&pairs)
                .map(|(s, &pv)| pv - 2.0 * m * s.tr / n)
                .collect();
            let se = RunningStats::from_slice(&infl).stderr();
            (Some(p), Some(Estimate { value: p.value - m * m, stderr: se }))
        } else {
            (None, None)
        };
        let blocks = MOM_BLOCKS.min(samples.len());
        Self {
            n_traj: samples.len(),
            mean_tr,
            tr_sq: RunningStats::from_slice(&trsq).estimate(),
            sq_tr: RunningStats::from_slice(&sq).estimate(),
            tau_ab,
            cov_ab,
            mom_mean_tr: median_of_means(&tr, blocks),
            mom_tr_sq: median_of_means(&trsq, blocks),
            mom_sq_tr: median_of_means(&sq, blocks),
        }
    }
}

pub fn closed_form_set(params: &ModelParams, length: f64) -> MomentSet {
    let m = second_moments(params, length);
    let pts = proper_time_stats(params, length);
    MomentSet { mean_tr: mean_trace(params, length), tr_sq: m.tr_sq, sq_tr: m.sq_tr, cov_ab: pts.pair().ok().map(|p| p.cov) }
}

pub fn ode_set(params: &ModelParams, length: f64) -> MomentSet {
    let o = integrate_moment_ode(params, length);
    let n = params.n_channels as f64;
    let mean_tr = mean_trace(params, length);
    let cov_ab = (params.n_channels >= 2).then(|| {
        let m = mean_tr / n;
        (o.sq_tr - o.tr_sq) / (n * (n - 1.0)) - m * m
    });
    MomentSet { mean_tr, tr_sq: o.tr_sq, sq_tr: o.sq_tr, cov_ab }
}

impl MomentReport {
    pub fn analytic(params: &ModelParams, length: f64) -> Self {
        Self {
            n_channels: params.n_channels,
            beta: params.beta.beta(),
            l_over_xi: params.length_over_xi(length),
            closed_form: closed_form_set(params, length),
            ode: ode_set(params, length),
            mc: None,
        }
    }

    /// Rows `(quantity, closed, ode, mc, stderr)`.
    pub fn rows(&self) -> Vec<(&'static str, f64, f64, Option<f64>, Option<f64>)> {
        let mc = self.mc.as_ref();
        let mut rows = vec![
            ("mean_tr", self.closed_form.mean_tr, self.ode.mean_tr, mc.map(|m| m.mean_tr)),
            ("sq_tr", self.closed_form.sq_tr, self.ode.sq_tr, mc.map(|m| m.sq_tr)),
            ("tr_sq", self.closed_form.tr_sq, self.ode.tr_sq, mc.map(|m| m.tr_sq)),
        ];
        if let (Some(c), Some(o)) = (self.closed_form.cov_ab, self.ode.cov_ab) {
            rows.push(("cov_ab", c, o, mc.and_then(|m| m.cov_ab)));
        }
        rows.into_iter()
            .map(|(q, c, o, e)| (q, c, o, e.map(|e| e.value), e.map(|e| e.stderr)))
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(reports: &[MomentReport], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["N", "beta", "L_over_xi", "quantity", "closed", "ode", "mc", "stderr"])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in reports {
            for (q, c, o, m, s) in r.rows() {
                wr.write_record([
                    r.n_channels.to_string(),
                    r.beta.to_string(),
                    format!("{}", r.l_over_xi),
                    q.to_string(),
                    format!("{c:.12e}"),
                    format!("{o:.12e}"),
                    opt(m),
                    opt(s),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Trace samples at each of the ascending `lengths`, one path per trajectory.
pub fn mc_trace_samples(
    params: &ModelParams,
    lengths: &[f64],
    n_traj: usize,
    cfg: &SdeConfig,
    backend: McBackend,
    ensemble: &Ensemble,
) -> Result<Vec<Vec<TraceSample>>> {
    let tau = params.tau_xi();
    let per_traj = ensemble.try_map(n_traj, |stream| {
        let qs = match backend {
            McBackend::ExpFunctional => exp_functional_snapshots(params, lengths, cfg, stream)?,
            McBackend::Qtilde => qtilde_snapshots(params, lengths, cfg, stream)?,
        };
        Ok(qs
            .iter()
            .map(|q| TraceSample { tr: q.trace() / tau, tr_sq: q.trace_sq() / (tau * tau) })
            .collect::<Vec<_>>())
    })?;
    Ok((0..lengths.len()).map(|j| per_traj.iter().map(|t| t[j]).collect()).collect())
}

pub fn mc_moments(
    params: &ModelParams,
    length: f64,
    n_traj: usize,
    cfg: &SdeConfig,
    backend: McBackend,
    ensemble: &Ensemble,
) -> Result<MomentReport> {
    if n_traj < 2 {
        return Err(Error::InvalidParameter("need at least two trajectories".into()));
    }
    let samples = mc_trace_samples(params, &[length], n_traj, cfg, backend, ensemble)?.pop().unwrap();
    let mut r = MomentReport::analytic(params, length);
    r.mc = Some(McMoments::from_samples(params.n_channels, &samples));
    Ok(r)
}
