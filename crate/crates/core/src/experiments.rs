//! Configuration-driven experiments with asserted tolerances.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, Format};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::matrix::eigvals_hermitian;
use crate::microscopic::{build_potential, krein_friedel_prepared, max_cell_width, wigner_smith_central, PreparedPotential};
use crate::moments::{closed_form_set, mc_trace_samples, second_moments, McBackend, McMoments, MomentReport};
use crate::noise::{verify_correlator, NoiseSpec};
use crate::params::ModelParams;
use crate::resolvent::{
    density_from_resolvent, empirical_density, solve_resolvent, support_edges, DensityCurve, EmpiricalDensity, ResolventConfig,
};
use crate::rmt::{dufresne_limit_sample, sample_wishart_spectra, stationary_cdf, stationary_density, SpectralSample, WishartSpec};
use crate::rng::RngStream;
use crate::sde::{exp_functional, integrate_coupled, integrate_qtilde, lyapunov_spectrum, rider_valko_functional, LyapunovProcess};
use crate::stats::{ks_pvalue, ks_statistic, mean_estimate, median_of_means, Estimate, MOM_BLOCKS};

/// One asserted comparison. `stat` is the quantity held against `tolerance`
/// (a z-score, a relative or absolute error, or a p-value lower bound).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub stat: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn z(name: impl Into<String>, est: Estimate, target: f64, tol: f64) -> Self {
        let stat = est.z_against(target);
        Self { name: name.into(), value: est.value, target, stat, tolerance: tol, pass: stat <= tol }
    }

    pub fn z_between(name: impl Into<String>, a: Estimate, b: Estimate, tol: f64) -> Self {
        let stat = a.z_between(&b);
        Self { name: name.into(), value: a.value, target: b.value, stat, tolerance: tol, pass: stat <= tol }
    }

    pub fn rel(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let stat = ((value - target) / target).abs();
        Self { name: name.into(), value, target, stat, tolerance: tol, pass: stat <= tol }
    }

    pub fn upper(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, target: 0.0, stat: value, tolerance: tol, pass: value <= tol }
    }

    pub fn lower(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, target: bound, stat: value, tolerance: bound, pass: value >= bound }
    }
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub format: Format,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub experiment: ExperimentKind,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: ExperimentKind,
    passed: bool,
    checks: &'a [Check],
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    experiment: ExperimentKind,
    master_seed: u64,
    passed: bool,
    files: Vec<String>,
    wall_time_s: f64,
    timestamp_unix: u64,
    config: &'a ExperimentConfig,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn csv(name: &str, bytes: Vec<u8>) -> Artifact {
    Artifact { name: name.into(), format: Format::Csv, bytes }
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let ens = Ensemble::new(cfg.sim.master_seed).with_workers(workers);
    let (checks, artifacts) = match cfg.experiment {
        ExperimentKind::NoiseCheck => noise_check(cfg)?,
        ExperimentKind::Moments => moments(cfg, &ens)?,
        ExperimentKind::Dufresne => dufresne(cfg, &ens)?,
        ExperimentKind::CoupledVsDecoupled => coupled_vs_decoupled(cfg, &ens)?,
        ExperimentKind::RiderValko => rider_valko(cfg, &ens)?,
        ExperimentKind::Lyapunov => lyapunov(cfg)?,
        ExperimentKind::MicroscopicCheck => microscopic_check(cfg, &ens)?,
        ExperimentKind::Resolvent => resolvent(cfg, &ens)?,
    };
    Ok(ExperimentResult { experiment: cfg.experiment, checks, artifacts })
}

/// Writes data files for the selected formats, `summary.json` and `manifest.json`.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, wall_time_s: f64) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in result.artifacts.iter().filter(|a| cfg.output.wants(a.format)) {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.bytes)?;
        written.push(p);
    }
    if cfg.output.wants(Format::Json) {
        let s = Summary { experiment: result.experiment, passed: result.passed(), checks: &result.checks };
        let p = dir.join("summary.json");
        std::fs::write(&p, serde_json::to_vec_pretty(&s)?)?;
        written.push(p);
    }
    if cfg.output.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = result
            .checks
            .iter()
            .map(|c| vec![c.name.clone(), fmt(c.value), fmt(c.target), fmt(c.stat), fmt(c.tolerance), c.pass.to_string()])
            .collect();
        let p = dir.join("checks.csv");
        std::fs::write(&p, csv_table(&["check", "value", "target", "stat", "tolerance", "pass"], &rows)?)?;
        written.push(p);
    }
    let files = written.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    let timestamp_unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        experiment: result.experiment,
        master_seed: cfg.sim.master_seed,
        passed: result.passed(),
        files,
        wall_time_s,
        timestamp_unix,
        config: cfg,
    };
    let p = dir.join("manifest.json");
    std::fs::write(&p, serde_json::to_vec_pretty(&m)?)?;
    written.push(p);
    Ok(written)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::InvalidParameter(_) | Error::CoarseGrid { .. } | Error::Unsupported(_) => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

/// Runs, writes outputs and maps the outcome to the exit-code contract.
pub fn run(cfg: &ExperimentConfig, workers: Option<usize>) -> (i32, Result<ExperimentResult>) {
    let t0 = Instant::now();
    let result = match run_experiment(cfg, workers) {
        Ok(r) => r,
        Err(e) => return (exit_code_for(&e), Err(e)),
    };
    if let Err(e) = write_outputs(cfg, &result, t0.elapsed().as_secs_f64()) {
        return (EXIT_NUMERICAL, Err(e));
    }
    let code = if result.passed() { EXIT_OK } else { EXIT_TOLERANCE };
    (code, Ok(result))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSettings {
    #[serde(default)]
    z_tol: Option<f64>,
}

fn noise_check(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: NoiseSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(4.0);
    let spec = NoiseSpec::new(cfg.model.n_channels, cfg.model.beta, cfg.sim.dx)?;
    let rep = verify_correlator(&spec, cfg.sim.n_traj, RngStream::new(cfg.sim.master_seed, 0))?;
    let rows: Vec<Vec<String>> = rep
        .entries
        .iter()
        .map(|e| {
            let [a, b, c, d] = e.index;
            vec![
                a.to_string(),
                b.to_string(),
                c.to_string(),
                d.to_string(),
                fmt(e.expected),
                fmt(e.mean_re),
                fmt(e.mean_im),
                fmt(e.stderr_re),
                fmt(e.stderr_im),
                fmt(e.z_score()),
            ]
        })
        .collect();
    let table = csv_table(&["a", "b", "c", "d", "expected", "mean_re", "mean_im", "stderr_re", "stderr_im", "z"], &rows)?;
    let checks = vec![Check::upper("correlator_max_z", rep.max_z(), tol)];
    Ok((checks, vec![csv("correlator.csv", table)]))
}

fn default_lengths() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_backend() -> McBackend {
    McBackend::Qtilde
}
fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentSettings {
    /// `L/ξ` values.
    #[serde(default = "default_lengths")]
    lengths: Vec<f64>,
    #[serde(default = "default_backend")]
    backend: McBackend,
    #[serde(default)]
    z_tol: Option<f64>,
}

fn moments(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: MomentSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(3.0);
    let p = cfg.model;
    let mut lengths = st.lengths.clone();
    if lengths.iter().any(|l| !(*l > 0.0)) || lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("lengths must be positive and increasing".into()));
    }
    lengths.iter_mut().for_each(|l| *l *= p.xi());
    let mut reports: Vec<MomentReport> = lengths.iter().map(|&l| MomentReport::analytic(&p, l)).collect();
    for (i, r) in reports.iter().enumerate() {
        let v = [r.closed_form.sq_tr, r.closed_form.tr_sq, r.ode.sq_tr, r.ode.tr_sq];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { process: "moment closed forms", step: i });
        }
    }
    let mut checks = Vec::new();
    for r in &reports {
        let tag = format!("L{}", r.l_over_xi);
        checks.push(Check::rel(format!("{tag}_ode_sq_tr"), r.ode.sq_tr, r.closed_form.sq_tr, 1e-8));
        checks.push(Check::rel(format!("{tag}_ode_tr_sq"), r.ode.tr_sq, r.closed_form.tr_sq, 1e-8));
    }
    if cfg.sim.n_traj >= 2 {
        let samples = mc_trace_samples(&p, &lengths, cfg.sim.n_traj, &cfg.sim.sde(), st.backend, ens)?;
        for (r, s) in reports.iter_mut().zip(&samples) {
            let mc = McMoments::from_samples(p.n_channels, s);
            let tag = format!("L{}", r.l_over_xi);
            checks.push(Check::z(format!("{tag}_mean_tr"), mc.mean_tr, r.closed_form.mean_tr, tol));
            checks.push(Check::z(format!("{tag}_sq_tr_mom"), mc.mom_sq_tr, r.closed_form.sq_tr, tol));
            checks.push(Check::z(format!("{tag}_tr_sq_mom"), mc.mom_tr_sq, r.closed_form.tr_sq, tol));
            r.mc = Some(mc);
        }
    }
    let table = csv_bytes(|b| MomentReport::write_csv(&reports, b))?;
    Ok((checks, vec![csv("moments.csv", table)]))
}

fn default_dufresne_length() -> f64 {
    8.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DufresneSettings {
    #[serde(default = "default_dufresne_length")]
    l_over_xi: f64,
    /// Direct Laguerre draws; defaults to `n_traj`.
    #[serde(default)]
    wishart_draws: Option<usize>,
    #[serde(default)]
    z_tol: Option<f64>,
}

pub const KS_SIGNIFICANCE: f64 = 0.01;

fn dufresne(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: DufresneSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(3.0);
    let p = cfg.model;
    let sde = cfg.sim.sde();
    let draws = ens.try_map(cfg.sim.n_traj, |s| {
        let d = dufresne_limit_sample(&p, st.l_over_xi, &sde, s)?;
        eigvals_hermitian(&d.gamma)
    })?;
    let gamma = SpectralSample { draws };
    let spec = WishartSpec::wire(p.n_channels, p.beta);
    let wish_ens = ens.with_base(1 << 40);
    let wish = sample_wishart_spectra(&spec, st.wishart_draws.unwrap_or(cfg.sim.n_traj), &wish_ens)?;
    let exact = 2.0 * p.n_channels as f64 * p.mu();
    let g_tr = mean_estimate(&gamma.traces());
    let g_sq = mean_estimate(&gamma.trace_squares());
    let w_tr = mean_estimate(&wish.traces());
    let w_sq = mean_estimate(&wish.trace_squares());
    let mut checks = vec![
        Check::z("functional_mean_trace", g_tr, exact, tol),
        Check::z("wishart_mean_trace", w_tr, exact, tol),
        Check::z_between("mean_trace_vs_wishart", g_tr, w_tr, tol),
        Check::z_between("mean_trace_square_vs_wishart", g_sq, w_sq, tol),
    ];
    if p.n_channels == 1 {
        let xs: Vec<f64> = gamma.draws.iter().map(|d| d[0]).collect();
        let d = ks_statistic(&xs, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-0.5 * x).exp() });
        checks.push(Check::lower("ks_exponential_pvalue", ks_pvalue(d, xs.len()), KS_SIGNIFICANCE));
    }
    let rows = vec![
        vec!["tr".into(), fmt(g_tr.value), fmt(g_tr.stderr), fmt(w_tr.value), fmt(w_tr.stderr), fmt(exact)],
        vec!["tr_sq".into(), fmt(g_sq.value), fmt(g_sq.stderr), fmt(w_sq.value), fmt(w_sq.stderr), String::new()],
    ];
    let table = csv_table(&["quantity", "functional", "functional_stderr", "wishart", "wishart_stderr", "exact"], &rows)?;
    Ok((
        checks,
        vec![
            csv("dufresne.csv", table),
            csv("gamma_spectra.csv", csv_bytes(|b| gamma.write_csv(b))?),
            csv("wishart_spectra.csv", csv_bytes(|b| wish.write_csv(b))?),
        ],
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LengthSettings {
    #[serde(default = "default_one")]
    l_over_xi: f64,
    #[serde(default)]
    z_tol: Option<f64>,
}

/// First and second moments of a trace sample, plain and median-of-means.
fn trace_moments(tr: &[f64]) -> (Estimate, Estimate) {
    let sq: Vec<f64> = tr.iter().map(|t| t * t).collect();
    (mean_estimate(tr), median_of_means(&sq, MOM_BLOCKS.min(sq.len())))
}

fn comparison_rows(names: [&str; 2], a: &[Estimate], b: &[Estimate], exact: &[f64]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = (0..a.len())
        .map(|i| {
            let q = if i == 0 { "mean_tr" } else { "sq_tr" };
            vec![q.into(), fmt(a[i].value), fmt(a[i].stderr), fmt(b[i].value), fmt(b[i].stderr), fmt(exact[i])]
        })
        .collect();
    let h0 = format!("{}_stderr", names[0]);
    let h1 = format!("{}_stderr", names[1]);
    csv_table(&["quantity", names[0], &h0, names[1], &h1, "closed"], &rows)
}

fn coupled_vs_decoupled(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: LengthSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(3.0);
    let p = cfg.model;
    let sde = cfg.sim.sde();
    let length = st.l_over_xi * p.xi();
    let tau = p.tau_xi();
    let coupled = ens.try_map(cfg.sim.n_traj, |s| Ok(integrate_coupled(&p, length, &sde, s)?.q.trace() / tau))?;
    let other = ens.with_base(1 << 40);
    let qt = other.try_map(cfg.sim.n_traj, |s| Ok(integrate_qtilde(&p, length, &sde, s)?.trace() / tau))?;
    let (c1, c2) = trace_moments(&coupled);
    let (d1, d2) = trace_moments(&qt);
    let cf = closed_form_set(&p, length);
    let checks = vec![Check::z_between("mean_tr", c1, d1, tol), Check::z_between("sq_tr", c2, d2, tol)];
    let table = comparison_rows(["coupled", "decoupled"], &[c1, c2], &[d1, d2], &[cf.mean_tr, cf.sq_tr])?;
    Ok((checks, vec![csv("coupled_vs_decoupled.csv", table)]))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiderValkoSettings {
    #[serde(default = "default_one")]
    l_over_xi: f64,
    /// Drift; defaults to the wire's `μ`.
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default)]
    z_tol: Option<f64>,
}

fn rider_valko(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: RiderValkoSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(3.0);
    let p = cfg.model;
    let sde = cfg.sim.sde();
    let mu = st.mu.unwrap_or(p.mu());
    if (mu - p.mu()).abs() > 1e-12 {
        return Err(Error::Unsupported("the Hermitian reference process uses the wire's drift".into()));
    }
    let rv = ens.try_map(cfg.sim.n_traj, |s| {
        Ok(rider_valko_functional(mu, p.n_channels, p.beta, st.l_over_xi, &sde, s)?.trace())
    })?;
    let other = ens.with_base(1 << 40);
    let two_tau = 2.0 * p.tau_xi();
    let lam = other.try_map(cfg.sim.n_traj, |s| {
        Ok(exp_functional(&p, st.l_over_xi * p.xi(), &sde, s)?.trace() / two_tau)
    })?;
    let (a1, a2) = trace_moments(&rv);
    let (b1, b2) = trace_moments(&lam);
    let cf = closed_form_set(&p, st.l_over_xi * p.xi());
    // ∫Λ†Λ = Q̃/(2τ_ξ), so the closed forms scale by 1/2 and 1/4.
    let exact = [0.5 * cf.mean_tr, 0.25 * cf.sq_tr];
    let checks = vec![Check::z_between("mean_tr", a1, b1, tol), Check::z_between("sq_tr", a2, b2, tol)];
    let table = comparison_rows(["non_hermitian", "hermitian"], &[a1, a2], &[b1, b2], &exact)?;
    Ok((checks, vec![csv("rider_valko.csv", table)]))
}

fn default_lyapunov_length() -> f64 {
    1000.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovSettings {
    #[serde(default = "default_lyapunov_length")]
    l_over_xi: f64,
    #[serde(default)]
    z_tol: Option<f64>,
}

/// Noise-only exponents `(β/2)(N − 2n + 1)`, `n = 1..N`.
pub fn noise_only_exponents(p: &ModelParams) -> Vec<f64> {
    let n = p.n_channels as f64;
    (1..=p.n_channels).map(|i| 0.5 * p.beta_f64() * (n - 2.0 * i as f64 + 1.0)).collect()
}

fn lyapunov(cfg: &ExperimentConfig) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: LyapunovSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(3.0);
    let p = cfg.model;
    let sde = cfg.sim.sde();
    let seed = cfg.sim.master_seed;
    let noise = lyapunov_spectrum(&p, st.l_over_xi, LyapunovProcess::NoiseOnly, &sde, RngStream::new(seed, 0))?;
    let lam = lyapunov_spectrum(&p, st.l_over_xi, LyapunovProcess::Lambda, &sde, RngStream::new(seed, 1))?;
    let theory = noise_only_exponents(&p);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (i, (e, t)) in noise.iter().zip(&theory).enumerate() {
        checks.push(Check::z(format!("noise_only_{}", i + 1), Estimate { value: e.value, stderr: e.stderr }, *t, tol));
        rows.push(vec!["noise-only".into(), (i + 1).to_string(), fmt(e.value), fmt(e.stderr), fmt(*t)]);
    }
    for (i, e) in lam.iter().enumerate() {
        let t = theory[i] - p.mu();
        rows.push(vec!["lambda".into(), (i + 1).to_string(), fmt(e.value), fmt(e.stderr), fmt(t)]);
    }
    checks.push(Check::z("lambda_top", Estimate { value: lam[0].value, stderr: lam[0].stderr }, -1.0, tol));
    let table = csv_table(&["process", "index", "value", "stderr", "theory"], &rows)?;
    Ok((checks, vec![csv("lyapunov.csv", table)]))
}

fn default_delta_rel() -> f64 {
    1e-7
}
fn default_kf_count() -> usize {
    10
}
fn default_sq_rel() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MicroscopicSettings {
    #[serde(default = "default_one")]
    l_over_xi: f64,
    /// Cell width; defaults to the largest admissible.
    #[serde(default)]
    h: Option<f64>,
    /// `δε/ε` for the energy derivative.
    #[serde(default = "default_delta_rel")]
    delta_rel: f64,
    /// Realizations checked against the Krein-Friedel identity.
    #[serde(default = "default_kf_count")]
    kf_realizations: usize,
    /// Length used for the Krein-Friedel realizations; defaults to `1000/k`.
    #[serde(default)]
    kf_length: Option<f64>,
    #[serde(default)]
    z_tol: Option<f64>,
    #[serde(default = "default_sq_rel")]
    sq_rel_tol: f64,
}

pub const KREIN_FRIEDEL_TOL: f64 = 1e-6;

fn microscopic_check(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: MicroscopicSettings = cfg.settings()?;
    let tol = st.z_tol.unwrap_or(3.0);
    let p = cfg.model;
    p.check_weak_disorder();
    let h = st.h.unwrap_or_else(|| max_cell_width(&p));
    let energy = p.k * p.k;
    let delta = st.delta_rel * energy;
    let length = {
        let n = (st.l_over_xi * p.xi() / h).round();
        n * h
    };
    let tau = p.tau_xi();
    let trq = ens.try_map(cfg.sim.n_traj, |s| {
        let pot = build_potential(&p, h, length, s)?;
        let pp = PreparedPotential::new(&pot)?;
        Ok(wigner_smith_central(&pp, energy, delta)?.trace() / tau)
    })?;
    let kf_len = st.kf_length.unwrap_or(1000.0 / p.k);
    let kf_len = (kf_len / h).round() * h;
    let kf_ens = ens.with_base(1 << 40);
    let kf = kf_ens.try_map(st.kf_realizations, |s| {
        let pot = build_potential(&p, h, kf_len, s)?;
        let pp = PreparedPotential::new(&pot)?;
        Ok(krein_friedel_prepared(&pp, energy, delta)?.residual)
    })?;
    let (m1, m2) = trace_moments(&trq);
    let m2_plain = mean_estimate(&trq.iter().map(|t| t * t).collect::<Vec<_>>());
    let exact1 = closed_form_set(&p, length).mean_tr;
    let exact2 = second_moments(&p, length).sq_tr;
    let mut checks = vec![Check::z("mean_tr", m1, exact1, tol), Check::rel("sq_tr", m2_plain.value, exact2, st.sq_rel_tol)];
    if !kf.is_empty() {
        checks.push(Check::upper("krein_friedel_max_residual", kf.iter().cloned().fold(0.0, f64::max), KREIN_FRIEDEL_TOL));
    }
    let rows: Vec<Vec<String>> = trq.iter().enumerate().map(|(i, t)| vec![i.to_string(), fmt(*t)]).collect();
    let per = csv_table(&["realization", "tr_q_over_tau_xi"], &rows)?;
    let summary = csv_table(
        &["quantity", "mc", "stderr", "mom", "mom_stderr", "closed"],
        &[
            vec!["mean_tr".into(), fmt(m1.value), fmt(m1.stderr), String::new(), String::new(), fmt(exact1)],
            vec!["sq_tr".into(), fmt(m2_plain.value), fmt(m2_plain.stderr), fmt(m2.value), fmt(m2.stderr), fmt(exact2)],
        ],
    )?;
    let kf_rows: Vec<Vec<String>> = kf.iter().enumerate().map(|(i, r)| vec![i.to_string(), fmt(*r)]).collect();
    Ok((
        checks,
        vec![
            csv("microscopic.csv", summary),
            csv("microscopic_samples.csv", per),
            csv("krein_friedel.csv", csv_table(&["realization", "residual"], &kf_rows)?),
        ],
    ))
}

fn default_s_grid() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0, 3.0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmpiricalSettings {
    s: Vec<f64>,
    n_draws: usize,
    #[serde(default = "default_bins")]
    bins: usize,
}

fn default_bins() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolventSettings {
    #[serde(default = "default_s_grid")]
    s_grid: Vec<f64>,
    #[serde(default)]
    eps: Option<Vec<f64>>,
    #[serde(default)]
    d_lambda: Option<f64>,
    /// Compare against the stationary density at this `s`.
    #[serde(default)]
    stationary_s: Option<f64>,
    /// Grid step for the stationary solve, whose window scales like `s²`.
    #[serde(default = "default_stationary_step")]
    stationary_d_lambda: f64,
    #[serde(default)]
    empirical: Option<EmpiricalSettings>,
}

fn default_stationary_step() -> f64 {
    1e-2
}

pub const MASS_DRIFT_TOL: f64 = 1e-3;
pub const SLOPE_TOL: f64 = 5e-3;
pub const STATIONARY_L1_TOL: f64 = 0.02;
pub const EMPIRICAL_L1_TOL: f64 = 0.05;

pub fn resolvent_config(beta: crate::matrix::SymmetryClass, s_grid: Vec<f64>, eps: Option<Vec<f64>>, d_lambda: Option<f64>) -> ResolventConfig {
    let mut rc = ResolventConfig::new(beta, s_grid);
    if let Some(e) = eps {
        rc.eps = e;
    }
    if let Some(d) = d_lambda {
        rc.d_lambda = d;
    }
    rc
}

/// Largest `|Δ mass| / Δs` between consecutive curves.
pub fn mass_drift(curves: &[DensityCurve]) -> f64 {
    curves.windows(2).map(|w| (w[1].mass() - w[0].mass()).abs() / (w[1].s - w[0].s)).fold(0.0, f64::max)
}

/// Least-squares slope of `m₁(s)`.
pub fn first_moment_slope(curves: &[DensityCurve]) -> f64 {
    let n = curves.len() as f64;
    let (sx, sy) = curves.iter().fold((0.0, 0.0), |a, c| (a.0 + c.s, a.1 + c.first_moment()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = curves.iter().fold((0.0, 0.0), |a, c| (a.0 + (c.s - mx) * (c.first_moment() - my), a.1 + (c.s - mx).powi(2)));
    num / den
}

/// `∫|ρ − ρ_∞|` over the grid plus the stationary mass beyond it.
pub fn stationary_l1(curve: &DensityCurve, beta: crate::matrix::SymmetryClass) -> f64 {
    let hi = *curve.lambda_grid.last().expect("non-empty grid");
    curve.l1_distance(|l| stationary_density(beta, l)) + (1.0 - stationary_cdf(beta, hi))
}

fn resolvent(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(Vec<Check>, Vec<Artifact>)> {
    let st: ResolventSettings = cfg.settings()?;
    let beta = cfg.model.beta;
    let rc = resolvent_config(beta, st.s_grid.clone(), st.eps.clone(), st.d_lambda);
    let field = solve_resolvent(&rc)?;
    let curves = st.s_grid.iter().map(|&s| density_from_resolvent(&field, s)).collect::<Result<Vec<_>>>()?;
    let mut checks = vec![Check::upper("herglotz_max_im_g", field.max_im().max(0.0), 1e-10)];
    if curves.len() >= 2 {
        checks.push(Check::upper("mass_drift_per_unit_s", mass_drift(&curves), MASS_DRIFT_TOL));
        checks.push(Check::rel("first_moment_slope", first_moment_slope(&curves), 1.0, SLOPE_TOL));
    }
    let mut artifacts = vec![csv("resolvent_field.csv", csv_bytes(|b| field.write_csv(b))?)];
    let mut curves = curves;
    if let Some(s_inf) = st.stationary_s {
        let rc = resolvent_config(beta, vec![s_inf], st.eps.clone(), Some(st.stationary_d_lambda));
        let f = solve_resolvent(&rc)?;
        let c = density_from_resolvent(&f, s_inf)?;
        checks.push(Check::upper("stationary_l1", stationary_l1(&c, beta), STATIONARY_L1_TOL));
        let (lo, _) = support_edges(beta, s_inf)?;
        let edge = 0.25 / beta.beta_f64();
        checks.push(Check::upper("stationary_edge_in_grid_steps", (lo - edge).abs() / rc.d_lambda, 2.0));
        curves.push(c);
    }
    artifacts.push(csv("density.csv", csv_bytes(|b| DensityCurve::write_all(&curves, b))?));
    if let Some(e) = &st.empirical {
        let bins = e
            .s
            .iter()
            .map(|&s| Ok((0.0, 1.05 * support_edges(beta, s)?.1, e.bins)))
            .collect::<Result<Vec<_>>>()?;
        let emp = empirical_density(&cfg.model, &e.s, e.n_draws, &cfg.sim.sde(), &bins, ens)?;
        let rc = resolvent_config(beta, e.s.clone(), st.eps.clone(), st.d_lambda);
        let f = solve_resolvent(&rc)?;
        for h in &emp {
            let c = density_from_resolvent(&f, h.s)?;
            checks.push(Check::upper(format!("empirical_l1_s{}", h.s), h.l1_distance(&c), EMPIRICAL_L1_TOL));
            checks.push(Check::z(format!("empirical_mean_s{}", h.s), Estimate { value: h.mean, stderr: h.mean_stderr }, h.s, 3.0));
        }
        artifacts.push(csv("empirical_density.csv", csv_bytes(|b| EmpiricalDensity::write_all(&emp, b))?));
    }
    Ok((checks, artifacts))
}
