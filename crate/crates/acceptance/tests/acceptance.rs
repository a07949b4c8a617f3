//! Acceptance gate. One test per criterion; each prints `criterion <k>: PASS|FAIL`
//! followed by the individual comparisons.
//!
//! Run with `cargo test --release -p wigner-smith-acceptance`.

use std::io::Write;

use wigner_smith::config::{ExperimentConfig, ExperimentKind};
use wigner_smith::ensemble::Ensemble;
use wigner_smith::experiments::{self, first_moment_slope, mass_drift, resolvent_config, stationary_l1, Check};
use wigner_smith::matrix::eigvals_hermitian;
use wigner_smith::microscopic::{build_potential, krein_friedel_prepared, max_cell_width, PreparedPotential};
use wigner_smith::moments::{closed_form_set, integrate_moment_ode, mc_trace_samples, second_moments, McBackend, McMoments};
use wigner_smith::noise::{verify_correlator, NoiseSpec};
use wigner_smith::resolvent::{density_from_resolvent, empirical_density, solve_resolvent, support_edges};
use wigner_smith::rmt::{dufresne_limit_sample, mcmc_wishart, sample_wishart_spectra, SpectralSample, WishartSpec};
use wigner_smith::sde::{
    exp_functional, integrate_coupled, integrate_qtilde, lyapunov_spectrum, rider_valko_functional, LyapunovProcess,
};
use wigner_smith::stats::{ks_pvalue, ks_statistic, mean_estimate, Estimate};
use wigner_smith::{ModelParams, RngStream, SdeConfig, SymmetryClass};

const SEED: u64 = 20_240_601;
const BETAS: [SymmetryClass; 2] = [SymmetryClass::Orthogonal, SymmetryClass::Unitary];

/// Written to stderr directly so the lines survive libtest's output capture.
fn report(k: &str, checks: &[Check]) {
    let pass = checks.iter().all(|c| c.pass);
    let mut out = format!("criterion {k}: {} ({} comparisons)\n", if pass { "PASS" } else { "FAIL" }, checks.len());
    for c in checks {
        out += &format!(
            "    {} {:<44} value={:<14.6e} target={:<14.6e} stat={:<10.3e} tol={:.3e}\n",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.target,
            c.stat,
            c.tolerance
        );
    }
    std::io::stderr().lock().write_all(out.as_bytes()).unwrap();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    assert!(failed.is_empty(), "criterion {k} failed: {failed:?}");
}

fn tag(p: &ModelParams) -> String {
    format!("N{}_b{}", p.n_channels, p.beta.beta())
}

fn sde() -> SdeConfig {
    SdeConfig::with_dx(1e-3)
}

#[test]
fn criterion_01_noise_correlator() {
    let mut checks = Vec::new();
    for (i, (n, beta)) in [(2, SymmetryClass::Orthogonal), (2, SymmetryClass::Unitary), (4, SymmetryClass::Orthogonal)]
        .into_iter()
        .enumerate()
    {
        let spec = NoiseSpec::new(n, beta, 1e-3).unwrap();
        let rep = verify_correlator(&spec, 1_000_000, RngStream::new(SEED, i as u64)).unwrap();
        checks.push(Check::upper(format!("N{n}_b{}_max_z", beta.beta()), rep.max_z(), 4.0));
    }
    report("1", &checks);
}

#[test]
fn criterion_02_mean_trace() {
    let lengths = [0.5, 1.0, 2.0];
    let mut checks = Vec::new();
    for n in [1, 2, 4] {
        for beta in BETAS {
            let p = ModelParams::unit(n, beta);
            for (b, backend) in [McBackend::ExpFunctional, McBackend::Qtilde].into_iter().enumerate() {
                let ens = Ensemble::new(SEED).with_base(((n as u64) << 32) + ((beta.beta() as u64) << 24) + ((b as u64) << 16));
                let samples = mc_trace_samples(&p, &lengths, 10_000, &sde(), backend, &ens).unwrap();
                for (l, s) in lengths.iter().zip(&samples) {
                    let est = mean_estimate(&s.iter().map(|t| t.tr).collect::<Vec<_>>());
                    let exact = closed_form_set(&p, *l).mean_tr;
                    let name = format!("{}_{backend:?}_L{l}", tag(&p));
                    checks.push(Check::z(format!("{name}_z"), est, exact, 3.0));
                    checks.push(Check::rel(format!("{name}_rel"), est.value, exact, 0.01));
                }
            }
        }
    }
    report("2", &checks);
}

#[test]
fn criterion_03_second_moments() {
    let lengths = [0.5, 1.0, 1.5];
    let mut checks = Vec::new();
    for n in [1, 2, 3] {
        for beta in BETAS {
            let p = ModelParams::unit(n, beta);
            let ens = Ensemble::new(SEED).with_base(((n as u64) << 32) + ((beta.beta() as u64) << 24));
            let samples = mc_trace_samples(&p, &lengths, 30_000, &sde(), McBackend::Qtilde, &ens).unwrap();
            for (l, s) in lengths.iter().zip(&samples) {
                let mc = McMoments::from_samples(n, s);
                let cf = second_moments(&p, *l);
                let name = format!("{}_L{l}", tag(&p));
                checks.push(Check::z(format!("{name}_sq_tr_mom"), mc.mom_sq_tr, cf.sq_tr, 3.0));
                checks.push(Check::z(format!("{name}_tr_sq_mom"), mc.mom_tr_sq, cf.tr_sq, 3.0));
            }
        }
    }
    for beta in BETAS {
        for l in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let cf = second_moments(&ModelParams::unit(1, beta), l);
            checks.push(Check::upper(format!("N1_b{}_L{l}_degeneracy", beta.beta()), ((cf.sq_tr - cf.tr_sq) / cf.sq_tr).abs(), 1e-12));
        }
    }
    report("3", &checks);
}

#[test]
fn criterion_04_ode_vs_closed_form() {
    let mut checks = Vec::new();
    for n in 1..=4 {
        for beta in BETAS {
            let p = ModelParams::unit(n, beta);
            for l in [0.1, 0.5, 1.0, 1.5, 2.0, 3.0] {
                let ode = integrate_moment_ode(&p, l);
                let cf = second_moments(&p, l);
                let name = format!("{}_L{l}", tag(&p));
                checks.push(Check::rel(format!("{name}_sq_tr"), ode.sq_tr, cf.sq_tr, 1e-8));
                checks.push(Check::rel(format!("{name}_tr_sq"), ode.tr_sq, cf.tr_sq, 1e-8));
            }
        }
    }
    report("4", &checks);
}

fn gamma_spectra(p: &ModelParams, n_draws: usize, base: u64) -> SpectralSample {
    let ens = Ensemble::new(SEED).with_base(base);
    let draws = ens
        .try_map(n_draws, |s| eigvals_hermitian(&dufresne_limit_sample(p, 8.0, &sde(), s)?.gamma))
        .unwrap();
    SpectralSample { draws }
}

#[test]
fn criterion_05_dufresne() {
    let mut checks = Vec::new();
    for beta in BETAS {
        let p = ModelParams::unit(1, beta);
        let g = gamma_spectra(&p, 10_000, (beta.beta() as u64) << 32);
        let xs: Vec<f64> = g.draws.iter().map(|d| d[0]).collect();
        let d = ks_statistic(&xs, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-0.5 * x).exp() });
        checks.push(Check::lower(format!("a_N1_b{}_ks_pvalue", beta.beta()), ks_pvalue(d, xs.len()), 0.01));
    }
    for n in [2, 3] {
        for beta in BETAS {
            let p = ModelParams::unit(n, beta);
            let name = tag(&p);
            let exact = 2.0 * n as f64 * p.mu();
            let g = gamma_spectra(&p, 10_000, ((n as u64) << 40) + ((beta.beta() as u64) << 32));
            let spec = WishartSpec::wire(n, beta);
            let w = sample_wishart_spectra(&spec, 10_000, &Ensemble::new(SEED).with_base(((n as u64) << 40) + ((beta.beta() as u64) << 32) + (1 << 36))).unwrap();
            let mc = mcmc_wishart(&spec, 200_000, 2_000, 10, RngStream::new(SEED, ((n as u64) << 8) + beta.beta() as u64)).unwrap();
            let g_tr = mean_estimate(&g.traces());
            checks.push(Check::z(format!("b_{name}_functional_mean_trace"), g_tr, exact, 3.0));
            checks.push(Check::z(format!("b_{name}_mcmc_oracle_mean_trace"), batch(&mc.traces()), exact, 3.0));
            checks.push(Check::z_between(format!("c_{name}_trace_vs_wishart"), g_tr, mean_estimate(&w.traces()), 3.0));
            checks.push(Check::z_between(
                format!("c_{name}_trace_square_vs_wishart"),
                mean_estimate(&g.trace_squares()),
                mean_estimate(&w.trace_squares()),
                3.0,
            ));
        }
    }
    report("5", &checks);
}

/// Batch-means error for correlated chains.
fn batch(xs: &[f64]) -> Estimate {
    wigner_smith::stats::batch_means(xs, 50)
}

fn pair_moments(xs: &[(f64, f64)]) -> [Estimate; 3] {
    let tr: Vec<f64> = xs.iter().map(|x| x.0).collect();
    let sq: Vec<f64> = xs.iter().map(|x| x.0 * x.0).collect();
    let trsq: Vec<f64> = xs.iter().map(|x| x.1).collect();
    [mean_estimate(&tr), mean_estimate(&sq), mean_estimate(&trsq)]
}

#[test]
fn criterion_06_decoupling() {
    let mut checks = Vec::new();
    for beta in BETAS {
        let p = ModelParams::unit(2, beta);
        let tau = p.tau_xi();
        let base = (beta.beta() as u64) << 32;
        let c = Ensemble::new(SEED)
            .with_base(base)
            .try_map(10_000, |s| {
                let q = integrate_coupled(&p, 1.0, &sde(), s)?.q;
                Ok((q.trace() / tau, q.trace_sq() / (tau * tau)))
            })
            .unwrap();
        let d = Ensemble::new(SEED)
            .with_base(base + (1 << 20))
            .try_map(10_000, |s| {
                let q = integrate_qtilde(&p, 1.0, &sde(), s)?;
                Ok((q.trace() / tau, q.trace_sq() / (tau * tau)))
            })
            .unwrap();
        let (a, b) = (pair_moments(&c), pair_moments(&d));
        for (i, q) in ["mean_tr", "sq_tr", "tr_sq"].iter().enumerate() {
            checks.push(Check::z_between(format!("{}_{q}", tag(&p)), a[i], b[i], 3.0));
        }
    }
    report("6", &checks);
}

#[test]
fn criterion_07_gauge_equivalence() {
    let mut checks = Vec::new();
    for beta in BETAS {
        let p = ModelParams::unit(2, beta);
        let base = (beta.beta() as u64) << 32;
        let rv = Ensemble::new(SEED)
            .with_base(base)
            .try_map(10_000, |s| {
                let f = rider_valko_functional(p.mu(), 2, beta, 1.0, &sde(), s)?;
                Ok((f.trace(), f.trace_sq()))
            })
            .unwrap();
        let two_tau = 2.0 * p.tau_xi();
        let lam = Ensemble::new(SEED)
            .with_base(base + (1 << 20))
            .try_map(10_000, |s| {
                let f = exp_functional(&p, 1.0, &sde(), s)?;
                Ok((f.trace() / two_tau, f.trace_sq() / (two_tau * two_tau)))
            })
            .unwrap();
        let (a, b) = (pair_moments(&rv), pair_moments(&lam));
        for (i, q) in ["mean_tr", "sq_tr", "tr_sq"].iter().enumerate() {
            checks.push(Check::z_between(format!("{}_{q}", tag(&p)), a[i], b[i], 3.0));
        }
    }
    report("7", &checks);
}

#[test]
fn criterion_08_lyapunov() {
    let mut checks = Vec::new();
    for n in [2, 3] {
        for beta in BETAS {
            let p = ModelParams::unit(n, beta);
            let seed_id = ((n as u64) << 8) + beta.beta() as u64;
            let noise = lyapunov_spectrum(&p, 1000.0, LyapunovProcess::NoiseOnly, &sde(), RngStream::new(SEED, seed_id)).unwrap();
            let lam = lyapunov_spectrum(&p, 1000.0, LyapunovProcess::Lambda, &sde(), RngStream::new(SEED, seed_id + (1 << 20))).unwrap();
            for (i, (e, t)) in noise.iter().zip(experiments::noise_only_exponents(&p)).enumerate() {
                checks.push(Check::z(format!("{}_noise_only_{}", tag(&p), i + 1), Estimate { value: e.value, stderr: e.stderr }, t, 3.0));
            }
            checks.push(Check::z(format!("{}_lambda_top", tag(&p)), Estimate { value: lam[0].value, stderr: lam[0].stderr }, -1.0, 3.0));
        }
    }
    report("8", &checks);
}

#[test]
fn criterion_09_krein_friedel() {
    let mut checks = Vec::new();
    for n in [1, 2] {
        let p = ModelParams::new(n, SymmetryClass::Orthogonal, 1.0, 1e-3).unwrap();
        let h = max_cell_width(&p);
        let length = 1000.0 / p.k;
        let energy = p.k * p.k;
        for r in 0..10 {
            let pot = build_potential(&p, h, length, RngStream::new(SEED, ((n as u64) << 16) + r)).unwrap();
            let pp = PreparedPotential::new(&pot).unwrap();
            let res = |d: f64| krein_friedel_prepared(&pp, energy, d * energy).unwrap().residual;
            checks.push(Check::upper(format!("N{n}_r{r}_residual"), res(1e-7), 1e-6));
            // the δε² law, read off where truncation dominates roundoff
            let order = (res(1e-5) / res(5e-6)).log2();
            checks.push(Check::upper(format!("N{n}_r{r}_order_minus_2"), (order - 2.0).abs(), 0.1));
        }
    }
    report("9", &checks);
}

fn micro_config(n: usize) -> ExperimentConfig {
    let text = format!(
        r#"{{"experiment":"microscopic-check",
            "model":{{"n_channels":{n},"beta":1,"k":1.0,"sigma":1e-3}},
            "sim":{{"n_traj":1000,"master_seed":{SEED}}},
            "output":{{"dir":"unused"}},
            "settings":{{"l_over_xi":1.0,"kf_realizations":0}}}}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

#[test]
fn criterion_10_microscopic_vs_effective() {
    let mut checks = Vec::new();
    for n in [1, 2] {
        let cfg = micro_config(n);
        assert_eq!(cfg.model.disorder_ratio(), 1e-3);
        let r = experiments::run_experiment(&cfg, None).unwrap();
        for mut c in r.checks {
            c.name = format!("N{n}_{}", c.name);
            checks.push(c);
        }
    }
    report("10", &checks);
}

#[test]
fn criterion_11_resolvent() {
    let mut checks = Vec::new();
    let s_grid = vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0];
    for beta in BETAS {
        let b = beta.beta();
        let field = solve_resolvent(&resolvent_config(beta, s_grid.clone(), None, None)).unwrap();
        checks.push(Check::upper(format!("b{b}_herglotz_max_im_g"), field.max_im().max(0.0), 1e-10));
        let curves: Vec<_> = s_grid.iter().map(|&s| density_from_resolvent(&field, s).unwrap()).collect();
        checks.push(Check::upper(format!("a_b{b}_mass_drift_per_unit_s"), mass_drift(&curves), 1e-3));
        checks.push(Check::rel(format!("b_b{b}_first_moment_slope"), first_moment_slope(&curves), 1.0, 5e-3));

        let far = solve_resolvent(&resolvent_config(beta, vec![100.0], None, Some(1e-2))).unwrap();
        let c = density_from_resolvent(&far, 100.0).unwrap();
        checks.push(Check::upper(format!("c_b{b}_s100_l1_to_stationary"), stationary_l1(&c, beta), 0.02));
    }

    let p = ModelParams::unit(32, SymmetryClass::Unitary);
    let s_mid = [1.0, 2.0];
    let bins: Vec<_> = s_mid.iter().map(|&s| (0.0, 1.05 * support_edges(p.beta, s).unwrap().1, 100)).collect();
    let emp = empirical_density(&p, &s_mid, 10_000, &SdeConfig::with_dx(1e-4), &bins, &Ensemble::new(SEED)).unwrap();
    let field = solve_resolvent(&resolvent_config(p.beta, s_mid.to_vec(), None, None)).unwrap();
    for h in &emp {
        let c = density_from_resolvent(&field, h.s).unwrap();
        checks.push(Check::upper(format!("d_N32_b2_s{}_l1_to_histogram", h.s), h.l1_distance(&c), 0.05));
    }
    report("11", &checks);
}

fn small_config(kind: ExperimentKind, dir: &std::path::Path) -> ExperimentConfig {
    let (model, sim, settings) = match kind {
        ExperimentKind::NoiseCheck => (r#"{"n_channels":2,"beta":2,"k":1,"sigma":8}"#, r#"{"n_traj":2000}"#, "{}"),
        ExperimentKind::Moments => (r#"{"n_channels":2,"beta":1,"k":1,"sigma":8}"#, r#"{"n_traj":64,"dx":1e-2}"#, "{}"),
        ExperimentKind::Dufresne => (
            r#"{"n_channels":2,"beta":2,"k":1,"sigma":8}"#,
            r#"{"n_traj":32,"dx":1e-2}"#,
            r#"{"wishart_draws":64}"#,
        ),
        ExperimentKind::CoupledVsDecoupled => (r#"{"n_channels":2,"beta":1,"k":1,"sigma":8}"#, r#"{"n_traj":32,"dx":1e-2}"#, "{}"),
        ExperimentKind::RiderValko => (r#"{"n_channels":2,"beta":2,"k":1,"sigma":8}"#, r#"{"n_traj":32,"dx":1e-2}"#, "{}"),
        ExperimentKind::Lyapunov => (r#"{"n_channels":2,"beta":1,"k":1,"sigma":8}"#, r#"{"dx":1e-2}"#, r#"{"l_over_xi":20}"#),
        ExperimentKind::MicroscopicCheck => (
            r#"{"n_channels":2,"beta":1,"k":1,"sigma":0.01}"#,
            r#"{"n_traj":8}"#,
            r#"{"l_over_xi":0.05,"kf_realizations":2,"kf_length":50}"#,
        ),
        ExperimentKind::Resolvent => (
            r#"{"n_channels":8,"beta":2,"k":1,"sigma":8}"#,
            r#"{"n_traj":8,"dx":1e-2}"#,
            r#"{"s_grid":[0.5,1.0],"d_lambda":1e-2,"empirical":{"s":[1.0],"n_draws":16,"bins":20}}"#,
        ),
    };
    let text = format!(
        r#"{{"experiment":"{}","model":{model},"sim":{sim},"output":{{"dir":{:?}}},"settings":{settings}}}"#,
        kind.name(),
        dir.to_str().unwrap()
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn data_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_12_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    for kind in ExperimentKind::ALL {
        let runs: Vec<_> = [Some(1), Some(3), Some(1)]
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let dir = tmp.path().join(format!("{}_{i}", kind.name()));
                let cfg = small_config(kind, &dir);
                let (code, res) = experiments::run(&cfg, *w);
                res.unwrap();
                assert!(code == 0 || code == 1);
                data_files(&dir)
            })
            .collect();
        let identical = runs[1] == runs[0] && runs[2] == runs[0] && !runs[0].is_empty();
        checks.push(Check::lower(format!("{}_byte_identical", kind.name()), identical as u8 as f64, 1.0));
    }
    report("12", &checks);
}
