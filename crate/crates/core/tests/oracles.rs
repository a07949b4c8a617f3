//! Comparisons against values computed independently inside the tests.

use approx::assert_relative_eq;
use num_complex::Complex64 as C;

use wigner_smith::ensemble::Ensemble;
use wigner_smith::matrix::{eigh, HermitianMatrix, C64};
use wigner_smith::microscopic::{smatrix, wigner_smith, PotentialRealization};
use wigner_smith::moments::{closed_form_set, mean_trace, second_moments};
use wigner_smith::resolvent::{
    density_from_resolvent, g_at, g_stationary, solve_resolvent, solve_resolvent_grid, support_edges, ResolventConfig,
};
use wigner_smith::rmt::{sample_wishart_spectra, stationary_cdf, stationary_density, WishartSpec};
use wigner_smith::sde::{lyapunov_spectrum, LyapunovProcess};
use wigner_smith::stats::mean_estimate;
use wigner_smith::{ModelParams, RngStream, SdeConfig, SymmetryClass};

const BETAS: [SymmetryClass; 2] = [SymmetryClass::Orthogonal, SymmetryClass::Unitary];

#[test]
fn single_channel_moments_from_ito_calculus() {
    // q = Q/τ_ξ solves dq = 2 dx + 2q dW, so E q = 2x and
    // d E q² = (8x + 4 E q²) dx, E q² = (e^{4x} − 1 − 4x)/2.
    for beta in BETAS {
        let p = ModelParams::unit(1, beta);
        for x in [1e-4, 0.01, 0.3, 1.0, 2.5] {
            assert_relative_eq!(closed_form_set(&p, x).mean_tr, 2.0 * x, max_relative = 1e-14);
            let want = ((4.0 * x).exp() - 1.0 - 4.0 * x) / 2.0;
            let got = second_moments(&p, x);
            assert_relative_eq!(got.sq_tr, want, max_relative = 1e-9);
            assert_relative_eq!(got.tr_sq, want, max_relative = 1e-9);
        }
    }
}

#[test]
fn short_wire_is_deterministic() {
    // q ≈ 2x·1 for x → 0, so ⟨(tr q)²⟩ → (2Nx)² and ⟨tr q²⟩ → N(2x)²
    for n in 1..5 {
        for beta in BETAS {
            let p = ModelParams::unit(n, beta);
            let x = 1e-5;
            let m = second_moments(&p, x);
            assert_relative_eq!(m.sq_tr, (2.0 * n as f64 * x).powi(2), max_relative = 1e-3);
            assert_relative_eq!(m.tr_sq, n as f64 * (2.0 * x).powi(2), max_relative = 1e-3);
        }
    }
}

#[test]
fn mean_trace_in_time_units() {
    let p = ModelParams::new(3, SymmetryClass::Unitary, 2.0, 0.4).unwrap();
    let l = 7.0;
    // ⟨tr Q⟩ = NL/k
    assert_relative_eq!(mean_trace(&p, l) * p.tau_xi(), 3.0 * l / 2.0, max_relative = 1e-14);
}

/// `E tr Γ` for two eigenvalues by 2-D quadrature of `|g₁−g₂|^β (g₁g₂)^a e^{−(g₁+g₂)/2}`.
fn laguerre_mean_trace_2x2(beta: f64, a: f64) -> f64 {
    let (n, hi) = (1200, 120.0);
    let h = hi / n as f64;
    let (mut z, mut t) = (0.0, 0.0);
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = (j as f64 + 0.5) * h;
            let w = (x - y).abs().powf(beta) * (x * y).powf(a) * (-(x + y) / 2.0).exp();
            z += w;
            t += w * (x + y);
        }
    }
    t / z
}

#[test]
fn laguerre_first_moment_quadrature() {
    for beta in BETAS {
        let spec = WishartSpec::wire(2, beta);
        let quad = laguerre_mean_trace_2x2(beta.beta_f64(), spec.exponent());
        assert_relative_eq!(quad, 2.0 * 2.0 * spec.mu, max_relative = 1e-3);
        let s = sample_wishart_spectra(&spec, 40_000, &Ensemble::new(5)).unwrap();
        let est = mean_estimate(&s.traces());
        assert!(est.z_against(quad) < 4.0, "{est:?} vs {quad}");
    }
}

fn constant_potential(v: &HermitianMatrix, h: f64, n_cells: usize) -> PotentialRealization {
    PotentialRealization {
        n_channels: v.dim(),
        beta: SymmetryClass::Unitary,
        h,
        length: h * n_cells as f64,
        seed: None,
        cells: vec![v.clone(); n_cells],
    }
}

/// Hard wall at 0, constant `V` on `[0, L]`: `ψ = sin κx`, matched to
/// `e^{−ik(x−L)} + S e^{ik(x−L)}`.
fn step_reflection(k: f64, v: f64, l: f64) -> C {
    let kappa = C::new(k * k - v, 0.0).sqrt();
    let y = (kappa * l).sin();
    let dy = kappa * (kappa * l).cos();
    (k * y - C::i() * dy) / (k * y + C::i() * dy)
}

#[test]
fn free_wire_reflection_and_delay() {
    let (k, l) = (1.3, 4.0);
    let pot = constant_potential(&HermitianMatrix::zeros(2), 0.01, 400);
    let s = smatrix(&pot, k * k).unwrap();
    let want = -(C::i() * 2.0 * k * l).exp();
    for a in 0..2 {
        for b in 0..2 {
            let z = s.as_matrix()[(a, b)];
            let w = if a == b { want } else { C::new(0.0, 0.0) };
            assert!((z - w).norm() < 1e-10);
        }
    }
    // S ∝ e^{2ikL}, so Q = 2L dk/dε = L/k
    let ws = wigner_smith(&pot, k * k, 1e-5 * k * k).unwrap();
    let q = ws.q_richardson.as_matrix();
    for a in 0..2 {
        assert_relative_eq!(q[(a, a)].re, l / k, max_relative = 1e-8);
    }
    assert!(q[(0, 1)].norm() < 1e-8);
}

#[test]
fn matrix_step_potential_matches_eigenbasis_formula() {
    let k = 1.0;
    let l = 3.0;
    let v = HermitianMatrix::from_matrix(wigner_smith::ComplexMatrix::from_fn(2, |a, b| match (a, b) {
        (0, 0) => C64::new(0.3, 0.0),
        (1, 1) => C64::new(1.6, 0.0),
        (0, 1) => C64::new(0.2, 0.25),
        _ => C64::new(0.2, -0.25),
    }));
    let pot = constant_potential(&v, 0.01, 300);
    let s = smatrix(&pot, k * k).unwrap();
    let (ev, u) = eigh(&v).unwrap();
    let d: Vec<C> = ev.iter().map(|&e| step_reflection(k, e, l)).collect();
    let want = &(&u * &wigner_smith::ComplexMatrix::from_diag(&d)) * &u.adjoint();
    assert!(s.as_matrix().distance(&want) < 1e-9, "{}", s.as_matrix().distance(&want));

    // energy derivative of the closed form by a wide central stencil
    let de = 1e-4;
    let sp = step_reflection((k * k + de).sqrt(), ev[0], l);
    let sm = step_reflection((k * k - de).sqrt(), ev[0], l);
    let q0 = (-C::i() * d[0].conj() * (sp - sm) / (2.0 * de)).re;
    let ws = wigner_smith(&pot, k * k, 1e-6).unwrap();
    let q_eig = (&(&u.adjoint() * ws.q_richardson.as_matrix()) * &u)[(0, 0)];
    assert_relative_eq!(q_eig.re, q0, max_relative = 1e-6);
}

#[test]
fn lyapunov_single_channel() {
    let p = ModelParams::unit(1, SymmetryClass::Orthogonal);
    let cfg = SdeConfig::with_dx(1e-2);
    let noise = lyapunov_spectrum(&p, 400.0, LyapunovProcess::NoiseOnly, &cfg, RngStream::new(1, 0)).unwrap();
    assert!(noise[0].value.abs() < 4.0 * noise[0].stderr + 1e-3, "{:?}", noise[0]);
}

#[test]
fn stationary_density_normalized() {
    for beta in BETAS {
        let edge = 0.25 / beta.beta_f64();
        // substitution λ = edge / (1 − u²)² keeps the integrand smooth
        let n = 200_000;
        let mut sum = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let w = 1.0 - u * u;
            let lam = edge / (w * w);
            let jac = edge * 4.0 * u / (w * w * w);
            sum += stationary_density(beta, lam) * jac / n as f64;
        }
        assert_relative_eq!(sum, 1.0, max_relative = 1e-6);
        assert_relative_eq!(stationary_cdf(beta, 1e12), 1.0, epsilon = 1e-5);
    }
}

#[test]
fn resolvent_initial_condition_is_poisson_kernel() {
    let mut cfg = ResolventConfig::new(SymmetryClass::Unitary, vec![0.0]);
    cfg.eps = vec![0.05];
    cfg.d_lambda = 1e-2;
    cfg.lambda_max = Some(5.0);
    let f = solve_resolvent(&cfg).unwrap();
    for (i, &l) in f.lambda_grid.iter().enumerate() {
        let rho = -f.g[0][0][i].im / std::f64::consts::PI;
        let want = 0.05 / (std::f64::consts::PI * (l * l + 0.05 * 0.05));
        assert_relative_eq!(rho, want, max_relative = 1e-12);
    }
}

#[test]
fn resolvent_satisfies_flow_equation() {
    // ∂_s g = ∂_z[(2βz − 1)g − βz²g²], derivatives by central differences
    for beta in BETAS {
        let b = beta.beta_f64();
        for (z, s) in [(C64::new(0.7, 0.3), 0.4), (C64::new(5.0, 0.2), 1.5), (C64::new(-0.5, 0.05), 3.0), (C64::new(30.0, 1.0), 8.0)] {
            let h = 1e-4;
            let ds = (g_at(beta, z, s + h).unwrap() - g_at(beta, z, s - h).unwrap()) / (2.0 * h);
            let flux = |z: C64| {
                let g = g_at(beta, z, s).unwrap();
                (2.0 * b * z - 1.0) * g - b * z * z * g * g
            };
            let dz = (flux(z + h) - flux(z - h)) / (2.0 * h);
            let scale = ds.norm().max(1e-3);
            assert!((ds - dz).norm() / scale < 1e-5, "beta {b} z {z} s {s}: {ds} vs {dz}");
        }
    }
}

#[test]
fn resolvent_approaches_stationary_solution() {
    for beta in BETAS {
        for z in [C64::new(-1.0, 0.5), C64::new(0.05, 0.01), C64::new(2.0, 1.0)] {
            let g = g_at(beta, z, 2000.0).unwrap();
            let gs = g_stationary(beta, z);
            assert!((g - gs).norm() < 1e-3 * gs.norm(), "{g} vs {gs}");
        }
    }
}

#[test]
fn density_mass_and_first_moment() {
    for beta in BETAS {
        let f = solve_resolvent(&ResolventConfig::new(beta, vec![0.5, 2.0])).unwrap();
        for s in [0.5, 2.0] {
            let c = density_from_resolvent(&f, s).unwrap();
            assert_relative_eq!(c.mass(), 1.0, epsilon = 2e-3);
            assert_relative_eq!(c.first_moment(), s, max_relative = 5e-3);
        }
    }
}

#[test]
fn support_edge_bounds_density() {
    let beta = SymmetryClass::Unitary;
    let (lo, hi) = support_edges(beta, 1.0).unwrap();
    assert!(lo > 0.0 && lo < hi);
    for (lam, inside) in [(hi + 0.3, false), (hi - 0.3, true), (0.5 * (lo + hi), true), (lo - 0.05, false)] {
        let g = g_at(beta, C64::new(lam, 1e-6), 1.0).unwrap();
        let rho = -g.im / std::f64::consts::PI;
        assert_eq!(rho > 1e-4, inside, "lambda {lam} rho {rho} support ({lo}, {hi})");
    }
    // the left edge tends to the stationary one
    let (lo, _) = support_edges(beta, 200.0).unwrap();
    assert_relative_eq!(lo, 0.125, max_relative = 1e-2);
}

#[test]
fn grid_solver_converges_to_characteristics() {
    let s = 0.05;
    let err = |dl: f64| {
        let mut cfg = ResolventConfig::new(SymmetryClass::Unitary, vec![s]);
        cfg.eps = vec![0.1];
        cfg.d_lambda = dl;
        cfg.lambda_min = -2.0;
        cfg.lambda_max = Some(8.0);
        let f = solve_resolvent_grid(&cfg).unwrap();
        f.lambda_grid
            .iter()
            .zip(&f.g[0][0])
            .map(|(&l, g)| (g - g_at(SymmetryClass::Unitary, C64::new(l, 0.1), s).unwrap()).norm())
            .fold(0.0, f64::max)
    };
    let (a, b) = (err(1e-2), err(5e-3));
    let order = (a / b).log2();
    assert!(order > 0.7 && order < 1.5, "errors {a} {b}, order {order}");
}
