use proptest::prelude::*;

use wigner_smith::ensemble::Ensemble;
use wigner_smith::matrix::{eigvals_hermitian, mat_exp, ComplexMatrix, C64};
use wigner_smith::microscopic::{
    build_potential, max_cell_width, smatrix_prepared, wigner_smith_prepared, PotentialRealization, PreparedPotential,
};
use wigner_smith::moments::{closed_form_set, second_moments};
use wigner_smith::noise::{correlator, sample_increment, NoiseSpec};
use wigner_smith::resolvent::{g_at, g_stationary};
use wigner_smith::rmt::{sample_wishart_eigs, stationary_cdf, WishartSpec};
use wigner_smith::sde::{exp_functional, integrate_qtilde, integrate_stilde};
use wigner_smith::{ModelParams, RngStream, SdeConfig, SymmetryClass};

fn beta_strategy() -> impl Strategy<Value = SymmetryClass> {
    prop_oneof![Just(SymmetryClass::Orthogonal), Just(SymmetryClass::Unitary)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn increments_hermitian_and_real_for_beta1(n in 1usize..6, beta in beta_strategy(), seed in any::<u64>()) {
        let spec = NoiseSpec::new(n, beta, 1e-3).unwrap();
        let mut s = RngStream::new(seed, 0).sampler();
        let h = sample_increment(&spec, &mut s);
        prop_assert_eq!(h.as_matrix().hermiticity_residual(), 0.0);
        if beta == SymmetryClass::Orthogonal {
            prop_assert!(h.as_matrix().is_real());
        }
    }

    #[test]
    fn correlator_index_symmetry(beta in beta_strategy(), a in 0usize..4, b in 0usize..4, c in 0usize..4, d in 0usize..4) {
        // C_{ab,cd} = C_{cd,ab}, and Hermiticity gives C_{ab,cd} = C_{ba,dc}
        prop_assert_eq!(correlator(beta, a, b, c, d), correlator(beta, c, d, a, b));
        prop_assert_eq!(correlator(beta, a, b, c, d), correlator(beta, b, a, d, c));
    }

    #[test]
    fn exp_of_anti_hermitian_is_unitary(n in 1usize..5, seed in any::<u64>()) {
        let spec = NoiseSpec::new(n, SymmetryClass::Unitary, 1.0).unwrap();
        let h = sample_increment(&spec, &mut RngStream::new(seed, 1).sampler());
        let u = mat_exp(&h.as_matrix().scale(C64::new(0.0, 1.0))).unwrap();
        prop_assert!(u.unitarity_residual() < 1e-12);
    }

    #[test]
    fn functional_is_hermitian_positive(n in 1usize..4, beta in beta_strategy(), seed in any::<u64>()) {
        let p = ModelParams::unit(n, beta);
        let cfg = SdeConfig::with_dx(1e-2);
        for q in [exp_functional(&p, 0.5, &cfg, RngStream::new(seed, 0)).unwrap(),
                  integrate_qtilde(&p, 0.5, &cfg, RngStream::new(seed, 0)).unwrap()] {
            prop_assert!(q.as_matrix().hermiticity_residual() < 1e-12);
            prop_assert!(eigvals_hermitian(&q).unwrap().iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn stilde_stays_unitary(n in 1usize..4, beta in beta_strategy(), seed in any::<u64>()) {
        let p = ModelParams::unit(n, beta);
        let out = integrate_stilde(&p, 0.5, &SdeConfig::with_dx(1e-3), RngStream::new(seed, 0)).unwrap();
        prop_assert!(out.s.unitarity_residual() < 1e-10);
    }

    #[test]
    fn closed_forms_positive_and_increasing(n in 1usize..6, beta in beta_strategy(), l in 0.01f64..3.0) {
        let p = ModelParams::unit(n, beta);
        let (a, b) = (second_moments(&p, l), second_moments(&p, l * 1.1));
        prop_assert!(a.sq_tr > 0.0 && a.tr_sq > 0.0);
        prop_assert!(b.sq_tr > a.sq_tr && b.tr_sq > a.tr_sq);
        // Cauchy-Schwarz on eigenvalues: (tr Q)² ≤ N tr Q² and tr Q² ≤ (tr Q)²
        prop_assert!(a.sq_tr <= n as f64 * a.tr_sq * (1.0 + 1e-12));
        prop_assert!(a.tr_sq <= a.sq_tr * (1.0 + 1e-12));
        let m = closed_form_set(&p, l).mean_tr;
        prop_assert!(a.sq_tr >= m * m);
    }

    #[test]
    fn wishart_eigs_positive_sorted(n in 1usize..6, beta in beta_strategy(), seed in any::<u64>()) {
        let spec = WishartSpec::wire(n, beta);
        let ev = sample_wishart_eigs(&spec, &mut RngStream::new(seed, 0).sampler()).unwrap();
        prop_assert_eq!(ev.len(), n);
        prop_assert!(ev.iter().all(|&e| e > 0.0));
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]) || ev.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn stationary_cdf_monotone(beta in beta_strategy(), a in 0.0f64..50.0, d in 0.0f64..50.0) {
        prop_assert!(stationary_cdf(beta, a + d) >= stationary_cdf(beta, a));
        prop_assert!(stationary_cdf(beta, a + d) <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn herglotz_sign(beta in beta_strategy(), re in -3.0f64..30.0, im in 1e-3f64..2.0, s in 0.0f64..6.0) {
        let g = g_at(beta, C64::new(re, im), s).unwrap();
        prop_assert!(g.im <= 1e-10);
        let gs = g_stationary(beta, C64::new(re, im));
        prop_assert!(gs.im <= 1e-10);
    }

    #[test]
    fn resolvent_far_field(beta in beta_strategy(), s in 0.0f64..4.0, phase in 0.2f64..2.9) {
        // g ~ 1/z + m₁/z² with m₁ = s
        let z = C64::from_polar(2e3, phase);
        let g = g_at(beta, z, s).unwrap();
        let tail = (g - 1.0 / z - s / (z * z)).norm() * z.norm().powi(3);
        prop_assert!(tail < 50.0 * (1.0 + s * s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn smatrix_unitary_and_q_hermitian(n in 1usize..4, beta in beta_strategy(), seed in any::<u64>(), cells in 1usize..400) {
        let p = ModelParams::new(n, beta, 1.0, 0.05).unwrap();
        let h = max_cell_width(&p);
        let pot = build_potential(&p, h, cells as f64 * h, RngStream::new(seed, 0)).unwrap();
        let pp = PreparedPotential::new(&pot).unwrap();
        prop_assert!(smatrix_prepared(&pp, 1.0).unwrap().unitarity_residual() < 1e-10);
        let ws = wigner_smith_prepared(&pp, 1.0, 1e-5).unwrap();
        prop_assert!(ws.hermiticity_residual < 1e-6 * (1.0 + ws.q.as_matrix().frobenius_norm()));
        prop_assert!(ws.q_richardson.as_matrix().hermiticity_residual() == 0.0);
    }

    #[test]
    fn potential_persistence_round_trip(n in 1usize..4, beta in beta_strategy(), seed in any::<u64>(), cells in 0usize..30) {
        let p = ModelParams::new(n, beta, 1.0, 0.05).unwrap();
        let h = max_cell_width(&p);
        let pot = build_potential(&p, h, cells as f64 * h, RngStream::new(seed, 3)).unwrap();
        let mut bin = Vec::new();
        pot.write_binary(&mut bin).unwrap();
        prop_assert_eq!(&PotentialRealization::read_binary(bin.as_slice()).unwrap(), &pot);
        let mut text = Vec::new();
        pot.write_csv(&mut text).unwrap();
        prop_assert_eq!(&PotentialRealization::read_csv(text.as_slice()).unwrap(), &pot);
    }

    #[test]
    fn worker_count_invariance(seed in any::<u64>(), w in 1usize..5) {
        let p = ModelParams::unit(2, SymmetryClass::Unitary);
        let cfg = SdeConfig::with_dx(2e-2);
        let f = |s| integrate_qtilde(&p, 0.5, &cfg, s).map(|q| q.into_matrix());
        let a: Vec<ComplexMatrix> = Ensemble::new(seed).with_workers(Some(1)).try_map(6, f).unwrap();
        let b: Vec<ComplexMatrix> = Ensemble::new(seed).with_workers(Some(w)).try_map(6, f).unwrap();
        prop_assert_eq!(a, b);
    }
}
