//! Randomized structural invariants. Each block pins a property the rest of
//! the code base leans on; tolerances are part of the contract.

use proptest::prelude::*;
use qdec_core::analysis::{fit_scaling, ScalingPoint};
use qdec_core::analytic::{
    decoherence_between, f_integral, fidelity_paramagnetic, fk_adiabatic, fk_excited_first,
    fk_excited_second, ValidityWindow,
};
use qdec_core::decoherence::{reduced_density_matrix, run_quench, QubitState};
use qdec_core::integrator::IntegratorConfig;
use qdec_core::modes::{evolve_branch, excitation_probability, ground_state_amplitudes};
use qdec_core::num_complex::Complex64;
use qdec_core::quench::{
    k_m, kz_scales, Branch, CouplingSplit, ModeGrid, QuenchSchedule, UniversalityClass,
};
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    // field_at and time_at each round once; the round trip is pinned at 2 ulp
    #[test]
    fn schedule_round_trip(tau in 1.0..5000.0f64, g in -5.0..6.0f64) {
        let sched = QuenchSchedule::new(tau, 6.5, -5.5).unwrap();
        let t = sched.time_at(g);
        let back = sched.time_at(sched.field_at(t));
        let tol = 2.0 * f64::EPSILON * (t.abs() + tau);
        prop_assert!((back - t).abs() <= tol, "t={t}, back={back}, tol={tol}");
    }

    #[test]
    fn ground_state_is_normalized(k_frac in 1e-3..0.999f64, g in -6.0..6.0f64) {
        let k = k_frac * PI;
        let gs = ground_state_amplitudes(k, g).unwrap();
        prop_assert!(gs.v >= 0.0 && gs.u >= 0.0);
        prop_assert!((gs.v * gs.v + gs.u * gs.u - 1.0).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kz_scales_are_monotone_and_consistent(
        tau1 in 1.0..1e5f64,
        factor in 1.001..100.0f64,
    ) {
        let a = kz_scales(&UniversalityClass::ISING, tau1).unwrap();
        let b = kz_scales(&UniversalityClass::ISING, tau1 * factor).unwrap();
        prop_assert!((a.k_hat * a.xi_hat - 1.0).abs() <= 1e-15);
        prop_assert!((b.k_hat * b.xi_hat - 1.0).abs() <= 1e-15);
        prop_assert!(b.g_hat < a.g_hat);
        prop_assert!(b.k_hat < a.k_hat);
        prop_assert!(b.xi_hat > a.xi_hat);
        prop_assert!(k_m(tau1) < PI / 4.0);
        prop_assert!(k_m(tau1 * factor) < k_m(tau1));
    }

    #[test]
    fn mode_grid_brackets_the_zone(half_n in 2usize..2000) {
        let n = 2 * half_n;
        let grid = ModeGrid::new(n).unwrap();
        let ks = grid.momenta();
        prop_assert_eq!(ks.len(), n / 2);
        prop_assert!((ks[0] - PI / n as f64).abs() < 1e-15);
        prop_assert!((ks[ks.len() - 1] - (PI - PI / n as f64)).abs() < 1e-12);
        prop_assert!(ks.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ks.iter().all(|&k| 0.0 < k && k < PI));
    }

    #[test]
    fn density_matrix_is_physical(
        alpha in 0.0..std::f64::consts::FRAC_PI_2,
        beta in 0.0..(2.0 * PI),
        gamma in 0.0..(2.0 * PI),
        r in 0.0..1.0f64,
        psi in 0.0..(2.0 * PI),
    ) {
        let q = QubitState::new(
            Complex64::from_polar(alpha.cos(), beta),
            Complex64::from_polar(alpha.sin(), gamma),
        ).unwrap();
        let d = Complex64::from_polar(r, psi);
        let rho = reduced_density_matrix(&q, d).unwrap();
        prop_assert!(rho[0][0].im.abs() < 1e-15 && rho[1][1].im.abs() < 1e-15);
        prop_assert!((rho[0][0].re + rho[1][1].re - 1.0).abs() < 1e-12);
        prop_assert!((rho[0][1] - rho[1][0].conj()).norm() < 1e-15);
        let mid = 0.5 * (rho[0][0].re + rho[1][1].re);
        let radius = (0.25 * (rho[0][0].re - rho[1][1].re).powi(2)
            + rho[0][1].norm_sqr()).sqrt();
        prop_assert!(mid - radius >= -1e-12, "negative eigenvalue {}", mid - radius);
    }

    #[test]
    fn analytic_fidelities_stay_in_the_unit_interval(
        k_frac in 1e-3..0.999f64,
        g in -4.0..4.0f64,
        delta in 0.0..0.099f64,
        tau in 1.0..2000.0f64,
        t_frac in 0.0..2.0f64,
    ) {
        let w = ValidityWindow::default();
        let k = k_frac * PI;
        let f = fk_adiabatic(k, g, delta, tau, &w).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&f));
        let t = t_frac * tau;
        let f1 = fk_excited_first(k, t, tau, delta, &w).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&f1));
        let f2 = fk_excited_second(k, 2.0 * tau + t, tau, delta, &w).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&f2));
        if g.abs() > 1.0 + 1e-6 {
            let d = fidelity_paramagnetic(1000, delta, g).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn scaling_fit_slope_survives_rescaling(
        d1 in 0.05..0.95f64,
        d2 in 0.05..0.95f64,
        d3 in 0.05..0.95f64,
        d4 in 0.05..0.95f64,
        d5 in 0.05..0.95f64,
        c in 0.1..10.0f64,
    ) {
        let taus = [64.0, 128.0, 256.0, 512.0, 1024.0];
        let ds = [d1, d2, d3, d4, d5];
        let points: Vec<ScalingPoint> = taus.iter().zip(&ds)
            .map(|(&tau_q, &d)| ScalingPoint { tau_q, d_hat: d })
            .collect();
        let scaled: Vec<ScalingPoint> = points.iter()
            .map(|p| ScalingPoint { tau_q: p.tau_q, d_hat: p.d_hat.powf(c) })
            .collect();
        let a = fit_scaling(&points).unwrap();
        let b = fit_scaling(&scaled).unwrap();
        prop_assert!((a.exponent - b.exponent).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn f_integral_shape(phi in -10.0..10.0f64) {
        let f = f_integral(phi).unwrap();
        prop_assert!(f >= 0.0);
        prop_assert!((f_integral(phi + PI).unwrap() - f).abs() < 1e-12);
        prop_assert!((f_integral(PI - phi).unwrap() - f).abs() < 1e-12);
        prop_assert!(f <= f_integral(PI / 2.0).unwrap() + 1e-12);
    }

    // the between-window form degenerates to fidelity x gaussian as the
    // accumulated phase goes small (delta tau -> 0)
    #[test]
    fn gaussian_collapse_at_weak_coupling(
        tau in 50.0..2000.0f64,
        x in 0.001..0.02f64,
        g in -0.6..0.6f64,
    ) {
        let n = 1000;
        let delta = x / tau;
        let t = tau * (1.0 - g);
        let w = ValidityWindow::default();
        let e1 = -decoherence_between(n, delta, tau, t, &w).unwrap().value.ln();
        let fid = n as f64 * delta * delta / (4.0 * (1.0 - g * g));
        let rate = 8.0 * n as f64 * delta * delta * (2f64.sqrt() - 1.0) / (PI * tau.sqrt());
        let e2 = fid + rate * t * t;
        prop_assert!((e1 - e2).abs() <= 0.05 * e2 + 1e-14, "e1={e1}, e2={e2}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // same effective field, same trajectory, bit for bit
    #[test]
    fn branch_exchange_is_exact(
        k_frac in 0.05..0.95f64,
        delta in 1e-4..0.09f64,
        tau in 0.5..3.0f64,
    ) {
        let k = k_frac * PI;
        let sched = QuenchSchedule::partial(tau, 2.0, 0.5).unwrap();
        let plus = CouplingSplit::new(delta, Branch::Plus).unwrap();
        let minus = CouplingSplit::new(-delta, Branch::Minus).unwrap();
        let cfg = IntegratorConfig::default_for(&sched, delta);
        let times: Vec<f64> = (0..4)
            .map(|i| sched.t_start() + i as f64 * (sched.t_end() - sched.t_start()) / 3.0)
            .collect();
        let a = evolve_branch(k, &sched, &plus, &cfg, &times).unwrap();
        let b = evolve_branch(k, &sched, &minus, &cfg, &times).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.v.re.to_bits(), y.v.re.to_bits());
            prop_assert_eq!(x.v.im.to_bits(), y.v.im.to_bits());
            prop_assert_eq!(x.u.re.to_bits(), y.u.re.to_bits());
            prop_assert_eq!(x.u.im.to_bits(), y.u.im.to_bits());
        }
    }

    #[test]
    fn coherence_factor_bounded_and_sign_blind(
        delta in 5e-3..0.09f64,
        tau in 1.0..3.0f64,
    ) {
        let sched = QuenchSchedule::partial(tau, 2.0, 0.5).unwrap();
        let grid = ModeGrid::new(8).unwrap();
        let cfg = IntegratorConfig::default_for(&sched, delta);
        let times: Vec<f64> = (0..5)
            .map(|i| sched.t_start() + i as f64 * (sched.t_end() - sched.t_start()) / 4.0)
            .collect();
        let (tr_p, snaps) =
            run_quench(&sched, delta, &grid, 1, &cfg, &times, &[4]).unwrap();
        let (tr_m, _) = run_quench(&sched, -delta, &grid, 1, &cfg, &times, &[4]).unwrap();
        for (sp, sm) in tr_p.samples.iter().zip(&tr_m.samples) {
            prop_assert!(sp.big_d >= 0.0 && sp.big_d <= 1.0 + 1e-12);
            prop_assert_eq!(sp.big_d.to_bits(), sm.big_d.to_bits());
        }
        for e in &snaps[0].entries {
            prop_assert!(e.fidelity >= 0.0 && e.fidelity <= 1.0);
        }
    }

    #[test]
    fn high_momentum_modes_stay_adiabatic(k in 1.3..1.84f64) {
        // tau = 64: 10 k_hat = 1.25. A full ramp crosses both critical
        // points, so the mode must sit 10 k_hat clear of both zone edges:
        // modes near pi are transiently excited at the second crossing just
        // as modes near 0 are at the first.
        let tau = 64.0;
        let sched = QuenchSchedule::new(tau, 5.0, -3.0).unwrap();
        let coupling = CouplingSplit::new(0.0, Branch::Plus).unwrap();
        let cfg = IntegratorConfig::default_for(&sched, 0.0);
        let times: Vec<f64> = (0..9)
            .map(|i| sched.t_start() + i as f64 * (sched.t_end() - sched.t_start()) / 8.0)
            .collect();
        let states = evolve_branch(k, &sched, &coupling, &cfg, &times).unwrap();
        for s in &states {
            let p = excitation_probability(s, sched.field_at(s.t)).unwrap();
            prop_assert!(p < 1e-3, "p = {p} at t = {}", s.t);
        }
    }

    #[test]
    fn low_momentum_modes_follow_landau_zener(k in 0.01..0.044f64) {
        // tau = 128: k_hat / 2 = 0.044 caps the generated k
        let tau = 128.0;
        let sched = QuenchSchedule::new(tau, 5.0, -3.0).unwrap();
        let coupling = CouplingSplit::new(0.0, Branch::Plus).unwrap();
        let cfg = IntegratorConfig::default_for(&sched, 0.0);
        let states = evolve_branch(k, &sched, &coupling, &cfg, &[sched.t_end()]).unwrap();
        let p = excitation_probability(&states[0], sched.g_end()).unwrap();
        let lz = (-2.0 * PI * tau * k * k).exp();
        prop_assert!((p - lz).abs() <= 0.05 * lz, "p = {p}, lz = {lz}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    // doubling the chain at fixed (t, delta, tau_q) doubles ln D
    #[test]
    fn ln_d_scales_with_system_size(delta in 0.03..0.06f64) {
        let tau = 10.0;
        let sched = QuenchSchedule::new(tau, 2.0, -3.0).unwrap();
        // measure where the excitation interference closes (4 t delta = pi),
        // so F_k is smooth in k and the mode sums converge like midpoint rules
        let t_star = PI / (4.0 * delta);
        let times = [sched.t_start(), t_star];
        let mut ln_d = [0.0f64; 2];
        for (slot, n) in [(0usize, 100usize), (1usize, 200usize)] {
            let grid = ModeGrid::new(n).unwrap();
            let cfg = IntegratorConfig::default_for(&sched, delta);
            let (trace, _) = run_quench(&sched, delta, &grid, 1, &cfg, &times, &[1]).unwrap();
            ln_d[slot] = trace.samples[1].ln_big_d;
        }
        prop_assert!(
            (ln_d[1] / (2.0 * ln_d[0]) - 1.0).abs() < 0.02,
            "ln D(100) = {}, ln D(200) = {}",
            ln_d[0],
            ln_d[1]
        );
    }
}
