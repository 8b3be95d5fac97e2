//! Module invariants and property tests beyond the acceptance gate.

mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sysprop::config::{ConeMethod, EstimatorConfig, GainMethod, InitialInput, PassivityMethod};
use sysprop::conic::{estimate_cone, grad_c_rho3, rho3, uzawa_step};
use sysprop::flows::{integrate_flow, FlowConfig, FlowState, RhsKind};
use sysprop::gain::{estimate_gain, pencil_2x2_extreme, rho1};
use sysprop::lti::{random_stable_plant, toeplitz_apply, ImpulseResponse};
use sysprop::passivity::{estimate_passivity, exact_line_search, rho2, ReuseCache};
use sysprop::probe::{NoiseModel, Plant, ProbeSession};
use sysprop::signal::{retract, Signal};
use sysprop::spectra::{
    cone_matrix, cone_saddle_point, dense::sym_eigvals, dense::Mat, gram_matrix, pencil_summary,
    sym_part_matrix, symmetric_summary, toeplitz_matrix, true_cone, true_passivity,
};

fn finite_taps(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n..=n)
}

proptest! {
    #[test]
    fn toeplitz_is_linear(
        taps in finite_taps(24),
        u in finite_taps(24),
        v in finite_taps(24),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let h = ImpulseResponse::new(taps).unwrap();
        let us = Signal::siso(u).unwrap();
        let vs = Signal::siso(v).unwrap();
        let combined = toeplitz_apply(&h, &us.scaled(a).axpy(b, &vs)).unwrap();
        let separate = toeplitz_apply(&h, &us).unwrap().scaled(a)
            .axpy(b, &toeplitz_apply(&h, &vs).unwrap());
        let scale = separate.norm().max(1.0);
        prop_assert!(combined.sub(&separate).norm() <= 1e-12 * scale);
    }

    #[test]
    fn toeplitz_is_causal(taps in finite_taps(24), tail in finite_taps(14), t0 in 0usize..10) {
        // u zero through t0 forces y zero through t0, exactly.
        let h = ImpulseResponse::new(taps).unwrap();
        let mut u = vec![0.0; 24];
        for (i, x) in tail.iter().enumerate() {
            if t0 + i < 24 {
                u[t0 + i] = *x;
            }
        }
        for z in u.iter_mut().take(t0) {
            *z = 0.0;
        }
        let y = toeplitz_apply(&h, &Signal::siso(u).unwrap()).unwrap();
        for t in 0..t0 {
            prop_assert_eq!(y.samples()[t], 0.0);
        }
    }

    #[test]
    fn toeplitz_is_shift_invariant(taps in finite_taps(24), u in finite_taps(24)) {
        // shifting the input one sample shifts the truncated output exactly
        let h = ImpulseResponse::new(taps).unwrap();
        let y = toeplitz_apply(&h, &Signal::siso(u.clone()).unwrap()).unwrap();
        let mut shifted = vec![0.0; 24];
        shifted[1..].copy_from_slice(&u[..23]);
        let ys = toeplitz_apply(&h, &Signal::siso(shifted).unwrap()).unwrap();
        prop_assert_eq!(ys.samples()[0], 0.0);
        for t in 1..24 {
            prop_assert_eq!(ys.samples()[t], y.samples()[t - 1]);
        }
    }

    #[test]
    fn reverse_is_involutory(u in finite_taps(17)) {
        let s = Signal::siso(u).unwrap();
        prop_assert_eq!(sysprop::probe::reverse(&sysprop::probe::reverse(&s)), s);
    }

    #[test]
    fn retraction_lands_on_sphere(u in finite_taps(9), p in finite_taps(9)) {
        let us = Signal::siso(u).unwrap();
        prop_assume!(us.norm() > 1e-6);
        let un = us.normalized().unwrap();
        let ps = Signal::siso(p).unwrap();
        let ps = ps.axpy(-ps.dot(&un), &un);
        if let Ok(r) = retract(&un, &ps) {
            prop_assert!((r.norm() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn rho1_is_scale_invariant() {
    let plant = Plant::Siso(random_stable_plant(5, 6, 64).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let u = InitialInput::Sine.build(1, 64).unwrap();
    let (base, _, _) = rho1(&mut s, &u).unwrap();
    for a in [-3.0, 0.5, 10.0] {
        let (v, _, _) = rho1(&mut s, &u.scaled(a)).unwrap();
        assert!(
            (v - base).abs() <= 1e-12 * base.abs(),
            "alpha={a}: {v} vs {base}"
        );
    }
}

#[test]
fn power_iteration_is_monotone_noiseless() {
    let plant = Plant::Siso(random_stable_plant(1, 20, 200).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let mut cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    cfg.max_iters = 100;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    let est = estimate_gain(&mut s, &cfg).unwrap();
    for w in est.trace.rows().windows(2) {
        assert!(w[1].rho >= w[0].rho - 1e-12);
    }
}

#[test]
fn pg_spectrum_squares_to_gram_spectrum() {
    // |lambda|_max(PG) == sqrt(lambda_1(G^T G)), both via dense solvers.
    let h = random_stable_plant(9, 4, 64).unwrap();
    let g = toeplitz_matrix(&h);
    let n = g.nrows();
    let pg = Mat::from_fn(n, n, |i, j| g.get(n - 1 - i, j));
    let mu = sym_eigvals(pg).unwrap();
    let mu_max = mu.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    let lam = sym_eigvals(gram_matrix(&Plant::Siso(h))).unwrap();
    assert!((mu_max - lam[0].sqrt()).abs() <= 1e-8 * lam[0].sqrt().max(1.0));
}

#[test]
fn power_converges_to_tenth_percent_on_order20_plant() {
    // The truncated operator's clustered top eigenvalues make ~100
    // iterations the observed need for 0.1% at this horizon; the
    // oracle-checked bound asserted here is 110.
    let plant = Plant::Siso(random_stable_plant(1, 20, 1000).unwrap());
    let gamma = sysprop::spectra::l2_gain(&plant).unwrap();
    let mut s = ProbeSession::noiseless(plant);
    let mut cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    cfg.max_iters = 110;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    let est = estimate_gain(&mut s, &cfg).unwrap();
    let hit = est
        .trace
        .rows()
        .iter()
        .any(|r| (r.estimate - gamma).abs() <= 1e-3 * gamma);
    assert!(
        hit,
        "power did not reach 0.1% of {gamma} within 110 iterations"
    );
}

#[test]
fn gain_line_search_costs_two_samples_per_iteration() {
    // exact line search reuses the direction probes: 2 samples per
    // iteration, none extra for the step size
    let plant = Plant::Siso(random_stable_plant(3, 6, 64).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let mut cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    cfg.method = GainMethod::GradientAscentLineSearch;
    cfg.max_iters = 12;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    let est = estimate_gain(&mut s, &cfg).unwrap();
    for row in est.trace.rows() {
        assert_eq!(row.samples, 2 + 2 * row.k as u64);
    }
    // and the search ascends monotonically in the noiseless case
    for w in est.trace.rows().windows(2) {
        assert!(w[1].rho >= w[0].rho - 1e-12);
    }
}

#[test]
fn noisy_rho1_gradient_is_unbiased_additive() {
    let plant = Plant::Siso(random_stable_plant(3, 6, 64).unwrap());
    let u = InitialInput::Sine.build(1, 64).unwrap();
    let rep = rho1_gradient_unbiased(&plant, NoiseModel::additive(0.3, 11).unwrap(), &u, 10_000);
    assert!(
        rep.worst_sigma_ratio <= 1.0,
        "worst deviation {} of the 4-sigma allowance",
        rep.worst_sigma_ratio
    );
}

#[test]
fn composite_probes_are_bitwise_deterministic() {
    let plant = Plant::Siso(random_stable_plant(4, 5, 48).unwrap());
    let noise = NoiseModel::additive(0.2, 31).unwrap();
    let u = InitialInput::SineOffset.build(1, 48).unwrap();
    let run = || {
        let mut s = ProbeSession::new(plant.clone(), noise, None).unwrap();
        let (y, g) = s.gram_apply(&u).unwrap();
        let a = s.adjoint_apply(&u).unwrap();
        (y, g, a)
    };
    let (y1, g1, a1) = run();
    let (y2, g2, a2) = run();
    assert_eq!(y1, y2);
    assert_eq!(g1, g2);
    assert_eq!(a1, a2);
}

#[test]
fn pencil_matches_inverse_based_solve() {
    // Cholesky-transform eigenvalues vs eig((G^T G)^{-1} (G+G^T)/2).
    let h = random_stable_plant(14, 6, 96).unwrap();
    let p = Plant::Siso(h);
    let gram = gram_matrix(&p);
    let sym = sym_part_matrix(&p);
    let summary = pencil_summary(&sym, &gram).unwrap();

    let n = gram.nrows();
    let na_gram = nalgebra::DMatrix::from_fn(n, n, |i, j| gram.get(i, j));
    let na_sym = nalgebra::DMatrix::from_fn(n, n, |i, j| sym.get(i, j));
    let solved = na_gram
        .lu()
        .solve(&na_sym)
        .expect("gram is positive definite");
    let mut eig: Vec<f64> = solved
        .complex_eigenvalues()
        .iter()
        .map(|c| {
            assert!(
                c.im.abs() < 1e-8,
                "pencil eigenvalue with imaginary part {}",
                c.im
            );
            c.re
        })
        .collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let scale = summary.eigenvalues[0].abs().max(1.0);
    for (a, b) in summary.eigenvalues.iter().zip(&eig) {
        assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
    }
}

#[test]
fn spectral_summary_reconstructs_operator() {
    let p = Plant::Siso(random_stable_plant(6, 5, 48).unwrap());
    let gram = gram_matrix(&p);
    let summary = symmetric_summary(&gram).unwrap();
    let res = summary.max_residual_symmetric(&gram);
    assert!(res <= 1e-8 * gram.frobenius().max(1.0));
    let n = gram.nrows();
    let mut rec = Mat::zeros(n, n);
    for (l, v) in summary.eigenvalues.iter().zip(&summary.eigenvectors) {
        for i in 0..n {
            for j in 0..n {
                rec.set(i, j, rec.get(i, j) + l * v[i] * v[j]);
            }
        }
    }
    rec.add_scaled(-1.0, &gram);
    assert!(rec.frobenius() <= 1e-8 * gram.frobenius());
}

#[test]
fn true_cone_radius_squares_to_top_eigenvalue() {
    let p = Plant::Siso(random_stable_plant(11, 4, 64).unwrap());
    let (c_star, r_min) = true_cone(&p).unwrap();
    let gram = gram_matrix(&p);
    let sym = sym_part_matrix(&p);
    let top = sym_eigvals(cone_matrix(&gram, &sym, c_star)).unwrap()[0];
    assert!((r_min * r_min - top).abs() <= 1e-8 * top.max(1.0));
}

#[test]
fn random_plants_have_positive_definite_gram() {
    for seed in [3u64, 14] {
        let p = Plant::Siso(random_stable_plant(seed, 6, 32).unwrap());
        let vals = sym_eigvals(gram_matrix(&p)).unwrap();
        assert!(vals[vals.len() - 1] > 0.0, "seed {seed}");
    }
}

#[test]
fn two_by_two_pencil_matches_closed_form() {
    // M = [[3,1],[1,2]], N = I: eigenvalues (5 +- sqrt(5))/2.
    let (hi, a_hi) = pencil_2x2_extreme(3.0, 1.0, 2.0, 1.0, 0.0, 1.0, true).unwrap();
    let (lo, a_lo) = pencil_2x2_extreme(3.0, 1.0, 2.0, 1.0, 0.0, 1.0, false).unwrap();
    let exp_hi = 0.5 * (5.0 + 5f64.sqrt());
    let exp_lo = 0.5 * (5.0 - 5f64.sqrt());
    assert!((hi - exp_hi).abs() < 1e-14);
    assert!((lo - exp_lo).abs() < 1e-14);
    // eigenvector (1, a): (M - l N) (1, a) = 0 => a = (l - 3) / 1
    assert!((a_hi - (exp_hi - 3.0)).abs() < 1e-12);
    assert!((a_lo - (exp_lo - 3.0)).abs() < 1e-12);
    // indefinite N signals fallback
    assert!(pencil_2x2_extreme(1.0, 0.0, 1.0, 1.0, 0.0, -1.0, true).is_none());
}

#[test]
fn line_search_step_is_optimal_on_a_grid() {
    let plant = Plant::Siso(random_stable_plant(9, 2, 96).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let u = InitialInput::Ones.build(1, 96).unwrap();
    let (v, sym_u, gram_u) = rho2(&mut s, &u).unwrap();
    let p = sysprop::passivity::grad_rho2(&u, &sym_u, &gram_u, v).scaled(-1.0);
    let cache = ReuseCache {
        sym_u,
        gram_u,
        sym_p: None,
        gram_p: None,
    };
    let ls = exact_line_search(&mut s, &u, &p, &cache).unwrap();
    let alpha_star = ls.alpha_star.expect("pencil is definite here");
    let mut eval = |alpha: f64| -> f64 {
        let w = retract(&u, &p.scaled(alpha)).unwrap();
        let (val, _, _) = rho2(&mut s, &w).unwrap();
        val
    };
    let best = eval(alpha_star);
    for i in 0..=100 {
        let alpha = -10.0 * alpha_star.abs() + i as f64 * 0.2 * alpha_star.abs();
        if alpha.abs() < 1e-12 {
            continue;
        }
        let v = eval(alpha);
        assert!(
            best <= v + 1e-10,
            "alpha*={alpha_star} gives {best}, but alpha={alpha} gives {v}"
        );
    }
}

#[test]
fn passivity_line_search_descends_monotonically() {
    let plant = Plant::Siso(random_stable_plant(9, 2, 128).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let mut cfg: EstimatorConfig<PassivityMethod> = EstimatorConfig::default();
    cfg.max_iters = 200;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    let est = estimate_passivity(&mut s, &cfg).unwrap();
    for w in est.trace.rows().windows(2) {
        assert!(w[1].rho <= w[0].rho + 1e-12);
    }
}

#[test]
fn passivity_cache_and_critical_point_consistent_at_convergence() {
    let plant = Plant::Siso(random_stable_plant(9, 2, 128).unwrap());
    let mut s = ProbeSession::noiseless(plant.clone());
    let mut cfg: EstimatorConfig<PassivityMethod> = EstimatorConfig::default();
    cfg.max_iters = 3000;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 1e-9;
    let est = estimate_passivity(&mut s, &cfg).unwrap();

    // cached vectors match fresh probes of u_current
    let mut fresh = ProbeSession::noiseless(plant);
    let (value, sym_u, gram_u) = rho2(&mut fresh, &est.u_current).unwrap();
    let scale = sym_u.norm().max(1.0);
    assert!(est.cached.sym_u.sub(&sym_u).norm() <= 1e-10 * scale);
    assert!(est.cached.gram_u.sub(&gram_u).norm() <= 1e-10 * gram_u.norm().max(1.0));

    // critical-point residual of the pencil
    let residual = sym_u.scaled(0.5).axpy(-value, &gram_u).norm();
    assert!(residual <= 1e-6, "pencil residual {residual}");
}

#[test]
fn converged_rho2_scales_inversely_with_taps() {
    let n = 128;
    let base = random_stable_plant(9, 2, n).unwrap();
    let scaled = ImpulseResponse::new(base.taps().iter().map(|x| 2.5 * x).collect()).unwrap();
    let run = |h: ImpulseResponse| -> f64 {
        let mut s = ProbeSession::noiseless(Plant::Siso(h));
        let mut cfg: EstimatorConfig<PassivityMethod> = EstimatorConfig::default();
        cfg.max_iters = 2000;
        cfg.rel_tol = 0.0;
        cfg.patience = usize::MAX;
        cfg.grad_tol = 1e-10;
        -estimate_passivity(&mut s, &cfg).unwrap().s_hat
    };
    let rho_base = run(base);
    let rho_scaled = run(scaled);
    assert!(
        (rho_scaled - rho_base / 2.5).abs() <= 1e-6 * rho_base.abs(),
        "{rho_scaled} vs {}",
        rho_base / 2.5
    );
}

#[test]
fn uzawa_center_update_zeroes_center_gradient() {
    let plant = Plant::Siso(random_stable_plant(4, 4, 96).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let u = rand_unit(96, &mut rng);
        let (c_next, _) = uzawa_step(&mut s, &u, 0.002).unwrap();
        let (_, _, sym_u, _) = rho3(&mut s, c_next, &u).unwrap();
        assert!(grad_c_rho3(c_next, &u, &sym_u).abs() <= 1e-10);
    }
}

#[test]
fn converged_cone_satisfies_saddle_ordering_and_matches_spectra() {
    let plant = Plant::Siso(random_stable_plant(8, 4, 200).unwrap());
    let mut s = ProbeSession::noiseless(plant.clone());
    let mut cfg: EstimatorConfig<ConeMethod> = EstimatorConfig::default();
    cfg.max_iters = 8000;
    cfg.rel_tol = 1e-10;
    cfg.patience = 30;
    let est = estimate_cone(&mut s, &cfg).unwrap();

    // r_hat^2 vs lambda_1(A(c_hat))
    let gram = gram_matrix(&plant);
    let sym = sym_part_matrix(&plant);
    let top = sym_eigvals(cone_matrix(&gram, &sym, est.c_hat)).unwrap()[0];
    assert!(
        (est.r_hat * est.r_hat - top).abs() <= 1e-4 * top.max(1e-12),
        "{} vs {top}",
        est.r_hat * est.r_hat
    );

    // local min-max ordering around the converged point
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rho_at, _, _, _) = rho3(&mut s, est.c_hat, &est.u_current).unwrap();
    for _ in 0..20 {
        let d = rand_tangent(&est.u_current, &mut rng);
        let u_pert = retract(&est.u_current, &d.scaled(1e-3)).unwrap();
        let (rho_pert, _, _, _) = rho3(&mut s, est.c_hat, &u_pert).unwrap();
        assert!(rho_pert <= rho_at + 1e-6);
    }
    for dc in [-0.1, -0.03, 0.03, 0.1] {
        let (rho_c, _, _, _) = rho3(&mut s, est.c_hat + dc, &est.u_current).unwrap();
        assert!(rho_c >= rho_at - 1e-10);
    }
}

#[test]
fn saddle_flow_contracts_near_the_saddle() {
    // initialized at the true saddle plus a 1e-3 perturbation, the distance
    // must shrink at least tenfold over a fixed interval
    let plant = Plant::Siso(random_stable_plant(32, 6, 200).unwrap());
    let saddle = cone_saddle_point(&plant).unwrap();
    let u_star = Signal::siso(saddle.u_star.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = rand_tangent(&u_star, &mut rng);
    let u0 = retract(&u_star, &d.scaled(1e-3)).unwrap();
    let c0 = saddle.c_star + 1e-3;
    let dist = |c: f64, u: &Signal| -> f64 {
        let dp = u.sub(&u_star).norm().powi(2);
        let dm = u.axpy(1.0, &u_star).norm().powi(2);
        ((c - saddle.c_star).powi(2) + dp.min(dm)).sqrt()
    };
    let d0 = dist(c0, &u0);
    let mut s = ProbeSession::noiseless(plant);
    let cfg = FlowConfig {
        rhs: RhsKind::ConicSaddle,
        t_end: 20.0,
        rel_tol: 1e-9,
        abs_tol: 1e-12,
        max_rhs_evals: 3_000_000,
    };
    let traj = integrate_flow(&mut s, FlowState::CenterSphere(c0, u0), &cfg).unwrap();
    let (c_end, u_end) = match &traj.state {
        FlowState::CenterSphere(c, u) => (*c, u.clone()),
        _ => unreachable!(),
    };
    let d_end = dist(c_end, &u_end);
    assert!(
        d_end <= d0 / 10.0,
        "distance only contracted from {d0:.3e} to {d_end:.3e}"
    );
}

#[test]
fn flow_sphere_drift_stays_within_tolerance_allowance() {
    let plant = Plant::Siso(random_stable_plant(7, 2, 200).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let rel_tol = 1e-8;
    let cfg = FlowConfig {
        rhs: RhsKind::GainAscent,
        t_end: 100.0,
        rel_tol,
        abs_tol: 1e-10,
        max_rhs_evals: 2_000_000,
    };
    let u0 = InitialInput::Sine.build(1, 200).unwrap();
    let traj = integrate_flow(&mut s, FlowState::Sphere(u0), &cfg).unwrap();
    assert!(traj.points.len() >= 100);
    assert!(traj.max_sphere_drift <= 100.0 * rel_tol);
}

#[test]
fn assumption_one_coupling_is_reported_for_degenerate_tops() {
    // degenerate top with nonzero coupling
    let plant = Plant::Siso(random_stable_plant(1, 4, 200).unwrap());
    let saddle = cone_saddle_point(&plant).unwrap();
    assert_eq!(saddle.degenerate, saddle.coupling.is_some());

    // oscillator truth values place the saddle strictly inside the gain cone
    let (c, r) = true_cone(&oscillator_plant()).unwrap();
    let gamma = sysprop::spectra::l2_gain(&oscillator_plant()).unwrap();
    assert!(r < gamma && c.is_finite());
}

#[test]
fn noisy_line_search_falls_back_rather_than_failing() {
    // Heavy multiplicative noise can push the 2x2 pencil off definiteness;
    // the estimator must keep going on the fixed step.
    let plant = Plant::Siso(random_stable_plant(9, 2, 64).unwrap());
    let noise = NoiseModel::multiplicative(0.9, 5).unwrap();
    let mut s = ProbeSession::new(plant, noise, Some(600)).unwrap();
    let mut cfg: EstimatorConfig<PassivityMethod> = EstimatorConfig::default();
    cfg.max_iters = 100;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    match estimate_passivity(&mut s, &cfg) {
        Ok(est) => assert!(est.s_hat.is_finite()),
        Err(sysprop::Error::EstimateAborted { reason, .. }) => {
            assert!(matches!(
                *reason,
                sysprop::Error::BudgetExhausted { .. } | sysprop::Error::NoisyDenominator
            ));
        }
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn noise_stream_matches_frozen_golden_file() {
    let text = include_str!("data/noise_stream.csv");
    let mut s = ProbeSession::new(
        identity_plant(8),
        NoiseModel::multiplicative(0.5, 42).unwrap(),
        None,
    )
    .unwrap();
    let u = Signal::siso((1..=8).map(|x| x as f64).collect()).unwrap();
    let y0 = s.evaluate(&u).unwrap();
    let y1 = s.evaluate(&u).unwrap();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let e: usize = parts.next().unwrap().parse().unwrap();
        let i: usize = parts.next().unwrap().parse().unwrap();
        let v: f64 = parts.next().unwrap().parse().unwrap();
        let got = if e == 0 {
            y0.samples()[i]
        } else {
            y1.samples()[i]
        };
        assert_eq!(got, v, "noise stream drifted at eval {e} index {i}");
    }
}

#[test]
fn mimo_apply_matches_dense_block_operator() {
    let p = sysprop::lti::random_mimo_plant(2, 3, 40, 2).unwrap();
    let gamma = sysprop::spectra::mimo_matrix(&p);
    let u = Signal::new(2, (0..80).map(|t| ((t as f64) * 0.23).sin()).collect()).unwrap();
    let y = sysprop::lti::mimo_apply(&p, &u).unwrap();
    let dense = gamma.matvec(u.samples());
    let scale = dense.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
    for (a, b) in y.samples().iter().zip(&dense) {
        assert!((a - b).abs() <= 1e-12 * scale);
    }
}

#[test]
fn siso_adjoint_matches_dense_transpose() {
    let h = random_stable_plant(8, 5, 64).unwrap();
    let g = toeplitz_matrix(&h);
    let mut s = ProbeSession::noiseless(Plant::Siso(h));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let y = rand_unit(64, &mut rng).scaled(1.7);
        let adj = s.adjoint_apply(&y).unwrap();
        let dense = g.t_matvec(y.samples());
        let scale = dense.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
        for (a, b) in adj.samples().iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn rho1_at_dominant_eigenvector_is_top_eigenvalue() {
    let plant = Plant::Siso(random_stable_plant(9, 2, 96).unwrap());
    let (gamma, u_star) = sysprop::spectra::true_gain(&plant).unwrap();
    let mut s = ProbeSession::noiseless(plant);
    let (value, _, _) = rho1(&mut s, &u_star).unwrap();
    let lambda1 = gamma * gamma;
    assert!((value - lambda1).abs() <= 1e-8 * lambda1.max(1.0));
}

#[test]
fn power_from_ones_reaches_top_eigenvalue() {
    // 200 steps from the normalized constant input on a well-gapped plant.
    // The truncated operator's top eigenvalues cluster, so the oracle-checked
    // attainable accuracy at this horizon is ~2e-5 relative; asserted with
    // margin at 1e-4.
    let plant = Plant::Siso(random_stable_plant(9, 2, 200).unwrap());
    let lambda1 = sysprop::spectra::l2_gain(&plant).unwrap().powi(2);
    let mut s = ProbeSession::noiseless(plant);
    let mut cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    cfg.u0 = InitialInput::Ones;
    cfg.max_iters = 200;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    let est = estimate_gain(&mut s, &cfg).unwrap();
    let rho_final = est.trace.rows().last().unwrap().rho;
    assert!((rho_final - lambda1).abs() <= 1e-4 * lambda1);
}

#[test]
fn pg_estimate_on_static_gain_from_palindromic_start() {
    // PG of a pure gain is beta P; palindromes are fixed points and the
    // quotient reads off beta immediately
    let mut taps = vec![0.0; 16];
    taps[0] = 3.0;
    let plant = Plant::Siso(ImpulseResponse::new(taps).unwrap());
    let mut s = ProbeSession::noiseless(plant);
    let mut cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    cfg.method = GainMethod::PgPower;
    cfg.u0 = InitialInput::Ones;
    cfg.max_iters = 5;
    let est = estimate_gain(&mut s, &cfg).unwrap();
    assert!((est.gamma_hat - 3.0).abs() <= 1e-12);
}

#[test]
fn passivity_descent_hits_one_percent_within_3000_samples() {
    let plant = Plant::Siso(random_stable_plant(9, 2, 200).unwrap());
    let (s_true, _) = true_passivity(&plant).unwrap();
    let mut sess = ProbeSession::new(plant, NoiseModel::none(), Some(3000)).unwrap();
    let mut cfg: EstimatorConfig<PassivityMethod> = EstimatorConfig::default();
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    cfg.max_iters = 999;
    let est = estimate_passivity(&mut sess, &cfg).unwrap();
    let rel = (est.s_hat - s_true).abs() / s_true.abs();
    assert!(rel <= 0.01, "relative error {rel}");
}

#[test]
fn rho3_matches_dense_quadratic_form() {
    let plant = Plant::Siso(random_stable_plant(6, 4, 72).unwrap());
    let gram = gram_matrix(&plant);
    let sym = sym_part_matrix(&plant);
    let mut s = ProbeSession::noiseless(plant);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let u = rand_unit(72, &mut rng);
    let c = 0.3;
    let (value, _, _, _) = rho3(&mut s, c, &u).unwrap();
    let a = cone_matrix(&gram, &sym, c);
    let dense = {
        let au = a.matvec(u.samples());
        au.iter().zip(u.samples()).map(|(x, y)| x * y).sum::<f64>() / u.dot(&u)
    };
    assert!((value - dense).abs() <= 1e-10 * dense.abs().max(1.0));
}

#[test]
fn grad_u_rho3_vanishes_at_eigenvectors_of_the_cone_matrix() {
    let plant = Plant::Siso(random_stable_plant(6, 4, 72).unwrap());
    let gram = gram_matrix(&plant);
    let sym = sym_part_matrix(&plant);
    let c = 0.7;
    let summary = symmetric_summary(&cone_matrix(&gram, &sym, c)).unwrap();
    let v = Signal::siso(summary.eigenvectors[0].clone()).unwrap();
    let mut s = ProbeSession::noiseless(plant);
    let (value, _, sym_u, gg_u) = rho3(&mut s, c, &v).unwrap();
    let g = sysprop::conic::grad_u_rho3(c, &v, &sym_u, &gg_u, value);
    assert!(
        g.norm() <= 1e-8,
        "gradient norm {} at an eigenvector",
        g.norm()
    );
}

#[test]
fn arrow_hurwicz_reaches_two_percent_in_500_iterations() {
    let plant = Plant::Siso(random_stable_plant(2, 4, 500).unwrap());
    let (c_star, r_min) = true_cone(&plant).unwrap();
    let mut s = ProbeSession::new(plant, NoiseModel::none(), Some(1503)).unwrap();
    let mut cfg: EstimatorConfig<ConeMethod> = EstimatorConfig::default();
    cfg.method = ConeMethod::ArrowHurwicz;
    cfg.alpha = 0.002;
    cfg.rel_tol = 0.0;
    cfg.patience = usize::MAX;
    cfg.grad_tol = 0.0;
    cfg.max_iters = 501;
    let est = estimate_cone(&mut s, &cfg).unwrap();
    let last = est.trace.rows().last().unwrap();
    assert!(last.k >= 500);
    let r_rel = (last.r.unwrap() - r_min).abs() / r_min;
    // the fixed-step center rings around c*; its error is measured on the
    // cone's own scale (the radius)
    let c_err = (last.c.unwrap() - c_star).abs() / r_min.max(c_star.abs());
    assert!(r_rel <= 0.02, "radius off by {r_rel}");
    assert!(c_err <= 0.02, "center off by {c_err}");
}

#[test]
fn converged_cone_radius_stays_below_gain_estimate() {
    let plant = Plant::Siso(random_stable_plant(4, 4, 200).unwrap());
    let mut s = ProbeSession::noiseless(plant.clone());
    let mut gain_cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    gain_cfg.max_iters = 400;
    let gamma_hat = estimate_gain(&mut s, &gain_cfg).unwrap().gamma_hat;
    let mut s = ProbeSession::noiseless(plant);
    let mut cone_cfg: EstimatorConfig<ConeMethod> = EstimatorConfig::default();
    cone_cfg.max_iters = 4000;
    cone_cfg.rel_tol = 1e-9;
    cone_cfg.patience = 20;
    let est = estimate_cone(&mut s, &cone_cfg).unwrap();
    assert!(
        est.r_hat <= gamma_hat + 1e-9,
        "{} vs {gamma_hat}",
        est.r_hat
    );
}

#[test]
fn flow_methods_produce_consistent_estimates() {
    let plant = Plant::Siso(random_stable_plant(9, 2, 96).unwrap());
    let gamma = sysprop::spectra::l2_gain(&plant).unwrap();
    let (s_true, _) = true_passivity(&plant).unwrap();

    let mut s = ProbeSession::noiseless(plant.clone());
    let mut cfg: EstimatorConfig<GainMethod> = EstimatorConfig::default();
    cfg.method = GainMethod::ContinuousFlow;
    cfg.flow_time = 120.0;
    let est = estimate_gain(&mut s, &cfg).unwrap();
    assert!(est.flow.is_some());
    assert!((est.gamma_hat - gamma).abs() <= 1e-2 * gamma);
    assert!(est.trace.rows().len() >= 100);

    let mut s = ProbeSession::noiseless(plant.clone());
    let mut pcfg: EstimatorConfig<PassivityMethod> = EstimatorConfig::default();
    pcfg.method = PassivityMethod::ContinuousFlow;
    pcfg.flow_time = 120.0;
    let est = estimate_passivity(&mut s, &pcfg).unwrap();
    assert!((est.s_hat - s_true).abs() <= 1e-2 * s_true.abs());

    // the conic saddle flow needs a plant with an isolated saddle
    let plant = Plant::Siso(random_stable_plant(32, 6, 200).unwrap());
    let (_, r_min) = true_cone(&plant).unwrap();
    let mut s = ProbeSession::noiseless(plant);
    let mut ccfg: EstimatorConfig<ConeMethod> = EstimatorConfig::default();
    ccfg.method = ConeMethod::ContinuousFlow;
    ccfg.flow_time = 150.0;
    let est = estimate_cone(&mut s, &ccfg).unwrap();
    assert!(
        (est.r_hat - r_min).abs() <= 1e-3 * r_min,
        "{} vs {r_min}",
        est.r_hat
    );
}
