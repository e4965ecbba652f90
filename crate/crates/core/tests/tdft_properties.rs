use std::sync::Arc;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdft::quantum::{ComplexMatrix, ZERO};
use tdft::tdft::{
    generator_residual, perturbation_order1, random_pulsed_problem, second_order_discrepancy,
    solve_generator, tdft_order1, TdftProblem,
};

fn pulsed(seed: u64, dim: usize, ratio: f64) -> (TdftProblem, f64) {
    random_pulsed_problem(&mut ChaCha8Rng::seed_from_u64(seed), dim, ratio).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generator_stays_anti_hermitian(seed in any::<u64>(), dim in 2usize..=4) {
        let (p, t_end) = pulsed(seed, dim, 0.05);
        let traj = solve_generator(&p, 0.0, t_end, p.default_step().unwrap()).unwrap();
        prop_assert!(traj.max_anti_hermiticity_defect() <= 1e-9);
    }

    #[test]
    fn first_order_coefficients_agree(seed in any::<u64>(), dim in 2usize..=4) {
        let (p, t_end) = pulsed(seed, dim, 0.05);
        let h = p.default_step().unwrap();
        let traj = solve_generator(&p, 0.0, t_end, h).unwrap();
        for k in 0..dim {
            let direct = perturbation_order1(&p, k, t_end, h).unwrap();
            let via_s = tdft_order1(&p, &traj, k, t_end).unwrap();
            prop_assert!(direct.max_abs_diff(&via_s) <= 1e-6);
        }
    }

    #[test]
    fn second_order_coefficients_agree(seed in any::<u64>(), dim in 2usize..=4) {
        let (p, t_end) = pulsed(seed, dim, 0.05);
        let err = second_order_discrepancy(&p, t_end, p.default_step().unwrap()).unwrap();
        prop_assert!(err <= 1e-6, "discrepancy {:e}", err);
    }

    /// `sum_m |C^(0) + C^(1)|^2 - 1 = sum_m |C^(1)_m|^2 >= 0`, bounded by `(max||H1|| t)^2`.
    #[test]
    fn first_order_norm_defect_is_second_order(seed in any::<u64>(), dim in 2usize..=4) {
        let (p, t_end) = pulsed(seed, dim, 0.05);
        let h = p.default_step().unwrap();
        let h1_max = (0..=200)
            .map(|i| p.h1_at(t_end * i as f64 / 200.0).unwrap().frobenius_norm())
            .fold(0.0, f64::max);
        for k in 0..dim {
            let c1 = perturbation_order1(&p, k, t_end, h).unwrap();
            let norm: f64 = c1
                .c_values
                .iter()
                .enumerate()
                .map(|(m, c)| (if m == k { c + 1.0 } else { *c }).norm_sqr())
                .sum();
            let defect = norm - 1.0;
            prop_assert!(defect >= -1e-12, "defect {:e}", defect);
            prop_assert!(defect <= (h1_max * t_end).powi(2));
        }
    }
}

#[test]
fn residual_decays_quadratically() {
    for seed in [1u64, 2, 3] {
        let (p, t_end) = pulsed(seed, 3, 0.05);
        let h = p.default_step().unwrap();
        let r = |step: f64| {
            generator_residual(&p, &solve_generator(&p, 0.0, t_end, step).unwrap()).unwrap()
        };
        let order = (r(h) / r(0.5 * h)).log2();
        assert!((order - 2.0).abs() < 0.3, "seed {seed}: order {order}");
    }
}

#[test]
fn generator_state_converges_at_fourth_order() {
    let v = C64::new(0.04, 0.01);
    let p = TdftProblem::new(
        vec![1.0, 0.0],
        Arc::new(move |t: f64| {
            let a = v * (0.2 * t).sin();
            ComplexMatrix::from_rows(&[&[ZERO, a], &[a.conj(), ZERO]])
        }),
    )
    .unwrap();
    let end = |h: f64| {
        solve_generator(&p, 0.0, 20.0, h)
            .unwrap()
            .s_matrices()
            .last()
            .unwrap()
            .clone()
    };
    let (a, b, c) = (end(0.08), end(0.04), end(0.02));
    let ratio = (&a - &b).max_abs() / (&b - &c).max_abs();
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

/// Slowly varying Gaussian pulse: the generator follows `-H1_mn / E_mn`, with a
/// deviation set by the slope of the pulse. Near the peak the slope vanishes and
/// the curvature term `|d2 H1| / E^3` takes over.
#[test]
fn generator_follows_adiabatic_pulse() {
    let (a, w, tc, delta) = (0.05, 50.0, 300.0, 1.0);
    let pulse = move |t: f64| a * (-((t - tc) / w).powi(2)).exp();
    let p = TdftProblem::new(
        vec![delta, 0.0],
        Arc::new(move |t| {
            let g = C64::new(pulse(t), 0.0);
            ComplexMatrix::from_rows(&[&[ZERO, g], &[g, ZERO]])
        }),
    )
    .unwrap();
    let traj = solve_generator(&p, 0.0, 2.0 * tc, p.default_step().unwrap()).unwrap();
    let mut slope_checked = 0;
    for (&t, s) in traj.t_grid().iter().zip(traj.s_matrices()).step_by(50) {
        let u = (t - tc) / w;
        let slope = (pulse(t) * 2.0 * u / w).abs();
        let curvature = (pulse(t) * (4.0 * u * u - 2.0) / (w * w)).abs();
        let deviation = (s[(0, 1)] + pulse(t) / delta).norm();
        let first = 2.0 * slope / (delta * delta);
        assert!(
            deviation <= first + 2.0 * curvature / delta.powi(3) + 1e-12,
            "t = {t}: {deviation:e}"
        );
        if slope >= curvature / delta {
            slope_checked += 1;
            assert!(
                deviation <= first + 1e-12,
                "t = {t}: {deviation:e} above {first:e}"
            );
        }
    }
    assert!(slope_checked > 100);
}
