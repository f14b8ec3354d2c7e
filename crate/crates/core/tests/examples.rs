//! Worked cases that cut across modules: each value is checked by two
//! independent routes (solver vs closed form, simulation vs spectrum, ...).

use std::f64::consts::{PI, TAU};

use gtspec_core::optimizer::{
    gap_curve_constant, l1_distance, leading_cluster, optimize_gap, StopReason,
};
use gtspec_core::perturbation::gap_gradient;
use gtspec_core::schroedinger::{find_slow_eigenvalue, hamiltonian_eigs, lambda_s};
use gtspec_core::simulator::{generic_state, init_state, run_decay};
use gtspec_core::spectrum::{spectral_gap, EigenvalueRecord};
use gtspec_core::transfer::{det_m, m_matrix};
use gtspec_core::{GapOptions, SigmaProfile};
use num_complex::Complex64;

fn constant(s: f64) -> SigmaProfile {
    SigmaProfile::constant(s).unwrap()
}

fn real_parts(records: &[EigenvalueRecord]) -> Vec<f64> {
    records.iter().map(|r| r.lambda.re).collect()
}

#[test]
fn zero_crossing_of_mu_is_an_eigenvalue() {
    let p = constant(4.0);
    let lam = -2.0 + 3f64.sqrt();
    let spec = hamiltonian_eigs(&p, lam, 3, 512).unwrap();
    assert!(spec.mu.iter().any(|m| m.abs() < 1e-6), "{:?}", spec.mu);
    assert!(det_m(&p, Complex64::new(lam, 0.0)).norm() < 1e-10);
    // and away from the spectrum neither test fires
    let off = -0.5;
    let spec = hamiltonian_eigs(&p, off, 3, 512).unwrap();
    assert!(spec.mu.iter().all(|m| m.abs() > 1e-2));
    assert!(det_m(&p, Complex64::new(off, 0.0)).norm() > 1e-2);
}

#[test]
fn slow_eigenvalue_of_half_wave_is_in_the_spectrum() {
    let p = SigmaProfile::new(vec![0.0, PI, TAU], vec![0.0, 8.0]).unwrap();
    let slow = find_slow_eigenvalue(&p, 1e-8).unwrap();
    assert!(slow.lambda >= lambda_s(p.l1_norm()).unwrap() - 1e-9 && slow.lambda < 0.0);
    let m = m_matrix(&p, Complex64::new(slow.lambda, 0.0));
    assert!(det_m(&p, Complex64::new(slow.lambda, 0.0)).norm() <= 1e-5 * m.norm().max(1.0));
    // the gap solver sees an eigenvalue at least as slow
    let g = spectral_gap(&p, &GapOptions::default()).unwrap();
    assert!(g.gap <= -slow.lambda + 1e-6);
    assert!(g.eigenvalues.iter().any(|r| (r.lambda - slow.lambda).norm() < 1e-5));
}

#[test]
fn slow_eigenvalue_of_constant_four() {
    let slow = find_slow_eigenvalue(&constant(4.0), 1e-6).unwrap();
    assert!((slow.lambda - (-2.0 + 3f64.sqrt())).abs() <= 1e-6);
    assert!(find_slow_eigenvalue(&constant(2.0), 1e-6).is_err());
}

#[test]
fn simulated_decay_matches_the_gap() {
    let s = generic_state(512).unwrap();
    let one = run_decay(&s, &constant(1.0), 30.0).unwrap();
    assert!((one.rate - 0.5).abs() <= 0.02, "rate {}", one.rate);

    let cos = init_state(512, f64::cos, |_| 0.0).unwrap();
    let two = run_decay(&cos, &constant(2.0), 30.0).unwrap();
    assert!((0.90..=1.02).contains(&two.rate), "rate {}", two.rate);

    let zero = run_decay(&s, &constant(0.0), 30.0).unwrap();
    assert!(zero.rate.abs() <= 1e-10);

    let step = SigmaProfile::new(vec![0.0, PI, TAU], vec![0.5, 3.5]).unwrap();
    let g = spectral_gap(&step, &GapOptions::default()).unwrap();
    let tr = run_decay(&s, &step, 40.0).unwrap();
    assert!((tr.rate - g.gap).abs() <= 0.03 * g.gap, "rate {} vs gap {}", tr.rate, g.gap);
}

#[test]
fn leading_clusters_of_constant_profiles() {
    // every n ≥ 1 mode of σ≡2 sits on Re λ = −1, so the whole line is leading
    let two = leading_cluster(&constant(2.0), 1e-6).unwrap();
    assert!(real_parts(&two).iter().all(|re| (re + 1.0).abs() < 1e-8));
    let at_minus_one = two.iter().find(|r| (r.lambda + 1.0).norm() < 1e-8).unwrap();
    assert_eq!(at_minus_one.kernel_dim, 2);

    let one = leading_cluster(&constant(1.0), 1e-6).unwrap();
    assert!(real_parts(&one).iter().all(|re| (re + 0.5).abs() < 1e-8));
    let half = 0.75f64.sqrt();
    assert!(one.iter().any(|r| (r.lambda - Complex64::new(-0.5, half)).norm() < 1e-8));
    assert!(one.iter().any(|r| (r.lambda - Complex64::new(-0.5, -half)).norm() < 1e-8));

    let four = leading_cluster(&constant(4.0), 1e-6).unwrap();
    assert_eq!(four.len(), 1);
    assert!((four[0].lambda.re - (-2.0 + 3f64.sqrt())).abs() < 1e-8);
    assert_eq!((four[0].multiplicity, four[0].kernel_dim), (2, 2));
}

#[test]
fn gap_gradient_of_constant_four_sums_to_the_derivative() {
    let lam = -2.0 + 3f64.sqrt();
    let grad = gap_gradient(&constant(4.0), Complex64::new(lam, 0.0), 8).unwrap();
    // raising σ uniformly by 1 moves λ by −λ/(2λ+σ)
    let dlam = -lam / (2.0 * lam + 4.0);
    let sum: f64 = grad.iter().sum();
    assert!((sum - dlam).abs() < 1e-6, "sum {sum} vs {dlam}");
    let spread = grad.iter().fold(0.0f64, |m, g| m.max((g - grad[0]).abs()));
    assert!(spread < 1e-8);
}

#[test]
fn constant_curve_values() {
    let c = gap_curve_constant(1.0, 6.0, 11).unwrap();
    let at = |s: f64| c.rows.iter().find(|(x, _)| (x - s).abs() < 1e-12).unwrap().1;
    assert!((at(1.0) - 0.5).abs() < 1e-12);
    assert!((at(2.0) - 1.0).abs() < 1e-12);
    assert!((at(6.0) - (3.0 - 8f64.sqrt())).abs() < 1e-12);
    assert!(c.max_check_error < 1e-8);
}

#[test]
fn optimizer_from_constant_two_stops_at_once() {
    let r = optimize_gap(&constant(2.0), 8, 50).unwrap();
    assert_eq!(r.stop_reason, StopReason::DegenerateLeadingCluster);
    assert_eq!(r.trajectory.len(), 1);
    assert!((r.final_gap - 1.0).abs() < 1e-8);
    assert!(r.cluster_multiplicity >= 2);
}

#[test]
fn optimizer_climbs_the_constant_family() {
    let r = optimize_gap(&constant(1.0), 1, 100).unwrap();
    assert!((r.final_gap - 1.0).abs() < 1e-6, "gap {}", r.final_gap);
    assert!((r.final_profile.values()[0] - 2.0).abs() < 1e-4);
    assert!(r.trajectory.windows(2).all(|w| w[1].gap >= w[0].gap - 1e-9));
}

#[test]
fn optimizer_from_constant_five_reaches_the_optimum() {
    let r = optimize_gap(&constant(5.0), 8, 200).unwrap();
    assert!((r.final_gap - 1.0).abs() <= 0.02, "gap {}", r.final_gap);
    let d = l1_distance(&r.final_profile, &constant(2.0));
    assert!(d <= 0.2 * 4.0 * PI, "distance {d}");
    assert!(r.trajectory.windows(2).all(|w| w[1].gap >= w[0].gap - 1e-9));
}

// The two-function test space only bounds the diagonal of the quadratic form;
// here the cross term ∫σ sin(x − φ) is large enough that μ₂(λ_s) stays positive,
// no real eigenvalue lies in [λ_s, 0), and the gap exceeds −λ_s.
#[test]
fn slow_eigenvalue_certificate_can_fail() {
    let p = SigmaProfile::new(vec![0.0, 1.0, 3.5, TAU], vec![0.5, 4.0, 1.5]).unwrap();
    let ls = lambda_s(p.l1_norm()).unwrap();
    let spec = hamiltonian_eigs(&p, ls, 3, 1024).unwrap();
    assert!(spec.mu[1] > 0.01, "μ₂(λ_s) = {}", spec.mu[1]);
    let g = spectral_gap(&p, &GapOptions::default()).unwrap();
    assert!(g.gap > -ls + 1e-3, "gap {} vs {}", g.gap, -ls);
    assert!(g.gap < 1.0);
    assert!(find_slow_eigenvalue(&p, 1e-6).is_err());
}
