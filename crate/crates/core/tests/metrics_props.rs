use num_complex::Complex;
use proptest::prelude::*;

use pathid_core::entmetrics::{
    chsh, chsh_with, concurrence, correlation, fidelity_phi_plus, joint_probabilities, partial_trace,
    relative_phase, trace_distance, witness_value, AnalyzerSetting, Basis,
};
use pathid_core::linalg::CMat4;
use pathid_core::{Rho, Rho32};

fn rho() -> impl Strategy<Value = Rho> {
    prop::collection::vec(-1.0f64..1.0, 32).prop_filter_map("non-degenerate", |v| {
        let g = CMat4::from_fn(|i, j| Complex::new(v[2 * (4 * i + j)], v[2 * (4 * i + j) + 1]));
        let m = g * g.adjoint();
        (m.trace().re > 1e-3).then(|| Rho::from_unnormalized(m))
    })
}

fn angle() -> impl Strategy<Value = f64> {
    -180.0f64..180.0
}

proptest! {
    #[test]
    fn correlations_are_bounded(r in rho(), a in angle(), b in angle()) {
        prop_assert!(correlation(&r, AnalyzerSetting::new(a, b)).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn tsirelson_bound(r in rho(), s in prop::array::uniform4((angle(), angle()))) {
        let settings = s.map(|(a, b)| AnalyzerSetting::new(a, b));
        prop_assert!(chsh_with(&r, settings).s_value <= 2.0 * 2f64.sqrt() + 1e-9);
    }

    #[test]
    fn concurrence_in_unit_interval(r in rho()) {
        let c = concurrence(&r).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn witness_is_half_minus_fidelity(r in rho()) {
        prop_assert!((witness_value(&r) - (0.5 - fidelity_phi_plus(&r))).abs() < 1e-12);
    }

    #[test]
    fn joint_tables_are_distributions(r in rho(), a in 0usize..3, b in 0usize..3) {
        let t = joint_probabilities(&r, Basis::ALL[a], Basis::ALL[b]);
        prop_assert!((t.flat().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(t.flat().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn no_signalling(r in rho(), a in 0usize..3, b1 in 0usize..3, b2 in 0usize..3) {
        // Alice's marginal does not depend on Bob's basis
        let m = |b: usize| {
            let t = joint_probabilities(&r, Basis::ALL[a], Basis::ALL[b]);
            t.probs[0][0] + t.probs[0][1]
        };
        prop_assert!((m(b1) - m(b2)).abs() < 1e-12);
        let pt = partial_trace(&r, 0);
        prop_assert!(((pt[0][0] + pt[1][1]).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_is_a_metric(a in rho(), b in rho()) {
        let d = trace_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - trace_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(trace_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn dephasing_is_monotone(g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let phi = Rho::phi_plus();
        prop_assert!(chsh(&phi.dephased(lo)).s_value <= chsh(&phi.dephased(hi)).s_value + 1e-12);
        prop_assert!(concurrence(&phi.dephased(lo)).unwrap() <= concurrence(&phi.dephased(hi)).unwrap() + 1e-12);
    }
}

#[test]
fn circular_basis_anticorrelation() {
    let t = joint_probabilities(&Rho::phi_plus(), Basis::RL, Basis::RL);
    assert!((t.probs[0][1] + t.probs[1][0] - 1.0).abs() < 1e-12);
    assert_eq!(t.label(0, 1), "RL");
}

#[test]
fn relative_phase_reads_the_coherence() {
    let v = [Complex::new(1.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::from_polar(1.0, 0.9)];
    assert!((relative_phase(&Rho::from_pure(v)) - 0.9).abs() < 1e-12);
}

#[test]
fn single_precision_metrics() {
    let r = Rho32::phi_plus().dephased(0.5);
    assert!((chsh(&r).s_value - 1.5 * 2f32.sqrt()).abs() < 1e-5);
    assert!((concurrence(&r).unwrap() - 0.5).abs() < 1e-4);
}
