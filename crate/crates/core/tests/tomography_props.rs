use proptest::prelude::*;

use pathid_core::entmetrics::{concurrence, fidelity_phi_plus, trace_distance};
use pathid_core::fock::Polarization;
use pathid_core::linalg::CMat4;
use pathid_core::tomography::{
    clamp_psd, exact_data, linear_inversion, mc_errorbars, mc_errorbars_with_seeds, reconstruct_mle,
    reconstruct_mle_weights, tomo_measure, TomoError, TomoSettings,
};
use pathid_core::Rho;

fn rho() -> impl Strategy<Value = Rho> {
    prop::collection::vec(-1.0f64..1.0, 32).prop_filter_map("non-degenerate", |v| {
        let g = CMat4::from_fn(|i, j| num_complex::Complex::new(v[2 * (4 * i + j)], v[2 * (4 * i + j) + 1]));
        let m = g * g.adjoint();
        (m.trace().re > 1e-3).then(|| Rho::from_unnormalized(m))
    })
}

/// `Σ nₖ ln pₖ` of `truth` on its own exact data.
fn truth_log_likelihood(truth: &Rho) -> f64 {
    exact_data(truth).iter().flat_map(|(_, p)| p.iter()).filter(|p| **p > 0.0).map(|p| p * p.ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mle_output_is_a_state(truth in rho(), seed in any::<u64>()) {
        let recs = tomo_measure(&truth, &TomoSettings::new(2000, 0, seed)).unwrap();
        let out = reconstruct_mle(&recs).unwrap();
        prop_assert_eq!(out.rho.entries.hermiticity_defect(), 0.0);
        prop_assert!(out.rho.eigenvalues().unwrap()[0] >= -1e-10);
        prop_assert!((out.rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn exact_data_likelihood_reaches_truth(truth in rho()) {
        let out = reconstruct_mle_weights(&exact_data(&truth)).unwrap();
        prop_assert!(out.log_likelihood >= truth_log_likelihood(&truth) - 1e-8);
    }
}

#[test]
fn hv_measurement_of_phi_plus() {
    let recs = tomo_measure(&Rho::phi_plus(), &TomoSettings::new(10_000, 0, 3)).unwrap();
    assert_eq!(recs.len(), 9);
    let hv = &recs[0];
    assert_eq!(hv.counts[1] + hv.counts[2], 0);
    assert!((hv.counts[0] + hv.counts[3]) as f64 > 9500.0);
}

#[test]
fn mixed_state_counts_are_uniform() {
    let recs = tomo_measure(&Rho::maximally_mixed(), &TomoSettings::new(10_000, 0, 4)).unwrap();
    for r in &recs {
        for c in r.counts {
            assert!((c as f64 - 2500.0).abs() < 250.0, "{c}");
        }
    }
}

#[test]
fn reconstruction_error_shrinks_with_shots() {
    let truth = Rho::phi_plus().dephased(0.74);
    let mut medians = Vec::new();
    for shots in [100u64, 1000, 10_000, 100_000] {
        let mut d: Vec<f64> = (0..20u64)
            .map(|seed| {
                let recs = tomo_measure(&truth, &TomoSettings::new(shots, 0, seed)).unwrap();
                trace_distance(&reconstruct_mle(&recs).unwrap().rho, &truth).unwrap()
            })
            .collect();
        d.sort_by(f64::total_cmp);
        medians.push((d[9] + d[10]) / 2.0);
    }
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn dephased_fidelity_recovered() {
    let truth = Rho::phi_plus().dephased(0.74);
    let recs = tomo_measure(&truth, &TomoSettings::new(100_000, 0, 8)).unwrap();
    let f = fidelity_phi_plus(&reconstruct_mle(&recs).unwrap().rho);
    assert!((f - 0.870).abs() < 0.01, "{f}");
}

#[test]
fn identical_seeds_give_zero_sigma() {
    let r = mc_errorbars_with_seeds(&Rho::phi_plus(), &TomoSettings::new(1000, 2, 1), &[5, 5]).unwrap();
    assert_eq!(r.fidelity.sigma, Some(0.0));
    assert_eq!(r.concurrence.sigma, Some(0.0));
}

#[test]
fn point_estimate_without_trials() {
    let r = mc_errorbars(&Rho::phi_plus(), &TomoSettings::new(1000, 0, 1)).unwrap();
    assert_eq!((r.fidelity.sigma, r.trials.len()), (None, 0));
    assert!(matches!(
        mc_errorbars(&Rho::phi_plus(), &TomoSettings::new(1000, 1, 1)),
        Err(TomoError::TooFewTrials(1))
    ));
}

#[test]
fn contaminated_threefold_concurrence() {
    let r = 0.184f64;
    let p = 1.0 / (1.0 + r * r);
    let hv = Rho::product(Polarization::H, Polarization::V);
    let truth = Rho::mixture(&[(p, &Rho::phi_plus().dephased(0.27)), (1.0 - p, &hv)]);
    let res = mc_errorbars(&truth, &TomoSettings::new(100_000, 20, 2)).unwrap();
    let mean = res.concurrence.mc_mean.unwrap();
    let sigma = res.concurrence.sigma.unwrap();
    assert!(sigma > 0.0);
    assert!((mean - p * 0.27).abs() < 0.01, "{mean} +- {sigma}");
    assert!((concurrence(&res.rho_hat).unwrap() - p * 0.27).abs() < 0.02);
}

#[test]
fn linear_inversion_is_diagnostic_only() {
    let truth = Rho::phi_plus();
    let recs = tomo_measure(&truth, &TomoSettings::new(200, 0, 11)).unwrap();
    let li = linear_inversion(&recs).unwrap();
    assert!((li.trace() - 1.0).abs() < 1e-12);
    let clamped = clamp_psd(&li).unwrap();
    assert!(clamped.eigenvalues().unwrap()[0] >= -1e-12);
    let mle = reconstruct_mle(&recs).unwrap().rho;
    assert!(mle.eigenvalues().unwrap()[0] >= -1e-10);
}
