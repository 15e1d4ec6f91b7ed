use std::sync::Arc;

use jumperg::model::families::{self, LinearParams, LogModulusParams, PolynomialParams};
use jumperg::model::{check_hypotheses, CoefficientSet, Constants, Hypothesis, SamplerSpec, State, Verdict};
use nalgebra::DMatrix;

fn verdict(set: &CoefficientSet, h: Hypothesis) -> Verdict {
    let report = check_hypotheses(set, &[h], &SamplerSpec::default(), 11).unwrap();
    report.entry(h).unwrap().satisfied
}

fn contraction(dim: usize) -> CoefficientSet {
    CoefficientSet::new(
        "contraction",
        dim,
        Arc::new(|x: &State| -x),
        Arc::new(move |_x: &State| DMatrix::identity(dim, dim)),
    )
    .unwrap()
    .with_constants(Constants {
        lambda0: 0.0,
        lambda1: 2.0,
        lambda2: 1.0,
        ..Constants::default()
    })
    .unwrap()
}

#[test]
fn linear_contraction_satisfies_h1_h2_h3() {
    for dim in [1, 2] {
        let set = contraction(dim);
        let report = check_hypotheses(&set, &[Hypothesis::H1, Hypothesis::H2, Hypothesis::H3], &SamplerSpec::default(), 3)
            .unwrap();
        assert!(report.all_satisfied(), "{report:#?}");
        let h1 = report.entry(Hypothesis::H1).unwrap();
        assert!((h1.worst_violation + 2.0).abs() < 1e-9);
    }
}

#[test]
fn quadratic_drift_violates_linear_growth() {
    let set = CoefficientSet::new(
        "quadratic",
        1,
        Arc::new(|x: &State| x * x.norm()),
        Arc::new(|_x: &State| DMatrix::identity(1, 1)),
    )
    .unwrap();
    let report = check_hypotheses(&set, &[Hypothesis::H2], &SamplerSpec::default(), 3).unwrap();
    let e = report.entry(Hypothesis::H2).unwrap();
    assert_eq!(e.satisfied, Verdict::No);
    assert!(e.worst_violation > e.tolerance);
    assert!(e.witness[0][0].abs() > 9.0);
}

#[test]
fn dissipativity_slack_matches_closed_form() {
    let mut p = LinearParams::jump_ou(1.0, 1.0, 1.0);
    p.jump_scale = 0.5;
    let set = families::linear(p)
        .unwrap()
        .with_constants(Constants {
            lambda3: 1.0,
            lambda4: 2.0,
            ..Constants::default()
        })
        .unwrap();
    let sampler = SamplerSpec::default();
    let report = check_hypotheses(&set, &[Hypothesis::Hbsf], &sampler, 8).unwrap();
    let e = report.entry(Hypothesis::Hbsf).unwrap();
    assert_eq!(e.satisfied, Verdict::Yes);
    let slack = |x: f64| -2.0 * x * x + 1.0 + 1.0 / 12.0 - (-x * x + 2.0);
    let cloud = sampler.cloud(1, 8).unwrap();
    let expected = cloud.points.iter().map(|p| slack(p[0])).fold(f64::NEG_INFINITY, f64::max);
    assert!((e.worst_violation - expected).abs() < 1e-6);
    assert!((e.worst_violation - slack(e.witness[0][0])).abs() < 1e-12);
}

#[test]
fn jump_ou_fails_only_the_jump_contraction_bound() {
    let set = families::linear(LinearParams::jump_ou(1.0, 1.0, 1.0)).unwrap();
    let report = check_hypotheses(&set, &Hypothesis::ALL, &SamplerSpec::default(), 1).unwrap();
    for e in &report.entries {
        let expect = if e.name == "Hf'" { Verdict::No } else { Verdict::Yes };
        assert_eq!(e.satisfied, expect, "{e:#?}");
    }
}

#[test]
fn log_modulus_family_passes_every_hypothesis() {
    for dim in [1, 2] {
        let set = families::log_modulus_perturbed(LogModulusParams { dim, ..Default::default() }).unwrap();
        let report = check_hypotheses(&set, &Hypothesis::ALL, &SamplerSpec::default(), 2).unwrap();
        assert!(report.all_satisfied(), "{report:#?}");
    }
}

#[test]
fn state_dependent_jumps_pass_with_declared_constants() {
    let p = LinearParams {
        dim: 2,
        theta: 1.0,
        sigma: 0.8,
        jump_rate: 2.0,
        jump_scale: 0.3,
        jump_gain: 0.4,
    };
    let set = families::linear(p).unwrap();
    let report = check_hypotheses(&set, &Hypothesis::ALL, &SamplerSpec::default(), 4).unwrap();
    assert!(report.all_satisfied(), "{report:#?}");
}

#[test]
fn superlinear_model_is_dissipative_but_not_linearly_bounded() {
    let set = families::polynomial_drift(PolynomialParams::superlinear(1.0)).unwrap();
    assert_eq!(verdict(&set, Hypothesis::Hbsf), Verdict::Yes);
    assert_eq!(verdict(&set, Hypothesis::H1), Verdict::Yes);
    assert_eq!(verdict(&set, Hypothesis::H2), Verdict::No);
}

#[test]
fn zero_lambda0_demands_state_independent_jumps() {
    let p = LinearParams {
        jump_gain: 0.3,
        ..LinearParams::jump_ou(1.0, 1.0, 1.0)
    };
    let set = families::linear(p).unwrap();
    let c = Constants {
        lambda0: 0.0,
        ..*set.constants()
    };
    let set = set.with_constants(c).unwrap();
    assert_eq!(verdict(&set, Hypothesis::Hf), Verdict::No);
}

#[test]
fn monte_carlo_moments_agree_with_closed_form_verdicts() {
    let base = families::log_modulus_perturbed(LogModulusParams::default()).unwrap();
    let without_closed_form = base.clone().with_jump_integrals(None, None);
    let report = check_hypotheses(&without_closed_form, &[Hypothesis::Hf, Hypothesis::Hbsf], &SamplerSpec::default(), 9)
        .unwrap();
    assert!(report.all_satisfied(), "{report:#?}");
    let e = report.entry(Hypothesis::Hbsf).unwrap();
    assert!(e.stderr.unwrap() > 0.0);
}

#[test]
fn reports_are_bit_identical_for_equal_inputs() {
    let set = families::log_modulus_perturbed(LogModulusParams::default())
        .unwrap()
        .with_jump_integrals(None, None);
    let a = check_hypotheses(&set, &Hypothesis::ALL, &SamplerSpec::default(), 5).unwrap();
    let b = check_hypotheses(&set, &Hypothesis::ALL, &SamplerSpec::default(), 5).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn non_finite_coefficients_name_the_point() {
    let set = CoefficientSet::new(
        "singular",
        1,
        Arc::new(|x: &State| x.map(|v| 1.0 / v)),
        Arc::new(|_x: &State| DMatrix::identity(1, 1)),
    )
    .unwrap();
    let err = check_hypotheses(&set, &[Hypothesis::H2], &SamplerSpec::default(), 0).unwrap_err();
    assert!(matches!(err, jumperg::Error::Evaluation { .. }), "{err}");
}
