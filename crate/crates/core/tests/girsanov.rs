use jumperg::girsanov::{
    bihari_bound, calibrate_bihari_constant, irreducibility_probe, make_bridge, simulate_controlled,
    simulate_controlled_ensemble, BridgeSpec, ControlledEnsembleSpec, ProbeSpec,
};
use jumperg::model::families::{brownian, linear, log_modulus_perturbed, polynomial_drift, LinearParams, LogModulusParams, PolynomialParams};
use jumperg::model::{CoefficientSet, State};
use jumperg::rng::path_rng;
use jumperg::Error;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

fn s(v: &[f64]) -> State {
    State::from_column_slice(v)
}

fn jump_ou() -> CoefficientSet {
    linear(LinearParams::jump_ou(1.0, 1.0, 1.0)).unwrap()
}

#[test]
fn bridge_for_zero_drift_is_the_straight_line() {
    let m = linear(LinearParams { theta: 0.0, ..LinearParams::jump_ou(0.0, 1.0, 0.0) }).unwrap();
    let b = make_bridge(&s(&[0.0]), 10.0, &s(&[1.0]), 0.0, 1.0, &m).unwrap();
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        assert!((b.j(t)[0] - t).abs() < 1e-15);
        assert!((b.h(&m, t)[0] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn bridge_truncates_far_starts() {
    let m = jump_ou();
    let b = make_bridge(&s(&[12.0]), 10.0, &s(&[3.0]), 0.5, 1.0, &m).unwrap();
    assert!(b.truncated);
    assert_eq!(b.start[0], 0.0);
    let b = make_bridge(&s(&[9.5]), 10.0, &s(&[3.0]), 0.5, 1.0, &m).unwrap();
    assert!(!b.truncated);
    assert_eq!(b.start[0], 9.5);
}

#[test]
fn bridge_endpoints_and_ode_identity() {
    let models = vec![
        jump_ou(),
        polynomial_drift(PolynomialParams::superlinear(1.0)).unwrap(),
        log_modulus_perturbed(LogModulusParams { dim: 2, ..LogModulusParams::default() }).unwrap(),
    ];
    for m in &models {
        let d = m.dim();
        let start = DVector::from_fn(d, |i, _| 0.3 - 0.5 * i as f64);
        let y = DVector::from_fn(d, |i, _| 2.0 + i as f64);
        let (t0, t1) = (0.25, 1.5);
        let b = make_bridge(&start, 10.0, &y, t0, t1, m).unwrap();
        assert_eq!(b.j(t0), start);
        assert_eq!(b.j(t1), y);
        let n = 1000;
        let mut worst = 0.0f64;
        for k in 0..n {
            let (ta, tb) = (t0 + (t1 - t0) * k as f64 / n as f64, t0 + (t1 - t0) * (k + 1) as f64 / n as f64);
            let fd = (b.j(tb) - b.j(ta)) / (tb - ta);
            let rhs = m.drift(&b.j(ta)) + b.h(m, ta);
            worst = worst.max((fd - rhs).amax());
        }
        assert!(worst < 1e-12, "{}: {worst}", m.label());
    }
}

#[test]
fn zero_control_leaves_the_weight_at_one() {
    let m = linear(LinearParams { jump_rate: 0.0, ..LinearParams::jump_ou(1.0, 1.0, 0.0) }).unwrap();
    // b(x) = -x and y = 0 from a start at 0: h vanishes identically
    let spec = BridgeSpec::new(vec![0.0], 1.0, &[0.0]).with_t0(0.0);
    let mut rng = path_rng(3, 0);
    let (path, w, bridge) = simulate_controlled(&m, &s(&[0.0]), &spec, 0.01, &mut rng).unwrap();
    assert_eq!(bridge.start[0], 0.0);
    assert_eq!(w.terminal(), 1.0);
    assert_eq!(w.sup_control, 0.0);
    assert_eq!(path.states.len(), w.log_xi.len());
}

#[test]
fn weight_is_one_until_t0() {
    let m = jump_ou();
    let spec = BridgeSpec::new(vec![3.0], 1.0, &[0.0]).with_t0(0.5);
    let mut rng = path_rng(5, 1);
    let (path, w, _) = simulate_controlled(&m, &s(&[0.0]), &spec, 0.01, &mut rng).unwrap();
    for (t, lx) in path.grid.nodes().iter().zip(&w.log_xi) {
        if *t <= 0.5 + 1e-12 {
            assert_eq!(*lx, 0.0);
        }
    }
    assert!(w.terminal_log() != 0.0);
    assert!(w.terminal() > 0.0);
}

#[test]
fn controlled_path_before_t0_matches_the_plain_simulator() {
    let m = jump_ou();
    let spec = BridgeSpec::new(vec![3.0], 1.0, &[0.2]).with_t0(0.5);
    let (path, _, bridge) = simulate_controlled(&m, &s(&[0.2]), &spec, 0.01, &mut path_rng(11, 4)).unwrap();
    let plain =
        jumperg::sim::simulate_path_with_nodes(&m, &s(&[0.2]), 1.0, 0.01, &[0.5], &mut path_rng(11, 4)).unwrap();
    let k = path.grid.position(0.5).unwrap();
    assert_eq!(path.states[..=k], plain.states[..=k]);
    assert_eq!(bridge.start, path.states[k]);
}

#[test]
fn singular_diffusion_is_a_nondegeneracy_error() {
    let m = CoefficientSet::new(
        "singular",
        2,
        Arc::new(|x: &State| -x),
        Arc::new(|_x: &State| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])),
    )
    .unwrap();
    let spec = BridgeSpec::new(vec![1.0, 1.0], 1.0, &[0.0, 0.0]).with_t0(0.0);
    let err = simulate_controlled(&m, &s(&[0.0, 0.0]), &spec, 0.01, &mut path_rng(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Nondegeneracy { .. }), "{err}");
}

#[test]
fn bihari_bound_examples() {
    let v = bihari_bound(0.01, 1.0, 1.0, 0.9, 1.0).unwrap();
    assert!((v - 0.11f64.powf((-0.1f64).exp())).abs() < 1e-15);
    assert!((v - 0.1357).abs() < 5e-5);
    assert_eq!(bihari_bound(0.3, 2.0, 0.0, 0.0, 0.5).unwrap(), 1.3);
    let mut prev = f64::INFINITY;
    for k in 1..8 {
        let span = 10f64.powi(-k);
        let b = bihari_bound(0.0, 1.0, 1.0, 1.0 - span, 1.0).unwrap();
        assert!(b < prev);
        prev = b;
    }
    assert!(prev < 1e-6);
    assert!(bihari_bound(-1.0, 1.0, 1.0, 0.0, 1.0).is_err());
    assert!(bihari_bound(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
}

#[test]
fn weighted_estimates_on_brownian_bridge() {
    // b = 0, sigma = 1: Y_T = y + W_T - W_t0 exactly, so the weight is explicit
    let m = brownian(1).unwrap();
    let spec = ControlledEnsembleSpec {
        x0: vec![0.0],
        bridge: BridgeSpec::new(vec![1.0], 1.0, &[0.0]).with_t0(0.0),
        dt: 0.01,
        n_paths: 40_000,
        master_seed: 21,
        checkpoints: vec![0.5],
    };
    let e = simulate_controlled_ensemble(&m, &spec).unwrap();
    for t in [0.5, 1.0] {
        let w = e.mean_weight(t).unwrap();
        assert!((w.value - 1.0).abs() < 3.0 * w.stderr, "t={t}: {w:?}");
    }
    // E[xi 1{Y_1 < 0}] = P(W_1 < 0) = 1/2
    let p = e.weighted_expectation(1.0, |v| if v[0] < 0.0 { 1.0 } else { 0.0 }).unwrap();
    assert!((p.value - 0.5).abs() < 3.0 * p.stderr, "{p:?}");
    let m2 = e.weighted_expectation(1.0, |v| v[0] * v[0]).unwrap();
    assert!((m2.value - 1.0).abs() < 3.0 * m2.stderr, "{m2:?}");
}

#[test]
fn probe_with_a_huge_ball_is_one() {
    let m = jump_ou();
    let mut spec = ProbeSpec::new(vec![0.0], vec![0.0], 1e6, 1.0, 2000, 9);
    spec.dt = 0.02;
    let r = irreducibility_probe(&m, &spec).unwrap();
    assert_eq!(r.hits, 2000);
    assert_eq!(r.miss_probability, 0.0);
    assert!((r.weighted_estimate - 1.0).abs() < 3.0 * r.weighted_stderr + 1e-12);
    assert!(r.certified());
    assert!(r.bihari_constant_calibrated);
}

#[test]
fn probe_without_hits_is_not_certified() {
    let m = linear(LinearParams { jump_rate: 0.0, ..LinearParams::jump_ou(1.0, 0.1, 0.0) }).unwrap();
    let mut spec = ProbeSpec::new(vec![0.0], vec![3.0], 1e-9, 1.0, 50, 9);
    spec.dt = 0.02;
    let r = irreducibility_probe(&m, &spec).unwrap();
    assert_eq!(r.hits, 0);
    assert_eq!(r.status, "positivity-not-demonstrated");
    assert!(!r.certified());
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"seed\":9"));
}

#[test]
fn miss_probability_respects_the_calibrated_chebyshev_bound() {
    let m = jump_ou();
    for t0 in [0.5, 0.9, 0.99] {
        let mut spec = ProbeSpec::new(vec![0.0], vec![3.0], 0.5, 1.0, 4000, 13);
        spec.t0 = t0;
        spec.dt = 0.005;
        let c = calibrate_bihari_constant(&m, &spec.bridge()).unwrap();
        assert!(c > 0.0);
        let r = irreducibility_probe(&m, &spec).unwrap();
        assert!(r.miss_probability <= r.chebyshev_bound + 3.0 * r.miss_stderr, "{r:?}");
    }
}

#[test]
fn terminal_spread_shrinks_as_t0_approaches_t() {
    let m = jump_ou();
    let mut spreads = Vec::new();
    for t0 in [0.0, 0.5, 0.9] {
        let spec = ControlledEnsembleSpec {
            x0: vec![0.0],
            bridge: BridgeSpec::new(vec![3.0], 1.0, &[0.0]).with_t0(t0),
            dt: 0.01,
            n_paths: 20_000,
            master_seed: 17,
            checkpoints: vec![],
        };
        let e = simulate_controlled_ensemble(&m, &spec).unwrap();
        spreads.push(e.expectation(1.0, |v| (v[0] - 3.0).powi(2)).unwrap());
    }
    for w in spreads.windows(2) {
        assert!(w[1].value + 3.0 * w[1].stderr.hypot(w[0].stderr) < w[0].value, "{spreads:?}");
    }
}

#[test]
fn ensemble_is_thread_count_independent() {
    let m = jump_ou();
    let spec = ControlledEnsembleSpec {
        x0: vec![0.0],
        bridge: BridgeSpec::new(vec![3.0], 1.0, &[0.0]).with_t0(0.3),
        dt: 0.02,
        n_paths: 500,
        master_seed: 4,
        checkpoints: vec![0.5],
    };
    let run = |k| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .unwrap()
            .install(|| simulate_controlled_ensemble(&m, &spec).unwrap())
    };
    assert_eq!(run(1), run(3));
}
