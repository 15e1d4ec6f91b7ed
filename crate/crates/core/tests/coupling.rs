use jumperg::coupling::{
    block_covariance, coupled_step, coupling_matrix, estimate_tail, g_derivatives, g_functionals, proof_alpha,
    simulate_coupled, simulate_coupled_ensemble, strong_feller_modulus, CoupledEnsembleSpec, CouplingParams,
    ModulusSizes,
};
use jumperg::matops::sigma_lambda;
use jumperg::model::families::{self, LinearParams, LogModulusParams};
use jumperg::model::CoefficientSet;
use jumperg::observable::TestFunction;
use jumperg::rng::path_rng;
use jumperg::sim::{simulate_ensemble, EnsembleSpec};
use jumperg::stats::ks_two_sample;
use nalgebra::{dvector, DMatrix, DVector};
use rand::Rng;

fn jump_ou() -> CoefficientSet {
    families::linear(LinearParams::jump_ou(1.0, 1.0, 1.0)).unwrap()
}

fn ou() -> CoefficientSet {
    families::linear(LinearParams::jump_ou(1.0, 1.0, 0.0)).unwrap()
}

#[test]
fn reflection_and_synchronous_limits() {
    let bm = families::brownian(2).unwrap();
    let p = CouplingParams::new(vec![0.2, 0.0], vec![0.0, 0.0], 0.2).unwrap();
    assert!((p.beta_squared() - 1.0).abs() < 1e-15);
    let (x, y) = (dvector![0.5, 1.0], dvector![0.5, -1.0]);
    let c = coupling_matrix(&x, &y, &bm, &p).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!((c - expected).norm() < 1e-15);

    let near = CouplingParams::new(vec![1e-13, 0.0], vec![0.0, 0.0], 0.2).unwrap();
    let c = coupling_matrix(&x, &y, &bm, &near).unwrap();
    assert!((c - DMatrix::identity(2, 2)).norm() < 1e-2);
    let nearer = CouplingParams { x0: vec![1e-30, 0.0], ..near };
    let c = coupling_matrix(&x, &y, &bm, &nearer).unwrap();
    assert!((c - DMatrix::identity(2, 2)).norm() < 1e-6);

    assert!(matches!(coupling_matrix(&x, &x, &bm, &p), Err(jumperg::Error::DegenerateDirection)));
    assert!(CouplingParams::new(vec![0.3], vec![0.0], 0.2).is_err());
    assert!(CouplingParams::new(vec![0.1], vec![0.0], 0.5).is_err());
}

#[test]
fn block_covariance_is_psd_and_proof_inequalities_hold() {
    let m = families::log_modulus_perturbed(LogModulusParams { dim: 2, eta: 0.4, ..Default::default() }).unwrap();
    let lambda2 = m.constants().lambda2;
    let p = CouplingParams::new(vec![0.05, 0.0], vec![0.0, 0.0], 0.1).unwrap();
    let floor = 4.0 * lambda2 * p.beta_squared();
    let mut rng = path_rng(12, 0);
    for _ in 0..10_000 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
        let y = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
        let block = block_covariance(&x, &y, &m, &p).unwrap();
        let scale = block.as_matrix().norm();
        assert!(block.min_eigenvalue() >= -1e-10 * scale.max(1.0));
        let g = g_functionals(&x, &y, &m, &p).unwrap();
        assert!(g.g_bar >= floor - 1e-9, "{} < {floor}", g.g_bar);
        assert!(g.trace_g - g.g_bar <= g.sigma_lambda_gap + 1e-9);
        let sl = sigma_lambda(&m.diffusion(&x), lambda2).unwrap();
        assert!(sl.min_eigenvalue() >= 0.0);
    }
}

#[test]
fn g_functionals_examples() {
    assert_eq!(g_derivatives(0.0), (0.0, 1.0, -2.0));
    let bm = families::brownian(1).unwrap();
    let p = CouplingParams::new(vec![0.3], vec![0.0], 0.3).unwrap();
    let g = g_functionals(&dvector![1.0], &dvector![-0.5], &bm, &p).unwrap();
    assert!((g.g_bar - 4.0).abs() < 1e-14);
    assert!((g.r - 1.5).abs() < 1e-15 && (g.g - 0.6).abs() < 1e-15);
    assert_eq!(g.f, 0.0);
    let a = proof_alpha(1.0, 0.5, 1.0, 0.1).unwrap();
    assert!((a - (-1.1f64 * 2.0).exp() / 3.0).abs() < 1e-15);
}

#[test]
fn glued_pairs_step_together_and_additive_jumps_cancel() {
    let m = jump_ou();
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let x = dvector![0.3];
    let (a, b) = coupled_step(&m, &p, &x, &x, 0.01, &[dvector![0.5]], &mut path_rng(1, 1)).unwrap();
    assert_eq!(a, b);
    let y = dvector![0.25];
    let (a, b) = coupled_step(&m, &p, &x, &y, 0.01, &[dvector![0.5], dvector![-0.2]], &mut path_rng(1, 2)).unwrap();
    let (c, d) = coupled_step(&m, &p, &x, &y, 0.01, &[], &mut path_rng(1, 2)).unwrap();
    assert!(((&a - &b) - (&c - &d)).norm() < 1e-15);
    assert!((&a - &c)[0] - 0.3 < 1e-15);
}

#[test]
fn coincident_start_is_coupled_at_zero() {
    let p = CouplingParams::new(vec![0.4], vec![0.4], 0.1).unwrap();
    let rec = simulate_coupled(&jump_ou(), &p, 1.0, 0.01, &mut path_rng(3, 0)).unwrap();
    assert_eq!(rec.tau, Some(0.0));
    assert_eq!(rec.x, rec.y);
    assert!(rec.glued.iter().all(|&g| g));
}

#[test]
fn glue_is_permanent_and_times_are_grid_times() {
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    for i in 0..50 {
        let rec = simulate_coupled(&jump_ou(), &p, 2.0, 0.01, &mut path_rng(5, i)).unwrap();
        if let Some(tau) = rec.tau {
            assert!(rec.times.contains(&tau));
            let k = rec.times.iter().position(|&t| t == tau).unwrap();
            assert!(rec.glued[k..].iter().all(|&g| g));
            assert!(rec.x[k..].iter().zip(&rec.y[k..]).all(|(a, b)| a == b));
            assert!(rec.glued[..k].iter().all(|&g| !g));
        }
        if let Some(s) = rec.s_delta {
            assert!(rec.times.contains(&s));
        }
    }
}

#[test]
fn reflection_coupled_ou_couples() {
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let e = simulate_coupled_ensemble(&ou(), &p, &CoupledEnsembleSpec::new(20.0, 0.02, 10_000, 4)).unwrap();
    let coupled = e.times.iter().filter(|c| c.tau.is_some()).count();
    assert!(coupled as f64 >= 0.99 * 10_000.0);
    assert_eq!(coupled, 10_000);
}

#[test]
fn tail_starts_at_one_and_decreases() {
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let e = simulate_coupled_ensemble(&jump_ou(), &p, &CoupledEnsembleSpec::new(2.0, 0.01, 4000, 6)).unwrap();
    assert_eq!(estimate_tail(&e, 0.0).unwrap().estimate, 1.0);
    let tails: Vec<f64> = (0..=20).map(|k| estimate_tail(&e, k as f64 * 0.1).unwrap().estimate).collect();
    assert!(tails.windows(2).all(|w| w[1] <= w[0]));
    assert!(estimate_tail(&e, 3.0).is_err());
}

#[test]
fn reflected_brownian_tail_matches_erf() {
    let bm = families::brownian(1).unwrap();
    let p = CouplingParams::new(vec![0.3], vec![0.0], 0.3).unwrap();
    let e = simulate_coupled_ensemble(&bm, &p, &CoupledEnsembleSpec::new(4.0, 0.01, 20_000, 7)).unwrap();
    for t in [0.25, 1.0, 4.0] {
        let tail = estimate_tail(&e, t).unwrap();
        let exact = statrs::function::erf::erf(0.3 / (8.0 * t).sqrt());
        assert!((tail.estimate - exact).abs() < 3.0 * tail.stderr(), "t = {t}: {} vs {exact}", tail.estimate);
    }
}

#[test]
fn unglued_components_have_the_marginal_law() {
    let m = jump_ou();
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap().without_glue();
    let n = 20_000;
    let coupled = simulate_coupled_ensemble(&m, &p, &CoupledEnsembleSpec::new(1.0, 0.01, n, 8).with_checkpoints(vec![0.5]))
        .unwrap();
    for (x0, second) in [(0.05, false), (0.0, true)] {
        let single = simulate_ensemble(&m, &EnsembleSpec::new(vec![x0], 1.0, 0.01, n, 9).with_checkpoints(vec![0.5])).unwrap();
        for t in [0.5, 1.0] {
            let ks = ks_two_sample(&coupled.marginal(t, 0, second).unwrap(), &single.marginal(t, 0).unwrap());
            assert!(ks.p_value > 0.001, "x0 {x0} t {t}: {ks:?}");
        }
    }
}

#[test]
fn strong_feller_modulus_examples() {
    let m = jump_ou();
    let sizes = ModulusSizes { single_paths: 20_000, coupled_paths: 20_000, dt: 0.01, seed: 10 };
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let r = strong_feller_modulus(&m, &p, 1.0, &TestFunction::tanh(0), &sizes).unwrap();
    assert!(r.holds, "{r:?}");
    let r = strong_feller_modulus(&m, &p, 1.0, &TestFunction::constant(2.0), &sizes).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert!(r.holds);
    let same = CouplingParams::new(vec![0.0], vec![0.0], 0.1).unwrap();
    let r = strong_feller_modulus(&m, &same, 1.0, &TestFunction::tanh(0), &sizes).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
}

#[test]
fn coupled_ensembles_are_thread_count_independent() {
    let m = families::log_modulus_perturbed(LogModulusParams::default()).unwrap();
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let spec = CoupledEnsembleSpec::new(1.0, 0.02, 200, 3).with_checkpoints(vec![0.5]);
    let run = |k| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .unwrap()
            .install(|| simulate_coupled_ensemble(&m, &p, &spec).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    let mut buf = Vec::new();
    a.write_columnar(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().nth(5).unwrap() == "path_id,time,x0,y0,flag");
    assert_eq!(text.lines().filter(|l| l.ends_with(",tau")).count(), 200);
}

#[test]
fn sigma_lambda_failure_is_a_coupling_degeneracy() {
    let m = families::linear(LinearParams::jump_ou(1.0, 1.0, 0.0))
        .unwrap()
        .with_constants(jumperg::model::Constants { lambda2: 4.0, ..Default::default() })
        .unwrap();
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let err = coupling_matrix(&dvector![0.05], &dvector![0.0], &m, &p).unwrap_err();
    assert!(matches!(err, jumperg::Error::CouplingDegeneracy { .. }), "{err}");
}
