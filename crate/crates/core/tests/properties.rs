use jumperg::coupling::{simulate_coupled, CouplingParams};
use jumperg::ergodic::{rate_fit, DecayPoint, EmpiricalMeasure, HistogramGrid, RateOptions};
use jumperg::experiment::parse_config;
use jumperg::girsanov::{make_bridge, simulate_controlled, BridgeSpec};
use jumperg::matops::{commuting_spd_pair, lemma21_gap, sqrt_psd, SymmetricMatrix};
use jumperg::model::families::{self, LinearParams};
use jumperg::model::{rho_delta, ModulusKappa, State};
use jumperg::rng::path_rng;
use jumperg::sim::{simulate_ensemble, simulate_path, EnsembleSpec, TimeGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn jump_ou() -> jumperg::model::CoefficientSet {
    families::linear(LinearParams::jump_ou(1.0, 1.0, 2.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_kappa_is_positive_and_matches_its_formula(
        c1 in 0.1f64..5.0, k in 0.1f64..5.0, beta1 in 1.0f64..4.0, e in -12.0f64..6.0,
    ) {
        let kappa = ModulusKappa::log_family(c1, k, beta1).unwrap();
        let x = 10f64.powf(e);
        let v = kappa.eval(x).unwrap();
        prop_assert!(v > 0.0);
        let expect = c1 * (1.0 / x).ln().max(k).powf(1.0 / beta1);
        prop_assert!((v - expect).abs() <= 1e-12 * expect);
        prop_assert!(kappa.log_ratio_sup().unwrap().is_finite());
    }

    #[test]
    fn rho_delta_is_concave_and_nondecreasing(
        delta in 0.01f64..0.36, a in 0.0f64..2.0, b in 0.0f64..2.0, w in 0.0f64..1.0,
    ) {
        let mid = w * a + (1.0 - w) * b;
        let (ra, rb, rm) = (rho_delta(a, delta).unwrap(), rho_delta(b, delta).unwrap(), rho_delta(mid, delta).unwrap());
        prop_assert!(rm >= w * ra + (1.0 - w) * rb - 1e-12);
        let (lo, hi) = if a <= b { (ra, rb) } else { (rb, ra) };
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn symmetric_storage_and_sorted_eigenvalues(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = path_rng(seed, 0);
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let s = SymmetricMatrix::from_lower(m).unwrap();
        let a = s.as_matrix();
        prop_assert!((0..d).all(|i| (0..d).all(|j| a[(i, j)] == a[(j, i)])));
        let (values, _) = s.eigen();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn psd_square_root_squares_back(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = path_rng(seed, 0);
        let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let m = SymmetricMatrix::symmetrize(&(&g * g.transpose())).unwrap();
        let r = sqrt_psd(&m, 1e-12).unwrap();
        let back = r.as_matrix() * r.as_matrix();
        prop_assert!((back - m.as_matrix()).norm() <= 1e-9 * (1.0 + m.as_matrix().norm()));
        prop_assert!(r.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn commuting_pairs_satisfy_the_norm_gap(seed in any::<u64>(), d in 1usize..6, lambda in 0.1f64..4.0) {
        let mut rng = path_rng(seed, 0);
        let (a, b) = commuting_spd_pair(d, lambda, 10.0, &mut rng).unwrap();
        let gap = lemma21_gap(&a, &b, lambda).unwrap();
        prop_assert!(gap.holds, "{gap:?}");
    }

    #[test]
    fn merged_grid_is_strictly_increasing_with_every_jump(
        horizon in 0.1f64..5.0, dt in 0.005f64..0.2, raw in prop::collection::vec(0.0f64..1.0, 0..20),
    ) {
        let mut jumps: Vec<f64> = raw.iter().map(|u| (1.0 - u) * horizon).filter(|&t| t > 0.0).collect();
        jumps.sort_by(f64::total_cmp);
        jumps.dedup();
        let grid = TimeGrid::new(horizon, dt, &jumps, &[]).unwrap();
        let nodes = grid.nodes();
        prop_assert_eq!(nodes[0], 0.0);
        prop_assert_eq!(*nodes.last().unwrap(), horizon);
        prop_assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(grid.jump_nodes().len(), jumps.len());
        for (&k, &t) in grid.jump_nodes().iter().zip(&jumps) {
            prop_assert_eq!(nodes[k], t);
        }
    }

    #[test]
    fn paths_start_at_x0_and_jump_by_the_jump_map(seed in any::<u64>(), x0 in -3.0f64..3.0) {
        let coeffs = jump_ou();
        let start = State::from_element(1, x0);
        let rec = simulate_path(&coeffs, &start, 2.0, 0.01, &mut path_rng(seed, 0)).unwrap();
        prop_assert_eq!(&rec.states[0], &start);
        let nodes = rec.grid.jump_nodes();
        prop_assert_eq!(nodes.len(), rec.jumps.len());
        for ((&k, ev), pre) in nodes.iter().zip(&rec.jumps).zip(&rec.pre_jump) {
            prop_assert_eq!(&rec.states[k], &(pre + coeffs.jump(pre, &ev.mark)));
        }
    }

    #[test]
    fn path_i_depends_only_on_seed_and_index(seed in any::<u64>(), i in 0u64..8) {
        let coeffs = jump_ou();
        let spec = EnsembleSpec::new(vec![0.5], 1.0, 0.05, 8, seed).storing_paths();
        let ens = simulate_ensemble(&coeffs, &spec).unwrap();
        let alone = simulate_path(&coeffs, &State::from_element(1, 0.5), 1.0, 0.05, &mut path_rng(seed, i)).unwrap();
        prop_assert_eq!(&ens.paths.as_ref().unwrap()[i as usize], &alone);
    }

    #[test]
    fn coupled_components_agree_after_the_coupling_time(seed in any::<u64>(), gap in 0.001f64..0.09) {
        let coeffs = jump_ou();
        let params = CouplingParams::new(vec![0.0], vec![gap], 0.1).unwrap();
        let rec = simulate_coupled(&coeffs, &params, 2.0, 0.01, &mut path_rng(seed, 0)).unwrap();
        for t in [rec.tau, rec.s_delta].into_iter().flatten() {
            prop_assert!(rec.times.contains(&t));
        }
        if let Some(tau) = rec.tau {
            for (k, &t) in rec.times.iter().enumerate() {
                if t >= tau {
                    prop_assert_eq!(&rec.x[k], &rec.y[k]);
                }
            }
        }
    }

    #[test]
    fn bridge_hits_both_ends_and_solves_its_ode(
        start in -3.0f64..3.0, target in -3.0f64..3.0, t0 in 0.0f64..0.5, s in 0.0f64..1.0,
    ) {
        let coeffs = jump_ou();
        let (x, y) = (State::from_element(1, start), State::from_element(1, target));
        let bridge = make_bridge(&x, 10.0, &y, t0, 1.0, &coeffs).unwrap();
        prop_assert_eq!(bridge.j(t0), x);
        prop_assert_eq!(bridge.j(1.0), y);
        let t = t0 + s * (1.0 - t0);
        let lhs = bridge.velocity();
        let rhs = coeffs.drift(&bridge.j(t)) + bridge.h(&coeffs, t);
        prop_assert!((lhs - rhs).norm() <= 1e-12);
    }

    #[test]
    fn girsanov_weight_is_one_before_t0_and_positive(seed in any::<u64>(), t0 in 0.1f64..0.6) {
        let coeffs = jump_ou();
        let spec = BridgeSpec::new(vec![1.0], 1.0, &[0.0]).with_t0(t0);
        let (rec, weight, _) = simulate_controlled(&coeffs, &State::from_element(1, 0.0), &spec, 0.01, &mut path_rng(seed, 0)).unwrap();
        for (&t, &lw) in rec.grid.nodes().iter().zip(&weight.log_xi) {
            prop_assert!(lw.is_finite() && lw.exp() > 0.0);
            if t <= t0 {
                prop_assert_eq!(lw, 0.0);
            }
        }
    }

    #[test]
    fn histogram_masses_and_overflow_sum_to_one(
        samples in prop::collection::vec(-5.0f64..5.0, 1..500), bins in 1usize..50,
    ) {
        let grid = HistogramGrid::uniform(1, -2.0, 2.0, bins).unwrap();
        let mu = EmpiricalMeasure::from_samples(grid.clone(), samples.iter().map(std::slice::from_ref));
        let total: f64 = mu.masses().iter().sum::<f64>() + mu.overflow();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let again = EmpiricalMeasure::from_samples(grid, samples.iter().map(std::slice::from_ref));
        prop_assert_eq!(mu.counts(), again.counts());
    }

    #[test]
    fn rate_fit_uses_only_points_clear_of_the_noise(
        alpha in 0.2f64..2.0, noise in 1e-4f64..1e-2, seed in any::<u64>(),
    ) {
        let mut rng = path_rng(seed, 0);
        let points: Vec<DecayPoint> = (0..40)
            .map(|k| {
                let t = 0.25 * k as f64;
                let v = (-alpha * t).exp() + noise * rng.random_range(-1.0..1.0);
                DecayPoint::new(t, v.abs(), noise)
            })
            .collect();
        if let Ok(fit) = rate_fit(&points, &RateOptions { bootstrap: 200, seed, ..RateOptions::default() }) {
            prop_assert!(fit.points[fit.window.0..fit.window.1].iter().all(DecayPoint::usable));
            prop_assert!(fit.alpha_ci.0 <= fit.alpha && fit.alpha <= fit.alpha_ci.1);
        }
    }

    #[test]
    fn unknown_keys_are_always_rejected(key in "[a-z]{3,10}") {
        prop_assume!(!["x0", "horizon", "dt", "n_paths", "checkpoints", "store_paths"].contains(&key.as_str()));
        let text = format!("kind = \"simulate\"\nseed = 1\n[model]\nfamily = \"brownian\"\ndim = 1\n[simulate]\nx0 = [0]\nhorizon = 1.0\ndt = 0.1\nn_paths = 4\n{key} = 1\n");
        prop_assert!(parse_config(&text).is_err());
    }

    #[test]
    fn configs_round_trip(seed in 0u64..(i64::MAX as u64), dt in 0.001f64..0.5, n in 1usize..100_000, theta in 0.1f64..5.0) {
        let text = format!("kind = \"simulate\"\nseed = {seed}\n[model]\nfamily = \"jump-ou\"\ntheta = {theta:?}\n[simulate]\nx0 = [0.25]\nhorizon = 1.0\ndt = {dt:?}\nn_paths = {n}\n");
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(parse_config(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
