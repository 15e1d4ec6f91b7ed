//! Acceptance gate: every criterion runs at its stated size and tolerance
//! and prints one PASS/FAIL line. Lines go straight to stderr so they show
//! up without `--nocapture`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use jumperg::coupling::{
    estimate_tail, simulate_coupled_ensemble, strong_feller_modulus, CoupledEnsembleSpec, CouplingParams, ModulusSizes,
};
use jumperg::ergodic::{drift_ode_bound, drift_ode_closed_form, krylov_bogoliubov, GridChoice, KbMode, KbSpec};
use jumperg::experiment::{parse_config, run_experiment};
use jumperg::girsanov::{irreducibility_probe, simulate_controlled_ensemble, BridgeSpec, ControlledEnsembleSpec, ProbeSpec};
use jumperg::matops::{lemma21_suite, Lemma21Suite};
use jumperg::model::families::{brownian, linear, LinearParams};
use jumperg::observable::TestFunction;
use jumperg::sim::{simulate_ensemble, EnsembleSpec};
use jumperg::stats::{ks_two_sample, Z95};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn config(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

fn jump_ou() -> jumperg::model::CoefficientSet {
    linear(LinearParams::jump_ou(1.0, 1.0, 1.0)).unwrap()
}

fn lemma21() -> Verdict {
    let clock = Instant::now();
    let suite = Lemma21Suite { pairs: 10_000, lambdas: vec![0.5, 1.0, 2.0], upper: 10.0, seed: 2024, ..Default::default() };
    let r = lemma21_suite(&suite).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    verdict(
        r.holds == r.pairs && r.trace_identity_holds && secs < 10.0,
        format!(
            "{}, max excess {:.3e}, max trace residual {:.3e}, {secs:.1} s",
            r.summary(),
            r.max_excess,
            r.max_trace_residual
        ),
    )
}

fn marginals() -> Verdict {
    let clock = Instant::now();
    let m = jump_ou();
    let n = 100_000;
    let p = CouplingParams::new(vec![0.05], vec![0.0], 0.1).unwrap();
    let coupled =
        simulate_coupled_ensemble(&m, &p, &CoupledEnsembleSpec::new(1.0, 0.01, n, 31).with_checkpoints(vec![0.5])).unwrap();
    let mut worst = 1.0f64;
    for (x0, second, seed) in [(0.05, false, 32), (0.0, true, 33)] {
        let single = simulate_ensemble(&m, &EnsembleSpec::new(vec![x0], 1.0, 0.01, n, seed).with_checkpoints(vec![0.5])).unwrap();
        for t in [0.5, 1.0] {
            let ks = ks_two_sample(&coupled.marginal(t, 0, second).unwrap(), &single.marginal(t, 0).unwrap());
            worst = worst.min(ks.p_value);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    verdict(worst > 0.001 && secs < 120.0, format!("min KS p-value {worst:.4} over 2 components x 2 times, {secs:.1} s"))
}

fn strong_feller() -> Verdict {
    let m = jump_ou();
    let sizes = ModulusSizes { single_paths: 100_000, coupled_paths: 100_000, dt: 0.01, seed: 41 };
    let mut all = true;
    let mut worst = f64::NEG_INFINITY;
    for gap in [0.05, 0.01] {
        let p = CouplingParams::new(vec![gap], vec![0.0], 0.1).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let r = strong_feller_modulus(&m, &p, t, &TestFunction::tanh(0), &sizes).unwrap();
            all &= r.holds;
            worst = worst.max((r.lhs - r.rhs) / r.joint_stderr.max(f64::MIN_POSITIVE));
        }
    }
    verdict(all, format!("6/6 cases checked, largest (lhs - rhs) / joint stderr = {worst:.2}"))
}

fn reflected_brownian() -> Verdict {
    let bm = brownian(1).unwrap();
    let p = CouplingParams::new(vec![0.3], vec![0.0], 0.3).unwrap();
    let e = simulate_coupled_ensemble(&bm, &p, &CoupledEnsembleSpec::new(4.0, 0.01, 100_000, 51).with_checkpoints(vec![0.25, 1.0]))
        .unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [0.25, 1.0, 4.0] {
        let tail = estimate_tail(&e, t).unwrap();
        let exact = statrs::function::erf::erf(0.3 / (8.0 * t).sqrt());
        let z = (tail.estimate - exact) / tail.stderr();
        pass &= z.abs() <= 3.0;
        parts.push(format!("t={t}: {:.4} vs {exact:.4} (z={z:.2})", tail.estimate));
    }
    verdict(pass, parts.join(", "))
}

fn girsanov_normalization() -> Verdict {
    let m = linear(LinearParams::jump_ou(1.0, 2.0, 1.0)).unwrap();
    let n = 100_000;
    let bridge = BridgeSpec::new(vec![3.0], 1.0, &[0.0]).with_t0(0.0);
    let spec = ControlledEnsembleSpec { x0: vec![0.0], bridge, dt: 0.01, n_paths: n, master_seed: 61, checkpoints: vec![] };
    let controlled = simulate_controlled_ensemble(&m, &spec).unwrap();
    let plain = simulate_ensemble(&m, &EnsembleSpec::new(vec![0.0], 1.0, 0.01, n, 62)).unwrap();
    let w = controlled.mean_weight(1.0).unwrap();
    let zw = (w.value - 1.0) / w.stderr;
    let mut pass = zw.abs() <= 3.0;
    let mut parts = vec![format!("E xi = {:.4} +- {:.4} (z={zw:.2})", w.value, w.stderr)];
    let phis: [(&str, fn(&[f64]) -> f64); 3] = [
        ("tanh", |x| x[0].tanh()),
        ("cos", |x| x[0].cos()),
        ("1{x>1}", |x| if x[0] > 1.0 { 1.0 } else { 0.0 }),
    ];
    for (name, phi) in phis {
        let a = controlled.weighted_expectation(1.0, phi).unwrap();
        let b = plain.expectation(1.0, phi).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        let z = (a.value - b.value) / se;
        pass &= z.abs() <= Z95;
        parts.push(format!("{name}: {:.4} vs {:.4} (z={z:.2})", a.value, b.value));
    }
    verdict(pass, parts.join(", "))
}

fn irreducibility() -> Verdict {
    let spec = ProbeSpec::new(vec![0.0], vec![3.0], 0.5, 1.0, 100_000, 71);
    let r = irreducibility_probe(&jump_ou(), &spec).unwrap();
    verdict(
        r.weighted_ci_low > 0.0,
        format!(
            "p = {:.3e}, 95% CI [{:.3e}, {:.3e}], status {}",
            r.weighted_estimate, r.weighted_ci_low, r.weighted_ci_high, r.status
        ),
    )
}

fn stationary_moment() -> Verdict {
    let spec = KbSpec { x0: vec![0.0], horizon: 1e4, dt: 0.01, burn_in: None, mode: KbMode::SinglePath, seed: 81 };
    let mu = krylov_bogoliubov(&jump_ou(), &spec, &GridChoice::default()).unwrap();
    let v = mu.variance()[0];
    let exact = (1.0 + 1.0 / 3.0) / 2.0;
    let rel = (v - exact).abs() / exact;
    verdict(rel <= 0.05, format!("variance {v:.4} vs {exact:.4} (relative error {rel:.3})"))
}

/// Runs the shipped superlinear ergodicity config once; criteria 8 and 9 both read it.
fn ergodicity_report() -> (serde_json::Value, f64) {
    let clock = Instant::now();
    let cfg = parse_config(&config("ergodicity_superlinear.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), None).unwrap();
    (out.report, clock.elapsed().as_secs_f64())
}

fn ergodic_rate(report: &serde_json::Value, secs: f64) -> Verdict {
    let curves = report["result"]["curves"].as_array().unwrap();
    let mut pass = curves.len() >= 2 && secs < 600.0;
    let mut parts = Vec::new();
    for c in curves {
        let alpha = c["alpha"].as_f64().unwrap();
        let ci = (c["alpha_ci"][0].as_f64().unwrap(), c["alpha_ci"][1].as_f64().unwrap());
        let r2 = c["r_squared"].as_f64().unwrap();
        pass &= alpha > 0.0 && ci.0 > 0.0 && r2 > 0.9;
        parts.push(format!("x0={}: alpha {alpha:.3} CI ({:.3}, {:.3}) R2 {r2:.3}", c["x0"], ci.0, ci.1));
    }
    let consistent = report["result"]["rates_consistent"].as_bool().unwrap();
    pass &= consistent;
    parts.push(format!("mutually consistent {consistent}, {secs:.0} s"));
    verdict(pass, parts.join(", "))
}

fn drift_ode(report: &serde_json::Value) -> Verdict {
    let mut pass = true;
    let mut checkpoints = 0;
    let mut worst = f64::NEG_INFINITY;
    for c in report["result"]["curves"].as_array().unwrap() {
        for row in c["moments"].as_array().unwrap() {
            let (m, se, b) = (row["second_moment"].as_f64().unwrap(), row["stderr"].as_f64().unwrap(), row["bound"].as_f64().unwrap());
            pass &= m <= b + 3.0 * se;
            worst = worst.max((m - b) / se.max(f64::MIN_POSITIVE));
            checkpoints += 1;
        }
    }
    let mut max_err = 0.0f64;
    for (lambda3, x0sq) in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.25)] {
        for t in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let numeric = drift_ode_bound(4.0, lambda3, 0.0, x0sq, t).unwrap();
            let exact = drift_ode_closed_form(4.0, lambda3, x0sq, t).unwrap();
            max_err = max_err.max((numeric - exact).abs());
        }
    }
    let unit = (drift_ode_bound(4.0, 1.0, 0.0, 1.0, 3.0).unwrap() - 0.25).abs();
    pass &= max_err <= 1e-8 && unit <= 1e-8 && checkpoints > 0;
    verdict(
        pass,
        format!("{checkpoints} checkpoints, largest (E|X|^2 - bound) / stderr = {worst:.2}; ODE vs closed form max error {max_err:.2e}"),
    )
}

fn determinism() -> Verdict {
    let irreducibility = config("irreducibility_jump_ou.toml").replace("n_paths = 100000", "n_paths = 20000");
    let configs = [config("simulate_jump_ou.toml"), config("couple_jump_ou.toml"), irreducibility];
    let mut pass = true;
    let mut compared = 0;
    for text in &configs {
        let cfg = parse_config(text).unwrap();
        let runs: Vec<Vec<(String, Vec<u8>)>> = [1, 4, 8]
            .iter()
            .map(|&threads| {
                let dir = tempfile::tempdir().unwrap();
                let out = run_experiment(&cfg, dir.path(), Some(threads)).unwrap();
                let mut files = vec![("report.json".to_string(), fs::read(&out.report_path).unwrap())];
                for f in &out.files {
                    files.push((f.clone(), fs::read(dir.path().join(f)).unwrap()));
                }
                files
            })
            .collect();
        pass &= runs.iter().all(|r| *r == runs[0]);
        compared += runs[0].len();
    }
    verdict(pass, format!("{compared} files per worker count compared across 1, 4 and 8 workers"))
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let v = f();
        let mut err = std::io::stderr();
        let _ = writeln!(err, "criterion {id:>2} {:<4} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    run(1, "commuting-pair norm inequality", &mut lemma21);
    run(2, "coupled marginals", &mut marginals);
    run(3, "strong Feller modulus", &mut strong_feller);
    run(4, "reflected Brownian coupling time", &mut reflected_brownian);
    run(5, "Girsanov normalization", &mut girsanov_normalization);
    run(6, "irreducibility certificate", &mut irreducibility);
    run(7, "stationary moment", &mut stationary_moment);
    let (report, secs) = ergodicity_report();
    run(8, "exponential ergodicity rate", &mut || ergodic_rate(&report, secs));
    run(9, "drift ODE comparison", &mut || drift_ode(&report));
    run(10, "determinism across workers", &mut determinism);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
