use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind, KbModeName};
use crate::coupling::{estimate_tail, simulate_coupled_ensemble, CoupledEnsembleSpec};
use crate::ergodic::{
    drift_ode_curve, krylov_bogoliubov, rate_fit, tv_decay, GridChoice, HistogramGrid, KbMode, KbSpec, RateFit,
    RateOptions,
};
use crate::error::{Error, Result};
use crate::girsanov::{irreducibility_probe, ProbeSpec};
use crate::matops::{lemma21_suite, Lemma21Suite};
use crate::model::{check_hypotheses, CoefficientSet};
use crate::rng::substream;
use crate::sim::{estimate_sup_second_moment, model_hash, simulate_ensemble, write_columnar, EnsembleSpec};
use crate::stats::Estimate;

/// Files written by a successful run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Contents of `report.json`.
    pub report: Value,
    pub report_path: PathBuf,
    pub manifest_path: PathBuf,
    /// Data files, relative to the output directory.
    pub files: Vec<String>,
    pub wall_time: f64,
}

/// Collects data files written into the output directory.
struct Output<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Output<'_> {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn csv_row(w: &mut impl Write, cols: &[f64]) -> Result<()> {
    let row: Vec<String> = cols.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(w, "{}", row.join(","))?;
    Ok(())
}

/// The config as embedded in reports: everything needed to re-run it,
/// without the output location or worker count.
fn echo(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig { out: None, threads: None, ..config.clone() }
}

/// Runs `config`, writing `report.json`, `manifest.json` and the data files
/// into `out_dir`. On error a `failure.json` record is written instead and
/// the error is returned.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir)?;
    let threads = threads.or(config.threads);
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let mut out = Output { dir: out_dir, files: Vec::new() };
    let result = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))
            .and_then(|pool| pool.install(|| execute(config, &mut out))),
        None => execute(config, &mut out),
    };
    let wall_time = clock.elapsed().as_secs_f64();
    let manifest = |status: &str| {
        json!({
            "status": status,
            "kind": config.kind.name(),
            "seed": config.seed,
            "config": config,
            "config_toml": config.to_toml().unwrap_or_default(),
            "versions": { "jumperg": env!("CARGO_PKG_VERSION") },
            "platform": { "os": std::env::consts::OS, "arch": std::env::consts::ARCH },
            "threads": threads.unwrap_or_else(rayon::current_num_threads),
            "started_unix": started,
            "wall_time_seconds": wall_time,
        })
    };
    let manifest_path = out_dir.join("manifest.json");
    match result {
        Ok(body) => {
            let report = json!({
                "kind": config.kind.name(),
                "seed": config.seed,
                "config": echo(config),
                "result": body,
                "files": out.files,
            });
            let report_path = out_dir.join("report.json");
            fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
            let mut m = manifest("ok");
            m["files"] = json!(out.files);
            fs::write(&manifest_path, serde_json::to_string_pretty(&m)? + "\n")?;
            Ok(RunOutcome { report, report_path, manifest_path, files: out.files, wall_time })
        }
        Err(err) => {
            write_failure(out_dir, Some(config), &err)?;
            fs::write(&manifest_path, serde_json::to_string_pretty(&manifest("failed"))? + "\n")?;
            Err(err)
        }
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain(_) => "domain",
        Error::Parameter { .. } => "parameter",
        Error::NotPsd { .. } => "not-psd",
        Error::Precondition(_) => "precondition",
        Error::Evaluation { .. } => "evaluation",
        Error::BlowUp { .. } => "blow-up",
        Error::StepTooLarge { .. } => "step-too-large",
        Error::Usage(_) => "usage",
        Error::DegenerateDirection => "degenerate-direction",
        Error::CouplingDegeneracy { .. } => "coupling-degeneracy",
        Error::Nondegeneracy { .. } => "nondegeneracy",
        Error::InsufficientSignal { .. } => "insufficient-signal",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

/// Writes the machine-readable `failure.json` record.
pub fn write_failure(out_dir: &Path, config: Option<&ExperimentConfig>, err: &Error) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let issues = match err {
        Error::Config(issues) => json!(issues),
        _ => Value::Null,
    };
    let record = json!({
        "status": "failed",
        "error_kind": error_kind(err),
        "error": err.to_string(),
        "issues": issues,
        "kind": config.map(|c| c.kind.name()),
        "seed": config.map(|c| c.seed),
        "config": config.map(echo),
    });
    let path = out_dir.join("failure.json");
    fs::write(&path, serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(path)
}

fn execute(config: &ExperimentConfig, out: &mut Output<'_>) -> Result<Value> {
    match config.kind {
        ExperimentKind::Lemma21 => lemma21(config),
        ExperimentKind::Check => check(config),
        _ => {
            let model = config.model()?;
            let mut body = match config.kind {
                ExperimentKind::Simulate => simulate(config, &model, out)?,
                ExperimentKind::Couple => couple(config, &model, out)?,
                ExperimentKind::Irreducibility => irreducibility(config, &model)?,
                ExperimentKind::Ergodicity => ergodicity(config, &model, out)?,
                ExperimentKind::Check | ExperimentKind::Lemma21 => unreachable!(),
            };
            body["model"] = json!(model.label());
            body["model_hash"] = json!(model_hash(model.label()));
            Ok(body)
        }
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Usage(format!("missing [{name}] table")))
}

fn lemma21(config: &ExperimentConfig) -> Result<Value> {
    let s = config.lemma21.clone().unwrap_or_default();
    let suite = Lemma21Suite { pairs: s.pairs, lambdas: s.lambdas, dims: s.dims, upper: s.upper, seed: config.seed };
    let report = lemma21_suite(&suite)?;
    Ok(json!({ "summary": report.summary(), "suite": suite, "report": report }))
}

fn check(config: &ExperimentConfig) -> Result<Value> {
    let model = config.model()?;
    let s = config.check.clone().unwrap_or_else(|| super::config::CheckConfig {
        hypotheses: crate::model::Hypothesis::ALL.iter().map(|h| h.name().to_string()).collect(),
        sampler: Default::default(),
    });
    let report = check_hypotheses(&model, &s.selected(), &s.sampler, config.seed)?;
    Ok(json!({
        "model": model.label(),
        "model_hash": model_hash(model.label()),
        "all_satisfied": report.all_satisfied(),
        "report": report,
    }))
}

#[derive(Serialize)]
struct MomentRow {
    t: f64,
    mean: Vec<f64>,
    mean_stderr: Vec<f64>,
    second_moment: f64,
    second_moment_stderr: f64,
}

fn simulate(config: &ExperimentConfig, model: &CoefficientSet, out: &mut Output<'_>) -> Result<Value> {
    let s = section(&config.simulate, "simulate")?;
    let mut spec = EnsembleSpec::new(s.x0.clone(), s.horizon, s.dt, s.n_paths, substream(config.seed, "simulate"))
        .with_checkpoints(s.checkpoints.clone());
    if s.store_paths {
        spec = spec.storing_paths();
    }
    let ens = simulate_ensemble(model, &spec)?;
    let d = ens.dim;
    let mut rows = Vec::new();
    for &t in &ens.checkpoints {
        let coords: Vec<Estimate> = (0..d).map(|k| ens.expectation(t, |x| x[k])).collect::<Result<_>>()?;
        let m2 = ens.expectation(t, |x| x.iter().map(|v| v * v).sum())?;
        rows.push(MomentRow {
            t,
            mean: coords.iter().map(|e| e.value).collect(),
            mean_stderr: coords.iter().map(|e| e.stderr).collect(),
            second_moment: m2.value,
            second_moment_stderr: m2.stderr,
        });
    }
    out.write("paths.csv", |w| write_columnar(&ens, w))?;
    out.write("moments.csv", |w| {
        let means: Vec<String> = (0..d).map(|k| format!("mean_x{k}")).collect();
        let ses: Vec<String> = (0..d).map(|k| format!("stderr_x{k}")).collect();
        writeln!(w, "t,{},{},second_moment,second_moment_stderr", means.join(","), ses.join(","))?;
        for r in &rows {
            let mut cols = vec![r.t];
            cols.extend(&r.mean);
            cols.extend(&r.mean_stderr);
            cols.extend([r.second_moment, r.second_moment_stderr]);
            csv_row(w, &cols)?;
        }
        Ok(())
    })?;
    Ok(json!({
        "n_paths": ens.n_paths(),
        "horizon": ens.horizon,
        "dt": ens.dt,
        "checkpoints": rows,
        "sup_second_moment": estimate_sup_second_moment(&ens),
    }))
}

fn couple(config: &ExperimentConfig, model: &CoefficientSet, out: &mut Output<'_>) -> Result<Value> {
    let s = section(&config.couple, "couple")?;
    let params = s.params();
    let mut times = s.tail_times.clone();
    times.push(s.horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let spec = CoupledEnsembleSpec::new(s.horizon, s.dt, s.n_paths, substream(config.seed, "couple"))
        .with_checkpoints(times.clone());
    let ens = simulate_coupled_ensemble(model, &params, &spec)?;
    let tails = times.iter().map(|&t| Ok((t, estimate_tail(&ens, t)?))).collect::<Result<Vec<_>>>()?;
    let taus: Vec<f64> = ens.times.iter().filter_map(|c| c.tau).collect();
    let left = ens.times.iter().filter(|c| c.s_delta.is_some()).count();
    out.write("tail.csv", |w| {
        writeln!(w, "t,tail,stderr,ci_low,ci_high")?;
        for (t, p) in &tails {
            csv_row(w, &[*t, p.estimate, p.stderr(), p.ci_low, p.ci_high])?;
        }
        Ok(())
    })?;
    if s.write_paths {
        out.write("pairs.csv", |w| ens.write_columnar(w))?;
    }
    Ok(json!({
        "params": params,
        "n_paths": ens.n_paths(),
        "coupled": taus.len(),
        "mean_coupling_time": if taus.is_empty() { None } else { Some(Estimate::from_samples(taus.iter().copied())) },
        "left_delta_neighbourhood": left,
        "tails": tails.iter().map(|(t, p)| json!({ "t": t, "tail": p, "stderr": p.stderr() })).collect::<Vec<_>>(),
    }))
}

fn irreducibility(config: &ExperimentConfig, model: &CoefficientSet) -> Result<Value> {
    let s = section(&config.irreducibility, "irreducibility")?;
    let mut spec = ProbeSpec::new(
        s.x0.clone(),
        s.target.clone(),
        s.radius,
        s.horizon,
        s.n_paths,
        substream(config.seed, "irreducibility"),
    );
    if let Some(dt) = s.dt {
        spec.dt = dt;
    }
    if let Some(t0) = s.t0 {
        spec.t0 = t0;
    }
    if let Some(n) = s.truncation {
        spec.truncation = n;
    }
    spec.bihari_constant = s.bihari_constant;
    let report = irreducibility_probe(model, &spec)?;
    Ok(json!({ "certified": report.certified(), "probe": report }))
}

#[derive(Serialize)]
struct MomentCheck {
    t: f64,
    second_moment: f64,
    stderr: f64,
    bound: f64,
    holds: bool,
}

fn ergodicity(config: &ExperimentConfig, model: &CoefficientSet, out: &mut Output<'_>) -> Result<Value> {
    let s = section(&config.ergodicity, "ergodicity")?;
    let d = model.dim();
    let kb = &s.kb;
    let kb_spec = KbSpec {
        x0: kb.x0.clone().unwrap_or_else(|| s.starts[0].clone()),
        horizon: kb.horizon,
        dt: kb.dt.unwrap_or(s.dt),
        burn_in: kb.burn_in,
        mode: match kb.mode {
            KbModeName::SinglePath => KbMode::SinglePath,
            KbModeName::Ensemble => KbMode::Ensemble { n_paths: kb.n_paths.unwrap_or(0) },
        },
        seed: substream(config.seed, "kb"),
    };
    let grid = match (kb.lo, kb.hi) {
        (Some(lo), Some(hi)) => GridChoice::Fixed { grid: HistogramGrid::uniform(d, lo, hi, kb.bins)? },
        _ => GridChoice::Covering { bins: kb.bins, coverage: kb.coverage },
    };
    let mu = krylov_bogoliubov(model, &kb_spec, &grid)?;
    out.write("invariant_measure.txt", |w| mu.write_text(w))?;

    let times = s.times();
    let opts = RateOptions {
        knee_fraction: s.fit.knee_fraction,
        bootstrap: s.fit.bootstrap,
        seed: substream(config.seed, "bootstrap"),
        weighted: s.fit.weighted,
    };
    let mut curves = Vec::new();
    let mut fits: Vec<RateFit> = Vec::new();
    for (k, x0) in s.starts.iter().enumerate() {
        let spec = EnsembleSpec::new(x0.clone(), s.horizon, s.dt, s.n_paths, substream(config.seed, &format!("decay-{k}")))
            .with_checkpoints(times.clone());
        let ens = simulate_ensemble(model, &spec)?;
        let points = tv_decay(&ens, &mu)?;
        out.write(&format!("decay_{k}.csv"), |w| {
            writeln!(w, "t,tv,stderr,floor,usable")?;
            for p in &points {
                write!(w, "{:.16e},{:.16e},{:.16e},{:.16e},", p.t, p.value, p.stderr, p.floor)?;
                writeln!(w, "{}", u8::from(p.usable()))?;
            }
            Ok(())
        })?;
        let moments = if s.moments {
            let c = model.constants();
            let x0sq: f64 = x0.iter().map(|v| v * v).sum();
            let bound = drift_ode_curve(c.r, c.lambda3, c.lambda4, x0sq, &ens.checkpoints)?;
            let rows = ens
                .checkpoints
                .iter()
                .zip(bound)
                .map(|(&t, b)| {
                    let e = ens.expectation(t, |x| x.iter().map(|v| v * v).sum())?;
                    Ok(MomentCheck { t, second_moment: e.value, stderr: e.stderr, bound: b, holds: e.value <= b + 3.0 * e.stderr })
                })
                .collect::<Result<Vec<_>>>()?;
            out.write(&format!("moments_{k}.csv"), |w| {
                writeln!(w, "t,second_moment,stderr,bound")?;
                for r in &rows {
                    csv_row(w, &[r.t, r.second_moment, r.stderr, r.bound])?;
                }
                Ok(())
            })?;
            Some(rows)
        } else {
            None
        };
        let fit = rate_fit(&points, &opts)?;
        curves.push(json!({
            "x0": x0,
            "alpha": fit.alpha,
            "alpha_ci": fit.alpha_ci,
            "excludes_zero": fit.alpha_ci.0 > 0.0,
            "r_squared": fit.r_squared,
            "fit": fit,
            "moments": moments,
            "moments_hold": moments.as_ref().map(|m| m.iter().all(|r| r.holds)),
        }));
        fits.push(fit);
    }
    let consistent = fits.iter().all(|a| fits.iter().all(|b| b.ci_contains(a.alpha)));
    Ok(json!({
        "kb": kb_spec,
        "measure": {
            "samples": mu.sample_count(),
            "overflow": mu.overflow(),
            "grid": mu.grid,
            "mean": mu.mean(),
            "variance": mu.variance(),
        },
        "times": times,
        "curves": curves,
        "rates_consistent": consistent,
    }))
}
