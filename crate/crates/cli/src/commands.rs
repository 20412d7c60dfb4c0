use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use stablescale_core::averaging::{
    asymptotic_average_drift, estimate_evolution_drift, periodic_average_drift, AnalyticAveragedDrift, AveragingKind,
};
use stablescale_core::dynamics::{simulate_slowfast, SlowFastRun};
use stablescale_core::experiments::{
    convergence_sweep, lemma_sweeps, theorem3_profile_check, ExperimentSettings, LemmaTargets, ReferenceKind,
};
use stablescale_core::io::{
    drift_rows, drift_table_csv, plot_data, profile_csv, report_csv, trajectory_csv, write_output,
};
use stablescale_core::model::{validation_report, ModelSpec, ValidatedModel};
use stablescale_core::spectral::SpectralField;
use stablescale_core::{Config, Error};

use crate::manifest::{config_hash, RunManifest, MANIFEST_FILE};
use crate::{Cli, Command, Failure, KindArg};

struct Loaded {
    model: ModelSpec,
    settings: ExperimentSettings,
    hash: String,
}

fn load(cli: &Cli) -> Result<Loaded, Failure> {
    let path = cli
        .common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let bytes = std::fs::read(path).map_err(|e| Failure::Io(format!("i/o error on {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Usage(format!("{} is not valid UTF-8", path.display())))?;
    let (model, mut settings) = Config::parse(&text, &path.display().to_string())?.split();
    if let Some(seed) = cli.common.seed {
        settings.seed = seed;
    }
    Ok(Loaded {
        model,
        settings,
        hash: config_hash(&bytes),
    })
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

/// Fails before any work when an output exists and `--force` is absent.
fn claim(out: &Path, names: &[String], force: bool) -> Result<Vec<PathBuf>, Failure> {
    let mut paths: Vec<PathBuf> = names.iter().map(|n| out.join(n)).collect();
    paths.push(out.join(MANIFEST_FILE));
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Failure::Io(format!(
                "{} exists; refusing to overwrite without --force",
                p.display()
            )));
        }
    }
    Ok(paths)
}

fn finish(manifest: &mut RunManifest, files: &[(PathBuf, String)], force: bool) -> Result<(), Failure> {
    let paths: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
    manifest.finish(&paths);
    for (path, contents) in files {
        write_output(path, contents, force)?;
        println!("wrote {}", path.display());
    }
    let manifest_path = files[0].0.with_file_name(MANIFEST_FILE);
    write_output(&manifest_path, &manifest.to_json(), force)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let loaded = load(cli)?;
    match &cli.command {
        Command::Validate => validate(&loaded),
        Command::Simulate { eps, trajectories } => simulate(cli, &loaded, *eps, *trajectories),
        Command::Average { kind, t, x_from } => average(cli, &loaded, *kind, *t, x_from),
        Command::Converge {
            theorem,
            eps_grid,
            p,
            pairs,
        } => {
            let mut settings = loaded.settings.clone();
            if let Some(grid) = eps_grid {
                settings.eps_grid = grid.clone();
            }
            if let Some(p) = p {
                settings.p = *p;
            }
            if let Some(m) = pairs {
                settings.pairs = *m;
            }
            converge(cli, &loaded, settings, *theorem)
        }
        Command::Lemmas => lemmas(cli, &loaded),
    }
}

fn validate(loaded: &Loaded) -> Result<(), Failure> {
    let (report, violations) = validation_report(&loaded.model);
    for check in &report.checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", check.name, check.detail);
    }
    for v in &violations {
        println!("violation {v}");
    }
    if violations.is_empty() {
        println!("valid");
        Ok(())
    } else {
        println!("invalid: {} violation(s)", violations.len());
        Err(Failure::Verdict)
    }
}

fn build(loaded: &Loaded) -> Result<ValidatedModel, Failure> {
    Ok(loaded.model.build()?)
}

fn simulate(cli: &Cli, loaded: &Loaded, eps: f64, count: usize) -> Result<(), Failure> {
    if count == 0 {
        return Err(Failure::Usage("--trajectories must be at least 1".into()));
    }
    let model = build(loaded)?;
    let s = &loaded.settings;
    let grid = s.grid()?;
    let names: Vec<String> = (0..count).map(|i| format!("trajectory_{i:04}.csv")).collect();
    let paths = claim(&cli.common.out, &names, cli.common.force)?;
    let mut manifest = RunManifest::start(loaded.hash.clone(), s.seed, command_line());
    let header = manifest.header();
    let csvs = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let run = SlowFastRun {
                grid,
                eps,
                fast_substeps: s.fast_substeps,
                seed: s.seed,
                trajectory: i,
            };
            let traj = simulate_slowfast(&model, &run)?;
            let mut meta = header.clone();
            meta.extend([
                ("trajectory", i.to_string()),
                ("eps", eps.to_string()),
                ("horizon", grid.horizon.to_string()),
                ("macro_steps", grid.macro_steps.to_string()),
                ("fast_substeps", s.fast_substeps.to_string()),
            ]);
            Ok(trajectory_csv(&traj, &meta))
        })
        .collect::<Result<Vec<String>, Error>>()?;
    let files: Vec<(PathBuf, String)> = paths.into_iter().zip(csvs).collect();
    finish(&mut manifest, &files, cli.common.force)
}

/// `x` from the last row of a trajectory CSV.
fn x_from_csv(path: &Path, dim: usize) -> Result<SpectralField, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("i/o error on {}: {e}", path.display())))?;
    let mut rows = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = rows.next().unwrap_or("").split(',').collect();
    let last = rows
        .last()
        .ok_or_else(|| Failure::Usage(format!("{} has no data rows", path.display())))?;
    let cells: Vec<&str> = last.split(',').collect();
    let mut x = vec![0.0; dim];
    for k in 0..dim {
        let name = format!("x{}", k + 1);
        let col = header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Failure::Usage(format!("{} has no column {name}", path.display())))?;
        x[k] = cells
            .get(col)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Failure::Usage(format!("{}: bad value in column {name}", path.display())))?;
    }
    Ok(SpectralField::new(x)?)
}

fn average(cli: &Cli, loaded: &Loaded, kind: KindArg, t: f64, x_from: &str) -> Result<(), Failure> {
    let model = build(loaded)?;
    let s = &loaded.settings;
    let x = match x_from {
        "initial" => model.initial_x().clone(),
        "zero" => SpectralField::zeros(model.dim()),
        path => x_from_csv(Path::new(path), model.dim())?,
    };
    let (averaging, label) = match kind {
        KindArg::Evolution => (AveragingKind::Evolution, "evolution"),
        KindArg::Periodic => (AveragingKind::Periodic, "periodic"),
        KindArg::Asymptotic => (AveragingKind::Asymptotic, "asymptotic"),
    };
    // unsupported kinds are configuration errors, reported before any work
    match averaging {
        AveragingKind::Periodic => {
            model.common_period()?;
        }
        AveragingKind::Asymptotic => {
            model.asymptotic_targets()?;
        }
        AveragingKind::Evolution => {}
    }
    let paths = claim(&cli.common.out, &["drift.csv".to_string()], cli.common.force)?;
    let mut manifest = RunManifest::start(loaded.hash.clone(), s.seed, command_line());
    let est = match averaging {
        AveragingKind::Evolution => estimate_evolution_drift(&model, t, &x, &s.ensemble())?,
        AveragingKind::Periodic => periodic_average_drift(&model, &x, s.quadrature_nodes, 0.0, &s.ensemble())?,
        AveragingKind::Asymptotic => asymptotic_average_drift(&model, &x, &s.ergodic())?,
    };
    let oracle = match AnalyticAveragedDrift::new(&model, averaging) {
        Ok(d) => Some(d.value(t, &x)?),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut meta = manifest.header();
    meta.extend([("kind", label.to_string()), ("samples", est.samples.to_string())]);
    let csv = drift_table_csv(&drift_rows(t, &est, oracle.as_ref()), &meta);
    if let Some(o) = &oracle {
        println!(
            "|estimate - oracle| = {:.6}, combined stderr = {:.6}",
            est.mean.distance(o),
            est.stderr_norm()
        );
    }
    finish(&mut manifest, &[(paths[0].clone(), csv)], cli.common.force)
}

fn converge(cli: &Cli, loaded: &Loaded, settings: ExperimentSettings, theorem: u8) -> Result<(), Failure> {
    let model = build(loaded)?;
    let kind = match theorem {
        1 => ReferenceKind::EvolutionAveraged,
        2 => ReferenceKind::PeriodicAveraged,
        _ => ReferenceKind::AsymptoticAveraged,
    };
    settings.check(&model)?;
    // configuration errors before any output is claimed
    match kind {
        ReferenceKind::PeriodicAveraged => {
            model.common_period()?;
        }
        ReferenceKind::AsymptoticAveraged => {
            model.asymptotic_targets()?;
        }
        ReferenceKind::EvolutionAveraged => {}
    }
    let mut names = vec![
        "report.csv".to_string(),
        "summary.json".to_string(),
        "plot.csv".to_string(),
    ];
    if theorem == 3 {
        names.push("profile.csv".to_string());
    }
    let paths = claim(&cli.common.out, &names, cli.common.force)?;
    let mut manifest = RunManifest::start(loaded.hash.clone(), settings.seed, command_line());
    let meta = manifest.header();
    let (report, profile) = if theorem == 3 {
        let p = theorem3_profile_check(&model, &settings)?;
        (p.rates.clone(), Some(p))
    } else {
        (convergence_sweep(&model, kind, &settings)?, None)
    };
    let passed = match &profile {
        Some(p) => p.passed,
        None => report.passed(),
    };
    for e in &report.errors {
        println!("eps {:<8} error {:.6} stderr {:.6}", e.eps, e.value, e.stderr);
    }
    println!(
        "slope {:.4}, theoretical exponent {:.4}, slack {}",
        report.fit.slope, report.fit.theory, report.fit.slack
    );
    if let Some(p) = &profile {
        println!(
            "composite-bound constant {:.4}, sub-grid constants ({:.4}, {:.4}), ratio {:.3}",
            p.constant, p.sub_constants.0, p.sub_constants.1, p.constant_ratio
        );
    }
    println!("verdict {}", if passed { "PASS" } else { "FAIL" });
    let summary = json!({
        "theorem": theorem,
        "kind": kind,
        "theoretical_exponent": report.fit.theory,
        "slope": report.fit.slope,
        "strictly_decreasing": report.strictly_decreasing,
        "verdict": if passed { "PASS" } else { "FAIL" },
        "config_sha256": manifest.config_sha256,
        "settings": settings,
        "report": report,
        "profile": profile,
    });
    let mut files = vec![
        (paths[0].clone(), report_csv(&report, &meta)),
        (
            paths[1].clone(),
            serde_json::to_string_pretty(&summary).expect("summary serializes"),
        ),
        (
            paths[2].clone(),
            plot_data("eps", "error", &report.eps, &report.values()),
        ),
    ];
    if let Some(p) = &profile {
        files.push((paths[3].clone(), profile_csv(p, &meta)));
    }
    finish(&mut manifest, &files, cli.common.force)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn lemmas(cli: &Cli, loaded: &Loaded) -> Result<(), Failure> {
    let model = build(loaded)?;
    let s = &loaded.settings;
    let paths = claim(&cli.common.out, &["lemmas.json".to_string()], cli.common.force)?;
    let mut manifest = RunManifest::start(loaded.hash.clone(), s.seed, command_line());
    let report = lemma_sweeps(&model, s, LemmaTargets::all())?;
    if let Some(m) = &report.moment {
        println!("moment sweep: spread {:.3} (limit 0.5) {}", m.spread, verdict(m.passed));
    }
    for (label, sweep) in [("increment", &report.increment), ("auxiliary", &report.auxiliary)] {
        if let Some(sw) = sweep {
            println!(
                "{label} slope {:.3} (threshold {:.3}) {}",
                sw.slope,
                sw.threshold,
                verdict(sw.passed)
            );
        }
    }
    if let Some(c) = &report.contraction {
        println!("contraction {}/{} paths {}", c.satisfied, c.paths, verdict(c.passed));
    }
    let json = serde_json::to_string_pretty(&json!({
        "config_sha256": manifest.config_sha256,
        "report": report,
    }))
    .expect("report serializes");
    finish(&mut manifest, &[(paths[0].clone(), json)], cli.common.force)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}
