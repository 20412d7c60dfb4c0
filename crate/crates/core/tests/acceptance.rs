//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Criteria that need an independent check (characteristic function, a
//! Riemann-sum convolution, two-sample KS) carry their own oracles here.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablescale_core::averaging::{
    analytic_affine_drift_oracle, estimate_evolution_drift, within_error_bars, DriftEstimate, EnsembleSettings,
};
use stablescale_core::experiments::{contraction_check, LemmaTargets};
use stablescale_core::experiments::{
    convergence_sweep, lemma_sweeps, strong_error, theorem3_profile_check, ExperimentSettings, ReferenceKind,
};
use stablescale_core::model::{DecayProfile, DriftFamily, DriftKind, ModelSpec, Rational, ValidatedModel};
use stablescale_core::noise::{convolution_scale, sample_standard_symmetric_stable, StableIndex};
use stablescale_core::spectral::SpectralField;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn heat() -> ValidatedModel {
    ModelSpec::heat_equation(16).build().expect("heat equation is valid")
}

fn periodic_model() -> ValidatedModel {
    let spec = ModelSpec::heat_equation(16);
    let f = DriftFamily::tight(DriftKind::SinusoidalTime {
        a_x: -0.5,
        a_y: 1.0,
        c: 0.5,
        amplitude: 0.3,
        period: Rational::from_integer(1),
        phase: 0.0,
    });
    let g = DriftFamily::tight(DriftKind::SinusoidalTime {
        a_x: 0.5,
        a_y: -0.5,
        c: 0.3,
        amplitude: 0.5,
        period: Rational::new(1, 2),
        phase: 0.0,
    });
    spec.with_drifts(f, g).build().expect("periodic model is valid")
}

fn asymptotic_model() -> ValidatedModel {
    let spec = ModelSpec::heat_equation(16);
    let target = DriftKind::Affine {
        a_x: 0.5,
        a_y: -0.5,
        c: 0.3,
    };
    let g = DriftFamily::tight(DriftKind::DecayingAffine {
        a_x: 0.5,
        a_y: -0.5,
        c: 0.3,
        amplitude: 0.5,
        rate: 1.0,
    })
    .with_asymptotic(
        target,
        DecayProfile::Exponential {
            coefficient: 1.0,
            rate: 1.0,
        },
    );
    spec.clone()
        .with_drifts(spec.drifts.f.clone(), g)
        .build()
        .expect("asymptotic model is valid")
}

/// `|E cos(hS) - e^{-h^alpha}| <= 0.01` at 1e5 samples.
fn sampler_characteristic_function() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, alpha) in [1.2, 1.5, 1.8].into_iter().enumerate() {
        let idx = StableIndex::new(alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_standard_symmetric_stable(idx, &mut rng))
            .collect();
        for h in [0.5f64, 1.0, 2.0] {
            let empirical = draws.iter().map(|s| (h * s).cos()).sum::<f64>() / draws.len() as f64;
            worst = worst.max((empirical - (-h.powf(alpha)).exp()).abs());
        }
    }
    outcome(worst <= 0.01, format!("max |ecf - cf| = {worst:.4} (limit 0.01)"))
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Exact convolution scale against a 1000-substep midpoint Riemann sum of
/// `∫_0^Δ e^{-λ(Δ - r)} dZ_r`.
fn exact_convolution_law() -> Outcome {
    let mut worst: f64 = 0.0;
    for (case, (lambda, delta, alpha)) in [(1.0, 1.0, 1.5), (4.0, 0.5, 1.2)].into_iter().enumerate() {
        let idx = StableIndex::new(alpha).unwrap();
        let scale = convolution_scale(lambda, 1.0, delta, idx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(200 + case as u64);
        let mut exact: Vec<f64> = (0..10_000)
            .map(|_| scale * sample_standard_symmetric_stable(idx, &mut rng))
            .collect();
        let m = 1000;
        let h = delta / m as f64;
        let step = h.powf(1.0 / alpha);
        let weights: Vec<f64> = (0..m)
            .map(|j| (-lambda * (delta - (j as f64 + 0.5) * h)).exp() * step)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(300 + case as u64);
        let mut riemann: Vec<f64> = (0..10_000)
            .map(|_| {
                weights
                    .iter()
                    .map(|w| w * sample_standard_symmetric_stable(idx, &mut rng))
                    .sum()
            })
            .collect();
        worst = worst.max(ks_two_sample(&mut exact, &mut riemann));
    }
    outcome(worst <= 0.03, format!("max KS distance = {worst:.4} (limit 0.03)"))
}

fn frozen_contraction() -> Outcome {
    let settings = ExperimentSettings::default();
    let c = contraction_check(&heat(), &settings).unwrap();
    outcome(
        c.passed && c.paths == 200,
        format!(
            "{}/{} paths within 5% slack, worst ratio {:.4}",
            c.satisfied, c.paths, c.worst_ratio
        ),
    )
}

fn degenerate_coupling() -> Outcome {
    let spec = ModelSpec::heat_equation(16);
    let f = DriftFamily::tight(DriftKind::SaturatingNonlinear {
        a_x: -0.8,
        a_y: 0.0,
        c: 0.5,
    });
    let model = spec.clone().with_drifts(f, spec.drifts.g.clone()).build().unwrap();
    let settings = ExperimentSettings::default();
    let mut worst: f64 = 0.0;
    let mut coupled = true;
    for &eps in &settings.eps_grid {
        let est = strong_error(&model, ReferenceKind::EvolutionAveraged, eps, &settings).unwrap();
        worst = worst.max(est.max_pathwise_gap);
        coupled &= est.coupled;
    }
    outcome(
        worst <= 1e-12 && coupled,
        format!("max pathwise gap = {worst:.3e} over 64 pairs x 4 eps (limit 1e-12), coupled = {coupled}"),
    )
}

fn random_probe(rng: &mut ChaCha8Rng, n: usize) -> (f64, SpectralField) {
    let t = 4.0 * rng.random::<f64>() - 2.0;
    let x = (0..n)
        .map(|k| (2.0 * rng.random::<f64>() - 1.0) / (k + 1) as f64)
        .collect();
    (t, SpectralField::new(x).unwrap())
}

fn probe_settings(seed: u64) -> EnsembleSettings {
    EnsembleSettings {
        ensemble_size: 1000,
        burn_in: Some(8.0),
        frozen_dt: 0.01,
        seed,
        blocks: 8,
    }
}

fn averaged_drift_oracle() -> Outcome {
    let model = heat();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (t, x) = random_probe(&mut rng, model.dim());
        let est = estimate_evolution_drift(&model, t, &x, &probe_settings(600 + i)).unwrap();
        let exact = DriftEstimate::exact(analytic_affine_drift_oracle(&model, t, &x).unwrap());
        worst = worst.max(est.mean.distance(&exact.mean) / est.stderr_norm());
        hits += usize::from(within_error_bars(&est, &exact, 3.0));
    }
    outcome(
        hits == 20,
        format!("{hits}/20 probes within 3 standard errors, worst {worst:.2} se"),
    )
}

fn rate_line(label: &str, report: &stablescale_core::experiments::RateReport) -> Outcome {
    let values = report.values();
    outcome(
        report.passed(),
        format!(
            "{label}: errors {:?}, slope {:.3} vs theory {:.4} - {}, strictly decreasing = {}",
            values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            report.fit.slope,
            report.fit.theory,
            report.fit.slack,
            report.strictly_decreasing
        ),
    )
}

fn evolution_rate() -> Outcome {
    let report = convergence_sweep(
        &heat(),
        ReferenceKind::EvolutionAveraged,
        &ExperimentSettings::default(),
    )
    .unwrap();
    rate_line("evolution", &report)
}

fn periodic_rate() -> Outcome {
    let report = convergence_sweep(
        &periodic_model(),
        ReferenceKind::PeriodicAveraged,
        &ExperimentSettings::default(),
    )
    .unwrap();
    rate_line("periodic", &report)
}

fn asymptotic_profile() -> Outcome {
    let report = theorem3_profile_check(&asymptotic_model(), &ExperimentSettings::default()).unwrap();
    outcome(
        report.passed,
        format!(
            "C = {:.4}, sub-grid constants ({:.4}, {:.4}), ratio {:.3} (limit 3), ratios {:?}",
            report.constant,
            report.sub_constants.0,
            report.sub_constants.1,
            report.constant_ratio,
            report
                .rows
                .iter()
                .map(|r| format!("{:.4}", r.ratio))
                .collect::<Vec<_>>()
        ),
    )
}

fn lemma_slopes() -> Outcome {
    let targets = LemmaTargets {
        moment: false,
        increment: true,
        auxiliary: true,
        contraction: false,
    };
    let report = lemma_sweeps(&heat(), &ExperimentSettings::default(), targets).unwrap();
    let inc = report.increment.unwrap();
    let aux = report.auxiliary.unwrap();
    outcome(
        inc.passed && aux.passed,
        format!(
            "increment slope {:.3}, auxiliary slope {:.3} (threshold {:.3})",
            inc.slope, aux.slope, inc.threshold
        ),
    )
}

fn evolution_periodicity() -> Outcome {
    let model = heat();
    let tau2 = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut hits = 0;
    for i in 0..10 {
        let (t, x) = random_probe(&mut rng, model.dim());
        let a = estimate_evolution_drift(&model, t, &x, &probe_settings(800 + 2 * i)).unwrap();
        let b = estimate_evolution_drift(&model, t + tau2, &x, &probe_settings(801 + 2 * i)).unwrap();
        hits += usize::from(within_error_bars(&a, &b, 3.0));
    }
    outcome(
        hits == 10,
        format!("{hits}/10 probes agree at t and t + tau_2 within 3 combined standard errors"),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "stable sampler characteristic function",
            Duration::from_secs(5),
            sampler_characteristic_function,
        ),
        ("exact convolution law", Duration::from_secs(30), exact_convolution_law),
        ("frozen contraction", Duration::from_secs(10), frozen_contraction),
        (
            "degenerate coupling identity",
            Duration::from_secs(5),
            degenerate_coupling,
        ),
        ("averaged drift oracle", Duration::from_secs(60), averaged_drift_oracle),
        ("evolution averaging rate", Duration::from_secs(600), evolution_rate),
        ("periodic averaging rate", Duration::from_secs(600), periodic_rate),
        (
            "asymptotic composite bound",
            Duration::from_secs(600),
            asymptotic_profile,
        ),
        ("increment and auxiliary slopes", Duration::from_secs(300), lemma_slopes),
        (
            "evolution system periodicity",
            Duration::from_secs(120),
            evolution_periodicity,
        ),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let ok = out.passed && in_time;
        failures += usize::from(!ok);
        println!(
            "criterion {:>2} {}: {} [{:.1}s / {}s] {}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failures == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
