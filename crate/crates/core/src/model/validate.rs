use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::drift::{eval_kind, DecayProfile, DriftFamily, DriftKind};
use super::grid::CollocationGrid;
use super::{Inner, ModelSpec, ValidatedModel};
use crate::noise::{NoiseWeights, StableIndex};
use crate::spectral::{DiagonalOperator, OperatorLabel, SequenceSpec, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    Dimension,
    OperatorSpectrum,
    StableIndexRange,
    ThetaRange,
    TailDivergent,
    NoiseWeight,
    SpectralGap,
    LipschitzDeclaration,
    GrowthDeclaration,
    Period,
    Asymptotic,
    Collocation,
    InitialData,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::Dimension => "dimension",
            ViolationKind::OperatorSpectrum => "operator spectrum invalid",
            ViolationKind::StableIndexRange => "stable index out of range",
            ViolationKind::ThetaRange => "theta out of range",
            ViolationKind::TailDivergent => "noise tail divergent",
            ViolationKind::NoiseWeight => "noise weight invalid",
            ViolationKind::SpectralGap => "spectral gap violated",
            ViolationKind::LipschitzDeclaration => "Lipschitz declaration too small",
            ViolationKind::GrowthDeclaration => "growth declaration too small",
            ViolationKind::Period => "period invalid",
            ViolationKind::Asymptotic => "asymptotic audit failed",
            ViolationKind::Collocation => "collocation grid too coarse",
            ViolationKind::InitialData => "initial data invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

/// One named verdict in a validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of the integral test for one of the two summability conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumTail {
    /// Sum over the retained modes.
    pub truncated_sum: f64,
    /// Decay exponent `s` of the summand `~ k^{-s}`, when known analytically.
    pub exponent: Option<f64>,
    /// Upper bound on the mass beyond the truncation, when the series converges.
    pub tail_bound: Option<f64>,
}

impl SumTail {
    pub fn diverges(&self) -> bool {
        matches!(self.exponent, Some(s) if s <= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// `sum rho_k^alpha / lambda_k^{1 - alpha theta / 2}`.
    pub slow_noise_sum: Option<SumTail>,
    /// `sum gamma_k^alpha / beta_k`.
    pub fast_noise_sum: Option<SumTail>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Collector {
    violations: Vec<Violation>,
    checks: Vec<AssumptionCheck>,
}

impl Collector {
    fn record(&mut self, name: &'static str, kind: ViolationKind, failures: Vec<String>, ok: String) {
        if failures.is_empty() {
            self.checks.push(AssumptionCheck {
                name,
                passed: true,
                detail: ok,
            });
        } else {
            self.checks.push(AssumptionCheck {
                name,
                passed: false,
                detail: failures.join("; "),
            });
            self.violations
                .extend(failures.into_iter().map(|message| Violation { kind, message }));
        }
    }
}

/// Integral test for `sum_k w_k^alpha / mu_k^power` with `w = c k^q`, `mu = a k^b`:
/// the summand is `~ k^{-s}` with `s = b power - q alpha`.
fn sum_tail(weights: &SequenceSpec, eigen: &SequenceSpec, w: &[f64], mu: &[f64], alpha: f64, power: f64) -> SumTail {
    let truncated_sum = w.iter().zip(mu).map(|(w, m)| w.powf(alpha) / m.powf(power)).sum();
    let n = w.len() as f64;
    match (weights.power_law(), eigen.power_law()) {
        (Some((c, _)), _) if c == 0.0 => SumTail {
            truncated_sum,
            exponent: None,
            tail_bound: Some(0.0),
        },
        (Some((c, q)), Some((a, b))) => {
            let s = b * power - q * alpha;
            let coefficient = c.abs().powf(alpha) / a.powf(power);
            // sum_{k > N} k^{-s} <= int_N^inf k^{-s} dk
            let tail_bound = (s > 1.0).then(|| coefficient * n.powf(1.0 - s) / (s - 1.0));
            SumTail {
                truncated_sum,
                exponent: Some(s),
                tail_bound,
            }
        }
        _ => SumTail {
            truncated_sum,
            exponent: None,
            tail_bound: None,
        },
    }
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> SpectralField {
    SpectralField::from_fn(n, |_| radius * (2.0 * rng.random::<f64>() - 1.0)).expect("finite")
}

const AUDIT_TIMES: [f64; 9] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// `|G(T, x, y) - G~(x, y)| <= phi_2(T)(1 + |x| + |y|)` on sampled points.
fn audit_pointwise(
    name: &str,
    kind: &DriftKind,
    target: &DriftKind,
    profile: &DecayProfile,
    grid: &CollocationGrid,
    samples: &[(SpectralField, SpectralField)],
) -> Vec<String> {
    let mut failures = Vec::new();
    for t in AUDIT_TIMES {
        for (x, y) in samples {
            let d = eval_kind(kind, t, x, y, grid)
                .unwrap()
                .distance(&eval_kind(target, 0.0, x, y, grid).unwrap());
            let bound = profile.value(t) * (1.0 + x.norm() + y.norm());
            if d > bound * (1.0 + 1e-9) + 1e-12 {
                failures.push(format!(
                    "{name} differs from its target by {d:.3e} at T = {t}, above the profile bound {bound:.3e}"
                ));
                return failures;
            }
        }
    }
    failures
}

/// `sup_t (1/T)|int_t^{t+T} F(s) - F~ ds| <= phi_1(T)(1 + |x| + |y|)`, with the
/// window integral by composite Simpson on 200 panels and `t` on a coarse grid.
fn audit_windowed(
    name: &str,
    kind: &DriftKind,
    target: &DriftKind,
    profile: &DecayProfile,
    grid: &CollocationGrid,
    samples: &[(SpectralField, SpectralField)],
) -> Vec<String> {
    const PANELS: usize = 200;
    let mut failures = Vec::new();
    for window in AUDIT_TIMES.iter().skip(1) {
        for start in [0.0, 0.5, 1.0, 3.0, 10.0] {
            for (x, y) in samples {
                let limit = eval_kind(target, 0.0, x, y, grid).unwrap();
                let h = window / PANELS as f64;
                let mut acc = vec![0.0; grid.modes()];
                for i in 0..=PANELS {
                    let w = if i == 0 || i == PANELS {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let v = eval_kind(kind, start + i as f64 * h, x, y, grid).unwrap();
                    for ((a, v), l) in acc.iter_mut().zip(v.coeffs()).zip(limit.coeffs()) {
                        *a += w * (v - l);
                    }
                }
                let avg = acc.iter().map(|a| (a * h / 3.0 / window).powi(2)).sum::<f64>().sqrt();
                let bound = profile.value(*window) * (1.0 + x.norm() + y.norm());
                if avg > bound * (1.0 + 1e-6) + 1e-9 {
                    failures.push(format!(
                        "{name} window average deviates by {avg:.3e} for T = {window}, above the profile bound {bound:.3e}"
                    ));
                    return failures;
                }
            }
        }
    }
    failures
}

fn audit_asymptotic(
    name: &str,
    family: &DriftFamily,
    windowed: bool,
    grid: &CollocationGrid,
    samples: &[(SpectralField, SpectralField)],
) -> Vec<String> {
    let Some(asym) = &family.asymptotic else {
        return Vec::new();
    };
    if asym.target.is_time_dependent() {
        return vec![format!("{name} target must not depend on time")];
    }
    if let DecayProfile::Exponential { coefficient, rate } = asym.profile {
        if coefficient < 0.0 || rate <= 0.0 {
            return vec![format!("{name} profile must be nonnegative and decay to zero")];
        }
    }
    if let DecayProfile::Reciprocal { coefficient } = asym.profile {
        if coefficient < 0.0 {
            return vec![format!("{name} profile must be nonnegative")];
        }
    }
    if windowed {
        audit_windowed(name, &family.kind, &asym.target, &asym.profile, grid, samples)
    } else {
        audit_pointwise(name, &family.kind, &asym.target, &asym.profile, grid, samples)
    }
}

fn check_declarations(name: &str, family: &DriftFamily, out: &mut Vec<String>) {
    let k = &family.kind;
    for (label, declared, actual) in [
        ("x-Lipschitz", family.lipschitz_x, k.lipschitz_x()),
        ("y-Lipschitz", family.lipschitz_y, k.lipschitz_y()),
    ] {
        if !(declared >= actual * (1.0 - 1e-12)) {
            out.push(format!(
                "{name} declares {label} constant {declared} below its actual value {actual}"
            ));
        }
    }
}

/// Checks `spec` and materializes the model, or lists every violation found.
pub fn validate(spec: &ModelSpec) -> Result<ValidatedModel, Vec<Violation>> {
    let (_, violations, model) = run(spec);
    model.ok_or(violations)
}

/// Every named verdict for `spec`, whether or not it is valid.
pub fn validation_report(spec: &ModelSpec) -> (ValidationReport, Vec<Violation>) {
    let (report, violations, _) = run(spec);
    (report, violations)
}

fn run(spec: &ModelSpec) -> (ValidationReport, Vec<Violation>, Option<ValidatedModel>) {
    let mut c = Collector {
        violations: Vec::new(),
        checks: Vec::new(),
    };
    let n = spec.space.modes;
    let points = spec.space.collocation_points.unwrap_or(4 * n);

    let mut dims = Vec::new();
    if n == 0 {
        dims.push("truncation dimension must be positive".to_string());
    }
    c.record("dimension", ViolationKind::Dimension, dims, format!("N = {n}"));
    if n == 0 {
        return (
            ValidationReport {
                checks: c.checks,
                slow_noise_sum: None,
                fast_noise_sum: None,
            },
            c.violations,
            None,
        );
    }

    let grid = if points < 2 * n + 1 {
        c.record(
            "collocation",
            ViolationKind::Collocation,
            vec![format!("{points} points for {n} modes; need at least {}", 2 * n + 1)],
            String::new(),
        );
        CollocationGrid::new(n, points.max(n)).ok()
    } else {
        c.record(
            "collocation",
            ViolationKind::Collocation,
            Vec::new(),
            format!("M = {points}"),
        );
        CollocationGrid::new(n, points).ok()
    };

    let mut op_failures = Vec::new();
    let a = DiagonalOperator::from_spec(OperatorLabel::A, &spec.operators.a, n)
        .map_err(|e| op_failures.push(format!("A: {e}")))
        .ok();
    let b = DiagonalOperator::from_spec(OperatorLabel::B, &spec.operators.b, n)
        .map_err(|e| op_failures.push(format!("B: {e}")))
        .ok();
    let op_ok = match (&a, &b) {
        (Some(a), Some(b)) => format!("lambda_1 = {}, beta_1 = {}", a.first(), b.first()),
        _ => String::new(),
    };
    c.record("operators", ViolationKind::OperatorSpectrum, op_failures, op_ok);

    let alpha = StableIndex::new(spec.noise.alpha);
    c.record(
        "stable index",
        ViolationKind::StableIndexRange,
        alpha
            .as_ref()
            .err()
            .map(|_| vec![format!("alpha = {} outside (1, 2)", spec.noise.alpha)])
            .unwrap_or_default(),
        format!("alpha = {}", spec.noise.alpha),
    );
    let theta = spec.noise.theta;
    c.record(
        "theta",
        ViolationKind::ThetaRange,
        if theta > 0.0 && theta < 2.0 {
            Vec::new()
        } else {
            vec![format!("theta = {theta} outside (0, 2)")]
        },
        format!("theta = {theta}"),
    );

    let mut weight_failures = Vec::new();
    let rho = NoiseWeights::from_spec(&spec.noise.rho, n)
        .map_err(|e| weight_failures.push(format!("rho: {e}")))
        .ok();
    let gamma = NoiseWeights::from_spec(&spec.noise.gamma, n)
        .map_err(|e| weight_failures.push(format!("gamma: {e}")))
        .ok();
    c.record(
        "noise weights",
        ViolationKind::NoiseWeight,
        weight_failures,
        "nonnegative".into(),
    );

    let (mut slow_noise_sum, mut fast_noise_sum) = (None, None);
    if let (Some(a), Some(b), Some(rho), Some(gamma), Ok(alpha)) = (&a, &b, &rho, &gamma, &alpha) {
        let al = alpha.value();
        let slow = sum_tail(
            &spec.noise.rho,
            &spec.operators.a,
            rho.values(),
            a.eigenvalues(),
            al,
            1.0 - al * theta / 2.0,
        );
        let fast = sum_tail(
            &spec.noise.gamma,
            &spec.operators.b,
            gamma.values(),
            b.eigenvalues(),
            al,
            1.0,
        );
        let mut failures = Vec::new();
        for (label, tail) in [
            ("rho^alpha / lambda^(1 - alpha theta / 2)", &slow),
            ("gamma^alpha / beta", &fast),
        ] {
            if tail.diverges() {
                failures.push(format!(
                    "sum of {label} diverges: summand decays like k^-{:.4} (exponent must exceed 1)",
                    tail.exponent.unwrap()
                ));
            }
        }
        let describe = |t: &SumTail| match (t.exponent, t.tail_bound) {
            (_, Some(bound)) => format!("{:.4} + tail <= {bound:.3e}", t.truncated_sum),
            _ => format!("{:.4} (tail unknown for explicit lists)", t.truncated_sum),
        };
        let ok = format!("slow sum {}, fast sum {}", describe(&slow), describe(&fast));
        c.record("summability", ViolationKind::TailDivergent, failures, ok);
        slow_noise_sum = Some(slow);
        fast_noise_sum = Some(fast);
    }

    let (f, g) = (&spec.drifts.f, &spec.drifts.g);
    let mut decl = Vec::new();
    check_declarations("F", f, &mut decl);
    check_declarations("G", g, &mut decl);
    c.record(
        "Lipschitz",
        ViolationKind::LipschitzDeclaration,
        decl,
        "declared constants cover the families".into(),
    );
    let mut growth = Vec::new();
    for (name, fam) in [("F", f), ("G", g)] {
        let actual = fam.kind.growth_constant();
        if !(fam.growth >= actual * (1.0 - 1e-12)) {
            growth.push(format!(
                "{name} declares growth {} below its actual value {actual:.6}",
                fam.growth
            ));
        }
    }
    c.record(
        "growth",
        ViolationKind::GrowthDeclaration,
        growth,
        "declared constants cover the families".into(),
    );

    if let Some(b) = &b {
        let lg = g.lipschitz_y;
        let beta1 = b.first();
        c.record(
            "spectral gap",
            ViolationKind::SpectralGap,
            if lg < beta1 {
                Vec::new()
            } else {
                vec![format!("L_G = {lg} is not below beta_1 = {beta1}")]
            },
            format!("L_G = {lg} < beta_1 = {beta1}"),
        );
    }

    let mut periods = Vec::new();
    for (name, fam) in [("F", f), ("G", g)] {
        if let Some(p) = fam.kind.period() {
            if *p.numer() <= 0 {
                periods.push(format!("{name} period {p} must be positive"));
            }
        }
    }
    c.record(
        "periods",
        ViolationKind::Period,
        periods,
        "rational and positive where present".into(),
    );

    let mut init = Vec::new();
    let mut fields = None;
    if let Some(grid) = &grid {
        match (
            spec.initial_data.x.materialize(grid),
            spec.initial_data.y.materialize(grid),
        ) {
            (Ok(x), Ok(y)) => fields = Some((x, y)),
            (x, y) => {
                if let Err(e) = x {
                    init.push(format!("x: {e}"));
                }
                if let Err(e) = y {
                    init.push(format!("y: {e}"));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let samples: Vec<_> = (0..6)
            .map(|i| {
                let r = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0][i];
                (random_field(&mut rng, n, r), random_field(&mut rng, n, r))
            })
            .collect();
        let mut asym = audit_asymptotic("F", f, true, grid, &samples);
        asym.extend(audit_asymptotic("G", g, false, grid, &samples));
        c.record(
            "asymptotics",
            ViolationKind::Asymptotic,
            asym,
            "declared profiles hold on sampled points".into(),
        );
    }
    c.record(
        "initial data",
        ViolationKind::InitialData,
        init,
        "fields match N".into(),
    );

    let report = ValidationReport {
        checks: c.checks,
        slow_noise_sum,
        fast_noise_sum,
    };
    if !c.violations.is_empty() {
        return (report, c.violations, None);
    }
    let (x0, y0) = fields.expect("checked");
    let model = ValidatedModel {
        inner: Arc::new(Inner {
            spec: spec.clone(),
            a: a.expect("checked"),
            b: b.expect("checked"),
            alpha: alpha.expect("checked"),
            theta,
            rho: rho.expect("checked"),
            gamma: gamma.expect("checked"),
            grid: grid.expect("checked"),
            x0,
            y0,
            report: report.clone(),
        }),
    };
    (report, Vec::new(), Some(model))
}
