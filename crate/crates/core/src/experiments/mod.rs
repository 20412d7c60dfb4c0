//! Verification harness: coupled strong-error estimates, rate fits, lemma
//! sweeps and the composite-bound check for asymptotic families.
//!
//! The measured quantity is the discretized proxy
//! `max_n E|X^eps_{t_n} - X̄_{t_n}|^p`; scheme error and averaging error are
//! reported jointly.

pub mod lemmas;
pub mod profile;

pub use lemmas::{
    contraction_check, lemma_sweeps, moment_sweep, ContractionCheck, LemmaReport, LemmaTargets, MomentSweep, SlopeSweep,
};
pub use profile::{theorem3_profile_check, ProfileReport, ProfileRow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{AnalyticAveragedDrift, AveragingKind, EnsembleSettings, ErgodicSettings, MonteCarloDrift};
use crate::dynamics::{simulate_averaged, simulate_slowfast, DriftClock, DriftField, SlowFastRun, TimeGrid};
use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::stats;

/// Which averaged equation the slow-fast run is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    EvolutionAveraged,
    PeriodicAveraged,
    AsymptoticAveraged,
}

impl ReferenceKind {
    pub fn averaging(self) -> AveragingKind {
        match self {
            ReferenceKind::EvolutionAveraged => AveragingKind::Evolution,
            ReferenceKind::PeriodicAveraged => AveragingKind::Periodic,
            ReferenceKind::AsymptoticAveraged => AveragingKind::Asymptotic,
        }
    }
}

/// How the reference drift is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Closed form when the families allow it, Monte Carlo otherwise.
    #[default]
    Auto,
    Analytic,
    MonteCarlo,
}

/// Knobs of every experiment. All have defaults; configs override a subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub seed: u64,
    pub horizon: f64,
    pub macro_steps: usize,
    pub fast_substeps: usize,
    pub eps_grid: Vec<f64>,
    pub p: f64,
    /// Coupled pairs per `eps`.
    pub pairs: usize,
    /// Median-of-means blocks.
    pub blocks: usize,
    pub trim_fraction: f64,
    pub slope_slack: f64,
    pub lemma_slope_slack: f64,
    pub contraction_slack: f64,
    pub reference_source: ReferenceSource,
    pub ensemble_size: usize,
    pub burn_in: Option<f64>,
    pub frozen_dt: f64,
    pub quadrature_nodes: usize,
    pub ergodic_horizon: f64,
    pub ergodic_burn_in: f64,
    pub ergodic_batches: usize,
    pub drift_cache: bool,
    pub cache_resolution: f64,
    pub deltas: Vec<f64>,
    pub lemma_eps: f64,
    pub lemma_macro_steps: usize,
    pub moment_eps: Vec<f64>,
    pub contraction_paths: usize,
    pub contraction_horizon: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: 1.0,
            macro_steps: 500,
            fast_substeps: 1,
            eps_grid: vec![0.1, 0.05, 0.02, 0.01],
            p: 1.2,
            pairs: 64,
            blocks: 8,
            trim_fraction: 0.1,
            slope_slack: 0.1,
            lemma_slope_slack: 0.15,
            contraction_slack: 0.05,
            reference_source: ReferenceSource::Auto,
            ensemble_size: 1000,
            burn_in: None,
            frozen_dt: 0.01,
            quadrature_nodes: 32,
            ergodic_horizon: 200.0,
            ergodic_burn_in: 20.0,
            ergodic_batches: 20,
            drift_cache: false,
            cache_resolution: 1e-3,
            deltas: vec![0.1, 0.05, 0.025, 0.0125],
            lemma_eps: 0.01,
            lemma_macro_steps: 800,
            moment_eps: vec![1.0, 0.1, 0.01],
            contraction_paths: 200,
            contraction_horizon: 5.0,
        }
    }
}

impl ExperimentSettings {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.macro_steps)
    }

    pub fn ensemble(&self) -> EnsembleSettings {
        EnsembleSettings {
            ensemble_size: self.ensemble_size,
            burn_in: self.burn_in,
            frozen_dt: self.frozen_dt,
            seed: self.seed,
            blocks: self.blocks,
        }
    }

    pub fn ergodic(&self) -> ErgodicSettings {
        ErgodicSettings {
            horizon: self.ergodic_horizon,
            burn_in: self.ergodic_burn_in,
            dt: self.frozen_dt,
            seed: self.seed,
            batches: self.ergodic_batches,
        }
    }

    /// Rejects `p` outside `(1, alpha)` and inconsistent sample sizes.
    pub fn check(&self, model: &ValidatedModel) -> Result<()> {
        let alpha = model.alpha().value();
        if !(self.p > 1.0 && self.p < alpha) {
            return Err(Error::domain(format!(
                "moment order p = {} must lie in (1, alpha) = (1, {alpha})",
                self.p
            )));
        }
        if self.blocks == 0 || self.pairs < self.blocks {
            return Err(Error::domain(format!(
                "need pairs >= blocks >= 1, got pairs = {}, blocks = {}",
                self.pairs, self.blocks
            )));
        }
        if self.fast_substeps == 0 {
            return Err(Error::config("fast_substeps must be at least 1"));
        }
        if self.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("eps grid entries must be positive"));
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::config("trim_fraction must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// `theta (p - 1) / (theta (p - 1) + 2)`.
pub fn theoretical_exponent(theta: f64, p: f64) -> f64 {
    let a = theta * (p - 1.0);
    a / (a + 2.0)
}

/// The averaged drift a comparison run uses, with the clock it is read on.
pub struct ReferenceDrift {
    pub field: Box<dyn DriftField>,
    pub clock_is_fast: bool,
    pub analytic: bool,
}

impl ReferenceDrift {
    pub fn build(model: &ValidatedModel, kind: ReferenceKind, settings: &ExperimentSettings) -> Result<Self> {
        let averaging = kind.averaging();
        // configuration errors (missing periods or targets) come first
        match kind {
            ReferenceKind::PeriodicAveraged => {
                model.common_period()?;
            }
            ReferenceKind::AsymptoticAveraged => {
                model.asymptotic_targets()?;
            }
            ReferenceKind::EvolutionAveraged => {}
        }
        let analytic = match settings.reference_source {
            ReferenceSource::MonteCarlo => None,
            ReferenceSource::Analytic => Some(AnalyticAveragedDrift::new(model, averaging)?),
            ReferenceSource::Auto => match AnalyticAveragedDrift::new(model, averaging) {
                Ok(d) => Some(d),
                Err(Error::Unsupported(_)) => None,
                Err(e) => return Err(e),
            },
        };
        let clock_is_fast = kind == ReferenceKind::EvolutionAveraged;
        Ok(match analytic {
            Some(d) => Self {
                field: Box::new(d),
                clock_is_fast,
                analytic: true,
            },
            None => {
                let mc = MonteCarloDrift::new(
                    model,
                    averaging,
                    settings.ensemble(),
                    settings.quadrature_nodes,
                    settings.ergodic(),
                )?;
                let mc = if settings.drift_cache {
                    mc.with_cache(settings.cache_resolution)
                } else {
                    mc
                };
                Self {
                    field: Box::new(mc),
                    clock_is_fast,
                    analytic: false,
                }
            }
        })
    }

    pub fn clock(&self, eps: f64) -> DriftClock {
        if self.clock_is_fast {
            DriftClock::Fast(eps)
        } else {
            DriftClock::Slow
        }
    }
}

/// Robust estimate of `sup_t E|X^eps_t - X̄_t|^p` over the macro grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub eps: f64,
    pub p: f64,
    /// Grid maximum of the per-time median-of-means.
    pub value: f64,
    /// Block spread at the maximizing time.
    pub stderr: f64,
    /// Trimmed mean at the maximizing time.
    pub trimmed: f64,
    pub argmax_time: f64,
    pub pairs: usize,
    pub blocks: usize,
    /// Largest `|X^eps_t - X̄_t|` over all pairs and grid times.
    pub max_pathwise_gap: f64,
    /// Every pair consumed identical slow-noise increments in both runs.
    pub coupled: bool,
    /// Median-of-means and trimmed mean within a factor 2 of each other.
    pub robust_agree: bool,
    /// Per-time median-of-means, one entry per grid time.
    pub curve: Vec<f64>,
}

/// Runs `pairs` coupled (slow-fast, averaged) pairs at one `eps`.
///
/// Pair `i` uses trajectory id `i` under the settings' seed for every `eps`,
/// so sweeps share random numbers across the grid.
pub fn strong_error(
    model: &ValidatedModel,
    kind: ReferenceKind,
    eps: f64,
    settings: &ExperimentSettings,
) -> Result<ErrorEstimate> {
    let reference = ReferenceDrift::build(model, kind, settings)?;
    strong_error_with(model, &reference, eps, settings)
}

pub fn strong_error_with(
    model: &ValidatedModel,
    reference: &ReferenceDrift,
    eps: f64,
    settings: &ExperimentSettings,
) -> Result<ErrorEstimate> {
    settings.check(model)?;
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    let grid = settings.grid()?;
    let clock = reference.clock(eps);
    let rows = (0..settings.pairs as u64)
        .into_par_iter()
        .map(|i| {
            let run = SlowFastRun {
                grid,
                eps,
                fast_substeps: settings.fast_substeps,
                seed: settings.seed,
                trajectory: i,
            };
            let slow_fast = simulate_slowfast(model, &run)?;
            let averaged = simulate_averaged(model, reference.field.as_ref(), clock, grid, slow_fast.slow_key)?;
            let gaps: Vec<f64> = (0..slow_fast.len())
                .map(|n| {
                    slow_fast
                        .x(n)
                        .iter()
                        .zip(averaged.x(n))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            Ok((gaps, slow_fast.shares_slow_noise(&averaged)))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = settings.p;
    let len = grid.macro_steps + 1;
    let mut curve = Vec::with_capacity(len);
    let mut column = vec![0.0; rows.len()];
    let mut best = (0usize, f64::NEG_INFINITY);
    for n in 0..len {
        for (c, (gaps, _)) in column.iter_mut().zip(&rows) {
            *c = gaps[n].powf(p);
        }
        let v = stats::median_of_means(&column, settings.blocks)?;
        if v > best.1 {
            best = (n, v);
        }
        curve.push(v);
    }
    let n = best.0;
    for (c, (gaps, _)) in column.iter_mut().zip(&rows) {
        *c = gaps[n].powf(p);
    }
    let stderr = stats::block_spread(&column, settings.blocks)?;
    let trimmed = stats::trimmed_mean(&column, settings.trim_fraction)?;
    let value = best.1;
    let robust_agree = if value == 0.0 && trimmed == 0.0 {
        true
    } else {
        let r = value / trimmed;
        (0.5..=2.0).contains(&r)
    };
    Ok(ErrorEstimate {
        eps,
        p,
        value,
        stderr,
        trimmed,
        argmax_time: grid.time(n),
        pairs: settings.pairs,
        blocks: settings.blocks,
        max_pathwise_gap: rows.iter().flat_map(|(g, _)| g.iter().copied()).fold(0.0, f64::max),
        coupled: rows.iter().all(|(_, c)| *c),
        robust_agree,
        curve,
    })
}

/// Least-squares slope of `log error` against `log eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub theory: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Fits the log-log slope; passes when it is at least `theory - slack`.
pub fn rate_fit(eps: &[f64], errors: &[f64], theory: f64, slack: f64) -> Result<RateFit> {
    if eps.len() < 4 || eps.len() != errors.len() {
        return Err(Error::domain(format!(
            "rate fit needs four or more (eps, error) points, got {} and {}",
            eps.len(),
            errors.len()
        )));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("eps grid must be strictly decreasing"));
    }
    if eps.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::domain("rate fit needs positive finite eps and errors"));
    }
    let lx: Vec<f64> = eps.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = stats::least_squares(&lx, &ly)?;
    Ok(RateFit {
        slope,
        intercept,
        theory,
        slack,
        passed: slope >= theory - slack,
    })
}

/// Errors over an `eps` grid, with the fitted rate and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: ReferenceKind,
    pub eps: Vec<f64>,
    pub errors: Vec<ErrorEstimate>,
    pub fit: RateFit,
    /// Each error strictly below its predecessor.
    pub strictly_decreasing: bool,
    /// Each error at most its predecessor plus two spread proxies.
    pub nonincreasing_within_noise: bool,
    pub analytic_reference: bool,
}

impl RateReport {
    /// Slope rule and strict decrease together.
    pub fn passed(&self) -> bool {
        self.fit.passed && self.strictly_decreasing
    }

    pub fn values(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.value).collect()
    }
}

/// Strong errors over `settings.eps_grid`, then the rate fit.
pub fn convergence_sweep(
    model: &ValidatedModel,
    kind: ReferenceKind,
    settings: &ExperimentSettings,
) -> Result<RateReport> {
    settings.check(model)?;
    if settings.eps_grid.len() < 4 {
        return Err(Error::domain("a rate sweep needs four or more eps values"));
    }
    if settings.eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("eps grid must be strictly decreasing"));
    }
    let reference = ReferenceDrift::build(model, kind, settings)?;
    let errors = settings
        .eps_grid
        .iter()
        .map(|&eps| strong_error_with(model, &reference, eps, settings))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = errors.iter().map(|e| e.value).collect();
    let fit = rate_fit(
        &settings.eps_grid,
        &values,
        theoretical_exponent(model.theta(), settings.p),
        settings.slope_slack,
    )?;
    let strictly_decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let nonincreasing_within_noise = errors
        .windows(2)
        .all(|w| w[1].value <= w[0].value + 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt());
    Ok(RateReport {
        kind,
        eps: settings.eps_grid.clone(),
        errors,
        fit,
        strictly_decreasing,
        nonincreasing_within_noise,
        analytic_reference: reference.analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftFamily, DriftKind, ModelSpec};
    use crate::spectral::SequenceSpec;
    use proptest::prelude::*;

    fn small_settings() -> ExperimentSettings {
        ExperimentSettings {
            macro_steps: 50,
            pairs: 16,
            blocks: 4,
            ..ExperimentSettings::default()
        }
    }

    #[test]
    fn exponent_formula() {
        assert!((theoretical_exponent(0.5, 1.2) - 0.1 / 2.1).abs() < 1e-15);
        assert!((theoretical_exponent(0.5, 1.2) - 0.0476).abs() < 1e-4);
    }

    #[test]
    fn exact_power_law_slope() {
        let eps = [0.1f64, 0.05, 0.02, 0.01];
        let errors: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        let fit = rate_fit(&eps, &errors, 0.0476, 0.1).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit.passed);
    }

    #[test]
    fn jittered_power_law_slope() {
        let eps = [0.1f64, 0.05, 0.02, 0.01];
        let jitter = [1.01, 0.99, 1.0, 1.01];
        let errors: Vec<f64> = eps.iter().zip(jitter).map(|(e, j)| 2.0 * e.powf(0.3) * j).collect();
        let fit = rate_fit(&eps, &errors, 0.0476, 0.1).unwrap();
        assert!((fit.slope - 0.3).abs() < 0.05);
    }

    #[test]
    fn degenerate_fits_are_rejected() {
        let errors = [1.0, 0.5, 0.2, 0.1];
        assert!(matches!(
            rate_fit(&[0.1, 0.05, 0.02], &errors[..3], 0.0, 0.1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            rate_fit(&[0.1, 0.1, 0.02, 0.01], &errors, 0.0, 0.1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            rate_fit(&[0.1, 0.05, 0.02, 0.01], &[1.0, 0.0, 0.2, 0.1], 0.0, 0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn p_outside_moment_range_is_rejected() {
        let model = ModelSpec::heat_equation(4).build().unwrap();
        for p in [1.9, 1.0, 1.5] {
            let settings = ExperimentSettings { p, ..small_settings() };
            let r = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.1, &settings);
            assert!(matches!(r, Err(Error::Domain(_))), "p = {p}");
        }
    }

    #[test]
    fn y_independent_drift_gives_zero_error() {
        let spec = ModelSpec::heat_equation(6);
        let f = DriftFamily::tight(DriftKind::SaturatingNonlinear {
            a_x: 0.8,
            a_y: 0.0,
            c: 0.2,
        });
        let model = spec.clone().with_drifts(f, spec.drifts.g.clone()).build().unwrap();
        let est = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.05, &small_settings()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.max_pathwise_gap, 0.0);
        assert!(est.coupled);
    }

    #[test]
    fn periodic_reference_needs_periods() {
        let spec = ModelSpec::heat_equation(4);
        let g = DriftFamily::tight(DriftKind::DecayingAffine {
            a_x: 0.5,
            a_y: -0.5,
            c: 0.3,
            amplitude: 0.5,
            rate: 1.0,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let r = strong_error(&model, ReferenceKind::PeriodicAveraged, 0.1, &small_settings());
        assert!(matches!(r, Err(Error::Config(_))));
        let r = strong_error(&model, ReferenceKind::AsymptoticAveraged, 0.1, &small_settings());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let model = ModelSpec::heat_equation(4).build().unwrap();
        let a = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.05, &small_settings()).unwrap();
        let b = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.05, &small_settings()).unwrap();
        assert_eq!(a, b);
        let other = ExperimentSettings {
            seed: 2,
            ..small_settings()
        };
        let c = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.05, &other).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn noise_free_errors_vanish_with_eps_for_constant_g() {
        // without noise and with an autonomous G the averaged mean is the
        // fast equilibrium; the gap is an O(eps) transient
        let spec = ModelSpec::heat_equation(4).with_noise_weights(
            SequenceSpec::PowerLaw { scale: 0.0, power: 0.0 },
            SequenceSpec::PowerLaw { scale: 0.0, power: 0.0 },
        );
        let g = DriftFamily::tight(DriftKind::Affine {
            a_x: 0.5,
            a_y: -0.5,
            c: 0.3,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let settings = ExperimentSettings {
            macro_steps: 1000,
            pairs: 8,
            blocks: 1,
            ..ExperimentSettings::default()
        };
        let a = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.1, &settings).unwrap();
        let b = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.01, &settings).unwrap();
        assert!(b.value < a.value);
        assert!(
            b.max_pathwise_gap < 0.2 * a.max_pathwise_gap,
            "{} vs {}",
            b.max_pathwise_gap,
            a.max_pathwise_gap
        );
    }

    proptest! {
        #[test]
        fn fitted_slope_recovers_power(power in 0.05f64..2.0, scale in 0.01f64..100.0) {
            let eps = [0.2f64, 0.1, 0.03, 0.01, 0.004];
            let errors: Vec<f64> = eps.iter().map(|e| scale * e.powf(power)).collect();
            let fit = rate_fit(&eps, &errors, 0.0, 0.1).unwrap();
            prop_assert!((fit.slope - power).abs() < 1e-9);
        }
    }
}
