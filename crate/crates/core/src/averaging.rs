//! Averaged drifts.
//!
//! * `F̄(t, x) = ∫ F(t, x, y) μ_t^x(dy)`, where `{μ_t^x}` is the evolution
//!   system of measures of the frozen equation. `μ_t^x` is sampled by running
//!   the frozen equation from `s = t - burn_in` with `y = 0` (pullback).
//! * `F̄_P(x)`: the time average of `F̄(·, x)` over the common period.
//! * `F̄_A(x) = ∫ F~(x, y) μ^x(dy)` for the time-homogeneous limits `F~`, `G~`,
//!   estimated by an ergodic average along one long run.
//!
//! When `G` is affine and `F` is affine in `y`, all three have closed forms,
//! because `F̄` only depends on the mean of `μ_t^x`, which solves a linear ODE.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DriftField, FrozenNoise, FrozenStepper};
use crate::error::{check_dim, Error, Result};
use crate::model::drift::{eval_into, DriftScratch};
use crate::model::{DecayProfile, DriftKind, TimeModulation, ValidatedModel};
use crate::noise::derive_seed;
use crate::spectral::SpectralField;
use crate::stats;

/// Which averaged equation a drift belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingKind {
    Evolution,
    Periodic,
    Asymptotic,
}

/// Monte-Carlo settings for sampling `μ_t^x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub ensemble_size: usize,
    /// Pullback horizon; `None` selects [`default_burn_in`].
    pub burn_in: Option<f64>,
    /// Frozen-equation step.
    pub frozen_dt: f64,
    pub seed: u64,
    /// Blocks for the median-of-means diagnostic.
    pub blocks: usize,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            ensemble_size: 1000,
            burn_in: None,
            frozen_dt: 0.01,
            seed: 1,
            blocks: 8,
        }
    }
}

/// `2 ln(100 (1 + |x|)) / (beta_1 - L_G)`: the pullback horizon at which the
/// exponential mixing bound `C (1 + |x|) e^{-(beta_1 - L_G) r / 2}` has fallen
/// to about 1% of its scale.
pub fn default_burn_in(model: &ValidatedModel, x: &SpectralField) -> f64 {
    2.0 * (100.0 * (1.0 + x.norm())).ln() / model.spectral_gap()
}

/// Endpoints of independent frozen runs approximating `μ_t^x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureEnsemble {
    pub t: f64,
    pub x: SpectralField,
    pub burn_in: f64,
    pub samples: Vec<Vec<f64>>,
}

fn check_settings(settings: &EnsembleSettings, burn_in: f64) -> Result<()> {
    if settings.ensemble_size == 0 {
        return Err(Error::domain("ensemble size must be at least 1"));
    }
    if !(burn_in > 0.0) {
        return Err(Error::domain(format!("burn-in must be positive, got {burn_in}")));
    }
    if !(settings.frozen_dt > 0.0) {
        return Err(Error::domain("frozen step must be positive"));
    }
    Ok(())
}

/// Samples `μ_t^x` from the pullback starts `Y_{t-burn_in} = y0`.
pub fn sample_measure(
    model: &ValidatedModel,
    t: f64,
    x: &SpectralField,
    y0: &SpectralField,
    settings: &EnsembleSettings,
) -> Result<MeasureEnsemble> {
    check_dim(model.dim(), x.dim())?;
    check_dim(model.dim(), y0.dim())?;
    let burn_in = settings.burn_in.unwrap_or_else(|| default_burn_in(model, x));
    check_settings(settings, burn_in)?;
    let stepper = FrozenStepper::new(model, settings.frozen_dt)?;
    let samples = (0..settings.ensemble_size as u64)
        .into_par_iter()
        .map(|i| stepper.endpoint(t - burn_in, t, x, y0, &FrozenNoise::new(settings.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasureEnsemble {
        t,
        x: x.clone(),
        burn_in,
        samples,
    })
}

/// A Monte-Carlo drift value with its error bars.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub mean: SpectralField,
    /// Per-mode standard error of the mean.
    pub stderr: Vec<f64>,
    /// Per-mode median-of-means, reported as a heavy-tail diagnostic.
    pub median_of_means: Vec<f64>,
    pub samples: usize,
}

impl DriftEstimate {
    pub fn exact(value: SpectralField) -> Self {
        let n = value.dim();
        Self {
            median_of_means: value.coeffs().to_vec(),
            mean: value,
            stderr: vec![0.0; n],
            samples: 0,
        }
    }

    /// Euclidean norm of the per-mode standard errors.
    pub fn stderr_norm(&self) -> f64 {
        self.stderr.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    fn from_values(values: &[Vec<f64>], blocks: usize) -> Result<Self> {
        let n = values[0].len();
        let e = values.len();
        let mut mean = vec![0.0; n];
        let mut stderr = vec![0.0; n];
        let mut mom = vec![0.0; n];
        let mut column = vec![0.0; e];
        for k in 0..n {
            for (c, v) in column.iter_mut().zip(values) {
                *c = v[k];
            }
            let (m, sd) = stats::mean_sd(&column);
            mean[k] = m;
            stderr[k] = sd / (e as f64).sqrt();
            mom[k] = if e >= blocks && blocks > 0 {
                stats::median_of_means(&column, blocks)?
            } else {
                m
            };
        }
        Ok(Self {
            mean: SpectralField::new(mean)?,
            stderr,
            median_of_means: mom,
            samples: e,
        })
    }
}

/// `|a - b| <= k` combined error bars.
pub fn within_error_bars(a: &DriftEstimate, b: &DriftEstimate, k: f64) -> bool {
    let gap = a.mean.distance(&b.mean);
    let bar = (a.stderr_norm().powi(2) + b.stderr_norm().powi(2)).sqrt();
    gap <= k * bar
}

fn eval_over(model: &ValidatedModel, kind: &DriftKind, t: f64, x: &SpectralField, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
    ys.par_iter()
        .map_init(DriftScratch::default, |scratch, y| {
            let mut out = vec![0.0; x.dim()];
            eval_into(kind, t, x.coeffs(), y, model.grid(), scratch, &mut out);
            out
        })
        .collect()
}

/// `F̄(t, x)` by averaging `F(t, x, ·)` over an ensemble sampling `μ_t^x`.
pub fn estimate_evolution_drift(
    model: &ValidatedModel,
    t: f64,
    x: &SpectralField,
    settings: &EnsembleSettings,
) -> Result<DriftEstimate> {
    estimate_evolution_drift_from(model, t, x, &SpectralField::zeros(model.dim()), settings)
}

/// Same, with the pullback runs started at `y0` instead of the zero field.
pub fn estimate_evolution_drift_from(
    model: &ValidatedModel,
    t: f64,
    x: &SpectralField,
    y0: &SpectralField,
    settings: &EnsembleSettings,
) -> Result<DriftEstimate> {
    check_dim(model.dim(), x.dim())?;
    let f = &model.drift_f().kind;
    if !f.depends_on_y() {
        let burn_in = settings.burn_in.unwrap_or_else(|| default_burn_in(model, x));
        check_settings(settings, burn_in)?;
        let zero = SpectralField::zeros(model.dim());
        return Ok(DriftEstimate::exact(crate::model::eval_kind(
            f,
            t,
            x,
            &zero,
            model.grid(),
        )?));
    }
    let ensemble = sample_measure(model, t, x, y0, settings)?;
    let values = eval_over(model, f, t, x, &ensemble.samples);
    DriftEstimate::from_values(&values, settings.blocks)
}

/// Composite trapezoid over one common period, `n` nodes, window starting at `start`.
///
/// The integrand is periodic, so the rule reduces to an equal-weight sum over
/// `start + i tau / n`. Each node uses its own derived seed.
pub fn periodic_average_drift(
    model: &ValidatedModel,
    x: &SpectralField,
    nodes: usize,
    start: f64,
    settings: &EnsembleSettings,
) -> Result<DriftEstimate> {
    let tau = model.common_period()?.tau_f64();
    if nodes == 0 {
        return Err(Error::domain("quadrature needs at least one node"));
    }
    let mut mean = vec![0.0; model.dim()];
    let mut var = vec![0.0; model.dim()];
    let mut mom = vec![0.0; model.dim()];
    let mut samples = 0;
    let w = 1.0 / nodes as f64;
    for i in 0..nodes {
        let t = start + i as f64 * tau / nodes as f64;
        let node = EnsembleSettings {
            seed: derive_seed(&[settings.seed, i as u64, 0x7065_7269_6f64]),
            ..settings.clone()
        };
        let est = estimate_evolution_drift(model, t, x, &node)?;
        for k in 0..model.dim() {
            mean[k] += w * est.mean.coeffs()[k];
            var[k] += (w * est.stderr[k]).powi(2);
            mom[k] += w * est.median_of_means[k];
        }
        samples += est.samples;
    }
    Ok(DriftEstimate {
        mean: SpectralField::new(mean)?,
        stderr: var.into_iter().map(f64::sqrt).collect(),
        median_of_means: mom,
        samples,
    })
}

/// Settings for the ergodic time average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSettings {
    /// Total length `H` of the run, including the burn-in.
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub seed: u64,
    /// Batches for the batch-means standard error.
    pub batches: usize,
}

/// `F̄_A(x)` as `(1/(H - burn_in)) ∫ F~(x, Y~_t) dt` along one run of
/// `dY~ = [BY~ + G~(x, Y~)]dt + dZ`.
pub fn asymptotic_average_drift(
    model: &ValidatedModel,
    x: &SpectralField,
    settings: &ErgodicSettings,
) -> Result<DriftEstimate> {
    check_dim(model.dim(), x.dim())?;
    let ((f_limit, _), (g_limit, _)) = model.asymptotic_targets()?;
    let zero = SpectralField::zeros(model.dim());
    if !f_limit.depends_on_y() {
        return Ok(DriftEstimate::exact(crate::model::eval_kind(
            &f_limit,
            0.0,
            x,
            &zero,
            model.grid(),
        )?));
    }
    if !(settings.horizon > settings.burn_in && settings.burn_in >= 0.0) || settings.batches < 2 {
        return Err(Error::domain(format!(
            "ergodic average needs H > burn_in >= 0 and two or more batches, got H = {}, burn_in = {}",
            settings.horizon, settings.burn_in
        )));
    }
    let stepper = FrozenStepper::with_drift(model, &g_limit, settings.dt)?;
    let run = stepper.run(0.0, settings.horizon, x, &zero, &FrozenNoise::new(settings.seed, 0))?;
    let first = (settings.burn_in / run.h).ceil() as usize;
    let mut scratch = DriftScratch::default();
    let mut values = Vec::with_capacity(run.steps() + 1 - first);
    for j in first..=run.steps() {
        let mut out = vec![0.0; model.dim()];
        eval_into(
            &f_limit,
            0.0,
            x.coeffs(),
            run.y(j),
            model.grid(),
            &mut scratch,
            &mut out,
        );
        values.push(out);
    }
    // batch means: contiguous batches are nearly independent once each is
    // much longer than the mixing time
    let n = model.dim();
    let mut mean = vec![0.0; n];
    let mut stderr = vec![0.0; n];
    let mut column = vec![0.0; values.len()];
    for k in 0..n {
        for (c, v) in column.iter_mut().zip(&values) {
            *c = v[k];
        }
        let batches = stats::block_means(&column, settings.batches)?;
        let (_, sd) = stats::mean_sd(&batches);
        mean[k] = column.iter().sum::<f64>() / column.len() as f64;
        stderr[k] = sd / (settings.batches as f64).sqrt();
    }
    Ok(DriftEstimate {
        median_of_means: mean.clone(),
        mean: SpectralField::new(mean)?,
        stderr,
        samples: values.len(),
    })
}

/// Closed forms for affine `G` and `F` affine in `y`.
///
/// The frozen equation's mean solves `m' = -(beta_k - g_y) m + g_x x_k + P_k offset(t)`,
/// with `P` the projected constant function, so
/// `m_k(t) = g_x x_k / kappa_k + P_k ∫_{-∞}^t e^{-kappa_k (t - s)} offset(s) ds`.
#[derive(Debug, Clone)]
pub struct AffineOracle {
    model: ValidatedModel,
    kappa: Vec<f64>,
    g_x: f64,
    g_c: f64,
    g_mod: TimeModulation,
}

impl AffineOracle {
    /// Oracle for the evolution system of `G`.
    pub fn new(model: &ValidatedModel) -> Result<Self> {
        Self::for_fast_drift(model, &model.drift_g().kind)
    }

    fn for_fast_drift(model: &ValidatedModel, g: &DriftKind) -> Result<Self> {
        let form = g
            .affine()
            .ok_or_else(|| Error::Unsupported("analytic averaged drift needs an affine fast drift".into()))?;
        let f = &model.drift_f().kind;
        if f.affine().is_none() && f.depends_on_y() {
            return Err(Error::Unsupported(
                "analytic averaged drift needs a slow drift affine in y".into(),
            ));
        }
        let kappa: Vec<f64> = model.op_b().eigenvalues().iter().map(|b| b - form.a_y).collect();
        if kappa.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::domain("frozen mean equation is not dissipative"));
        }
        Ok(Self {
            model: model.clone(),
            kappa,
            g_x: form.a_x,
            g_c: form.c,
            g_mod: form.modulation,
        })
    }

    /// `∫_{-∞}^t e^{-kappa (t - s)} (c + modulation(s)) ds`.
    fn offset_response(&self, kappa: f64, t: f64) -> f64 {
        let base = self.g_c / kappa;
        base + match self.g_mod {
            TimeModulation::None => 0.0,
            TimeModulation::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                let arg = omega * t + phase;
                amplitude * (kappa * arg.sin() - omega * arg.cos()) / (kappa * kappa + omega * omega)
            }
            TimeModulation::Decay { amplitude, rate } => {
                if t <= 0.0 {
                    amplitude / kappa
                } else if (kappa - rate).abs() < 1e-12 * kappa {
                    amplitude * (-kappa * t).exp() * (1.0 / kappa + t)
                } else {
                    amplitude * ((-kappa * t).exp() / kappa + ((-rate * t).exp() - (-kappa * t).exp()) / (kappa - rate))
                }
            }
        }
    }

    /// Mean of `μ_t^x`.
    pub fn mean(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let p = self.model.grid().constant_projection();
        for k in 0..out.len() {
            out[k] = self.g_x * x[k] / self.kappa[k] + p[k] * self.offset_response(self.kappa[k], t);
        }
    }

    /// `F̄(t, x) = F(t, x, mean of μ_t^x)`.
    pub fn evolution(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut m = vec![0.0; x.len()];
        self.mean(t, x, &mut m);
        eval_into(
            &self.model.drift_f().kind,
            t,
            x,
            &m,
            self.model.grid(),
            &mut DriftScratch::default(),
            out,
        );
    }

    pub fn evolution_field(&self, t: f64, x: &SpectralField) -> Result<SpectralField> {
        check_dim(self.model.dim(), x.dim())?;
        let mut out = vec![0.0; x.dim()];
        self.evolution(t, x.coeffs(), &mut out);
        SpectralField::new(out)
    }
}

/// Closed-form `F̄(t, x)`.
pub fn analytic_affine_drift_oracle(model: &ValidatedModel, t: f64, x: &SpectralField) -> Result<SpectralField> {
    AffineOracle::new(model)?.evolution_field(t, x)
}

/// An averaged drift of the form `diag ⊙ x + offset(t)`, exact for affine families.
#[derive(Debug, Clone)]
pub struct AnalyticAveragedDrift {
    kind: AveragingKind,
    oracle: AffineOracle,
    /// Time-independent offset for the periodic and asymptotic kinds.
    offset: Vec<f64>,
    /// Coefficient of `x` in `F̄` (diagonal).
    diag: Vec<f64>,
    /// Slow drift used for the evolution kind (`F`) or the limit (`F~`).
    f: DriftKind,
}

impl AnalyticAveragedDrift {
    pub fn new(model: &ValidatedModel, kind: AveragingKind) -> Result<Self> {
        let n = model.dim();
        let (oracle, f) = match kind {
            AveragingKind::Evolution | AveragingKind::Periodic => {
                (AffineOracle::new(model)?, model.drift_f().kind.clone())
            }
            AveragingKind::Asymptotic => {
                let ((f_limit, _), (g_limit, _)) = model.asymptotic_targets()?;
                let oracle = AffineOracle::for_fast_drift(model, &g_limit)?;
                if f_limit.affine().is_none() && f_limit.depends_on_y() {
                    return Err(Error::Unsupported(
                        "analytic averaged drift needs a limit slow drift affine in y".into(),
                    ));
                }
                (oracle, f_limit)
            }
        };
        // F(t, x, m(t, x)) is affine in x with a diagonal coefficient when F is affine.
        let (diag, offset) = match (kind, f.affine()) {
            (AveragingKind::Evolution, _) => (Vec::new(), Vec::new()),
            (_, Some(form)) => {
                let diag: Vec<f64> = oracle
                    .kappa
                    .iter()
                    .map(|k| form.a_x + form.a_y * oracle.g_x / k)
                    .collect();
                let zero = vec![0.0; n];
                let offset = match kind {
                    AveragingKind::Periodic => {
                        let tau = model.common_period()?.tau_f64();
                        // trapezoid on a trigonometric integrand is exact up to aliasing
                        let nodes = 512;
                        let mut acc = vec![0.0; n];
                        let mut v = vec![0.0; n];
                        for i in 0..nodes {
                            oracle.evolution(i as f64 * tau / nodes as f64, &zero, &mut v);
                            for (a, b) in acc.iter_mut().zip(&v) {
                                *a += b / nodes as f64;
                            }
                        }
                        acc
                    }
                    _ => {
                        let mut m = vec![0.0; n];
                        oracle.mean(0.0, &zero, &mut m);
                        let mut v = vec![0.0; n];
                        eval_into(&f, 0.0, &zero, &m, model.grid(), &mut DriftScratch::default(), &mut v);
                        v
                    }
                };
                (diag, offset)
            }
            (AveragingKind::Periodic, None) => {
                return Err(Error::Unsupported(
                    "analytic periodic average needs an affine slow drift".into(),
                ))
            }
            (AveragingKind::Asymptotic, None) => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            kind,
            oracle,
            offset,
            diag,
            f,
        })
    }

    pub fn kind(&self) -> AveragingKind {
        self.kind
    }

    pub fn value(&self, t: f64, x: &SpectralField) -> Result<SpectralField> {
        check_dim(self.oracle.model.dim(), x.dim())?;
        let mut out = vec![0.0; x.dim()];
        self.eval(t, x.coeffs(), &mut out);
        SpectralField::new(out)
    }
}

impl DriftField for AnalyticAveragedDrift {
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self.kind {
            AveragingKind::Evolution => self.oracle.evolution(t, x, out),
            _ if !self.diag.is_empty() => {
                for k in 0..out.len() {
                    out[k] = self.diag[k] * x[k] + self.offset[k];
                }
            }
            _ => {
                // non-affine F~ with a mean-independent dependence on y
                let mut m = vec![0.0; x.len()];
                self.oracle.mean(0.0, x, &mut m);
                eval_into(
                    &self.f,
                    0.0,
                    x,
                    &m,
                    self.oracle.model.grid(),
                    &mut DriftScratch::default(),
                    out,
                );
            }
        }
    }
}

/// `F̄` estimated by Monte Carlo at every call, optionally memoized on a
/// `(t, x)` lattice.
///
/// Seeds are derived from the call arguments, so evaluation is a pure
/// function of `(t, x)` and runs are reproducible.
pub struct MonteCarloDrift {
    model: ValidatedModel,
    kind: AveragingKind,
    settings: EnsembleSettings,
    quadrature_nodes: usize,
    ergodic: ErgodicSettings,
    cache: Option<Mutex<HashMap<(i64, Vec<i64>), Vec<f64>>>>,
    resolution: f64,
}

impl MonteCarloDrift {
    pub fn new(
        model: &ValidatedModel,
        kind: AveragingKind,
        settings: EnsembleSettings,
        quadrature_nodes: usize,
        ergodic: ErgodicSettings,
    ) -> Result<Self> {
        match kind {
            AveragingKind::Periodic => {
                model.common_period()?;
            }
            AveragingKind::Asymptotic => {
                model.asymptotic_targets()?;
            }
            AveragingKind::Evolution => {}
        }
        Ok(Self {
            model: model.clone(),
            kind,
            settings,
            quadrature_nodes,
            ergodic,
            cache: None,
            resolution: 1e-3,
        })
    }

    /// Memoizes values on a lattice of spacing `resolution` in `t` and in each coefficient of `x`.
    pub fn with_cache(mut self, resolution: f64) -> Self {
        self.cache = Some(Mutex::new(HashMap::new()));
        self.resolution = resolution;
        self
    }

    fn seed_for(&self, t: f64, x: &[f64]) -> u64 {
        let mut parts = vec![self.settings.seed, t.to_bits()];
        parts.extend(x.iter().map(|v| v.to_bits()));
        derive_seed(&parts)
    }

    pub fn estimate(&self, t: f64, x: &SpectralField) -> Result<DriftEstimate> {
        let seed = self.seed_for(t, x.coeffs());
        match self.kind {
            AveragingKind::Evolution => estimate_evolution_drift(
                &self.model,
                t,
                x,
                &EnsembleSettings {
                    seed,
                    ..self.settings.clone()
                },
            ),
            AveragingKind::Periodic => periodic_average_drift(
                &self.model,
                x,
                self.quadrature_nodes,
                0.0,
                &EnsembleSettings {
                    seed,
                    ..self.settings.clone()
                },
            ),
            AveragingKind::Asymptotic => asymptotic_average_drift(
                &self.model,
                x,
                &ErgodicSettings {
                    seed,
                    ..self.ergodic.clone()
                },
            ),
        }
    }
}

impl DriftField for MonteCarloDrift {
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let t_eff = if self.kind == AveragingKind::Evolution { t } else { 0.0 };
        let compute = |t: f64, x: &[f64]| {
            self.estimate(t, &SpectralField::from_vec_unchecked(x.to_vec()))
                .map(|e| e.mean.into_vec())
                .unwrap_or_else(|_| vec![f64::NAN; x.len()])
        };
        let value = match &self.cache {
            None => compute(t_eff, x),
            Some(cache) => {
                let r = self.resolution;
                let key = (
                    (t_eff / r).round() as i64,
                    x.iter().map(|v| (v / r).round() as i64).collect::<Vec<_>>(),
                );
                if let Some(v) = cache.lock().expect("cache lock").get(&key) {
                    v.clone()
                } else {
                    let snapped: Vec<f64> = key.1.iter().map(|q| *q as f64 * r).collect();
                    let v = compute(key.0 as f64 * r, &snapped);
                    cache.lock().expect("cache lock").insert(key, v.clone());
                    v
                }
            }
        };
        out.copy_from_slice(&value);
    }
}

/// `φ~_2(T) = sup_{t >= 0} (1/T) ∫_t^{t+T} ∫_0^s e^{-beta_1 (s - u)} φ_2(u) du ds`.
///
/// The inner integral is advanced by its exact exponential recursion with
/// trapezoidal forcing, the outer one by cumulative trapezoid, and the sup is
/// taken over window starts on the same grid up to where the profile has
/// decayed.
pub fn phi2_tilde(profile: &DecayProfile, beta1: f64, big_t: f64) -> Result<f64> {
    if !(big_t > 0.0) || !(beta1 > 0.0) {
        return Err(Error::domain(format!(
            "phi2_tilde needs T > 0 and beta_1 > 0, got T = {big_t}"
        )));
    }
    if profile.is_zero() {
        return Ok(0.0);
    }
    let decay_time = match *profile {
        DecayProfile::Exponential { rate, .. } => 1.0 / rate,
        DecayProfile::Reciprocal { .. } => 1.0 / beta1,
        DecayProfile::Zero => 0.0,
    };
    let scale = decay_time.max(1.0 / beta1);
    let ds = scale.min(big_t) / 400.0;
    let reach = 40.0 * scale + big_t;
    let steps = (reach / ds).ceil() as usize;
    let a = (-beta1 * ds).exp();
    // cumulative[j] = ∫_0^{j ds} I(s) ds
    let mut cumulative = Vec::with_capacity(steps + 1);
    cumulative.push(0.0);
    let mut inner = 0.0;
    for j in 0..steps {
        let s = j as f64 * ds;
        let next = a * inner + 0.5 * ds * (a * profile.value(s) + profile.value(s + ds));
        cumulative.push(cumulative[j] + 0.5 * ds * (inner + next));
        inner = next;
    }
    let window = (big_t / ds).round() as usize;
    let window_len = window as f64 * ds;
    let best = (0..=steps - window)
        .map(|j| (cumulative[j + window] - cumulative[j]) / window_len)
        .fold(0.0, f64::max);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftFamily, ModelSpec};
    use std::f64::consts::PI;

    fn heat(n: usize) -> ValidatedModel {
        ModelSpec::heat_equation(n).build().unwrap()
    }

    #[test]
    fn y_independent_f_is_exact() {
        let spec = ModelSpec::heat_equation(6);
        let f = DriftFamily::tight(DriftKind::SaturatingNonlinear {
            a_x: 0.7,
            a_y: 0.0,
            c: 0.1,
        });
        let model = spec.clone().with_drifts(f, spec.drifts.g.clone()).build().unwrap();
        let x = SpectralField::new(vec![0.3, -1.0, 0.0, 0.2, 0.0, 0.1]).unwrap();
        let est = estimate_evolution_drift(&model, 0.4, &x, &EnsembleSettings::default()).unwrap();
        let exact =
            crate::model::eval_kind(&model.drift_f().kind, 0.4, &x, &SpectralField::zeros(6), model.grid()).unwrap();
        assert_eq!(est.mean, exact);
        assert!(est.stderr.iter().all(|s| *s == 0.0));
        let p = periodic_average_drift(&model, &x, 8, 0.0, &EnsembleSettings::default()).unwrap();
        for (a, b) in p.mean.coeffs().iter().zip(exact.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn settings_are_checked() {
        let model = heat(4);
        let x = SpectralField::zeros(4);
        let bad = EnsembleSettings {
            ensemble_size: 0,
            ..EnsembleSettings::default()
        };
        assert!(matches!(
            estimate_evolution_drift(&model, 0.0, &x, &bad),
            Err(Error::Domain(_))
        ));
        let bad = EnsembleSettings {
            burn_in: Some(-1.0),
            ..EnsembleSettings::default()
        };
        assert!(matches!(
            estimate_evolution_drift(&model, 0.0, &x, &bad),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn oracle_trivial_cases() {
        // zero offset, g_x = 0: mean zero, F̄(t, x) = F(t, x, 0)
        let spec = ModelSpec::heat_equation(5);
        let g = DriftFamily::tight(DriftKind::Affine {
            a_x: 0.0,
            a_y: 0.4,
            c: 0.0,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let x = SpectralField::new(vec![1.0, 2.0, 0.0, -1.0, 0.5]).unwrap();
        let got = analytic_affine_drift_oracle(&model, 3.0, &x).unwrap();
        let want =
            crate::model::eval_kind(&model.drift_f().kind, 3.0, &x, &SpectralField::zeros(5), model.grid()).unwrap();
        assert_eq!(got, want);

        // constant offset, g_y = 0: mean (c P_k + g_x x_k) / beta_k
        let g = DriftFamily::tight(DriftKind::Affine {
            a_x: 0.3,
            a_y: 0.0,
            c: 0.8,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let oracle = AffineOracle::new(&model).unwrap();
        let mut m = vec![0.0; 5];
        oracle.mean(1.0, x.coeffs(), &mut m);
        for k in 0..5 {
            let beta = ((k + 1) * (k + 1)) as f64;
            let want = (0.8 * model.grid().constant_projection()[k] + 0.3 * x.coeffs()[k]) / beta;
            assert!((m[k] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_sinusoid_is_complex_particular_solution() {
        // amplitude Im[e^{i w t} / (kappa + i w)]
        let model = heat(3);
        let oracle = AffineOracle::new(&model).unwrap();
        let omega = 2.0 * PI;
        for t in [-1.3, 0.0, 0.25, 2.7] {
            for &kappa in &oracle.kappa {
                let (re, im) = ((omega * t).cos(), (omega * t).sin());
                let den = kappa * kappa + omega * omega;
                // (re + i im)(kappa - i w) / den
                let imag = (im * kappa - re * omega) / den;
                let want = 0.3 / kappa + 0.5 * imag;
                assert!((oracle.offset_response(kappa, t) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn oracle_satisfies_mean_ode() {
        // m' = -kappa m + g_x x + P offset(t), checked by central differences
        for g in [
            ModelSpec::heat_equation(4).drifts.g.kind,
            DriftKind::DecayingAffine {
                a_x: 0.2,
                a_y: 0.3,
                c: 0.1,
                amplitude: 0.4,
                rate: 0.7,
            },
            DriftKind::DecayingAffine {
                a_x: 0.2,
                a_y: 0.3,
                c: 0.1,
                amplitude: 0.4,
                rate: 0.7,
            },
        ] {
            let spec = ModelSpec::heat_equation(4);
            let model = spec
                .clone()
                .with_drifts(spec.drifts.f.clone(), DriftFamily::tight(g.clone()))
                .build()
                .unwrap();
            let oracle = AffineOracle::new(&model).unwrap();
            let form = g.affine().unwrap();
            let x = [0.5, -0.2, 0.1, 1.0];
            let p = model.grid().constant_projection().to_vec();
            for t in [-2.0, -0.5, 0.3, 1.0, 4.0] {
                let h = 1e-5;
                let (mut a, mut b, mut c) = (vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
                oracle.mean(t - h, &x, &mut a);
                oracle.mean(t, &x, &mut b);
                oracle.mean(t + h, &x, &mut c);
                for k in 0..4 {
                    let lhs = (c[k] - a[k]) / (2.0 * h);
                    let rhs = -oracle.kappa[k] * b[k] + form.a_x * x[k] + p[k] * form.offset(t);
                    assert!((lhs - rhs).abs() < 1e-6, "t {t} k {k}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn oracle_flow_identity() {
        // m(t) = e^{-kappa (t - s)} m(s) + ∫_s^t e^{-kappa (t - r)} (g_x x + P offset(r)) dr
        let model = heat(3);
        let oracle = AffineOracle::new(&model).unwrap();
        let form = model.drift_g().kind.affine().unwrap();
        let x = [1.0, 0.5, -0.3];
        let p = model.grid().constant_projection().to_vec();
        for (s, t) in [(-1.0, 0.5), (0.2, 0.9), (2.0, 5.0)] {
            let (mut ms, mut mt) = (vec![0.0; 3], vec![0.0; 3]);
            oracle.mean(s, &x, &mut ms);
            oracle.mean(t, &x, &mut mt);
            for k in 0..3 {
                let kap = oracle.kappa[k];
                let n = 20_000;
                let h = (t - s) / n as f64;
                let mut integral = 0.0;
                for i in 0..n {
                    let r = s + (i as f64 + 0.5) * h;
                    integral += (-kap * (t - r)).exp() * (form.a_x * x[k] + p[k] * form.offset(r)) * h;
                }
                let rhs = (-kap * (t - s)).exp() * ms[k] + integral;
                assert!((mt[k] - rhs).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn analytic_kinds_agree_when_autonomous() {
        let spec = ModelSpec::heat_equation(6);
        let g = DriftFamily::tight(DriftKind::Affine {
            a_x: 0.5,
            a_y: -0.5,
            c: 0.3,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let x = SpectralField::new(vec![0.4, -0.1, 0.2, 0.0, 0.3, -0.6]).unwrap();
        let ev = AnalyticAveragedDrift::new(&model, AveragingKind::Evolution)
            .unwrap()
            .value(1.7, &x)
            .unwrap();
        let pe = AnalyticAveragedDrift::new(&model, AveragingKind::Periodic)
            .unwrap()
            .value(0.0, &x)
            .unwrap();
        let asy = AnalyticAveragedDrift::new(&model, AveragingKind::Asymptotic)
            .unwrap()
            .value(0.0, &x)
            .unwrap();
        assert!(ev.distance(&pe) < 1e-13);
        assert!(ev.distance(&asy) < 1e-13);
    }

    #[test]
    fn periodic_oracle_is_period_average() {
        let model = heat(6);
        let x = SpectralField::new(vec![0.4, -0.1, 0.2, 0.0, 0.3, -0.6]).unwrap();
        let p = AnalyticAveragedDrift::new(&model, AveragingKind::Periodic)
            .unwrap()
            .value(0.0, &x)
            .unwrap();
        let n = 1000;
        let mut acc = SpectralField::zeros(6);
        for i in 0..n {
            let v = analytic_affine_drift_oracle(&model, (i as f64 + 0.5) / n as f64, &x).unwrap();
            acc = acc.add(&v.scale(1.0 / n as f64)).unwrap();
        }
        assert!(acc.distance(&p) < 1e-10);
    }

    #[test]
    fn unsupported_for_nonlinear_fast_drift() {
        let spec = ModelSpec::heat_equation(4);
        let g = DriftFamily::tight(DriftKind::SaturatingNonlinear {
            a_x: 0.5,
            a_y: 0.5,
            c: 0.0,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        assert!(matches!(AffineOracle::new(&model), Err(Error::Unsupported(_))));
    }

    #[test]
    fn monte_carlo_matches_oracle_on_one_probe() {
        let model = heat(4);
        let x = SpectralField::new(vec![0.5, 0.0, -0.5, 0.2]).unwrap();
        let settings = EnsembleSettings {
            ensemble_size: 400,
            burn_in: Some(8.0),
            frozen_dt: 0.01,
            seed: 3,
            blocks: 8,
        };
        let est = estimate_evolution_drift(&model, 0.3, &x, &settings).unwrap();
        let oracle = analytic_affine_drift_oracle(&model, 0.3, &x).unwrap();
        assert!(
            est.mean.distance(&oracle) <= 4.0 * est.stderr_norm(),
            "{:?} vs {:?}",
            est,
            oracle
        );
    }

    #[test]
    fn ergodic_average_matches_asymptotic_oracle() {
        let spec = ModelSpec::heat_equation(4);
        let g = DriftFamily::tight(DriftKind::DecayingAffine {
            a_x: 0.5,
            a_y: -0.5,
            c: 0.3,
            amplitude: 0.5,
            rate: 1.0,
        })
        .with_asymptotic(
            DriftKind::Affine {
                a_x: 0.5,
                a_y: -0.5,
                c: 0.3,
            },
            DecayProfile::Exponential {
                coefficient: 1.0,
                rate: 1.0,
            },
        );
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let x = SpectralField::new(vec![1.0, 0.0, 0.3, 0.0]).unwrap();
        let est = asymptotic_average_drift(
            &model,
            &x,
            &ErgodicSettings {
                horizon: 2000.0,
                burn_in: 20.0,
                dt: 0.01,
                seed: 4,
                batches: 20,
            },
        )
        .unwrap();
        let oracle = AnalyticAveragedDrift::new(&model, AveragingKind::Asymptotic)
            .unwrap()
            .value(0.0, &x)
            .unwrap();
        assert!(
            est.mean.distance(&oracle) <= 4.0 * est.stderr_norm() + 0.01,
            "{est:?} vs {oracle:?}"
        );
        assert!(matches!(
            asymptotic_average_drift(
                &heat(4),
                &x,
                &ErgodicSettings {
                    horizon: 10.0,
                    burn_in: 1.0,
                    dt: 0.01,
                    seed: 1,
                    batches: 4
                }
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn periodic_kind_requires_periods() {
        let spec = ModelSpec::heat_equation(4);
        let g = DriftFamily::tight(DriftKind::DecayingAffine {
            a_x: 0.5,
            a_y: -0.5,
            c: 0.3,
            amplitude: 0.5,
            rate: 1.0,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        let r = periodic_average_drift(&model, &SpectralField::zeros(4), 4, 0.0, &EnsembleSettings::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    fn phi2_closed_form(beta1: f64, big_t: f64) -> f64 {
        // I(s) = (e^{-s} - e^{-beta1 s}) / (beta1 - 1); J(s) = ∫_0^s I
        let j = |s: f64| ((1.0 - (-s).exp()) - (1.0 - (-beta1 * s).exp()) / beta1) / (beta1 - 1.0);
        // the window average rises then falls; golden-section on [0, 50]
        let f = |t: f64| (j(t + big_t) - j(t)) / big_t;
        let (mut a, mut b) = (0.0f64, 50.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f(0.5 * (a + b)).max(f(0.0))
    }

    #[test]
    fn phi2_tilde_closed_form() {
        let profile = DecayProfile::Exponential {
            coefficient: 1.0,
            rate: 1.0,
        };
        assert_eq!(phi2_tilde(&DecayProfile::Zero, 1.0, 3.0).unwrap(), 0.0);
        for beta1 in [0.5, 2.0, 4.0] {
            for t in [0.5, 1.0, 10.0, 100.0] {
                let got = phi2_tilde(&profile, beta1, t).unwrap();
                let want = phi2_closed_form(beta1, t);
                assert!((got - want).abs() < 1e-4 * want, "beta1 {beta1} T {t}: {got} vs {want}");
            }
        }
        let values: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|t| phi2_tilde(&profile, 1.0, *t).unwrap())
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
    }
}
