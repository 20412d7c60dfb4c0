//! Problem description: operators, noise, drift families, initial data.
//!
//! [`ModelSpec`] is the serializable, declarative form read from config
//! files. [`validate`] checks it against the structural assumptions and
//! materializes an immutable [`ValidatedModel`] that the simulators share.

pub mod drift;
pub mod grid;
pub mod period;
mod validate;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use drift::{
    eval_drift, eval_kind, eval_on_grid, AffineForm, AsymptoticTarget, DecayProfile, DriftFamily, DriftKind,
    TimeModulation,
};
pub use grid::CollocationGrid;
pub use period::{common_period, CommonPeriod, Rational};
pub use validate::{validate, validation_report, AssumptionCheck, SumTail, ValidationReport, Violation, ViolationKind};

use crate::error::{check_dim, Error, Result};
use crate::noise::{NoiseWeights, StableIndex};
use crate::spectral::{DiagonalOperator, SequenceSpec, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// Truncation dimension `N`.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Collocation points `M`; defaults to `4N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collocation_points: Option<usize>,
}

fn default_modes() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorsSection {
    /// Eigenvalues `lambda_k` of `-A`.
    pub a: SequenceSpec,
    /// Eigenvalues `beta_k` of `-B`.
    pub b: SequenceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub alpha: f64,
    /// Regularity index used by the summability conditions.
    pub theta: f64,
    /// Weights `rho_k` of the slow noise.
    pub rho: SequenceSpec,
    /// Weights `gamma_k` of the fast noise.
    pub gamma: SequenceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftsSection {
    pub f: DriftFamily,
    pub g: DriftFamily,
}

/// An initial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Coeffs(Vec<f64>),
    /// `amplitude * e_index`.
    Mode {
        index: usize,
        amplitude: f64,
    },
    /// Sine-series projection of the constant function `value`.
    Constant {
        value: f64,
    },
}

impl FieldSpec {
    pub fn materialize(&self, grid: &CollocationGrid) -> Result<SpectralField> {
        let n = grid.modes();
        match self {
            FieldSpec::Zero => Ok(SpectralField::zeros(n)),
            FieldSpec::Coeffs(c) => {
                check_dim(n, c.len())?;
                SpectralField::new(c.clone())
            }
            FieldSpec::Mode { index, amplitude } => Ok(SpectralField::basis(n, *index)?.scale(*amplitude)),
            FieldSpec::Constant { value } => {
                SpectralField::new(grid.constant_projection().iter().map(|p| p * value).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub x: FieldSpec,
    pub y: FieldSpec,
}

/// Declarative model, as found in the non-experiment sections of a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub space: SpaceSection,
    pub operators: OperatorsSection,
    pub noise: NoiseSection,
    pub drifts: DriftsSection,
    pub initial_data: InitialData,
}

impl ModelSpec {
    /// Dirichlet heat equation on `(0, pi)`: `lambda_k = beta_k = k^2`,
    /// unit noise weights, `alpha = 1.5`, `theta = 0.5`, with affine `F`
    /// and a time-sinusoidal affine `G` with `L_G = 0.5`.
    pub fn heat_equation(modes: usize) -> Self {
        let laplacian = SequenceSpec::PowerLaw { scale: 1.0, power: 2.0 };
        let unit = SequenceSpec::PowerLaw { scale: 1.0, power: 0.0 };
        Self {
            space: SpaceSection {
                modes,
                collocation_points: None,
            },
            operators: OperatorsSection {
                a: laplacian.clone(),
                b: laplacian,
            },
            noise: NoiseSection {
                alpha: 1.5,
                theta: 0.5,
                rho: unit.clone(),
                gamma: unit,
            },
            drifts: DriftsSection {
                f: DriftFamily::tight(DriftKind::Affine {
                    a_x: -0.5,
                    a_y: 1.0,
                    c: 0.5,
                }),
                g: DriftFamily::tight(DriftKind::SinusoidalTime {
                    a_x: 0.5,
                    a_y: -0.5,
                    c: 0.3,
                    amplitude: 0.5,
                    period: Rational::from_integer(1),
                    phase: 0.0,
                }),
            },
            initial_data: InitialData {
                x: FieldSpec::Mode {
                    index: 1,
                    amplitude: 1.0,
                },
                y: FieldSpec::Zero,
            },
        }
    }

    pub fn with_drifts(mut self, f: DriftFamily, g: DriftFamily) -> Self {
        self.drifts = DriftsSection { f, g };
        self
    }

    pub fn with_noise_weights(mut self, rho: SequenceSpec, gamma: SequenceSpec) -> Self {
        self.noise.rho = rho;
        self.noise.gamma = gamma;
        self
    }

    pub fn with_initial(mut self, x: FieldSpec, y: FieldSpec) -> Self {
        self.initial_data = InitialData { x, y };
        self
    }
}

/// How a drift depends on time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeStructure {
    Autonomous,
    Periodic(Rational),
    Aperiodic,
}

impl TimeStructure {
    fn of(kind: &DriftKind) -> Self {
        if !kind.is_time_dependent() {
            TimeStructure::Autonomous
        } else if let Some(p) = kind.period() {
            TimeStructure::Periodic(p)
        } else {
            TimeStructure::Aperiodic
        }
    }
}

/// A model that passed validation. Immutable; cheap to clone.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    spec: ModelSpec,
    a: DiagonalOperator,
    b: DiagonalOperator,
    alpha: StableIndex,
    theta: f64,
    rho: NoiseWeights,
    gamma: NoiseWeights,
    grid: CollocationGrid,
    x0: SpectralField,
    y0: SpectralField,
    report: ValidationReport,
}

impl ValidatedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.inner.spec
    }

    pub fn dim(&self) -> usize {
        self.inner.grid.modes()
    }

    pub fn op_a(&self) -> &DiagonalOperator {
        &self.inner.a
    }

    pub fn op_b(&self) -> &DiagonalOperator {
        &self.inner.b
    }

    pub fn alpha(&self) -> StableIndex {
        self.inner.alpha
    }

    pub fn theta(&self) -> f64 {
        self.inner.theta
    }

    pub fn rho(&self) -> &NoiseWeights {
        &self.inner.rho
    }

    pub fn gamma(&self) -> &NoiseWeights {
        &self.inner.gamma
    }

    pub fn drift_f(&self) -> &DriftFamily {
        &self.inner.spec.drifts.f
    }

    pub fn drift_g(&self) -> &DriftFamily {
        &self.inner.spec.drifts.g
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.inner.grid
    }

    pub fn initial_x(&self) -> &SpectralField {
        &self.inner.x0
    }

    pub fn initial_y(&self) -> &SpectralField {
        &self.inner.y0
    }

    pub fn report(&self) -> &ValidationReport {
        &self.inner.report
    }

    /// Declared `L_G`.
    pub fn lipschitz_g_y(&self) -> f64 {
        self.drift_g().lipschitz_y
    }

    /// `beta_1 - L_G`, the dissipativity margin of the frozen equation.
    pub fn spectral_gap(&self) -> f64 {
        self.inner.b.first() - self.lipschitz_g_y()
    }

    pub fn time_structure_f(&self) -> TimeStructure {
        TimeStructure::of(&self.drift_f().kind)
    }

    pub fn time_structure_g(&self) -> TimeStructure {
        TimeStructure::of(&self.drift_g().kind)
    }

    /// Common period of `F` and `G`. Autonomous drifts are periodic with any
    /// period; if both are autonomous the period is 1.
    pub fn common_period(&self) -> Result<CommonPeriod> {
        use TimeStructure::*;
        let (tf, tg) = (self.time_structure_f(), self.time_structure_g());
        let (t1, t2) = match (tf, tg) {
            (Aperiodic, _) | (_, Aperiodic) => {
                return Err(Error::config(
                    "drifts are not periodic: a periodic average needs F and G periodic or autonomous",
                ))
            }
            (Periodic(a), Periodic(b)) => (a, b),
            (Periodic(a), Autonomous) => (a, a),
            (Autonomous, Periodic(b)) => (b, b),
            (Autonomous, Autonomous) => (Rational::from_integer(1), Rational::from_integer(1)),
        };
        common_period(t1, t2)
    }

    /// `(F~, phi_1)` and `(G~, phi_2)` when both limits exist.
    pub fn asymptotic_targets(&self) -> Result<((DriftKind, DecayProfile), (DriftKind, DecayProfile))> {
        let f = self
            .drift_f()
            .asymptotic_limit()
            .ok_or_else(|| Error::config("F is time-dependent and declares no asymptotic target"))?;
        let g = self
            .drift_g()
            .asymptotic_limit()
            .ok_or_else(|| Error::config("G is time-dependent and declares no asymptotic target"))?;
        Ok((f, g))
    }

    /// Same model with different initial data.
    pub fn with_initial(&self, x0: SpectralField, y0: SpectralField) -> Result<Self> {
        check_dim(self.dim(), x0.dim())?;
        check_dim(self.dim(), y0.dim())?;
        let mut spec = self.inner.spec.clone();
        spec.initial_data = InitialData {
            x: FieldSpec::Coeffs(x0.coeffs().to_vec()),
            y: FieldSpec::Coeffs(y0.coeffs().to_vec()),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                spec,
                x0,
                y0,
                a: self.inner.a.clone(),
                b: self.inner.b.clone(),
                alpha: self.inner.alpha,
                theta: self.inner.theta,
                rho: self.inner.rho.clone(),
                gamma: self.inner.gamma.clone(),
                grid: self.inner.grid.clone(),
                report: self.inner.report.clone(),
            }),
        })
    }
}

impl ModelSpec {
    /// Validates and materializes; violations are folded into one config error.
    pub fn build(&self) -> Result<ValidatedModel> {
        validate(self).map_err(|v| {
            let lines: Vec<String> = v.iter().map(|v| v.to_string()).collect();
            Error::config(lines.join("; "))
        })
    }
}
