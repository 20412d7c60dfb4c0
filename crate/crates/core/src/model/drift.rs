//! Registry of Nemytskii drift families.
//!
//! Every family is a scalar function `f(t, a, b)` lifted pointwise to the
//! state space through the collocation grid. The affine members are linear in
//! `(a, b)` plus a time-dependent offset, which makes their lift exact in
//! spectral space and gives closed-form averaged drifts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::CollocationGrid;
use super::period::{rational_str, to_f64, Rational};
use crate::error::{check_dim, Result};
use crate::spectral::SpectralField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftKind {
    /// `a_x a + a_y b + c`
    Affine { a_x: f64, a_y: f64, c: f64 },
    /// `a_x a + a_y b + c + amplitude sin(2 pi t / period + phase)`
    SinusoidalTime {
        a_x: f64,
        a_y: f64,
        c: f64,
        amplitude: f64,
        #[serde(with = "rational_str")]
        period: Rational,
        #[serde(default)]
        phase: f64,
    },
    /// `a_x a + a_y b + c + amplitude exp(-rate max(t, 0))`
    DecayingAffine {
        a_x: f64,
        a_y: f64,
        c: f64,
        amplitude: f64,
        rate: f64,
    },
    /// `c + a_x atan(a) + a_y atan(b)`
    SaturatingNonlinear { a_x: f64, a_y: f64, c: f64 },
}

/// Time-dependent offset of an affine family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeModulation {
    None,
    Sinusoid { amplitude: f64, omega: f64, phase: f64 },
    Decay { amplitude: f64, rate: f64 },
}

impl TimeModulation {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeModulation::None => 0.0,
            TimeModulation::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            TimeModulation::Decay { amplitude, rate } => amplitude * (-rate * t.max(0.0)).exp(),
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            TimeModulation::None => 0.0,
            TimeModulation::Sinusoid { amplitude, .. } | TimeModulation::Decay { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// `a_x a + a_y b + c + modulation(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineForm {
    pub a_x: f64,
    pub a_y: f64,
    pub c: f64,
    pub modulation: TimeModulation,
}

impl AffineForm {
    #[inline]
    pub fn offset(&self, t: f64) -> f64 {
        self.c + self.modulation.value(t)
    }
}

impl DriftKind {
    #[inline]
    pub fn eval_scalar(&self, t: f64, a: f64, b: f64) -> f64 {
        match self {
            DriftKind::SaturatingNonlinear { a_x, a_y, c } => c + a_x * a.atan() + a_y * b.atan(),
            _ => {
                let form = self.affine().expect("affine family");
                form.a_x * a + form.a_y * b + form.offset(t)
            }
        }
    }

    pub fn affine(&self) -> Option<AffineForm> {
        match *self {
            DriftKind::Affine { a_x, a_y, c } => Some(AffineForm {
                a_x,
                a_y,
                c,
                modulation: TimeModulation::None,
            }),
            DriftKind::SinusoidalTime {
                a_x,
                a_y,
                c,
                amplitude,
                period,
                phase,
            } => Some(AffineForm {
                a_x,
                a_y,
                c,
                modulation: TimeModulation::Sinusoid {
                    amplitude,
                    omega: 2.0 * PI / to_f64(period),
                    phase,
                },
            }),
            DriftKind::DecayingAffine {
                a_x,
                a_y,
                c,
                amplitude,
                rate,
            } => Some(AffineForm {
                a_x,
                a_y,
                c,
                modulation: TimeModulation::Decay { amplitude, rate },
            }),
            DriftKind::SaturatingNonlinear { .. } => None,
        }
    }

    fn coefficients(&self) -> (f64, f64, f64) {
        match *self {
            DriftKind::Affine { a_x, a_y, c }
            | DriftKind::SinusoidalTime { a_x, a_y, c, .. }
            | DriftKind::DecayingAffine { a_x, a_y, c, .. }
            | DriftKind::SaturatingNonlinear { a_x, a_y, c } => (a_x, a_y, c),
        }
    }

    pub fn period(&self) -> Option<Rational> {
        match self {
            DriftKind::SinusoidalTime { period, .. } => Some(*period),
            _ => None,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        match self {
            DriftKind::SinusoidalTime { amplitude, .. } | DriftKind::DecayingAffine { amplitude, .. } => {
                *amplitude != 0.0
            }
            _ => false,
        }
    }

    pub fn depends_on_y(&self) -> bool {
        self.coefficients().1 != 0.0
    }

    pub fn depends_on_x(&self) -> bool {
        self.coefficients().0 != 0.0
    }

    /// Pointwise Lipschitz constant in the slow argument.
    pub fn lipschitz_x(&self) -> f64 {
        self.coefficients().0.abs()
    }

    /// Pointwise Lipschitz constant in the fast argument.
    pub fn lipschitz_y(&self) -> f64 {
        self.coefficients().1.abs()
    }

    /// Smallest `C` with `|F(t, x, y)| <= C (1 + |x| + |y|)` in `L^2(0, pi)`.
    ///
    /// The constant offset has `L^2` norm `|offset| sqrt(pi)`; `|atan s| <= |s|`.
    pub fn growth_constant(&self) -> f64 {
        let (a_x, a_y, c) = self.coefficients();
        let offset = c.abs() + self.affine().map(|f| f.modulation.bound()).unwrap_or(0.0);
        (offset * PI.sqrt()).max(a_x.abs()).max(a_y.abs())
    }
}

/// Decay profile `phi(T)` of an asymptotic-convergence condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecayProfile {
    Zero,
    /// `coefficient * exp(-rate T)`
    Exponential {
        coefficient: f64,
        rate: f64,
    },
    /// `coefficient / (1 + T)`
    Reciprocal {
        coefficient: f64,
    },
}

impl DecayProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            DecayProfile::Zero => 0.0,
            DecayProfile::Exponential { coefficient, rate } => coefficient * (-rate * t).exp(),
            DecayProfile::Reciprocal { coefficient } => coefficient / (1.0 + t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            DecayProfile::Zero => true,
            DecayProfile::Exponential { coefficient, .. } | DecayProfile::Reciprocal { coefficient } => {
                coefficient == 0.0
            }
        }
    }
}

/// Time-homogeneous limit `F~` (or `G~`) with its convergence profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticTarget {
    pub target: DriftKind,
    pub profile: DecayProfile,
}

/// A registry family with its declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFamily {
    #[serde(flatten)]
    pub kind: DriftKind,
    /// Declared Lipschitz constant in x.
    pub lipschitz_x: f64,
    /// Declared Lipschitz constant in y; for the fast drift this is `L_G`.
    pub lipschitz_y: f64,
    /// Declared linear-growth constant.
    pub growth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic: Option<AsymptoticTarget>,
}

impl DriftFamily {
    /// Family whose declared constants are exactly its own.
    pub fn tight(kind: DriftKind) -> Self {
        Self {
            lipschitz_x: kind.lipschitz_x(),
            lipschitz_y: kind.lipschitz_y(),
            growth: kind.growth_constant(),
            kind,
            asymptotic: None,
        }
    }

    pub fn with_asymptotic(mut self, target: DriftKind, profile: DecayProfile) -> Self {
        self.asymptotic = Some(AsymptoticTarget { target, profile });
        self
    }

    /// The time-homogeneous limit: the declared target, or the family itself
    /// when it does not depend on time.
    pub fn asymptotic_limit(&self) -> Option<(DriftKind, DecayProfile)> {
        match &self.asymptotic {
            Some(a) => Some((a.target.clone(), a.profile)),
            None if !self.kind.is_time_dependent() => Some((self.kind.clone(), DecayProfile::Zero)),
            None => None,
        }
    }
}

/// Scratch space for the grid path of [`eval_into`].
#[derive(Debug, Default, Clone)]
pub(crate) struct DriftScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Evaluates `kind` at `(t, x, y)` into `out`.
///
/// Affine families are evaluated directly in spectral space (the lift of an
/// affine map is affine, with the offset multiplying the projected constant);
/// the rest go through the collocation grid.
pub(crate) fn eval_into(
    kind: &DriftKind,
    t: f64,
    x: &[f64],
    y: &[f64],
    grid: &CollocationGrid,
    scratch: &mut DriftScratch,
    out: &mut [f64],
) {
    if let Some(form) = kind.affine() {
        let offset = form.offset(t);
        for (((o, xi), yi), p) in out.iter_mut().zip(x).zip(y).zip(grid.constant_projection()) {
            *o = form.a_x * xi + form.a_y * yi + offset * p;
        }
        return;
    }
    let m = grid.points();
    scratch.a.resize(m, 0.0);
    scratch.b.resize(m, 0.0);
    grid.to_physical_into(x, &mut scratch.a);
    grid.to_physical_into(y, &mut scratch.b);
    for (a, b) in scratch.a.iter_mut().zip(&scratch.b) {
        *a = kind.eval_scalar(t, *a, *b);
    }
    grid.project_into(&scratch.a, out);
}

/// Collocation evaluation for every family, bypassing the affine shortcut.
pub fn eval_on_grid(
    kind: &DriftKind,
    t: f64,
    x: &SpectralField,
    y: &SpectralField,
    grid: &CollocationGrid,
) -> Result<SpectralField> {
    check_dim(grid.modes(), x.dim())?;
    check_dim(grid.modes(), y.dim())?;
    let a = grid.to_physical(x.coeffs())?;
    let b = grid.to_physical(y.coeffs())?;
    let values: Vec<f64> = a.iter().zip(&b).map(|(a, b)| kind.eval_scalar(t, *a, *b)).collect();
    SpectralField::new(grid.to_spectral(&values)?)
}

/// Nemytskii evaluation `F(t, x, y)` truncated to the grid's modes.
pub fn eval_drift(
    family: &DriftFamily,
    t: f64,
    x: &SpectralField,
    y: &SpectralField,
    grid: &CollocationGrid,
) -> Result<SpectralField> {
    eval_kind(&family.kind, t, x, y, grid)
}

pub fn eval_kind(
    kind: &DriftKind,
    t: f64,
    x: &SpectralField,
    y: &SpectralField,
    grid: &CollocationGrid,
) -> Result<SpectralField> {
    check_dim(grid.modes(), x.dim())?;
    check_dim(grid.modes(), y.dim())?;
    let mut out = vec![0.0; grid.modes()];
    eval_into(
        kind,
        t,
        x.coeffs(),
        y.coeffs(),
        grid,
        &mut DriftScratch::default(),
        &mut out,
    );
    SpectralField::new(out)
}
