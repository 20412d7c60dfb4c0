//! Finite sine-basis representation of the state space.
//!
//! A [`SpectralField`] holds the coefficients `u_k` of `u = sum_k u_k e_k`
//! for the first `N` modes. Mode numbers are 1-based when they appear in
//! public signatures (`e_1` is the first mode) and 0-based as slice indices.
//! Diagonal operators act mode-wise through their eigenvalues, so the
//! semigroup and the fractional Sobolev norms are exact per mode.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!("non-finite coefficient at mode {}", k + 1)));
        }
        Ok(Self { coeffs })
    }

    /// Skips the finiteness scan; for hot loops whose inputs are already checked.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coeffs: vec![0.0; dim] }
    }

    /// Unit coefficient on mode `mode` (1-based).
    pub fn basis(dim: usize, mode: usize) -> Result<Self> {
        if mode == 0 || mode > dim {
            return Err(Error::domain(format!("mode {mode} outside 1..={dim}")));
        }
        let mut coeffs = vec![0.0; dim];
        coeffs[mode - 1] = 1.0;
        Ok(Self { coeffs })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    /// Euclidean norm `|u|` of H.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_vec_unchecked(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_vec_unchecked(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> SpectralField {
        Self::from_vec_unchecked(self.coeffs.iter().map(|c| c * factor).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorLabel {
    A,
    B,
}

/// How an eigenvalue (or noise-weight) sequence is declared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSpec {
    /// First `N` values listed explicitly.
    Explicit(Vec<f64>),
    /// `scale * k^power` for `k = 1, 2, ...`.
    PowerLaw { scale: f64, power: f64 },
}

impl SequenceSpec {
    pub fn materialize(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            SequenceSpec::Explicit(values) => {
                check_dim(dim, values.len())?;
                Ok(values.clone())
            }
            SequenceSpec::PowerLaw { scale, power } => Ok((1..=dim).map(|k| scale * (k as f64).powf(*power)).collect()),
        }
    }

    /// `(scale, power)` when the tail of the sequence is known analytically.
    pub fn power_law(&self) -> Option<(f64, f64)> {
        match self {
            SequenceSpec::PowerLaw { scale, power } => Some((*scale, *power)),
            SequenceSpec::Explicit(_) => None,
        }
    }
}

/// Self-adjoint operator diagonal in the sine basis, `A e_k = -lambda_k e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    eigenvalues: Vec<f64>,
    label: OperatorLabel,
}

impl DiagonalOperator {
    /// `eigenvalues` are the positive decay rates `lambda_k`, nondecreasing.
    pub fn new(label: OperatorLabel, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::config(format!("operator {label:?} has no modes")));
        }
        if let Some(k) = eigenvalues.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::config(format!(
                "operator {label:?}: eigenvalue of mode {} must be positive and finite",
                k + 1
            )));
        }
        if let Some(k) = eigenvalues.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::config(format!(
                "operator {label:?}: eigenvalues decrease at mode {}",
                k + 2
            )));
        }
        Ok(Self { eigenvalues, label })
    }

    pub fn from_spec(label: OperatorLabel, spec: &SequenceSpec, dim: usize) -> Result<Self> {
        Self::new(label, spec.materialize(dim)?)
    }

    /// The Dirichlet Laplacian on `(0, pi)`: `lambda_k = k^2`.
    pub fn dirichlet_laplacian(label: OperatorLabel, dim: usize) -> Self {
        Self {
            eigenvalues: (1..=dim).map(|k| (k * k) as f64).collect(),
            label,
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Smallest eigenvalue, the spectral gap `lambda_1`.
    pub fn first(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn label(&self) -> OperatorLabel {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex(pub f64);

/// `||u||_s = (sum_k lambda_k^s u_k^2)^{1/2}`.
pub fn sobolev_norm(u: &SpectralField, op: &DiagonalOperator, s: SobolevIndex) -> Result<f64> {
    check_dim(op.dim(), u.dim())?;
    if s.0 == 0.0 {
        return Ok(u.norm());
    }
    Ok(u.coeffs()
        .iter()
        .zip(op.eigenvalues())
        .map(|(c, l)| l.powf(s.0) * c * c)
        .sum::<f64>()
        .sqrt())
}

/// `e^{tA} u`, computed mode-wise as `e^{-lambda_k t} u_k`.
pub fn semigroup_apply(op: &DiagonalOperator, t: f64, u: &SpectralField) -> Result<SpectralField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("semigroup time must be >= 0, got {t}")));
    }
    check_dim(op.dim(), u.dim())?;
    Ok(SpectralField::from_vec_unchecked(
        u.coeffs()
            .iter()
            .zip(op.eigenvalues())
            .map(|(c, l)| (-l * t).exp() * c)
            .collect(),
    ))
}

/// Sharp constant for `||e^{tA}x||_{s2} <= C t^{-(s2-s1)/2} e^{-lambda_1 t/2} ||x||_{s1}`.
///
/// Per mode the inequality reduces to `v^a e^{-v} <= C e^{-v/2}` with
/// `v = lambda t` and `a = (s2 - s1)/2`, so `C = sup_v v^a e^{-v/2} = (2a/e)^a`.
pub fn smoothing_constant(sigma1: f64, sigma2: f64) -> Result<f64> {
    if !(sigma1 < sigma2) {
        return Err(Error::domain(format!(
            "smoothing needs sigma1 < sigma2, got {sigma1} >= {sigma2}"
        )));
    }
    let a = 0.5 * (sigma2 - sigma1);
    Ok((2.0 * a / std::f64::consts::E).powf(a))
}
