//! Strong errors against the asymptotic averaged equation, compared with the
//! composite bound `eps^r + (phi_1(T_eps) + phi~_2(T_eps))^p`,
//! `T_eps = eps^{-theta / (theta + 2)}`.

use serde::{Deserialize, Serialize};

use super::{convergence_sweep, theoretical_exponent, ExperimentSettings, RateReport, ReferenceKind};
use crate::averaging::phi2_tilde;
use crate::error::Result;
use crate::model::ValidatedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub eps: f64,
    pub window: f64,
    pub phi1: f64,
    pub phi2_tilde: f64,
    pub bound: f64,
    pub error: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub rates: RateReport,
    pub rows: Vec<ProfileRow>,
    /// `max error / bound` over the whole grid.
    pub constant: f64,
    /// The same constant fitted separately on the first and second halves of the grid.
    pub sub_constants: (f64, f64),
    /// `max / min` of the two sub-grid constants.
    pub constant_ratio: f64,
    pub bound_decreasing: bool,
    pub passed: bool,
}

/// Composite bound for one `eps`.
pub fn composite_bound(model: &ValidatedModel, eps: f64, p: f64) -> Result<(f64, f64, f64, f64)> {
    let ((_, phi1), (_, phi2)) = model.asymptotic_targets()?;
    let theta = model.theta();
    let window = eps.powf(-theta / (theta + 2.0));
    let a = phi1.value(window);
    let b = phi2_tilde(&phi2, model.op_b().first(), window)?;
    let bound = eps.powf(theoretical_exponent(theta, p)) + (a + b).powf(p);
    Ok((window, a, b, bound))
}

/// Runs the asymptotic sweep and checks that one constant covers the grid,
/// stable within a factor 3 between the two halves of the grid.
pub fn theorem3_profile_check(model: &ValidatedModel, settings: &ExperimentSettings) -> Result<ProfileReport> {
    model.asymptotic_targets()?;
    let rates = convergence_sweep(model, ReferenceKind::AsymptoticAveraged, settings)?;
    let mut rows = Vec::with_capacity(rates.eps.len());
    for (eps, est) in rates.eps.iter().zip(&rates.errors) {
        let (window, phi1, phi2, bound) = composite_bound(model, *eps, settings.p)?;
        rows.push(ProfileRow {
            eps: *eps,
            window,
            phi1,
            phi2_tilde: phi2,
            bound,
            error: est.value,
            ratio: est.value / bound,
        });
    }
    let max_ratio = |rs: &[ProfileRow]| rs.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let constant = max_ratio(&rows);
    let half = rows.len() / 2;
    let sub_constants = (max_ratio(&rows[..half]), max_ratio(&rows[half..]));
    let (lo, hi) = if sub_constants.0 <= sub_constants.1 {
        sub_constants
    } else {
        (sub_constants.1, sub_constants.0)
    };
    let constant_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let bound_decreasing = rows.windows(2).all(|w| w[1].bound < w[0].bound);
    let covered = rows.iter().all(|r| r.error <= constant * r.bound);
    Ok(ProfileReport {
        passed: covered && constant_ratio <= 3.0,
        rates,
        rows,
        constant,
        sub_constants,
        constant_ratio,
        bound_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecayProfile, DriftFamily, DriftKind, ModelSpec};

    #[test]
    fn zero_profiles_reduce_to_rate_term() {
        let spec = ModelSpec::heat_equation(4);
        let g = DriftFamily::tight(DriftKind::Affine {
            a_x: 0.5,
            a_y: -0.5,
            c: 0.3,
        });
        let model = spec.clone().with_drifts(spec.drifts.f.clone(), g).build().unwrap();
        for eps in [0.1, 0.01] {
            let (_, a, b, bound) = composite_bound(&model, eps, 1.2).unwrap();
            assert_eq!((a, b), (0.0, 0.0));
            assert!((bound - eps.powf(0.1 / 2.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_profile_bound_decreases() {
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
        let bounds: Vec<f64> = [0.1, 0.05, 0.02, 0.01]
            .iter()
            .map(|e| composite_bound(&model, *e, 1.2).unwrap().3)
            .collect();
        assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");
        assert!(composite_bound(&model, 0.1, 1.2).unwrap().2 > 0.0);
    }

    #[test]
    fn missing_targets_are_a_config_error() {
        let model = ModelSpec::heat_equation(4).build().unwrap();
        let r = theorem3_profile_check(&model, &ExperimentSettings::default());
        assert!(matches!(r, Err(crate::Error::Config(_))));
    }
}
