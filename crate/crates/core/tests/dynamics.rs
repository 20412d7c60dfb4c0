use proptest::prelude::*;
use stablescale_core::dynamics::{floor_grid, simulate_averaged, simulate_slowfast, DriftClock, SlowFastRun, TimeGrid};
use stablescale_core::experiments::{strong_error, ExperimentSettings, ReferenceKind};
use stablescale_core::model::{DriftFamily, DriftKind, ModelSpec, ValidatedModel};
use stablescale_core::noise::{NoiseRole, StreamKey};
use stablescale_core::spectral::SequenceSpec;
use stablescale_core::stats;

fn heat(n: usize) -> ValidatedModel {
    ModelSpec::heat_equation(n).build().unwrap()
}

fn run(eps: f64, seed: u64, trajectory: u64) -> SlowFastRun {
    SlowFastRun {
        grid: TimeGrid::new(1.0, 100).unwrap(),
        eps,
        fast_substeps: 1,
        seed,
        trajectory,
    }
}

#[test]
fn noiseless_linear_run_matches_semigroup() {
    let zero = SequenceSpec::PowerLaw { scale: 0.0, power: 0.0 };
    let nil = DriftFamily::tight(DriftKind::Affine {
        a_x: 0.0,
        a_y: 0.0,
        c: 0.0,
    });
    let model = ModelSpec::heat_equation(5)
        .with_noise_weights(zero.clone(), zero)
        .with_drifts(nil.clone(), nil)
        .build()
        .unwrap();
    let traj = simulate_slowfast(&model, &run(0.1, 1, 0)).unwrap();
    let x0 = model.initial_x().coeffs().to_vec();
    let lambda = model.op_a().eigenvalues();
    for (k, v) in traj.final_x().iter().enumerate() {
        let want = x0[k] * (-lambda[k]).exp();
        assert!(
            (v - want).abs() <= 1e-12 * (1.0 + want.abs()),
            "mode {k}: {v} vs {want}"
        );
    }
}

#[test]
fn averaged_run_replays_slow_noise_of_its_partner() {
    let model = heat(6);
    let settings = ExperimentSettings {
        pairs: 16,
        macro_steps: 200,
        ..ExperimentSettings::default()
    };
    let a = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.05, &settings).unwrap();
    let b = strong_error(&model, ReferenceKind::EvolutionAveraged, 0.05, &settings).unwrap();
    assert!(a.coupled);
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.curve, b.curve);
}

#[test]
fn time_independent_drift_ignores_the_clock() {
    let model = heat(4);
    let drift = |_t: f64, x: &[f64], out: &mut [f64]| {
        for (o, v) in out.iter_mut().zip(x) {
            *o = -0.3 * v + 0.1;
        }
    };
    let key = StreamKey::new(3, NoiseRole::SlowNoiseL, 2);
    let grid = TimeGrid::new(1.0, 80).unwrap();
    let fast = simulate_averaged(&model, &drift, DriftClock::Fast(0.01), grid, key).unwrap();
    let slow = simulate_averaged(&model, &drift, DriftClock::Slow, grid, key).unwrap();
    assert_eq!(fast.final_x(), slow.final_x());
    assert!(fast.shares_slow_noise(&slow));
}

#[test]
fn fast_key_is_not_accepted_for_averaged_runs() {
    let model = heat(3);
    let drift = |_t: f64, _x: &[f64], out: &mut [f64]| out.fill(0.0);
    let key = StreamKey::new(3, NoiseRole::FastNoiseZ, 0);
    let grid = TimeGrid::new(1.0, 10).unwrap();
    assert!(simulate_averaged(&model, &drift, DriftClock::Slow, grid, key).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn slowfast_runs_are_reproducible(seed in 0u64..1000, id in 0u64..64, eps in 0.01f64..0.5) {
        let model = heat(3);
        let a = simulate_slowfast(&model, &run(eps, seed, id)).unwrap();
        let b = simulate_slowfast(&model, &run(eps, seed, id)).unwrap();
        prop_assert_eq!(a.final_x(), b.final_x());
        prop_assert!(a.shares_slow_noise(&b));
    }

    #[test]
    fn coupled_runs_share_slow_noise_across_eps(seed in 0u64..1000, id in 0u64..64) {
        let model = heat(3);
        let a = simulate_slowfast(&model, &run(0.1, seed, id)).unwrap();
        let b = simulate_slowfast(&model, &run(0.02, seed, id)).unwrap();
        let c = simulate_slowfast(&model, &run(0.02, seed, id + 1)).unwrap();
        prop_assert!(a.shares_slow_noise(&b));
        prop_assert!(!a.shares_slow_noise(&c));
    }

    #[test]
    fn floor_grid_brackets_its_argument(t in 0.0f64..100.0, q in 1u32..200) {
        let delta = 1.0 / q as f64;
        let f = floor_grid(t, delta);
        prop_assert!(f <= t + 1e-12);
        prop_assert!(t < f + delta + 1e-12);
        let m = f / delta;
        prop_assert!((m - m.round()).abs() < 1e-9);
    }

    #[test]
    fn robust_statistics_stay_within_the_sample_range(
        values in prop::collection::vec(-1e3f64..1e3, 16..200),
        k in 1usize..8,
    ) {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mom = stats::median_of_means(&values, k).unwrap();
        let tm = stats::trimmed_mean(&values, 0.1).unwrap();
        prop_assert!(lo - 1e-9 <= mom && mom <= hi + 1e-9);
        prop_assert!(lo - 1e-9 <= tm && tm <= hi + 1e-9);
        prop_assert!(stats::block_spread(&values, k).unwrap() >= 0.0);
    }

    #[test]
    fn log_log_slope_recovers_power_laws(r in -2.0f64..2.0, c in 0.1f64..10.0) {
        let xs = [0.1, 0.05, 0.02, 0.01];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(r)).collect();
        prop_assert!((stats::log_log_slope(&xs, &ys).unwrap() - r).abs() < 1e-9);
    }
}
