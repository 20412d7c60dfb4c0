//! Exponential-Euler time stepping.
//!
//! Every scheme here advances mode `k` by the exact semigroup factor, the
//! exact integral of the semigroup against a drift frozen at the left
//! endpoint, and an exact stable convolution increment:
//!
//! ```text
//! u' = e^{-mu h} u + (1 - e^{-mu h}) / mu * D_k + s_k S_k
//! ```
//!
//! The fast component is advanced in its own clock: a slow step `dt` is
//! `n_sub` fast steps of length `h = dt / (eps n_sub)`, which is the same
//! recursion as the `1/eps`-scaled equation because of stable
//! self-similarity.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::drift::{eval_into, DriftScratch};
use crate::model::{DriftKind, ValidatedModel};
use crate::noise::{IncrementLaw, NoiseRole, NoiseStream, NoiseWeights, StableIndex, StreamKey};
use crate::spectral::{DiagonalOperator, SpectralField};

/// `floor(t / delta) * delta`, robust to rounding when `t` sits on the grid.
pub fn floor_grid(t: f64, delta: f64) -> f64 {
    grid_index(t, delta) as f64 * delta
}

fn grid_index(t: f64, delta: f64) -> i64 {
    let q = t / delta;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
        r as i64
    } else {
        q.floor() as i64
    }
}

/// Exact per-mode coefficients of one exponential-Euler step of length `h`.
#[derive(Debug, Clone)]
pub(crate) struct ExpEuler {
    decay: Vec<f64>,
    gain: Vec<f64>,
    noise: IncrementLaw,
}

impl ExpEuler {
    pub(crate) fn new(op: &DiagonalOperator, weights: &NoiseWeights, h: f64, alpha: StableIndex) -> Result<Self> {
        let decay = op.eigenvalues().iter().map(|l| (-l * h).exp()).collect();
        let gain = op.eigenvalues().iter().map(|l| -(-l * h).exp_m1() / l).collect();
        Ok(Self {
            decay,
            gain,
            noise: IncrementLaw::exact(op, weights, h, alpha)?,
        })
    }

    /// `u <- e^{-mu h} u + gain * drift`, then adds the increment `(stream, index)`.
    #[inline]
    pub(crate) fn apply(&self, u: &mut [f64], drift: &[f64], stream: &NoiseStream, index: u64) {
        for (((u, d), a), g) in u.iter_mut().zip(drift).zip(&self.decay).zip(&self.gain) {
            *u = a * *u + g * d;
        }
        self.noise.add_increment(stream, index, u);
    }
}

/// Uniform macro grid `0 = t_0 < ... < t_M = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub macro_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, macro_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || macro_steps == 0 {
            return Err(Error::domain(format!(
                "time grid needs T > 0 and at least one step, got T = {horizon}, M = {macro_steps}"
            )));
        }
        Ok(Self { horizon, macro_steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.macro_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.macro_steps).map(|n| self.time(n)).collect()
    }
}

/// `(X_t, Y_t)` at one instant of a slow-fast run.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowFastState {
    pub t: f64,
    pub x: SpectralField,
    pub y: SpectralField,
    pub eps: f64,
}

/// Precomputed coefficients for the coupled system at a fixed `(dt, eps, n_sub)`.
#[derive(Debug, Clone)]
pub struct SlowFastStepper {
    model: ValidatedModel,
    dt: f64,
    eps: f64,
    substeps: usize,
    slow: ExpEuler,
    fast: ExpEuler,
}

#[derive(Debug, Default)]
struct Work {
    drift: Vec<f64>,
    frozen_x: Vec<f64>,
    scratch: DriftScratch,
}

impl SlowFastStepper {
    pub fn new(model: &ValidatedModel, dt: f64, eps: f64, substeps: usize) -> Result<Self> {
        if !(dt > 0.0) || !(eps > 0.0) || substeps == 0 {
            return Err(Error::domain(format!(
                "stepper needs dt > 0, eps > 0 and n_sub >= 1, got dt = {dt}, eps = {eps}, n_sub = {substeps}"
            )));
        }
        let h = dt / (eps * substeps as f64);
        Ok(Self {
            model: model.clone(),
            dt,
            eps,
            substeps,
            slow: ExpEuler::new(model.op_a(), model.rho(), dt, model.alpha())?,
            fast: ExpEuler::new(model.op_b(), model.gamma(), h, model.alpha())?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Fast-clock step length `dt / (eps n_sub)`.
    pub fn fast_step(&self) -> f64 {
        self.dt / (self.eps * self.substeps as f64)
    }

    /// Advances `(x, y)` from macro index `n`, consuming slow increment `n`
    /// and fast increments `n n_sub .. (n + 1) n_sub`.
    fn advance(&self, n: u64, x: &mut [f64], y: &mut [f64], slow: &NoiseStream, fast: &NoiseStream, w: &mut Work) {
        let grid = self.model.grid();
        let t = n as f64 * self.dt;
        let s = t / self.eps;
        w.drift.resize(x.len(), 0.0);
        eval_into(&self.model.drift_f().kind, s, x, y, grid, &mut w.scratch, &mut w.drift);
        // every fast substep sees x_n, so keep a copy before x moves on
        let mut x_n = std::mem::take(&mut w.frozen_x);
        x_n.clear();
        x_n.extend_from_slice(x);
        self.slow.apply(x, &w.drift, slow, n);
        fast_block(
            &self.model.drift_g().kind,
            &self.fast,
            grid,
            s,
            self.fast_step(),
            &x_n,
            y,
            fast,
            n * self.substeps as u64,
            self.substeps,
            w,
        );
        w.frozen_x = x_n;
    }

    /// One macro step of the coupled system.
    pub fn step(&self, state: &SlowFastState, index: u64, slow: &NoiseStream, fast: &NoiseStream) -> SlowFastState {
        let mut x = state.x.coeffs().to_vec();
        let mut y = state.y.coeffs().to_vec();
        self.advance(index, &mut x, &mut y, slow, fast, &mut Work::default());
        SlowFastState {
            t: state.t + self.dt,
            x: SpectralField::from_vec_unchecked(x),
            y: SpectralField::from_vec_unchecked(y),
            eps: self.eps,
        }
    }
}

/// `count` fast steps of length `h` from fast time `s0`, slow input frozen at `x`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn fast_block(
    g: &DriftKind,
    law: &ExpEuler,
    grid: &crate::model::CollocationGrid,
    s0: f64,
    h: f64,
    x: &[f64],
    y: &mut [f64],
    stream: &NoiseStream,
    first_index: u64,
    count: usize,
    w: &mut Work,
) {
    w.drift.resize(y.len(), 0.0);
    for j in 0..count {
        eval_into(g, s0 + j as f64 * h, x, y, grid, &mut w.scratch, &mut w.drift);
        law.apply(y, &w.drift, stream, first_index + j as u64);
    }
}

/// A stored path on a uniform macro grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    dim: usize,
    /// Row-major `(M + 1) x N`.
    xs: Vec<f64>,
    ys: Option<Vec<f64>>,
    /// `eps` for slow-fast runs; `None` for averaged runs.
    pub eps: Option<f64>,
    pub fast_substeps: usize,
    pub slow_key: StreamKey,
    pub fast_key: Option<StreamKey>,
    /// Slow-noise time indices consumed, in order.
    pub slow_indices: Range<u64>,
    pub fast_indices: Range<u64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.macro_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn x(&self, n: usize) -> &[f64] {
        &self.xs[n * self.dim..(n + 1) * self.dim]
    }

    pub fn y(&self, n: usize) -> Option<&[f64]> {
        self.ys.as_ref().map(|ys| &ys[n * self.dim..(n + 1) * self.dim])
    }

    pub fn x_field(&self, n: usize) -> SpectralField {
        SpectralField::from_vec_unchecked(self.x(n).to_vec())
    }

    pub fn final_x(&self) -> &[f64] {
        self.x(self.grid.macro_steps)
    }

    /// True when both runs consumed exactly the same slow-noise increments.
    pub fn shares_slow_noise(&self, other: &Trajectory) -> bool {
        self.slow_key == other.slow_key && self.slow_indices == other.slow_indices
    }
}

/// Parameters of one slow-fast run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowFastRun {
    pub grid: TimeGrid,
    pub eps: f64,
    pub fast_substeps: usize,
    pub seed: u64,
    pub trajectory: u64,
}

/// Simulates the coupled system from the model's initial data.
pub fn simulate_slowfast(model: &ValidatedModel, run: &SlowFastRun) -> Result<Trajectory> {
    simulate_slowfast_from(model, run, model.initial_x(), model.initial_y())
}

pub fn simulate_slowfast_from(
    model: &ValidatedModel,
    run: &SlowFastRun,
    x0: &SpectralField,
    y0: &SpectralField,
) -> Result<Trajectory> {
    crate::error::check_dim(model.dim(), x0.dim())?;
    crate::error::check_dim(model.dim(), y0.dim())?;
    let stepper = SlowFastStepper::new(model, run.grid.dt(), run.eps, run.fast_substeps)?;
    let slow_key = StreamKey::new(run.seed, NoiseRole::SlowNoiseL, run.trajectory);
    let fast_key = StreamKey::new(run.seed, NoiseRole::FastNoiseZ, run.trajectory);
    let (slow, fast) = (NoiseStream::from_key(slow_key), NoiseStream::from_key(fast_key));
    let n = model.dim();
    let steps = run.grid.macro_steps;
    let mut xs = Vec::with_capacity((steps + 1) * n);
    let mut ys = Vec::with_capacity((steps + 1) * n);
    let mut x = x0.coeffs().to_vec();
    let mut y = y0.coeffs().to_vec();
    xs.extend_from_slice(&x);
    ys.extend_from_slice(&y);
    let mut w = Work::default();
    for i in 0..steps as u64 {
        stepper.advance(i, &mut x, &mut y, &slow, &fast, &mut w);
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
    }
    Ok(Trajectory {
        grid: run.grid,
        dim: n,
        xs,
        ys: Some(ys),
        eps: Some(run.eps),
        fast_substeps: run.fast_substeps,
        slow_key,
        fast_key: Some(fast_key),
        slow_indices: 0..steps as u64,
        fast_indices: 0..(steps * run.fast_substeps) as u64,
    })
}

/// A drift `(t, x) -> H` for the averaged equation.
pub trait DriftField: Sync {
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);
}

impl<F> DriftField for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self(t, x, out)
    }
}

/// Which time the averaged drift is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftClock {
    /// `drift(t / eps, x)`, the oscillating averaged equation.
    Fast(f64),
    /// `drift(t, x)`.
    Slow,
}

impl DriftClock {
    #[inline]
    fn at(self, t: f64) -> f64 {
        match self {
            DriftClock::Fast(eps) => t / eps,
            DriftClock::Slow => t,
        }
    }
}

/// `dX = [AX + drift(clock(t), X)]dt + dL`, with the slow noise of `slow_key`.
///
/// Passing the key of a slow-fast run replays its slow-noise increments
/// exactly, which couples the two paths.
pub fn simulate_averaged(
    model: &ValidatedModel,
    drift: &dyn DriftField,
    clock: DriftClock,
    grid: TimeGrid,
    slow_key: StreamKey,
) -> Result<Trajectory> {
    simulate_averaged_from(model, drift, clock, grid, slow_key, model.initial_x())
}

pub fn simulate_averaged_from(
    model: &ValidatedModel,
    drift: &dyn DriftField,
    clock: DriftClock,
    grid: TimeGrid,
    slow_key: StreamKey,
    x0: &SpectralField,
) -> Result<Trajectory> {
    crate::error::check_dim(model.dim(), x0.dim())?;
    if slow_key.role != NoiseRole::SlowNoiseL {
        return Err(Error::config("averaged runs must be driven by a slow-noise stream"));
    }
    let dt = grid.dt();
    let law = ExpEuler::new(model.op_a(), model.rho(), dt, model.alpha())?;
    let slow = NoiseStream::from_key(slow_key);
    let n = model.dim();
    let steps = grid.macro_steps;
    let mut xs = Vec::with_capacity((steps + 1) * n);
    let mut x = x0.coeffs().to_vec();
    let mut d = vec![0.0; n];
    xs.extend_from_slice(&x);
    for i in 0..steps as u64 {
        drift.eval(clock.at(i as f64 * dt), &x, &mut d);
        law.apply(&mut x, &d, &slow, i);
        xs.extend_from_slice(&x);
    }
    Ok(Trajectory {
        grid,
        dim: n,
        xs,
        ys: None,
        eps: None,
        fast_substeps: 1,
        slow_key,
        fast_key: None,
        slow_indices: 0..steps as u64,
        fast_indices: 0..0,
    })
}

/// A path of the frozen equation `dY = [BY + G(t, x, Y)]dt + dZ` from time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenRun {
    pub s: f64,
    pub h: f64,
    pub x: SpectralField,
    dim: usize,
    /// Row-major, one row per grid time `s + j h`.
    path: Vec<f64>,
}

impl FrozenRun {
    pub fn steps(&self) -> usize {
        self.path.len() / self.dim - 1
    }

    pub fn time(&self, j: usize) -> f64 {
        self.s + j as f64 * self.h
    }

    pub fn y(&self, j: usize) -> &[f64] {
        &self.path[j * self.dim..(j + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.y(self.steps())
    }
}

/// Stream selection for the frozen equation: `Z` on `t >= 0`, its independent
/// copy on `t < 0`, both keyed by `(seed, trajectory)` and indexed by the step
/// count from the start time.
#[derive(Debug, Clone)]
pub struct FrozenNoise {
    positive: NoiseStream,
    negative: NoiseStream,
}

impl FrozenNoise {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self {
            positive: NoiseStream::new(seed, NoiseRole::FastNoiseZ, trajectory),
            negative: NoiseStream::new(seed, NoiseRole::FrozenNegativeTimeCopy, trajectory),
        }
    }

    #[inline]
    pub fn stream_at(&self, t: f64) -> &NoiseStream {
        if t >= 0.0 {
            &self.positive
        } else {
            &self.negative
        }
    }
}

/// Frozen-equation integrator at a fixed step.
#[derive(Debug, Clone)]
pub struct FrozenStepper {
    model: ValidatedModel,
    law: ExpEuler,
    h_max: f64,
    g: DriftKind,
}

impl FrozenStepper {
    /// Steps are at most `h_max` long; each run divides `[s, t_end]` uniformly.
    pub fn new(model: &ValidatedModel, h_max: f64) -> Result<Self> {
        Self::with_drift(model, &model.drift_g().kind, h_max)
    }

    /// Same, with `G` replaced by another family (the time-homogeneous limit).
    pub fn with_drift(model: &ValidatedModel, g: &DriftKind, h_max: f64) -> Result<Self> {
        if !(h_max > 0.0) {
            return Err(Error::domain(format!("frozen step must be positive, got {h_max}")));
        }
        Ok(Self {
            model: model.clone(),
            law: ExpEuler::new(model.op_b(), model.gamma(), h_max, model.alpha())?,
            h_max,
            g: g.clone(),
        })
    }

    fn plan(&self, s: f64, t_end: f64) -> Result<(usize, f64)> {
        if !(t_end >= s) {
            return Err(Error::domain(format!("frozen run needs s <= t_end, got {s} > {t_end}")));
        }
        let span = t_end - s;
        let steps = ((span / self.h_max) * (1.0 - 1e-12)).ceil().max(0.0) as usize;
        Ok((steps, if steps == 0 { self.h_max } else { span / steps as f64 }))
    }

    fn law_for(&self, h: f64) -> Result<std::borrow::Cow<'_, ExpEuler>> {
        if (h - self.h_max).abs() <= 1e-12 * self.h_max {
            Ok(std::borrow::Cow::Borrowed(&self.law))
        } else {
            Ok(std::borrow::Cow::Owned(ExpEuler::new(
                self.model.op_b(),
                self.model.gamma(),
                h,
                self.model.alpha(),
            )?))
        }
    }

    /// Full path from `(s, y)` to `t_end` with `x` frozen.
    pub fn run(
        &self,
        s: f64,
        t_end: f64,
        x: &SpectralField,
        y: &SpectralField,
        noise: &FrozenNoise,
    ) -> Result<FrozenRun> {
        let mut path = Vec::new();
        let h = self.drive(s, t_end, x, y, noise, |row| path.extend_from_slice(row))?;
        Ok(FrozenRun {
            s,
            h,
            x: x.clone(),
            dim: x.dim(),
            path,
        })
    }

    /// Only the endpoint `Y_{t_end}^{s, x, y}`.
    pub fn endpoint(
        &self,
        s: f64,
        t_end: f64,
        x: &SpectralField,
        y: &SpectralField,
        noise: &FrozenNoise,
    ) -> Result<Vec<f64>> {
        let mut last = Vec::new();
        self.drive(s, t_end, x, y, noise, |row| {
            last.clear();
            last.extend_from_slice(row)
        })?;
        Ok(last)
    }

    fn drive(
        &self,
        s: f64,
        t_end: f64,
        x: &SpectralField,
        y: &SpectralField,
        noise: &FrozenNoise,
        mut visit: impl FnMut(&[f64]),
    ) -> Result<f64> {
        crate::error::check_dim(self.model.dim(), x.dim())?;
        crate::error::check_dim(self.model.dim(), y.dim())?;
        let (steps, h) = self.plan(s, t_end)?;
        let law = self.law_for(h)?;
        let grid = self.model.grid();
        let mut u = y.coeffs().to_vec();
        let mut w = Work {
            drift: vec![0.0; u.len()],
            ..Work::default()
        };
        visit(&u);
        for j in 0..steps {
            let t = s + j as f64 * h;
            eval_into(&self.g, t, x.coeffs(), &u, grid, &mut w.scratch, &mut w.drift);
            law.apply(&mut u, &w.drift, noise.stream_at(t), j as u64);
            visit(&u);
        }
        Ok(h)
    }
}

/// Convenience wrapper: one frozen path with the default `G`.
pub fn simulate_frozen(
    model: &ValidatedModel,
    s: f64,
    t_end: f64,
    x: &SpectralField,
    y: &SpectralField,
    h_max: f64,
    noise: &FrozenNoise,
) -> Result<FrozenRun> {
    FrozenStepper::new(model, h_max)?.run(s, t_end, x, y, noise)
}

/// Block-frozen copy of the fast component: on each block
/// `[k delta, (k + 1) delta)` it restarts from `Y_{k delta}` and evolves with
/// the slow input frozen at `X_{k delta}`, reusing the base run's fast noise.
pub fn simulate_auxiliary(model: &ValidatedModel, base: &Trajectory, delta: f64) -> Result<Vec<Vec<f64>>> {
    let (Some(eps), Some(fast_key)) = (base.eps, base.fast_key) else {
        return Err(Error::config("auxiliary process needs a slow-fast base trajectory"));
    };
    if base.ys.is_none() {
        return Err(Error::config("base trajectory did not record the fast component"));
    }
    let dt = base.grid.dt();
    let q = delta / dt;
    if !(delta > 0.0) || (q - q.round()).abs() > 1e-9 * q.max(1.0) || q.round() < 1.0 {
        return Err(Error::config(format!(
            "block length {delta} is not a positive multiple of the macro step {dt}"
        )));
    }
    let block = q.round() as usize;
    let stepper = SlowFastStepper::new(model, dt, eps, base.fast_substeps)?;
    let fast = NoiseStream::from_key(fast_key);
    let h = stepper.fast_step();
    let n_sub = base.fast_substeps;
    let mut out = Vec::with_capacity(base.len());
    let mut w = Work::default();
    let mut y = Vec::new();
    let mut frozen = Vec::new();
    for n in 0..base.len() {
        if n % block == 0 {
            y = base.y(n).unwrap().to_vec();
            frozen = base.x(n).to_vec();
        }
        out.push(y.clone());
        if n == base.grid.macro_steps {
            break;
        }
        fast_block(
            &model.drift_g().kind,
            &stepper.fast,
            model.grid(),
            n as f64 * dt / eps,
            h,
            &frozen,
            &mut y,
            &fast,
            (n * n_sub) as u64,
            n_sub,
            &mut w,
        );
    }
    Ok(out)
}
