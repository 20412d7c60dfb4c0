//! Symmetric alpha-stable sampling and exact per-mode stochastic convolutions.
//!
//! Randomness is counter based: a [`NoiseStream`] is identified by
//! `(seed, role, trajectory)` and every time index selects an independent
//! ChaCha8 stream under that key. Any increment can therefore be regenerated
//! from its coordinates alone, which is how coupled runs share noise and why
//! results do not depend on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spectral::{DiagonalOperator, SequenceSpec, SpectralField};

/// Stability index `alpha`, restricted to `(1, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StableIndex(f64);

impl StableIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 1.0 && alpha < 2.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::domain(format!("stable index must lie in (1, 2), got {alpha}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for StableIndex {
    type Error = Error;
    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<StableIndex> for f64 {
    fn from(idx: StableIndex) -> f64 {
        idx.0
    }
}

/// Per-mode noise intensities (`rho_k` for the slow noise, `gamma_k` for the fast one).
///
/// Zero entries are accepted and switch a mode's noise off.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseWeights(Vec<f64>);

impl NoiseWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(k) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(format!(
                "noise weight of mode {} must be finite and nonnegative",
                k + 1
            )));
        }
        Ok(Self(weights))
    }

    pub fn from_spec(spec: &SequenceSpec, dim: usize) -> Result<Self> {
        Self::new(spec.materialize(dim)?)
    }

    pub fn uniform(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|w| *w == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseRole {
    /// `L`, driving the slow component.
    SlowNoiseL,
    /// `Z` on `t >= 0`, driving the fast component.
    FastNoiseZ,
    /// Independent copy of `Z` used for negative times.
    FrozenNegativeTimeCopy,
}

impl NoiseRole {
    fn tag(self) -> u64 {
        match self {
            NoiseRole::SlowNoiseL => 0x4c31_5f53_4c4f_5700,
            NoiseRole::FastNoiseZ => 0x5a31_5f46_4153_5400,
            NoiseRole::FrozenNegativeTimeCopy => 0x5a32_5f4e_4547_5400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub role: NoiseRole,
    pub trajectory: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes an arbitrary list of words into a 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

impl StreamKey {
    pub fn new(seed: u64, role: NoiseRole, trajectory: u64) -> Self {
        Self { seed, role, trajectory }
    }

    fn chacha_key(&self) -> [u8; 32] {
        let k0 = splitmix64(self.seed ^ 0x243f_6a88_85a3_08d3);
        let k1 = splitmix64(k0 ^ self.role.tag());
        let k2 = splitmix64(k1 ^ splitmix64(self.trajectory));
        let k3 = splitmix64(k2 ^ 0x1319_8a2e_0370_7344);
        let mut key = [0u8; 32];
        for (chunk, word) in key.chunks_exact_mut(8).zip([k0, k1, k2, k3]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        key
    }
}

/// Replayable source of randomness for one `(seed, role, trajectory)`.
///
/// The cursor is a time index; each index owns an independent ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    key: StreamKey,
    chacha_key: [u8; 32],
    cursor: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, role: NoiseRole, trajectory: u64) -> Self {
        Self::from_key(StreamKey::new(seed, role, trajectory))
    }

    pub fn from_key(key: StreamKey) -> Self {
        Self {
            chacha_key: key.chacha_key(),
            key,
            cursor: 0,
        }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn seek(&mut self, index: u64) {
        self.cursor = index;
    }

    /// Generator for time index `index`, independent of the cursor.
    pub fn block(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.chacha_key);
        rng.set_stream(index);
        rng
    }

    /// Generator at the cursor; advances the cursor by one index.
    pub fn next_block(&mut self) -> (u64, ChaCha8Rng) {
        let index = self.cursor;
        self.cursor += 1;
        (index, self.block(index))
    }
}

/// Uniform on the open interval `(0, 1)` from one 64-bit draw.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One standard symmetric stable variate, `E[e^{ihS}] = e^{-|h|^alpha}`.
///
/// Chambers-Mallows-Stuck transform of a uniform angle and a unit exponential;
/// consumes exactly two 64-bit draws from `rng`.
#[inline]
pub fn sample_standard_symmetric_stable<R: RngCore + ?Sized>(idx: StableIndex, rng: &mut R) -> f64 {
    let alpha = idx.0;
    let u = std::f64::consts::PI * (open_unit(rng.next_u64()) - 0.5);
    let e = -open_unit(rng.next_u64()).ln();
    let inv_alpha = 1.0 / alpha;
    (alpha * u).sin() / u.cos().powf(inv_alpha) * (((1.0 - alpha) * u).cos() / e).powf((1.0 - alpha) * inv_alpha)
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {value}")))
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight >= 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("noise weight must be nonnegative, got {weight}")))
    }
}

/// Stable scale of `int_0^dt weight e^{-eigenvalue (dt - r)} dZ_r`.
pub fn convolution_scale(eigenvalue: f64, weight: f64, dt: f64, idx: StableIndex) -> Result<f64> {
    check_positive("eigenvalue", eigenvalue)?;
    check_positive("dt", dt)?;
    check_weight(weight)?;
    Ok(scale_unchecked(eigenvalue, weight, dt, idx.0))
}

#[inline]
fn scale_unchecked(eigenvalue: f64, weight: f64, dt: f64, alpha: f64) -> f64 {
    let rate = alpha * eigenvalue;
    weight * (-(-rate * dt).exp_m1() / rate).powf(1.0 / alpha)
}

/// Scale of `eps^{-1/alpha} int_0^dt e^{-(eigenvalue/eps)(dt - r)} weight dZ_r`.
///
/// Equal to `convolution_scale(eigenvalue, weight, dt / eps)` by self-similarity,
/// and bounded uniformly in `eps`.
pub fn rescaled_fast_convolution_scale(
    eigenvalue: f64,
    weight: f64,
    dt: f64,
    eps: f64,
    idx: StableIndex,
) -> Result<f64> {
    check_positive("eps", eps)?;
    check_positive("eigenvalue", eigenvalue)?;
    check_positive("dt", dt)?;
    check_weight(weight)?;
    Ok(scale_unchecked(eigenvalue, weight, dt / eps, idx.0))
}

/// Law of one exact stochastic-convolution increment over a fixed step:
/// mode `k` is `scales[k] * S_k` with `S_k` i.i.d. standard symmetric stable.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementLaw {
    alpha: StableIndex,
    scales: Vec<f64>,
}

impl IncrementLaw {
    /// Increment of `int e^{(dt-r)A} dL_r` over a step `dt`.
    pub fn exact(op: &DiagonalOperator, weights: &NoiseWeights, dt: f64, idx: StableIndex) -> Result<Self> {
        check_dim(op.dim(), weights.dim())?;
        let scales = op
            .eigenvalues()
            .iter()
            .zip(weights.values())
            .map(|(l, w)| convolution_scale(*l, *w, dt, idx))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha: idx, scales })
    }

    /// Increment of the fast noise `eps^{-1/alpha} int e^{(dt-r)B/eps} dZ_r`.
    pub fn fast(op: &DiagonalOperator, weights: &NoiseWeights, dt: f64, eps: f64, idx: StableIndex) -> Result<Self> {
        check_dim(op.dim(), weights.dim())?;
        let scales = op
            .eigenvalues()
            .iter()
            .zip(weights.values())
            .map(|(l, w)| rescaled_fast_convolution_scale(*l, *w, dt, eps, idx))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha: idx, scales })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Adds the increment for time index `index` of `stream` into `out`.
    #[inline]
    pub fn add_increment(&self, stream: &NoiseStream, index: u64, out: &mut [f64]) {
        let mut rng = stream.block(index);
        for (o, s) in out.iter_mut().zip(&self.scales) {
            let z = sample_standard_symmetric_stable(self.alpha, &mut rng);
            *o += s * z;
        }
    }

    pub fn sample_at(&self, stream: &NoiseStream, index: u64) -> SpectralField {
        let mut out = vec![0.0; self.scales.len()];
        self.add_increment(stream, index, &mut out);
        SpectralField::from_vec_unchecked(out)
    }
}

/// Draws the convolution increment over `dt` at the stream cursor and advances it.
pub fn sample_convolution_increment(
    op: &DiagonalOperator,
    weights: &NoiseWeights,
    dt: f64,
    idx: StableIndex,
    stream: &mut NoiseStream,
) -> Result<SpectralField> {
    let law = IncrementLaw::exact(op, weights, dt, idx)?;
    let (index, _) = stream.next_block();
    Ok(law.sample_at(stream, index))
}
