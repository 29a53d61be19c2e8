//! Mono sample buffers and conversion to the pipeline's fixed format
//! (mono, 16 kHz, 5 s).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const CANONICAL_RATE: u32 = 16_000;
pub const CANONICAL_SECONDS: f64 = 5.0;
pub const CANONICAL_LEN: usize = 80_000;

/// Peak level every scored signal is normalized to.
pub const NORMALIZED_PEAK: f32 = 0.99;

/// Resampler kernel length, counted at the lower of the two rates.
const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Above this many distinct fractional phases the kernel is evaluated per sample.
const MAX_POLYPHASE_TABLE: u64 = 4096;

/// A mono sequence of finite samples at a positive sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::ZeroSampleRate);
        }
        if samples.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// `len` zero samples.
    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum()
    }

    pub fn is_canonical(&self) -> bool {
        self.sample_rate == CANONICAL_RATE && self.samples.len() == CANONICAL_LEN
    }

    pub(crate) fn ensure_canonical(&self) -> Result<()> {
        if self.is_canonical() {
            Ok(())
        } else {
            Err(Error::NonCanonical {
                expected: CANONICAL_LEN,
                len: self.samples.len(),
                rate: self.sample_rate,
            })
        }
    }

    /// Builds a buffer from samples already known to satisfy the invariants.
    pub(crate) fn from_parts(samples: Vec<f32>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0 && !samples.is_empty());
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }
}

/// Resample to 16 kHz and pad or trim to exactly 5 s.
pub fn canonicalize(buffer: &AudioBuffer) -> AudioBuffer {
    canonicalize_to(buffer, CANONICAL_RATE, CANONICAL_SECONDS)
}

/// Resample to `target_rate`, then keep the first `target_seconds` of the
/// signal, zero-padding the tail when it is shorter.
pub fn canonicalize_to(buffer: &AudioBuffer, target_rate: u32, target_seconds: f64) -> AudioBuffer {
    let target_len = libm::round(target_seconds * target_rate as f64) as usize;
    let mut samples = if buffer.sample_rate == target_rate {
        buffer.samples[..buffer.samples.len().min(target_len)].to_vec()
    } else {
        resample(&buffer.samples, buffer.sample_rate, target_rate)
    };
    samples.resize(target_len, 0.0);
    AudioBuffer::from_parts(samples, target_rate)
}

/// Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.
///
/// The kernel spans 64 taps at the lower of the two rates and its cutoff sits
/// at the lower Nyquist frequency. Output length is `ceil(len * to / from)`.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    assert!(from > 0 && to > 0, "sample rates must be positive");
    if from == to {
        return samples.to_vec();
    }
    let n = samples.len() as u64;
    let out_len = (n * to as u64).div_ceil(from as u64) as usize;
    let cutoff = if to < from {
        to as f64 / from as f64
    } else {
        1.0
    };
    let half_width = (RESAMPLE_TAPS / 2) as f64 / cutoff;
    let kernel = Kernel::new(cutoff, half_width);

    let g = gcd(from as u64, to as u64);
    let phases = to as u64 / g;
    let reach = libm::ceil(half_width) as i64;
    let table = (phases <= MAX_POLYPHASE_TABLE).then(|| {
        // phase p covers output positions whose input time has fractional part p / phases
        (0..phases)
            .map(|p| {
                let frac = p as f64 / phases as f64;
                (-reach..=reach + 1)
                    .map(|d| kernel.eval(frac - d as f64))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });

    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        // input-domain time t = j * from / to = base + p / phases
        let num = j * from as u64;
        let base = (num / to as u64) as i64;
        let p = ((num % to as u64) / g) as usize;
        let mut acc = 0.0f64;
        match &table {
            Some(table) => {
                for (idx, w) in table[p].iter().enumerate() {
                    let k = base - reach + idx as i64;
                    if k >= 0 && (k as u64) < n {
                        acc += w * samples[k as usize] as f64;
                    }
                }
            }
            None => {
                let t = num as f64 / to as f64;
                for k in (base - reach).max(0)..=(base + reach + 1).min(n as i64 - 1) {
                    acc += kernel.eval(t - k as f64) * samples[k as usize] as f64;
                }
            }
        }
        out.push(acc as f32);
    }
    out
}

/// Scales `samples` so the largest magnitude becomes `target`. Returns the
/// applied gain; silent input is left untouched with gain 1.
pub fn peak_normalize(samples: &mut [f32], target: f32) -> f32 {
    let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return 1.0;
    }
    let gain = target as f64 / peak as f64;
    for s in samples.iter_mut() {
        *s = (*s as f64 * gain) as f32;
    }
    gain as f32
}

/// Canonical, peak-normalized copy of a note: the exact signal the scorer sees.
pub fn prepare_for_scoring(buffer: &AudioBuffer) -> AudioBuffer {
    let mut canon = canonicalize(buffer);
    peak_normalize(&mut canon.samples, NORMALIZED_PEAK);
    canon
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(cutoff: f64, half_width: f64) -> Self {
        Self {
            cutoff,
            half_width,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, offset: f64) -> f64 {
        let u = offset / self.half_width;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * libm::sqrt(1.0 - u * u)) / self.i0_beta;
        self.cutoff * sinc(self.cutoff * offset) * window
    }
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = core::f64::consts::PI * x;
        libm::sin(px) / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
