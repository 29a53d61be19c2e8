//! Log-mel spectrogram for the scorer, plus the frame-level energy envelope
//! and spectral centroid used in reports.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::audio::{AudioBuffer, CANONICAL_RATE};
use crate::error::Result;
use crate::fft::{Complex, FftPlan};

pub const N_MELS: usize = 96;
pub const N_FRAMES: usize = 500;
pub const HOP: usize = 160;
pub const FRAME_LEN: usize = 400;
pub const N_FFT: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
/// Power floor before the log; `ln(1e-10)` is the smallest mel value.
pub const POWER_FLOOR: f64 = 1e-10;
/// Frames whose summed STFT magnitude is below this report a zero centroid.
pub const CENTROID_SILENCE: f64 = 1e-8;

pub fn log_floor() -> f32 {
    libm::log(POWER_FLOOR) as f32
}

/// Log-power mel spectrogram stored mel-major: `values[mel * n_frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    n_mels: usize,
    n_frames: usize,
    values: Vec<f32>,
}

impl MelSpectrogram {
    /// Panics if `values.len() != n_mels * n_frames`.
    pub fn from_values(n_mels: usize, n_frames: usize, values: Vec<f32>) -> Self {
        assert_eq!(
            values.len(),
            n_mels * n_frames,
            "value count does not match shape"
        );
        Self {
            n_mels,
            n_frames,
            values,
        }
    }

    pub fn filled(n_mels: usize, n_frames: usize, value: f32) -> Self {
        Self::from_values(n_mels, n_frames, vec![value; n_mels * n_frames])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_mels, self.n_frames)
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f32] {
        &self.values[mel * self.n_frames..(mel + 1) * self.n_frames]
    }
}

/// Per-frame RMS and spectral centroid on the same framing as the mel
/// spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrace {
    pub energy_envelope: Vec<f32>,
    pub spectral_centroid: Vec<f32>,
}

impl FeatureTrace {
    pub fn mean_centroid(&self) -> f64 {
        self.spectral_centroid
            .iter()
            .map(|&c| c as f64)
            .sum::<f64>()
            / self.spectral_centroid.len() as f64
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters over the 0-8 kHz band, peak weight 1.
#[derive(Debug, Clone)]
pub struct MelFilterBank {
    /// Edge frequencies: filter `m` rises from `edges[m]`, peaks at
    /// `edges[m + 1]` and falls to `edges[m + 2]`.
    edges: Vec<f64>,
    /// `(first_bin, weights)` for each filter.
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterBank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let n_bins = n_fft / 2 + 1;
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |w| w.0);
                (first, weights.into_iter().map(|w| w.1).collect())
            })
            .collect();
        Self { edges, filters }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn center_hz(&self, mel: usize) -> f64 {
        self.edges[mel + 1]
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Reusable STFT front end. Build once and share; every method takes `&self`.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    plan: FftPlan,
    window: Vec<f64>,
    bank: MelFilterBank,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureExtractor {
    pub fn new() -> Self {
        // periodic Hann
        let window = (0..FRAME_LEN)
            .map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / FRAME_LEN as f64))
            .collect();
        Self {
            plan: FftPlan::new(N_FFT),
            window,
            bank: MelFilterBank::new(N_MELS, N_FFT, CANONICAL_RATE),
        }
    }

    pub fn filter_bank(&self) -> &MelFilterBank {
        &self.bank
    }

    pub fn mel_spectrogram(&self, x: &AudioBuffer) -> Result<MelSpectrogram> {
        Ok(self.analyze(x, true, false)?.0.expect("mel requested"))
    }

    pub fn energy_envelope(&self, x: &AudioBuffer) -> Result<Vec<f32>> {
        x.ensure_canonical()?;
        Ok(frames(x.samples())
            .map(|frame| {
                let ss: f64 = frame.iter().map(|&v| v * v).sum();
                libm::sqrt(ss / FRAME_LEN as f64) as f32
            })
            .collect())
    }

    pub fn spectral_centroid(&self, x: &AudioBuffer) -> Result<Vec<f32>> {
        Ok(self.analyze(x, false, true)?.1.expect("centroid requested"))
    }

    pub fn trace(&self, x: &AudioBuffer) -> Result<FeatureTrace> {
        Ok(FeatureTrace {
            energy_envelope: self.energy_envelope(x)?,
            spectral_centroid: self.spectral_centroid(x)?,
        })
    }

    fn analyze(
        &self,
        x: &AudioBuffer,
        want_mel: bool,
        want_centroid: bool,
    ) -> Result<(Option<MelSpectrogram>, Option<Vec<f32>>)> {
        x.ensure_canonical()?;
        let mut mel = want_mel.then(|| vec![0.0f32; N_MELS * N_FRAMES]);
        let mut centroid = want_centroid.then(|| Vec::with_capacity(N_FRAMES));
        let mut buf = vec![Complex::ZERO; N_FFT];
        let mut spectra = [vec![Complex::ZERO; N_BINS], vec![Complex::ZERO; N_BINS]];
        let mut power = vec![0.0f64; N_BINS];
        let mut mel_frame = vec![0.0f64; N_MELS];
        let bin_hz = CANONICAL_RATE as f64 / N_FFT as f64;
        let all: Vec<[f64; FRAME_LEN]> = frames(x.samples()).collect();
        // Two real frames share one complex transform (real and imaginary parts).
        for (pair, chunk) in all.chunks(2).enumerate() {
            buf.fill(Complex::ZERO);
            for (i, &w) in self.window.iter().enumerate() {
                buf[i].re = chunk[0][i] * w;
                if let Some(b) = chunk.get(1) {
                    buf[i].im = b[i] * w;
                }
            }
            self.plan.forward(&mut buf);
            for k in 0..N_BINS {
                let z = buf[k];
                let zc = buf[(N_FFT - k) % N_FFT].conj();
                spectra[0][k] = (z + zc).scale(0.5);
                let d = z - zc;
                spectra[1][k] = Complex::new(d.im * 0.5, -d.re * 0.5);
            }
            for (j, spectrum) in spectra.iter().enumerate().take(chunk.len()) {
                let t = 2 * pair + j;
                if let Some(mel) = mel.as_mut() {
                    for (p, b) in power.iter_mut().zip(spectrum) {
                        *p = b.norm_sqr();
                    }
                    self.bank.apply(&power, &mut mel_frame);
                    for (m, &v) in mel_frame.iter().enumerate() {
                        mel[m * N_FRAMES + t] = libm::log(v.max(POWER_FLOOR)) as f32;
                    }
                }
                if let Some(c) = centroid.as_mut() {
                    let (mut num, mut den) = (0.0, 0.0);
                    for (k, b) in spectrum.iter().enumerate() {
                        let mag = b.abs();
                        num += k as f64 * bin_hz * mag;
                        den += mag;
                    }
                    c.push(if den < CENTROID_SILENCE {
                        0.0
                    } else {
                        (num / den) as f32
                    });
                }
            }
        }
        Ok((
            mel.map(|v| MelSpectrogram::from_values(N_MELS, N_FRAMES, v)),
            centroid,
        ))
    }
}

/// `ceil(len / HOP)` frames of `FRAME_LEN` samples centered on multiples of
/// `HOP`, reflecting the signal at both ends.
fn frames(x: &[f32]) -> impl Iterator<Item = [f64; FRAME_LEN]> + '_ {
    let n = x.len() as i64;
    let count = x.len().div_ceil(HOP);
    (0..count).map(move |t| {
        let start = (t * HOP) as i64 - (FRAME_LEN / 2) as i64;
        core::array::from_fn(|i| {
            let mut j = start + i as i64;
            if j < 0 {
                j = -j;
            }
            if j >= n {
                j = 2 * (n - 1) - j;
            }
            x[j.clamp(0, n - 1) as usize] as f64
        })
    })
}

pub fn mel_spectrogram(x: &AudioBuffer) -> Result<MelSpectrogram> {
    FeatureExtractor::new().mel_spectrogram(x)
}

pub fn energy_envelope(x: &AudioBuffer) -> Result<Vec<f32>> {
    FeatureExtractor::new().energy_envelope(x)
}

pub fn spectral_centroid(x: &AudioBuffer) -> Result<Vec<f32>> {
    FeatureExtractor::new().spectral_centroid(x)
}

/// Relative prominence an envelope peak needs to count as a modulation peak.
pub const PEAK_PROMINENCE: f32 = 0.05;

/// Counts local maxima whose prominence is at least `min_prominence` times
/// the global maximum of `env`. A plateau counts once.
pub fn count_peaks(env: &[f32], min_prominence: f32) -> usize {
    let max = env.iter().fold(0.0f32, |m, &v| m.max(v));
    if max <= 0.0 {
        return 0;
    }
    let threshold = min_prominence * max;
    let n = env.len();
    let mut count = 0;
    let mut i = 1;
    while i + 1 < n {
        if env[i] > env[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && env[j + 1] == env[i] {
                j += 1;
            }
            if j + 1 < n && env[j + 1] < env[i] {
                let peak = env[i];
                let left = env[..i]
                    .iter()
                    .rev()
                    .take_while(|&&v| v <= peak)
                    .fold(peak, |m, &v| m.min(v));
                let right = env[j + 1..]
                    .iter()
                    .take_while(|&&v| v <= peak)
                    .fold(peak, |m, &v| m.min(v));
                if peak - left.max(right) >= threshold {
                    count += 1;
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    count
}
