//! Shoebox-room impulse responses by the image-source method, Schroeder RT60
//! estimation, and seeded sampling of a room corpus.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_MAX_ORDER: u32 = 40;
/// Minimum distance between a source or microphone and any wall.
pub const WALL_MARGIN: f64 = 0.1;
/// Fractional-delay kernel length (Hann-windowed sinc).
pub const KERNEL_TAPS: usize = 81;
/// Images weaker than this fraction of the direct path are skipped.
pub const AMPLITUDE_CUTOFF: f64 = 1e-6;
pub const POINTS_PER_ROOM: usize = 100;

const KERNEL_HALF: i64 = (KERNEL_TAPS / 2) as i64;

/// Box room with one absorption coefficient per surface, ordered
/// `[x = 0, x = length, y = 0, y = width, z = 0, z = height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// `[length, width, height]` in meters.
    pub dims: [f64; 3],
    pub absorption: [f64; 6],
    pub source: [f64; 3],
    pub mic: [f64; 3],
    pub sample_rate: u32,
    pub max_order: u32,
}

impl RoomSpec {
    /// Uniform absorption on all six surfaces.
    pub fn uniform(
        dims: [f64; 3],
        alpha: f64,
        source: [f64; 3],
        mic: [f64; 3],
        sample_rate: u32,
    ) -> Self {
        Self {
            dims,
            absorption: [alpha; 6],
            source,
            mic,
            sample_rate,
            max_order: DEFAULT_MAX_ORDER,
        }
    }

    pub fn with_max_order(mut self, max_order: u32) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d.is_nan() || d <= 0.0) {
            return Err(Error::DegenerateRoom);
        }
        if self.sample_rate == 0 {
            return Err(Error::ZeroSampleRate);
        }
        if let Some(&a) = self.absorption.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidAbsorption(a));
        }
        let inside = |p: &[f64; 3]| {
            p.iter()
                .zip(&self.dims)
                .all(|(&c, &d)| c >= WALL_MARGIN && c <= d - WALL_MARGIN)
        };
        if !inside(&self.source) {
            return Err(Error::PositionOutsideRoom("source"));
        }
        if !inside(&self.mic) {
            return Err(Error::PositionOutsideRoom("microphone"));
        }
        if self.source == self.mic {
            return Err(Error::CoincidentPositions);
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [l, w, h] = self.dims;
        2.0 * (l * w + l * h + w * h)
    }

    /// Sabine reverberation time `0.161 V / sum(S_i alpha_i)`.
    pub fn sabine_rt60(&self) -> f64 {
        let [l, w, h] = self.dims;
        let areas = [w * h, w * h, l * h, l * h, l * w, l * w];
        let absorbing: f64 = areas.iter().zip(&self.absorption).map(|(s, a)| s * a).sum();
        0.161 * self.volume() / absorbing
    }

    pub fn source_mic_distance(&self) -> f64 {
        distance(&self.source, &self.mic)
    }

    /// Direct-path delay in (fractional) samples.
    pub fn direct_delay(&self) -> f64 {
        self.source_mic_distance() / SPEED_OF_SOUND * self.sample_rate as f64
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}

/// Corpus coordinates of an impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IrRef {
    pub room_id: u32,
    pub point_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub h: AudioBuffer,
    pub room_id: u32,
    pub point_id: u32,
    /// `None` for responses that were not simulated (identity, imports).
    pub spec: Option<RoomSpec>,
    pub rt60_est: Option<f64>,
}

impl ImpulseResponse {
    /// A unit impulse: convolving with it leaves a signal unchanged.
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            h: AudioBuffer::from_parts(vec![1.0], sample_rate),
            room_id: 0,
            point_id: 0,
            spec: None,
            rt60_est: None,
        }
    }

    pub fn ir_ref(&self) -> IrRef {
        IrRef {
            room_id: self.room_id,
            point_id: self.point_id,
        }
    }

    pub fn with_ref(mut self, r: IrRef) -> Self {
        self.room_id = r.room_id;
        self.point_id = r.point_id;
        self
    }
}

/// Index of the first sample whose magnitude reaches half the response peak.
pub fn first_arrival_index(h: &[f32]) -> Option<usize> {
    let peak = h.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    (peak > 0.0)
        .then(|| h.iter().position(|s| s.abs() >= 0.5 * peak))
        .flatten()
}

/// Per-axis image: coordinate plus reflection counts on the low and high wall.
#[derive(Clone, Copy)]
struct AxisImage {
    coord: f64,
    order: u32,
    gain: f64,
}

fn axis_images(source: f64, len: f64, r_low: f64, r_high: f64, max_order: u32) -> Vec<AxisImage> {
    let n_max = max_order as i64;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..=1i64 {
            let low = (n - q).unsigned_abs() as u32;
            let high = n.unsigned_abs() as u32;
            let order = low + high;
            if order > max_order {
                continue;
            }
            out.push(AxisImage {
                coord: (1 - 2 * q) as f64 * source + 2.0 * n as f64 * len,
                order,
                gain: powi(r_low, low) * powi(r_high, high),
            });
        }
    }
    out.sort_by_key(|a| a.order);
    out
}

fn powi(base: f64, exp: u32) -> f64 {
    (0..exp).fold(1.0, |acc, _| acc * base)
}

/// Renders the impulse response of `spec` with the image-source method.
///
/// Every image with total reflection order up to `max_order` contributes
/// `prod(sqrt(1 - alpha)) / (4 pi d)` at delay `d / c`, spread over an 81-tap
/// Hann-windowed sinc. Images below [`AMPLITUDE_CUTOFF`] of the direct path
/// are dropped.
pub fn simulate_rir(spec: &RoomSpec) -> Result<ImpulseResponse> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let refl: Vec<f64> = spec
        .absorption
        .iter()
        .map(|a| libm::sqrt(1.0 - a))
        .collect();
    let axes: Vec<Vec<AxisImage>> = (0..3)
        .map(|i| {
            axis_images(
                spec.source[i],
                spec.dims[i],
                refl[2 * i],
                refl[2 * i + 1],
                spec.max_order,
            )
        })
        .collect();

    let direct = spec.source_mic_distance();
    let floor = AMPLITUDE_CUTOFF / (4.0 * PI * direct);
    let mut taps: Vec<(f64, f64)> = Vec::new();
    for ix in &axes[0] {
        let dx = ix.coord - spec.mic[0];
        for iy in &axes[1] {
            if ix.order + iy.order > spec.max_order {
                break;
            }
            let dy = iy.coord - spec.mic[1];
            let gxy = ix.gain * iy.gain;
            for iz in &axes[2] {
                if ix.order + iy.order + iz.order > spec.max_order {
                    break;
                }
                let g = gxy * iz.gain;
                if g == 0.0 {
                    continue;
                }
                let dz = iz.coord - spec.mic[2];
                let d = libm::sqrt(dx * dx + dy * dy + dz * dz);
                let amp = g / (4.0 * PI * d);
                if amp < floor {
                    continue;
                }
                taps.push((d / SPEED_OF_SOUND * fs, amp));
            }
        }
    }

    let latest = taps.iter().fold(0.0f64, |m, t| m.max(t.0));
    let len = libm::round(latest) as usize + KERNEL_HALF as usize + 1;
    let mut h = vec![0.0f64; len];
    for &(delay, amp) in &taps {
        add_fractional_impulse(&mut h, delay, amp);
    }
    let samples: Vec<f32> = h.iter().map(|&v| v as f32).collect();
    Ok(ImpulseResponse {
        h: AudioBuffer::new(samples, spec.sample_rate)?,
        room_id: 0,
        point_id: 0,
        spec: Some(*spec),
        rt60_est: None,
    })
}

/// Adds `amp * sinc(n - delay) * hann(n - delay)` for the 81 taps around `delay`.
fn add_fractional_impulse(h: &mut [f64], delay: f64, amp: f64) {
    let center = libm::round(delay) as i64;
    let frac = center as f64 - delay;
    if frac == 0.0 {
        if let Some(v) = h.get_mut(center as usize) {
            *v += amp;
        }
        return;
    }
    // sin(pi (k + frac)) = (-1)^k sin(pi frac)
    let s0 = libm::sin(PI * frac) / PI;
    // hann(u) = 0.5 (1 + cos(2 pi u / 81)), rotated one tap at a time
    let step = 2.0 * PI / KERNEL_TAPS as f64;
    let (sin_step, cos_step) = (libm::sin(step), libm::cos(step));
    let start = -KERNEL_HALF as f64 + frac;
    let (mut c, mut s) = (libm::cos(step * start), libm::sin(step * start));
    for k in -KERNEL_HALF..=KERNEL_HALF {
        let n = center + k;
        if n >= 0 && (n as usize) < h.len() {
            let u = k as f64 + frac;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            h[n as usize] += amp * sign * s0 / u * 0.5 * (1.0 + c);
        }
        (c, s) = (c * cos_step - s * sin_step, s * cos_step + c * sin_step);
    }
}

/// Schroeder backward-integrated energy decay in dB relative to total energy.
pub fn energy_decay_curve(h: &[f32]) -> Vec<f64> {
    let mut acc = 0.0f64;
    let mut edc: Vec<f64> = h
        .iter()
        .rev()
        .map(|&s| {
            acc += s as f64 * s as f64;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|&e| 10.0 * libm::log10(e / total)).collect()
}

/// RT60 from a straight-line fit to the decay curve between -5 and -25 dB,
/// extrapolated to -60 dB.
pub fn estimate_rt60(h: &AudioBuffer) -> Result<f64> {
    if h.energy() <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let edc = energy_decay_curve(h.samples());
    let start = edc
        .iter()
        .position(|&d| d <= -5.0)
        .ok_or(Error::InsufficientDecay)?;
    let end = edc
        .iter()
        .position(|&d| d <= -25.0)
        .ok_or(Error::InsufficientDecay)?;
    let fs = h.sample_rate() as f64;
    let points: Vec<(f64, f64)> = (start..=end)
        .filter(|&i| edc[i].is_finite())
        .map(|i| (i as f64 / fs, edc[i]))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientDecay);
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_d = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_d)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.0 - mean_t)).sum();
    let slope = sxy / sxx;
    if slope.is_nan() || slope >= 0.0 {
        return Err(Error::InsufficientDecay);
    }
    Ok(-60.0 / slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomClass {
    Small,
    Medium,
    Large,
}

impl RoomClass {
    pub const ALL: [RoomClass; 3] = [RoomClass::Small, RoomClass::Medium, RoomClass::Large];

    /// Floor side-length range in meters.
    pub fn side_range(self) -> (f64, f64) {
        match self {
            RoomClass::Small => (1.0, 10.0),
            RoomClass::Medium => (10.0, 30.0),
            RoomClass::Large => (30.0, 50.0),
        }
    }

    /// Class of a room from its longer floor side.
    pub fn classify(dims: &[f64; 3]) -> RoomClass {
        let side = dims[0].max(dims[1]);
        if side <= 10.0 {
            RoomClass::Small
        } else if side <= 30.0 {
            RoomClass::Medium
        } else {
            RoomClass::Large
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoomClass::Small => "small",
            RoomClass::Medium => "medium",
            RoomClass::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Positions {
    pub source: [f64; 3],
    pub mic: [f64; 3],
}

/// One row of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub ir_path: String,
    pub room_id: u32,
    pub point_id: u32,
    pub room_class: RoomClass,
    pub dims: [f64; 3],
    pub absorptions: [f64; 6],
    pub positions: Positions,
    pub seed: u64,
    pub max_order: u32,
}

impl CorpusEntry {
    pub fn ir_ref(&self) -> IrRef {
        IrRef {
            room_id: self.room_id,
            point_id: self.point_id,
        }
    }

    pub fn room_spec(&self, sample_rate: u32) -> RoomSpec {
        RoomSpec {
            dims: self.dims,
            absorption: self.absorptions,
            source: self.positions.source,
            mic: self.positions.mic,
            sample_rate,
            max_order: self.max_order,
        }
    }

    /// Simulates this entry's response, tagged with its ids and RT60.
    pub fn render(&self, sample_rate: u32) -> Result<ImpulseResponse> {
        let mut ir = simulate_rir(&self.room_spec(sample_rate))?.with_ref(self.ir_ref());
        ir.rt60_est = estimate_rt60(&ir.h).ok();
        Ok(ir)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sample_rate: u32,
    pub seed: u64,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn class_counts(&self) -> [(RoomClass, usize); 3] {
        RoomClass::ALL.map(|c| (c, self.entries.iter().filter(|e| e.room_class == c).count()))
    }
}

/// Draws `count` source/microphone placements over `ceil(count / 100)` rooms.
///
/// Room `r` takes class `r mod 3`, side lengths uniform in the class range,
/// height uniform in 2-5 m and per-surface absorption uniform in 0.1-0.9.
/// Each room draws from its own ChaCha stream, so the result depends only on
/// `seed` and not on the order in which rooms are rendered.
pub fn sample_corpus(count: usize, seed: u64, sample_rate: u32) -> CorpusManifest {
    let rooms = count.div_ceil(POINTS_PER_ROOM);
    let mut entries = Vec::with_capacity(count);
    for room in 0..rooms {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(room as u64);
        let class = RoomClass::ALL[room % 3];
        let (lo, hi) = class.side_range();
        let dims = [
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
            rng.random_range(2.0..=5.0),
        ];
        let absorptions: [f64; 6] = core::array::from_fn(|_| rng.random_range(0.1..=0.9));
        let points = POINTS_PER_ROOM.min(count - room * POINTS_PER_ROOM);
        for point in 0..points {
            let positions = loop {
                let mut draw = || -> [f64; 3] {
                    core::array::from_fn(|i| rng.random_range(WALL_MARGIN..=dims[i] - WALL_MARGIN))
                };
                let (source, mic) = (draw(), draw());
                if distance(&source, &mic) >= WALL_MARGIN {
                    break Positions { source, mic };
                }
            };
            entries.push(CorpusEntry {
                ir_path: format!("ir/room{room:04}_p{point:03}.wav"),
                room_id: room as u32,
                point_id: point as u32,
                room_class: RoomClass::classify(&dims),
                dims,
                absorptions,
                positions,
                seed,
                max_order: DEFAULT_MAX_ORDER,
            });
        }
    }
    CorpusManifest {
        sample_rate,
        seed,
        entries,
    }
}
