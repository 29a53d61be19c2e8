//! Linear convolution of a note with a room impulse response.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::audio::{AudioBuffer, CANONICAL_LEN, CANONICAL_RATE, NORMALIZED_PEAK};
use crate::error::{Error, Result};
use crate::fft::{next_pow2, Complex, FftPlan, RealFft};
use crate::rir::{ImpulseResponse, IrRef};

/// Signal block length used when overlap-add needs a smaller transform than
/// a single padded FFT.
pub const OLA_BLOCK: usize = 1 << 16;

/// A note rendered through one room, cut back to the canonical 5 s.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionResult {
    pub audio: AudioBuffer,
    pub ir_ref: IrRef,
    pub gain_applied: f32,
}

fn check_rates(x: &AudioBuffer, h: &AudioBuffer) -> Result<()> {
    if x.sample_rate() != h.sample_rate() {
        return Err(Error::SampleRateMismatch(x.sample_rate(), h.sample_rate()));
    }
    Ok(())
}

/// Time-domain convolution, `|x| + |h| - 1` samples long.
pub fn convolve_direct(x: &AudioBuffer, h: &AudioBuffer) -> Result<AudioBuffer> {
    check_rates(x, h)?;
    let (xs, hs) = (x.samples(), h.samples());
    let mut out = vec![0.0f64; xs.len() + hs.len() - 1];
    for (i, &a) in xs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let a = a as f64;
        for (o, &b) in out[i..].iter_mut().zip(hs) {
            *o += a * b as f64;
        }
    }
    Ok(AudioBuffer::from_parts(to_f32(&out), x.sample_rate()))
}

/// FFT convolution; same result as [`convolve_direct`] up to rounding.
pub fn convolve_fft(x: &AudioBuffer, h: &AudioBuffer) -> Result<AudioBuffer> {
    check_rates(x, h)?;
    let out = Convolver::new().convolve(x.samples(), h.samples(), None);
    Ok(AudioBuffer::from_parts(to_f32(&out), x.sample_rate()))
}

/// Applies a room to a canonical note: convolve, keep the first 5 s, then
/// peak-normalize to 0.99.
pub fn apply_room(x: &AudioBuffer, ir: &ImpulseResponse) -> Result<ConvolutionResult> {
    Convolver::new().apply_room(x, ir)
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&s| s as f32).collect()
}

/// Reusable FFT convolution state. Plans are cached per transform size, so a
/// worker that convolves many signals builds each twiddle table once.
#[derive(Debug, Default)]
pub struct Convolver {
    plans: BTreeMap<usize, FftPlan>,
    scratch: Vec<Complex>,
    renderer: Option<RoomRenderer>,
}

impl Convolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn plan(&mut self, n: usize) -> &FftPlan {
        self.plans.entry(n).or_insert_with(|| FftPlan::new(n))
    }

    /// Linear convolution of `x` and `h`. With `out_len = Some(m)` only the
    /// first `m` output samples are computed; inputs are truncated to `m`
    /// beforehand since later samples cannot reach them.
    pub fn convolve(&mut self, x: &[f32], h: &[f32], out_len: Option<usize>) -> Vec<f64> {
        let (x, h) = match out_len {
            Some(m) => (&x[..x.len().min(m)], &h[..h.len().min(m)]),
            None => (x, h),
        };
        let full = x.len() + h.len() - 1;
        let want = out_len.map_or(full, |m| m.min(full));
        let single = next_pow2(full);
        let blocked = next_pow2(OLA_BLOCK + h.len() - 1);
        let mut out = if blocked < single {
            let mut out = vec![0.0; full];
            for (b, block) in x.chunks(OLA_BLOCK).enumerate() {
                let part = self.convolve_once(block, h, blocked);
                for (o, v) in out[b * OLA_BLOCK..].iter_mut().zip(part) {
                    *o += v;
                }
            }
            out
        } else {
            self.convolve_once(x, h, single)
        };
        out.truncate(want);
        out.resize(out_len.unwrap_or(full), 0.0);
        out
    }

    /// One zero-padded transform of size `n >= |x| + |h| - 1`. Both real
    /// inputs share a single complex FFT: with z = x + i h,
    /// X[k] H[k] = (Z[k]^2 - conj(Z[n-k])^2) / 4i.
    fn convolve_once(&mut self, x: &[f32], h: &[f32], n: usize) -> Vec<f64> {
        let full = x.len() + h.len() - 1;
        debug_assert!(n >= full);
        let mut z = core::mem::take(&mut self.scratch);
        z.clear();
        z.resize(n, Complex::ZERO);
        for (v, &s) in z.iter_mut().zip(x) {
            v.re = s as f64;
        }
        for (v, &s) in z.iter_mut().zip(h) {
            v.im = s as f64;
        }
        self.plan(n);
        let plan = &self.plans[&n];
        plan.forward(&mut z);
        let mut y = vec![Complex::ZERO; n];
        for k in 0..n {
            let a = z[k];
            let b = z[(n - k) % n].conj();
            let d = a * a - b * b;
            // divide by 4i
            y[k] = Complex::new(d.im * 0.25, -d.re * 0.25);
        }
        plan.inverse(&mut y);
        self.scratch = z;
        y[..full].iter().map(|c| c.re).collect()
    }

    pub fn apply_room(
        &mut self,
        x: &AudioBuffer,
        ir: &ImpulseResponse,
    ) -> Result<ConvolutionResult> {
        self.renderer
            .get_or_insert_with(RoomRenderer::new)
            .apply_room(x, ir)
    }
}

/// Spectra of one canonical note at every size [`RoomRenderer`] uses.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteSpectrum {
    bins: Vec<Vec<Complex>>,
}

/// Spectrum of one impulse response, cut to 5 s.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpectrum {
    size: usize,
    bins: Vec<Complex>,
    ir_ref: IrRef,
}

/// Read-only transform state for rendering canonical notes through rooms.
/// A note's spectrum and a room's spectrum are computed once and combined
/// per pair, so scanning many notes against many rooms costs one half-size
/// inverse transform per pair. Results do not depend on what else was
/// rendered: [`Convolver::apply_room`] runs the same arithmetic.
#[derive(Debug, Clone)]
pub struct RoomRenderer {
    plans: Vec<RealFft>,
}

impl Default for RoomRenderer {
    fn default() -> Self {
        Self::new()
    }
}

impl RoomRenderer {
    pub fn new() -> Self {
        let smallest = next_pow2(CANONICAL_LEN);
        let largest = next_pow2(2 * CANONICAL_LEN - 1);
        let plans = core::iter::successors(Some(smallest), |&n| (n < largest).then_some(2 * n))
            .map(RealFft::new)
            .collect();
        Self { plans }
    }

    fn slot(&self, ir_len: usize) -> usize {
        let n = next_pow2(CANONICAL_LEN + ir_len.min(CANONICAL_LEN) - 1);
        self.plans
            .iter()
            .position(|p| p.len() == n)
            .expect("size within planned range")
    }

    pub fn note_spectrum(&self, x: &AudioBuffer) -> Result<NoteSpectrum> {
        x.ensure_canonical()?;
        Ok(NoteSpectrum {
            bins: self.plans.iter().map(|p| p.forward(x.samples())).collect(),
        })
    }

    pub fn room_spectrum(&self, ir: &ImpulseResponse) -> Result<RoomSpectrum> {
        if ir.h.sample_rate() != CANONICAL_RATE {
            return Err(Error::SampleRateMismatch(
                CANONICAL_RATE,
                ir.h.sample_rate(),
            ));
        }
        let h = ir.h.samples();
        let size = self.slot(h.len());
        let h = &h[..h.len().min(CANONICAL_LEN)];
        Ok(RoomSpectrum {
            size,
            bins: self.plans[size].forward(h),
            ir_ref: ir.ir_ref(),
        })
    }

    /// The note through the room: first 5 s, peak-normalized to 0.99.
    pub fn render(&self, note: &NoteSpectrum, room: &RoomSpectrum) -> ConvolutionResult {
        self.finish(&note.bins[room.size], room)
    }

    pub fn apply_room(&self, x: &AudioBuffer, ir: &ImpulseResponse) -> Result<ConvolutionResult> {
        let room = self.room_spectrum(ir)?;
        x.ensure_canonical()?;
        Ok(self.finish(&self.plans[room.size].forward(x.samples()), &room))
    }

    fn finish(&self, note: &[Complex], room: &RoomSpectrum) -> ConvolutionResult {
        let product: Vec<Complex> = note.iter().zip(&room.bins).map(|(&a, &b)| a * b).collect();
        let mut y = self.plans[room.size].inverse(&product);
        y.truncate(CANONICAL_LEN);
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gain = if peak > 0.0 {
            NORMALIZED_PEAK as f64 / peak
        } else {
            1.0
        };
        ConvolutionResult {
            audio: AudioBuffer::from_parts(
                y.iter().map(|&v| (v * gain) as f32).collect(),
                CANONICAL_RATE,
            ),
            ir_ref: room.ir_ref,
            gain_applied: gain as f32,
        }
    }
}
