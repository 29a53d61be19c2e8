//! Iterative radix-2 FFT over power-of-two sizes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, AddAssign, Mul, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        libm::hypot(self.re, self.im)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl AddAssign for Complex {
    fn add_assign(&mut self, o: Complex) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Precomputed twiddles and bit-reversal permutation for one transform size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<u32>,
}

impl FftPlan {
    /// Panics unless `n` is a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT size {n} is not a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (32 - bits)
                }
            })
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = sum x[n] e^{-2 pi i k n / N}`.
    pub fn forward(&self, data: &mut [Complex]) {
        self.transform(data, false);
    }

    /// In-place inverse transform including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex]) {
        self.transform(data, true);
        let k = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v = v.scale(k);
        }
    }

    fn transform(&self, data: &mut [Complex], inverse: bool) {
        assert_eq!(data.len(), self.n, "buffer length does not match plan");
        for (i, &j) in self.bitrev.iter().enumerate() {
            let j = j as usize;
            if i < j {
                data.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let step = self.n / size;
            for start in (0..self.n).step_by(size) {
                for j in 0..half {
                    let mut w = self.twiddles[j * step];
                    if inverse {
                        w = w.conj();
                    }
                    let u = data[start + j];
                    let v = data[start + j + half] * w;
                    data[start + j] = u + v;
                    data[start + j + half] = u - v;
                }
            }
            size *= 2;
        }
    }
}

/// Transform of a real signal of even length `n` through one complex
/// transform of length `n / 2`. Spectra hold bins `0..=n/2`.
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    half: FftPlan,
    twiddles: Vec<Complex>,
}

impl RealFft {
    /// Panics unless `n` is a power of two and at least 2.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "real FFT size must be at least 2");
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        Self {
            n,
            half: FftPlan::new(n / 2),
            twiddles,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spectrum of `x` zero-padded to `n` (longer input is an error of the
    /// caller and panics).
    pub fn forward(&self, x: &[f32]) -> Vec<Complex> {
        assert!(x.len() <= self.n, "input longer than transform");
        let m = self.n / 2;
        let mut z = vec![Complex::ZERO; m];
        for (v, pair) in z.iter_mut().zip(x.chunks(2)) {
            v.re = pair[0] as f64;
            v.im = pair.get(1).map_or(0.0, |&s| s as f64);
        }
        self.half.forward(&mut z);
        let mut out = vec![Complex::ZERO; m + 1];
        for k in 0..=m {
            let a = z[k % m];
            let b = z[(m - k) % m].conj();
            let even = (a + b).scale(0.5);
            let d = a - b;
            let odd = Complex::new(d.im * 0.5, -d.re * 0.5);
            let w = if k < m {
                self.twiddles[k]
            } else {
                Complex::new(-1.0, 0.0)
            };
            out[k] = even + w * odd;
        }
        out
    }

    /// Real signal of length `n` whose spectrum is `spec` (bins `0..=n/2`).
    pub fn inverse(&self, spec: &[Complex]) -> Vec<f64> {
        let m = self.n / 2;
        assert_eq!(spec.len(), m + 1, "spectrum length does not match plan");
        let mut z: Vec<Complex> = (0..m)
            .map(|k| {
                let a = spec[k];
                let b = spec[m - k].conj();
                let even = (a + b).scale(0.5);
                let odd = (a - b).scale(0.5) * self.twiddles[k].conj();
                Complex::new(even.re - odd.im, even.im + odd.re)
            })
            .collect();
        self.half.inverse(&mut z);
        z.iter().flat_map(|c| [c.re, c.im]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex::ZERO, |acc, (i, &v)| {
                    let a = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                    acc + v * Complex::new(libm::cos(a), libm::sin(a))
                })
            })
            .collect()
    }

    #[test]
    fn real_fft_matches_complex_fft() {
        let x: Vec<f32> = (0..29)
            .map(|i| libm::sin(i as f64 * 0.7) as f32 + 0.1 * i as f32)
            .collect();
        let rf = RealFft::new(64);
        let spec = rf.forward(&x);
        let mut full = vec![Complex::ZERO; 64];
        for (v, &s) in full.iter_mut().zip(&x) {
            v.re = s as f64;
        }
        FftPlan::new(64).forward(&mut full);
        for k in 0..=32 {
            assert!((spec[k] - full[k]).abs() < 1e-12, "bin {k}");
        }
        let back = rf.inverse(&spec);
        for (i, &v) in back.iter().enumerate() {
            let want = x.get(i).map_or(0.0, |&s| s as f64);
            assert!((v - want).abs() < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn size_one_is_identity() {
        let plan = FftPlan::new(1);
        let mut d = vec![Complex::new(3.0, -1.0)];
        plan.forward(&mut d);
        assert_eq!(d, vec![Complex::new(3.0, -1.0)]);
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let plan = FftPlan::new(16);
        let mut d = vec![Complex::ZERO; 16];
        d[0] = Complex::new(1.0, 0.0);
        plan.forward(&mut d);
        assert!(d
            .iter()
            .all(|c| (c.re - 1.0).abs() < 1e-15 && c.im.abs() < 1e-15));
    }

    #[test]
    #[should_panic]
    fn rejects_non_power_of_two() {
        FftPlan::new(12);
    }

    proptest! {
        #[test]
        fn matches_naive_dft(log_n in 0u32..8, seed in prop::collection::vec(-1.0f64..1.0, 256)) {
            let n = 1usize << log_n;
            let x: Vec<Complex> = (0..n).map(|i| Complex::new(seed[i], seed[255 - i])).collect();
            let want = naive_dft(&x);
            let mut got = x.clone();
            FftPlan::new(n).forward(&mut got);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((*a - *b).abs() < 1e-9 * n as f64);
            }
            FftPlan::new(n).inverse(&mut got);
            for (a, b) in got.iter().zip(&x) {
                prop_assert!((*a - *b).abs() < 1e-12 * n as f64);
            }
        }
    }
}
