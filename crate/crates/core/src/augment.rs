//! Training-time augmentation of log-mel spectrograms.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{log_floor, MelSpectrogram};

pub const FIRE_PROBABILITY: f64 = 0.5;
pub const MAX_GAIN_DB: f64 = 6.0;
pub const NOISE_SIGMA: f64 = 0.1;
pub const MAX_CUTOUT_MELS: usize = 24;
pub const MAX_CUTOUT_FRAMES: usize = 100;

/// Which augmentations may fire. Disabled ones still consume their coin flip,
/// so toggling one does not reshuffle the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentToggles {
    pub volume: bool,
    pub cutout: bool,
    pub vflip: bool,
    pub hflip: bool,
    pub noise: bool,
}

impl Default for AugmentToggles {
    fn default() -> Self {
        Self {
            volume: true,
            cutout: true,
            vflip: true,
            hflip: true,
            noise: true,
        }
    }
}

impl AugmentToggles {
    pub fn none() -> Self {
        Self {
            volume: false,
            cutout: false,
            vflip: false,
            hflip: false,
            noise: false,
        }
    }
}

/// Rectangle of `(mel, frame)` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cutout {
    pub mel: usize,
    pub frame: usize,
    pub mels: usize,
    pub frames: usize,
}

impl Cutout {
    pub fn contains(&self, mel: usize, frame: usize) -> bool {
        (self.mel..self.mel + self.mels).contains(&mel)
            && (self.frame..self.frame + self.frames).contains(&frame)
    }
}

/// What one call to [`augment`] did.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentPlan {
    pub gain_db: Option<f64>,
    pub noise: bool,
    pub vflip: bool,
    pub hflip: bool,
    pub cutout: Option<Cutout>,
}

impl AugmentPlan {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// Applies each enabled augmentation with probability 0.5. The order is gain,
/// noise, flips, then cut-out, so the cut-out cells end exactly at the floor.
/// Values never drop below the log floor.
pub fn augment<R: Rng + ?Sized>(
    spec: &MelSpectrogram,
    toggles: &AugmentToggles,
    rng: &mut R,
) -> (MelSpectrogram, AugmentPlan) {
    let mut fire = |on: bool| rng.random_bool(FIRE_PROBABILITY) && on;
    let (volume, noise, vflip, hflip, cutout) = (
        fire(toggles.volume),
        fire(toggles.noise),
        fire(toggles.vflip),
        fire(toggles.hflip),
        fire(toggles.cutout),
    );

    let floor = log_floor();
    let (n_mels, n_frames) = spec.shape();
    let mut out = spec.clone();
    let mut plan = AugmentPlan {
        noise,
        vflip,
        hflip,
        ..AugmentPlan::default()
    };

    if volume {
        let db = rng.random_range(-MAX_GAIN_DB..=MAX_GAIN_DB);
        // log power moves by ln(10^(dB/10))
        let shift = (db * core::f64::consts::LN_10 / 10.0) as f32;
        for v in out.values_mut() {
            *v = (*v + shift).max(floor);
        }
        plan.gain_db = Some(db);
    }
    if noise {
        let normal = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
        for v in out.values_mut() {
            *v = (*v + normal.sample(rng) as f32).max(floor);
        }
    }
    if vflip {
        let values = out.values_mut();
        for m in 0..n_mels / 2 {
            let (a, b) = (m * n_frames, (n_mels - 1 - m) * n_frames);
            for f in 0..n_frames {
                values.swap(a + f, b + f);
            }
        }
    }
    if hflip {
        for row in out.values_mut().chunks_mut(n_frames) {
            row.reverse();
        }
    }
    if cutout {
        let mels = rng.random_range(1..=MAX_CUTOUT_MELS.min(n_mels));
        let frames = rng.random_range(1..=MAX_CUTOUT_FRAMES.min(n_frames));
        let rect = Cutout {
            mel: rng.random_range(0..=n_mels - mels),
            frame: rng.random_range(0..=n_frames - frames),
            mels,
            frames,
        };
        for row in out
            .values_mut()
            .chunks_mut(n_frames)
            .skip(rect.mel)
            .take(mels)
        {
            row[rect.frame..rect.frame + frames].fill(floor);
        }
        plan.cutout = Some(rect);
    }
    (out, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n_mels: usize, n_frames: usize) -> MelSpectrogram {
        let v = (0..n_mels * n_frames)
            .map(|i| (i % 97) as f32 * 0.1 - 3.0)
            .collect();
        MelSpectrogram::from_values(n_mels, n_frames, v)
    }

    fn find_seed(want: impl Fn(&AugmentPlan) -> bool) -> u64 {
        let x = ramp(8, 10);
        (0..10_000)
            .find(|&s| {
                want(
                    &augment(
                        &x,
                        &AugmentToggles::default(),
                        &mut ChaCha8Rng::seed_from_u64(s),
                    )
                    .1,
                )
            })
            .expect("some seed fires the wanted plan")
    }

    #[test]
    fn nothing_fired_means_identity() {
        let seed = find_seed(AugmentPlan::is_identity);
        let x = ramp(96, 500);
        let (y, plan) = augment(
            &x,
            &AugmentToggles::default(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        assert!(plan.is_identity());
        assert_eq!(y, x);
    }

    #[test]
    fn all_toggles_off_is_identity() {
        let x = ramp(96, 500);
        for s in 0..20 {
            let (y, plan) = augment(
                &x,
                &AugmentToggles::none(),
                &mut ChaCha8Rng::seed_from_u64(s),
            );
            assert!(plan.is_identity());
            assert_eq!(y, x);
        }
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let only = AugmentToggles {
            hflip: true,
            ..AugmentToggles::none()
        };
        let seed = (0..100)
            .find(|&s| {
                augment(&ramp(4, 6), &only, &mut ChaCha8Rng::seed_from_u64(s))
                    .1
                    .hflip
            })
            .unwrap();
        let x = ramp(96, 500);
        let (once, _) = augment(&x, &only, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_ne!(once, x);
        assert_eq!(once.get(3, 0), x.get(3, 499));
        let (twice, _) = augment(&once, &only, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(twice, x);
    }

    #[test]
    fn vertical_flip_reverses_mel_axis() {
        let only = AugmentToggles {
            vflip: true,
            ..AugmentToggles::none()
        };
        let seed = (0..100)
            .find(|&s| {
                augment(&ramp(4, 6), &only, &mut ChaCha8Rng::seed_from_u64(s))
                    .1
                    .vflip
            })
            .unwrap();
        let x = ramp(96, 500);
        let (y, _) = augment(&x, &only, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(y.row(0), x.row(95));
        assert_eq!(y.row(50), x.row(45));
    }

    #[test]
    fn volume_is_a_constant_log_shift() {
        let only = AugmentToggles {
            volume: true,
            ..AugmentToggles::none()
        };
        let x = ramp(96, 500);
        for s in 0..10 {
            let (y, plan) = augment(&x, &only, &mut ChaCha8Rng::seed_from_u64(s));
            let Some(db) = plan.gain_db else { continue };
            assert!(db.abs() <= MAX_GAIN_DB);
            let want = (db * core::f64::consts::LN_10 / 10.0) as f32;
            for (a, b) in y.values().iter().zip(x.values()) {
                assert!((a - b - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn noise_has_the_configured_spread() {
        let only = AugmentToggles {
            noise: true,
            ..AugmentToggles::none()
        };
        let seed = (0..100)
            .find(|&s| {
                augment(&ramp(4, 6), &only, &mut ChaCha8Rng::seed_from_u64(s))
                    .1
                    .noise
            })
            .unwrap();
        let x = ramp(96, 500);
        let (y, _) = augment(&x, &only, &mut ChaCha8Rng::seed_from_u64(seed));
        let d: Vec<f64> = y
            .values()
            .iter()
            .zip(x.values())
            .map(|(a, b)| (a - b) as f64)
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd =
            libm::sqrt(d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.len() as f64);
        assert!(
            mean.abs() < 0.01 && (sd - NOISE_SIGMA).abs() < 0.01,
            "mean {mean} sd {sd}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn shape_kept_and_cutout_at_floor(seed in any::<u64>(), n_mels in 1usize..40, n_frames in 1usize..150) {
            let x = ramp(n_mels, n_frames);
            let (y, plan) = augment(&x, &AugmentToggles::default(), &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(y.shape(), x.shape());
            prop_assert!(y.values().iter().all(|&v| v.is_finite() && v >= log_floor()));
            if let Some(c) = plan.cutout {
                prop_assert!(c.mels <= MAX_CUTOUT_MELS && c.frames <= MAX_CUTOUT_FRAMES);
                for m in 0..n_mels {
                    for f in 0..n_frames {
                        if c.contains(m, f) {
                            prop_assert_eq!(y.get(m, f), log_floor());
                        }
                    }
                }
            }
        }
    }
}
