//! Rated notes: consensus filtering, the train/validation split, and a
//! synthetic stand-in for a rated note collection.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{peak_normalize, AudioBuffer, CANONICAL_LEN, CANONICAL_RATE};
use crate::error::{Error, Result};

pub const AGREEMENT_EPSILON: f64 = 0.25;
pub const MAX_VALIDATION: usize = 200;
/// Peak level of generated notes, below the 0.99 scoring level so that the
/// pipeline's own normalization is exercised.
pub const SYNTHETIC_PEAK: f32 = 0.8;
pub const RATER_JITTER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub audio_path: String,
    pub rater_id: String,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingsManifest {
    rows: Vec<RatingRow>,
}

impl RatingsManifest {
    pub fn new(rows: Vec<RatingRow>) -> Result<Self> {
        for r in &rows {
            if !(0.0..=1.0).contains(&r.rating) {
                return Err(Error::InvalidArgument("rating outside [0, 1]"));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[RatingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub audio_path: String,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub train: Vec<LabeledItem>,
    pub validation: Vec<LabeledItem>,
}

/// Keeps items rated by at least two distinct raters whose ratings all lie
/// within `epsilon` of each other, labels them with the mean rating, and
/// splits off `min(200, n / 10)` items (at least 2 once `n >= 4`) for
/// validation after a seeded shuffle.
pub fn build_training_set(
    manifest: &RatingsManifest,
    epsilon: f64,
    seed: u64,
) -> Result<TrainingSet> {
    let mut by_item: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in manifest.rows() {
        // a rater repeating an item counts once, with the last rating
        by_item
            .entry(&r.audio_path)
            .or_default()
            .insert(&r.rater_id, r.rating);
    }
    let mut items: Vec<LabeledItem> = by_item
        .into_iter()
        .filter_map(|(path, ratings)| {
            if ratings.len() < 2 {
                return None;
            }
            let lo = ratings.values().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratings.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo <= epsilon).then(|| LabeledItem {
                audio_path: path.into(),
                label: ratings.values().sum::<f64>() / ratings.len() as f64,
            })
        })
        .collect();
    if items.is_empty() {
        return Err(Error::NoConsensusLabels);
    }
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = items.len();
    let mut n_val = (n / 10).min(MAX_VALIDATION);
    if n >= 4 {
        n_val = n_val.max(2);
    }
    let train = items.split_off(n_val);
    Ok(TrainingSet {
        train,
        validation: items,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNote {
    pub name: String,
    pub good: bool,
    pub audio: AudioBuffer,
}

/// `n` canonical notes alternating good (even index) and bad (odd index), and
/// two raters' labels for each.
///
/// Good notes are harmonic with 3 to 8 partials at 1/k amplitude, a 3 to 6 Hz
/// amplitude modulation of depth 0.2 to 0.5 and a raised-cosine attack. Bad
/// notes are one static partial in white noise at 10 to 20 dB SNR with a 5 ms
/// attack.
pub fn generate_synthetic_labeled_corpus(
    n: usize,
    seed: u64,
) -> Result<(Vec<SyntheticNote>, RatingsManifest)> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two notes"));
    }
    let mut notes = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let good = i % 2 == 0;
        let mut samples = if good {
            good_note(&mut rng)
        } else {
            bad_note(&mut rng)
        };
        peak_normalize(&mut samples, SYNTHETIC_PEAK);
        let name = format!("note_{i:04}.wav");
        for rater in ["r1", "r2"] {
            let base = if good { 1.0 } else { 0.0 };
            let rating = (base + rng.random_range(-RATER_JITTER..=RATER_JITTER)).clamp(0.0, 1.0);
            rows.push(RatingRow {
                audio_path: name.clone(),
                rater_id: rater.into(),
                rating,
            });
        }
        notes.push(SyntheticNote {
            name,
            good,
            audio: AudioBuffer::from_parts(samples, CANONICAL_RATE),
        });
    }
    Ok((notes, RatingsManifest::new(rows)?))
}

fn good_note(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let fs = CANONICAL_RATE as f64;
    let f0 = rng.random_range(150.0..600.0);
    let partials: usize = rng.random_range(3..=8);
    let am_rate = rng.random_range(3.0..=6.0);
    let depth = rng.random_range(0.2..=0.5);
    let attack = rng.random_range(0.05..0.15);
    let phases: Vec<f64> = (0..partials)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let am_phase = rng.random_range(0.0..2.0 * PI);
    (0..CANONICAL_LEN)
        .map(|n| {
            let t = n as f64 / fs;
            let tone: f64 = phases
                .iter()
                .enumerate()
                .map(|(k, &ph)| libm::sin(2.0 * PI * f0 * (k + 1) as f64 * t + ph) / (k + 1) as f64)
                .sum();
            let am = 1.0 + depth * libm::sin(2.0 * PI * am_rate * t + am_phase);
            let env = if t < attack {
                0.5 - 0.5 * libm::cos(PI * t / attack)
            } else {
                1.0
            };
            (tone * am * env * release(t)) as f32
        })
        .collect()
}

fn bad_note(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let fs = CANONICAL_RATE as f64;
    let f0 = rng.random_range(150.0..600.0);
    let snr_db = rng.random_range(10.0..=20.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let attack = 0.005;
    // unit sine has power 1/2
    let sigma = libm::sqrt(0.5 / libm::pow(10.0, snr_db / 10.0));
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    (0..CANONICAL_LEN)
        .map(|n| {
            let t = n as f64 / fs;
            let env = (t / attack).min(1.0) * release(t);
            (env * libm::sin(2.0 * PI * f0 * t + phase) + noise.sample(rng)) as f32
        })
        .collect()
}

/// 20 ms fade at the end of the 5 s note.
fn release(t: f64) -> f64 {
    ((5.0 - t) / 0.02).clamp(0.0, 1.0)
}
