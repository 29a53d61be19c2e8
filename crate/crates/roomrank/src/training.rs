//! Ratings + audio directory in, trained scorer out.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;
use roomrank_core::audio::prepare_for_scoring;
use roomrank_core::dataset::{
    build_training_set, generate_synthetic_labeled_corpus, LabeledItem, RatingsManifest,
    AGREEMENT_EPSILON,
};
use roomrank_core::features::FeatureExtractor;
use roomrank_core::train::{train_with, Example, TrainConfig, TrainOutcome};
use roomrank_core::Architecture;

use crate::files::write_ratings;
use crate::wav::{read_wav, write_wav, WavEncoding};

/// Writes `n` synthetic notes into `audio_dir` and their two-rater labels to
/// `ratings`.
pub fn write_synthetic_corpus(n: usize, seed: u64, audio_dir: &Path, ratings: &Path) -> Result<()> {
    let (notes, manifest) = generate_synthetic_labeled_corpus(n, seed)?;
    fs::create_dir_all(audio_dir).with_context(|| format!("creating {}", audio_dir.display()))?;
    notes.par_iter().try_for_each(|note| {
        write_wav(
            &audio_dir.join(&note.name),
            &note.audio,
            WavEncoding::Float32,
        )
    })?;
    write_ratings(ratings, &manifest)
}

fn load_examples(items: &[LabeledItem], audio_dir: &Path) -> Result<Vec<Example>> {
    let extractor = FeatureExtractor::new();
    items
        .par_iter()
        .map(|item| {
            let audio = read_wav(&audio_dir.join(&item.audio_path))?;
            let features = extractor.mel_spectrogram(&prepare_for_scoring(&audio))?;
            Ok(Example {
                features,
                label: item.label,
            })
        })
        .collect()
}

/// Consensus-filters the ratings, extracts features for every kept item and
/// trains the standard network.
pub fn train_from_ratings(
    ratings: &RatingsManifest,
    audio_dir: &Path,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let set = build_training_set(ratings, AGREEMENT_EPSILON, config.seed)?;
    info!(
        "{} training and {} validation items",
        set.train.len(),
        set.validation.len()
    );
    let train = load_examples(&set.train, audio_dir)?;
    let val = load_examples(&set.validation, audio_dir)?;
    let outcome = train_with(Architecture::standard(), &train, &val, config, |e| {
        info!(
            "epoch {} train {:.5} val {:.5} lr {:.1e}",
            e.epoch, e.train_loss, e.val_loss, e.lr
        );
    })?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::files::read_ratings;

    #[test]
    fn synthetic_round_trip_trains() {
        let dir = tempfile::tempdir().unwrap();
        let audio = dir.path().join("notes");
        let ratings = dir.path().join("ratings.csv");
        write_synthetic_corpus(8, 4, &audio, &ratings).unwrap();
        assert_eq!(fs::read_dir(&audio).unwrap().count(), 8);
        let manifest = read_ratings(&ratings).unwrap();
        assert_eq!(manifest.len(), 16);
        let config = TrainConfig {
            epochs: 1,
            seed: 4,
            ..TrainConfig::default()
        };
        let out = train_from_ratings(&manifest, &audio, &config).unwrap();
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn missing_audio_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = dir.path().join("ratings.csv");
        write_synthetic_corpus(6, 1, &dir.path().join("a"), &ratings).unwrap();
        let manifest = read_ratings(&ratings).unwrap();
        let err = train_from_ratings(
            &manifest,
            &dir.path().join("elsewhere"),
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("note_"), "{err:#}");
    }
}
