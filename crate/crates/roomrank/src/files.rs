//! Model files, ratings manifests and training logs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use roomrank_core::dataset::{RatingRow, RatingsManifest};
use roomrank_core::train::EpochLog;
use roomrank_core::ScorerModel;

pub fn save_model(path: &Path, model: &ScorerModel) -> Result<()> {
    fs::write(path, model.to_bytes()).with_context(|| format!("writing model {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<ScorerModel> {
    let bytes = fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    ScorerModel::from_bytes(&bytes).with_context(|| format!("loading model {}", path.display()))
}

/// Reads `audio_path,rater_id,rating` rows.
pub fn read_ratings(path: &Path) -> Result<RatingsManifest> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening ratings {}", path.display()))?;
    let rows = reader
        .deserialize::<RatingRow>()
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("parsing ratings {}", path.display()))?;
    RatingsManifest::new(rows).with_context(|| format!("invalid ratings in {}", path.display()))
}

pub fn write_ratings(path: &Path, manifest: &RatingsManifest) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing ratings {}", path.display()))?;
    for row in manifest.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `epoch,train_loss,val_loss,lr` rows.
pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing log {}", path.display()))?;
    for entry in log {
        w.serialize(entry)?;
    }
    w.flush()?;
    Ok(())
}
