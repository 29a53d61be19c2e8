//! On-disk room corpus: `ir/*.wav`, `manifest.json` and `summary.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use roomrank_core::audio::{resample, CANONICAL_RATE};
use roomrank_core::rir::{sample_corpus, CorpusManifest, RoomClass};
use roomrank_core::{AudioBuffer, ImpulseResponse};
use serde::{Deserialize, Serialize};

use crate::wav::{read_wav, write_wav, WavEncoding};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub ir_path: String,
    pub room_id: u32,
    pub point_id: u32,
    pub room_class: RoomClass,
    pub rt60_est: Option<f64>,
}

/// Samples `count` rooms, renders every response on the current rayon pool
/// and writes the corpus under `out`.
pub fn generate_corpus(
    out: &Path,
    count: usize,
    seed: u64,
    sample_rate: u32,
) -> Result<CorpusManifest> {
    let manifest = sample_corpus(count, seed, sample_rate);
    fs::create_dir_all(out.join("ir")).with_context(|| format!("creating {}", out.display()))?;
    let summary = manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<SummaryRow> {
            let ir = entry
                .render(sample_rate)
                .with_context(|| format!("rendering {}", entry.ir_path))?;
            write_wav(&out.join(&entry.ir_path), &ir.h, WavEncoding::Float32)?;
            Ok(SummaryRow {
                ir_path: entry.ir_path.clone(),
                room_id: entry.room_id,
                point_id: entry.point_id,
                room_class: entry.room_class,
                rt60_est: ir.rt60_est,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out.join(MANIFEST_FILE), json + "\n")?;
    let mut w = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    for row in &summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(manifest)
}

/// An opened corpus directory. Responses are read on demand.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
    /// Per-entry RT60 estimates from `summary.csv`, when present.
    pub rt60: Vec<Option<f64>>,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if manifest.entries.is_empty() {
            bail!("corpus {} has no entries", dir.display());
        }
        let mut rt60 = vec![None; manifest.entries.len()];
        let summary = dir.join(SUMMARY_FILE);
        if summary.exists() {
            let mut reader = csv::Reader::from_path(&summary)?;
            for (slot, row) in rt60.iter_mut().zip(reader.deserialize::<SummaryRow>()) {
                *slot = row
                    .with_context(|| format!("parsing {}", summary.display()))?
                    .rt60_est;
            }
        }
        Ok(Self {
            dir: dir.to_owned(),
            manifest,
            rt60,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    /// Reads entry `index`, resampled to 16 kHz if stored at another rate.
    pub fn load(&self, index: usize) -> Result<ImpulseResponse> {
        let entry = &self.manifest.entries[index];
        let mut h = read_wav(&self.dir.join(&entry.ir_path))?;
        if h.sample_rate() != CANONICAL_RATE {
            h = AudioBuffer::new(
                resample(h.samples(), h.sample_rate(), CANONICAL_RATE),
                CANONICAL_RATE,
            )?;
        }
        Ok(ImpulseResponse {
            h,
            room_id: entry.room_id,
            point_id: entry.point_id,
            spec: Some(entry.room_spec(CANONICAL_RATE)),
            rt60_est: self.rt60[index],
        })
    }
}
