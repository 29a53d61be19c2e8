//! JSON reports, histogram CSVs and feature-trace CSVs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use roomrank_core::features::FeatureExtractor;
use roomrank_core::rank::{Candidate, Histogram, RankedResult, ScoreStats};
use roomrank_core::AudioBuffer;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::scan::Excluded;

pub const HIST_BEFORE_FILE: &str = "hist_before.csv";
pub const HIST_AFTER_FILE: &str = "hist_after.csv";
pub const HIST_DELTA_FILE: &str = "hist_delta.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const NOTES_FILE: &str = "notes.json";

/// One ranked room. Room fields are null for the identity response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomEntry {
    pub corpus_index: i64,
    pub room_id: Option<u32>,
    pub point_id: Option<u32>,
    pub ir_path: Option<String>,
    pub rt60_est: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteReport {
    pub note_path: String,
    pub original_score: f64,
    pub best_score: f64,
    pub score_delta: f64,
    pub corpus_index: i64,
    pub room_id: Option<u32>,
    pub point_id: Option<u32>,
    pub ir_path: Option<String>,
    pub rt60_est: Option<f64>,
    pub top_k: Vec<RoomEntry>,
    pub excluded: Vec<Excluded>,
}

fn room_entry(corpus: &Corpus, c: &Candidate) -> RoomEntry {
    let entry = usize::try_from(c.corpus_index)
        .ok()
        .map(|i| (i, &corpus.manifest.entries[i]));
    RoomEntry {
        corpus_index: c.corpus_index,
        room_id: entry.map(|(_, e)| e.room_id),
        point_id: entry.map(|(_, e)| e.point_id),
        ir_path: entry.map(|(_, e)| e.ir_path.clone()),
        rt60_est: entry.and_then(|(i, _)| corpus.rt60[i]),
        score: c.score,
    }
}

pub fn note_report(corpus: &Corpus, result: &RankedResult, excluded: &[Excluded]) -> NoteReport {
    let best = room_entry(corpus, &result.best);
    NoteReport {
        note_path: result.note_path.clone(),
        original_score: result.original_score,
        best_score: result.best_score,
        score_delta: result.score_delta,
        corpus_index: best.corpus_index,
        room_id: best.room_id,
        point_id: best.point_id,
        ir_path: best.ir_path,
        rt60_est: best.rt60_est,
        top_k: result.top_k.iter().map(|c| room_entry(corpus, c)).collect(),
        excluded: excluded.to_vec(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct HistRow {
    bin_low: f64,
    bin_high: f64,
    count: usize,
}

/// Writes `bin_low,bin_high,count`, one row per bin.
pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (i, &count) in h.counts.iter().enumerate() {
        let (bin_low, bin_high) = h.bin_edges(i);
        w.serialize(HistRow {
            bin_low,
            bin_high,
            count,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n_notes: usize,
    pub n_input: usize,
    pub threshold: f64,
    pub fraction_improved: f64,
    pub median_delta: f64,
}

/// Three histogram CSVs, `summary.json` and `notes.json` under `dir`.
pub fn write_stats(
    dir: &Path,
    stats: &ScoreStats,
    summary: &Summary,
    notes: &[NoteReport],
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_histogram(&dir.join(HIST_BEFORE_FILE), &stats.histogram_before)?;
    write_histogram(&dir.join(HIST_AFTER_FILE), &stats.histogram_after)?;
    write_histogram(&dir.join(HIST_DELTA_FILE), &stats.histogram_delta)?;
    write_json(&dir.join(SUMMARY_FILE), summary)?;
    write_json(&dir.join(NOTES_FILE), &notes)
}

#[derive(Serialize)]
struct TraceRow {
    frame_index: usize,
    rms: f32,
    centroid_hz: f32,
}

/// Per-frame energy envelope and spectral centroid of a canonical signal.
pub fn write_trace(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let trace = FeatureExtractor::new().trace(audio)?;
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (frame_index, (&rms, &centroid_hz)) in trace
        .energy_envelope
        .iter()
        .zip(&trace.spectral_centroid)
        .enumerate()
    {
        w.serialize(TraceRow {
            frame_index,
            rms,
            centroid_hz,
        })?;
    }
    w.flush()?;
    Ok(())
}
