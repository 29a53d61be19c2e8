//! Parallel corpus scans. Rooms fan out over the current rayon pool; scores
//! are collected in corpus order and reduced by `rank`, so the outcome does
//! not depend on the number of workers.

use std::collections::BTreeMap;

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use roomrank_core::convolve::NoteSpectrum;
use roomrank_core::features::FeatureExtractor;
use roomrank_core::rank::{
    below_threshold, rank, score_prepared, score_stats, Candidate, PreparedNote, RankedResult,
    ScoreStats,
};
use roomrank_core::{AudioBuffer, RoomRenderer, ScorerModel};
use serde::Serialize;

use crate::corpus::Corpus;

/// Notes whose spectra are held in memory at once (about 3 MB each).
pub const NOTE_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NoteInput {
    pub path: String,
    pub audio: AudioBuffer,
}

/// A corpus entry left out of the scan because it could not be loaded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excluded {
    pub corpus_index: usize,
    pub ir_path: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub results: Vec<RankedResult>,
    pub excluded: Vec<Excluded>,
}

pub fn prepare_notes(model: &ScorerModel, notes: &[NoteInput]) -> Result<Vec<PreparedNote>> {
    let extractor = FeatureExtractor::new();
    notes
        .par_iter()
        .map(|n| {
            PreparedNote::new(model, &extractor, &n.audio)
                .with_context(|| format!("scoring {}", n.path))
        })
        .collect()
}

/// Scores every prepared note through every loadable room and ranks them.
pub fn scan_prepared(
    model: &ScorerModel,
    corpus: &Corpus,
    paths: &[String],
    prepared: &[PreparedNote],
    k: usize,
) -> Result<ScanOutcome> {
    assert_eq!(paths.len(), prepared.len());
    anyhow::ensure!(k >= 1, "top-k must be at least 1");
    let extractor = FeatureExtractor::new();
    let renderer = RoomRenderer::new();
    let mut scores = vec![Vec::new(); prepared.len()];
    let mut excluded = BTreeMap::new();
    for (c, chunk) in prepared.chunks(NOTE_CHUNK).enumerate() {
        let spectra: Vec<NoteSpectrum> = chunk
            .par_iter()
            .map(|p| renderer.note_spectrum(&p.audio))
            .collect::<Result<_, _>>()?;
        let per_room: Vec<Result<Vec<f64>, String>> = (0..corpus.len())
            .into_par_iter()
            .map(|i| -> Result<_> {
                let room = match corpus
                    .load(i)
                    .and_then(|ir| Ok(renderer.room_spectrum(&ir)?))
                {
                    Ok(room) => room,
                    Err(e) => return Ok(Err(format!("{e:#}"))),
                };
                let scores = spectra
                    .iter()
                    .map(|s| score_prepared(model, &extractor, &renderer.render(s, &room).audio))
                    .collect::<Result<Vec<f64>, _>>()?;
                Ok(Ok(scores))
            })
            .collect::<Result<_>>()?;
        for (i, room) in per_room.into_iter().enumerate() {
            match room {
                Ok(s) => {
                    for (j, v) in s.into_iter().enumerate() {
                        scores[c * NOTE_CHUNK + j].push((i, v));
                    }
                }
                Err(reason) => {
                    excluded.entry(i).or_insert(reason);
                }
            }
        }
        info!(
            "scanned {} of {} notes",
            (c * NOTE_CHUNK + chunk.len()),
            prepared.len()
        );
    }

    let excluded: Vec<Excluded> = excluded
        .into_iter()
        .map(|(i, reason)| {
            warn!("excluding corpus entry {i}: {reason}");
            Excluded {
                corpus_index: i,
                ir_path: corpus.manifest.entries[i].ir_path.clone(),
                reason,
            }
        })
        .collect();
    let skip: Vec<usize> = excluded.iter().map(|e| e.corpus_index).collect();
    let results = scores
        .into_iter()
        .zip(prepared)
        .zip(paths)
        .map(|((s, p), path)| {
            let candidates = s
                .into_iter()
                .filter(|(i, _)| skip.binary_search(i).is_err())
                .map(|(i, score)| Candidate {
                    corpus_index: i as i64,
                    ir: Some(corpus.manifest.entries[i].ir_ref()),
                    score,
                })
                .collect();
            Ok(rank(path.clone(), p.original_score, candidates, k)?)
        })
        .collect::<Result<_>>()?;
    Ok(ScanOutcome { results, excluded })
}

/// The winning rendering of a scanned note; the prepared note itself when the
/// identity response won.
pub fn render_best(
    corpus: &Corpus,
    prepared: &PreparedNote,
    result: &RankedResult,
) -> Result<AudioBuffer> {
    if result.best.is_identity() {
        return Ok(prepared.audio.clone());
    }
    let ir = corpus.load(result.best.corpus_index as usize)?;
    Ok(RoomRenderer::new().apply_room(&prepared.audio, &ir)?.audio)
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub result: RankedResult,
    pub prepared: PreparedNote,
    pub audio: AudioBuffer,
    pub excluded: Vec<Excluded>,
}

pub fn enhance_note(
    model: &ScorerModel,
    corpus: &Corpus,
    note: &NoteInput,
    k: usize,
) -> Result<Enhanced> {
    let prepared = prepare_notes(model, std::slice::from_ref(note))?.remove(0);
    let mut scan = scan_prepared(
        model,
        corpus,
        std::slice::from_ref(&note.path),
        std::slice::from_ref(&prepared),
        k,
    )?;
    let result = scan.results.remove(0);
    let audio = render_best(corpus, &prepared, &result)?;
    Ok(Enhanced {
        result,
        prepared,
        audio,
        excluded: scan.excluded,
    })
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub stats: ScoreStats,
    pub results: Vec<RankedResult>,
    pub excluded: Vec<Excluded>,
    /// Original score of every input note, in input order.
    pub original_scores: Vec<f64>,
}

/// Scans the notes scoring below `threshold` and summarizes the gains.
pub fn batch_stats(
    model: &ScorerModel,
    corpus: &Corpus,
    notes: &[NoteInput],
    threshold: f64,
    k: usize,
) -> Result<BatchOutcome> {
    let prepared = prepare_notes(model, notes)?;
    let original_scores: Vec<f64> = prepared.iter().map(|p| p.original_score).collect();
    let keep = below_threshold(&original_scores, threshold)?;
    info!(
        "{} of {} notes score below {threshold}",
        keep.len(),
        notes.len()
    );
    let paths: Vec<String> = keep.iter().map(|&i| notes[i].path.clone()).collect();
    let chosen: Vec<PreparedNote> = keep.iter().map(|&i| prepared[i].clone()).collect();
    let scan = scan_prepared(model, corpus, &paths, &chosen, k)?;
    let stats = score_stats(&scan.results)?;
    Ok(BatchOutcome {
        stats,
        results: scan.results,
        excluded: scan.excluded,
        original_scores,
    })
}
