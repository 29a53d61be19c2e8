//! Scoring notes, ranking rooms, and summarizing improvements.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::audio::{prepare_for_scoring, AudioBuffer};
use crate::convolve::Convolver;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::nn::ScorerModel;
use crate::rir::{ImpulseResponse, IrRef};

pub const DEFAULT_TOP_K: usize = 10;
pub const HISTOGRAM_BINS: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Corpus index of the injected identity response.
pub const IDENTITY_INDEX: i64 = -1;

/// Score of an already canonical, normalized signal.
pub fn score_prepared(
    model: &ScorerModel,
    extractor: &FeatureExtractor,
    x: &AudioBuffer,
) -> Result<f64> {
    model.forward(&extractor.mel_spectrogram(x)?)
}

/// Canonicalize, peak-normalize, extract features and score in inference mode.
pub fn score_note(model: &ScorerModel, note: &AudioBuffer) -> Result<f64> {
    score_prepared(model, &FeatureExtractor::new(), &prepare_for_scoring(note))
}

/// A note ready for ranking: the scoring-ready signal and its own score.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedNote {
    pub audio: AudioBuffer,
    pub original_score: f64,
}

impl PreparedNote {
    pub fn new(
        model: &ScorerModel,
        extractor: &FeatureExtractor,
        note: &AudioBuffer,
    ) -> Result<Self> {
        let audio = prepare_for_scoring(note);
        let original_score = score_prepared(model, extractor, &audio)?;
        Ok(Self {
            audio,
            original_score,
        })
    }

    /// The identity candidate. Its score is the original score, exactly.
    pub fn identity(&self) -> Candidate {
        Candidate {
            corpus_index: IDENTITY_INDEX,
            ir: None,
            score: self.original_score,
        }
    }

    /// Score of this note played through `ir`.
    pub fn score_in_room(
        &self,
        model: &ScorerModel,
        extractor: &FeatureExtractor,
        conv: &mut Convolver,
        ir: &ImpulseResponse,
    ) -> Result<f64> {
        let wet = conv.apply_room(&self.audio, ir)?;
        score_prepared(model, extractor, &wet.audio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the corpus, or -1 for the identity response.
    pub corpus_index: i64,
    /// `None` for the identity response.
    pub ir: Option<IrRef>,
    pub score: f64,
}

impl Candidate {
    pub fn is_identity(&self) -> bool {
        self.corpus_index == IDENTITY_INDEX
    }
}

/// Higher score first, then lower corpus index.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.corpus_index.cmp(&b.corpus_index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub note_path: String,
    pub original_score: f64,
    pub best_score: f64,
    pub score_delta: f64,
    pub best: Candidate,
    pub top_k: Vec<Candidate>,
}

/// Orders all candidates and keeps the best `k`. The identity candidate is
/// added here, so the best score is never below the original.
pub fn rank(
    note_path: String,
    original_score: f64,
    mut candidates: Vec<Candidate>,
    k: usize,
) -> Result<RankedResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1"));
    }
    candidates.retain(|c| !c.is_identity());
    candidates.push(Candidate {
        corpus_index: IDENTITY_INDEX,
        ir: None,
        score: original_score,
    });
    candidates.sort_by(rank_order);
    candidates.truncate(k);
    let best = candidates[0];
    Ok(RankedResult {
        note_path,
        original_score,
        best_score: best.score,
        score_delta: best.score - original_score,
        best,
        top_k: candidates,
    })
}

/// Single-threaded enhancement over an in-memory corpus. Entry `i` of `irs`
/// has corpus index `i`. Returns the ranking and the best rendering.
pub fn enhance(
    model: &ScorerModel,
    note_path: String,
    note: &AudioBuffer,
    irs: &[ImpulseResponse],
    k: usize,
) -> Result<(RankedResult, AudioBuffer)> {
    if irs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let extractor = FeatureExtractor::new();
    let mut conv = Convolver::new();
    let prepared = PreparedNote::new(model, &extractor, note)?;
    let mut candidates = Vec::with_capacity(irs.len());
    for (i, ir) in irs.iter().enumerate() {
        let score = prepared.score_in_room(model, &extractor, &mut conv, ir)?;
        candidates.push(Candidate {
            corpus_index: i as i64,
            ir: Some(ir.ir_ref()),
            score,
        });
    }
    let result = rank(note_path, prepared.original_score, candidates, k)?;
    let audio = render_best(&prepared, &result, irs, &mut conv)?;
    Ok((result, audio))
}

/// The winning rendering: the prepared note itself for the identity, else the
/// note through `irs[best.corpus_index]`.
pub fn render_best(
    prepared: &PreparedNote,
    result: &RankedResult,
    irs: &[ImpulseResponse],
    conv: &mut Convolver,
) -> Result<AudioBuffer> {
    if result.best.is_identity() {
        return Ok(prepared.audio.clone());
    }
    let ir = irs
        .get(result.best.corpus_index as usize)
        .ok_or(Error::InvalidArgument("best index outside corpus"))?;
    Ok(conv.apply_room(&prepared.audio, ir)?.audio)
}

/// Equal-width bins over `[low, high]`; the top edge belongs to the last bin
/// and out-of-range values are clamped into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(low: f64, high: f64, bins: usize) -> Self {
        assert!(bins > 0 && high > low);
        Self {
            low,
            high,
            counts: alloc::vec![0; bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let t = (v - self.low) / (self.high - self.low) * n as f64;
        let bin = if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(n - 1)
        };
        self.counts[bin] += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.high - self.low) / self.counts.len() as f64;
        (self.low + i as f64 * w, self.low + (i + 1) as f64 * w)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub histogram_before: Histogram,
    pub histogram_after: Histogram,
    pub histogram_delta: Histogram,
    pub n_notes: usize,
    pub fraction_improved: f64,
    pub median_delta: f64,
}

/// Indices of notes scoring strictly below `threshold`.
pub fn below_threshold(scores: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let keep: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] < threshold)
        .collect();
    if keep.is_empty() {
        return Err(Error::NothingToEnhance);
    }
    Ok(keep)
}

/// Histograms of original scores, best scores and their difference.
pub fn score_stats(results: &[RankedResult]) -> Result<ScoreStats> {
    if results.is_empty() {
        return Err(Error::NothingToEnhance);
    }
    let mut before = Histogram::new(0.0, 1.0, HISTOGRAM_BINS);
    let mut after = Histogram::new(0.0, 1.0, HISTOGRAM_BINS);
    let mut delta = Histogram::new(-1.0, 1.0, HISTOGRAM_BINS);
    let mut deltas = Vec::with_capacity(results.len());
    for r in results {
        before.add(r.original_score);
        after.add(r.best_score);
        delta.add(r.score_delta);
        deltas.push(r.score_delta);
    }
    let improved = deltas.iter().filter(|&&d| d > 0.0).count();
    deltas.sort_by(f64::total_cmp);
    let n = deltas.len();
    let median_delta = if n % 2 == 1 {
        deltas[n / 2]
    } else {
        0.5 * (deltas[n / 2 - 1] + deltas[n / 2])
    };
    Ok(ScoreStats {
        histogram_before: before,
        histogram_after: after,
        histogram_delta: delta,
        n_notes: n,
        fraction_improved: improved as f64 / n as f64,
        median_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::CANONICAL_RATE;
    use crate::nn::{Architecture, ConvSpec};
    use crate::rir::{simulate_rir, RoomSpec};
    use alloc::vec;
    use alloc::vec::Vec;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> ScorerModel {
        ScorerModel::init(Architecture::standard(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn tone(freq: f64, gain: f32) -> AudioBuffer {
        let v = (0..40_000)
            .map(|n| gain * libm::sin(2.0 * PI * freq * n as f64 / 16000.0) as f32)
            .collect();
        AudioBuffer::new(v, CANONICAL_RATE).unwrap()
    }

    fn cand(i: i64, score: f64) -> Candidate {
        Candidate {
            corpus_index: i,
            ir: Some(IrRef {
                room_id: i as u32,
                point_id: 0,
            }),
            score,
        }
    }

    #[test]
    fn scoring_is_deterministic_and_gain_invariant() {
        let m = model();
        let a = score_note(&m, &tone(440.0, 0.3)).unwrap();
        assert_eq!(a, score_note(&m, &tone(440.0, 0.3)).unwrap());
        assert!(a > 0.0 && a < 1.0);
        let b = score_note(&m, &tone(440.0, 0.6)).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn identity_only_corpus_changes_nothing() {
        let m = model();
        let note = tone(330.0, 0.5);
        let (r, audio) = enhance(
            &m,
            "n.wav".into(),
            &note,
            &[ImpulseResponse::identity(CANONICAL_RATE)],
            5,
        )
        .unwrap();
        // the real identity entry ties with the injected one, which has the lower index
        assert_eq!(r.best_score, r.original_score);
        assert_eq!(r.score_delta, 0.0);
        assert!(r.best.is_identity());
        assert_eq!(r.top_k.len(), 2);
        assert_eq!(audio, prepare_for_scoring(&note));
    }

    #[test]
    fn ranking_order_and_ties() {
        let r = rank(
            "x".into(),
            0.3,
            vec![cand(4, 0.8), cand(2, 0.8), cand(0, 0.1), cand(7, 0.9)],
            3,
        )
        .unwrap();
        let order: Vec<i64> = r.top_k.iter().map(|c| c.corpus_index).collect();
        assert_eq!(order, [7, 2, 4]);
        assert_eq!(r.best_score, 0.9);
        assert!((r.score_delta - 0.6).abs() < 1e-15);

        let tie = rank("x".into(), 0.5, vec![cand(3, 0.5), cand(1, 0.2)], 10).unwrap();
        assert!(tie.best.is_identity());
        assert_eq!(tie.top_k.len(), 3);
        assert_eq!(
            rank("x".into(), 0.5, vec![], 0),
            Err(Error::InvalidArgument("top-k must be at least 1"))
        );
    }

    #[test]
    fn enhancement_never_degrades() {
        let m = model();
        let irs: Vec<ImpulseResponse> = [0.9, 0.5, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let spec = RoomSpec::uniform(
                    [4.0, 3.5, 2.8],
                    a,
                    [1.0, 1.2, 1.4],
                    [2.9, 2.1, 1.5],
                    CANONICAL_RATE,
                );
                simulate_rir(&spec).unwrap().with_ref(IrRef {
                    room_id: i as u32,
                    point_id: 0,
                })
            })
            .collect();
        for f in [220.0, 440.0, 880.0] {
            let (r, _) = enhance(&m, "n".into(), &tone(f, 0.4), &irs, 2).unwrap();
            assert!(r.best_score >= r.original_score);
            assert!(r.score_delta >= 0.0);
            assert_eq!(r.top_k.len(), 2);
            assert!(rank_order(&r.top_k[0], &r.top_k[1]) == Ordering::Less);
            // more rooms never lower the best score
            let (r1, _) = enhance(&m, "n".into(), &tone(f, 0.4), &irs[..1], 2).unwrap();
            assert!(r.best_score >= r1.best_score);
        }
        assert_eq!(
            enhance(&m, "n".into(), &tone(220.0, 0.4), &[], 2).unwrap_err(),
            Error::EmptyCorpus
        );
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::new(-1.0, 1.0, 20);
        for v in [-1.0, -0.85, -0.0001, 0.0, 0.99, 1.0, 5.0, -3.0] {
            h.add(v);
        }
        assert_eq!(h.total(), 8);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts[19], 3);
        let (lo, hi) = h.bin_edges(10);
        assert!((lo - 0.0).abs() < 1e-12 && (hi - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stats_counts_and_median() {
        let mk = |o: f64, b: f64| RankedResult {
            note_path: String::new(),
            original_score: o,
            best_score: b,
            score_delta: b - o,
            best: cand(0, b),
            top_k: vec![cand(0, b)],
        };
        let rs = [mk(0.1, 0.1), mk(0.2, 0.6), mk(0.4, 0.5), mk(0.3, 0.9)];
        let s = score_stats(&rs).unwrap();
        assert_eq!(s.n_notes, 4);
        for h in [&s.histogram_before, &s.histogram_after, &s.histogram_delta] {
            assert_eq!(h.counts.len(), 20);
            assert_eq!(h.total(), 4);
        }
        assert_eq!(s.fraction_improved, 0.75);
        assert!((s.median_delta - 0.25).abs() < 1e-12);
        assert_eq!(score_stats(&[]), Err(Error::NothingToEnhance));
    }

    #[test]
    fn threshold_filter() {
        assert_eq!(below_threshold(&[0.2, 0.7, 0.49], 0.5).unwrap(), vec![0, 2]);
        assert_eq!(
            below_threshold(&[0.2, 0.7], 0.0),
            Err(Error::NothingToEnhance)
        );
    }

    #[test]
    fn small_architecture_shapes_flow_through_rank() {
        // a network that is not the standard one refuses canonical features
        let arch = Architecture {
            input: (4, 4),
            convs: vec![ConvSpec {
                filters: 1,
                kernel: (2, 2),
                stride: (2, 2),
            }],
            dense: 1,
        };
        let m = ScorerModel::zeros(arch).unwrap();
        assert!(matches!(
            score_note(&m, &tone(440.0, 0.5)),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
