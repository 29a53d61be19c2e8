//! Command-line front end. Machine-readable output goes to files or stdout;
//! everything meant for people goes to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use roomrank_core::rank::{score_prepared, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use roomrank_core::train::TrainConfig;
use roomrank_core::FeatureExtractor;
use thiserror::Error;

use crate::corpus::{generate_corpus, Corpus};
use crate::files::{load_model, read_ratings, save_model, write_training_log};
use crate::report::{note_report, write_json, write_stats, write_trace, Summary};
use crate::scan::{batch_stats, enhance_note, NoteInput};
use crate::training::{train_from_ratings, write_synthetic_corpus};
use crate::wav::{read_wav, write_wav, WavEncoding};

/// A problem with how the program was invoked (exit code 2).
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "roomrank",
    version,
    about = "Find the room in which a musical note sounds best"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for corpus scans (default: all cores).
    #[arg(long, global = true, env = "ROOMRANK_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an impulse-response corpus.
    GenCorpus {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 16000, value_parser = clap::value_parser!(u32).range(1000..))]
        fs: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the scorer from rated notes.
    Train {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Generate N labeled toy notes into --audio and --ratings first.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        epochs: u64,
        /// Training log CSV (default: <out>.log.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print the score of one note.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Find the best room for one note.
    Enhance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K, value_parser = parse_top_k)]
        top_k: usize,
        #[arg(long, value_enum, default_value_t = WavEncoding::Float32)]
        encoding: WavEncoding,
        /// Also write per-frame envelope and centroid CSVs for the dry and
        /// enhanced note.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Enhance every low-scoring note in a directory and summarize.
    Stats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        notes: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_TOP_K, value_parser = parse_top_k)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_top_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err("must be a positive integer".into()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build()?;
            pool.install(|| dispatch(cli.command, cli.seed))
        }
        None => dispatch(cli.command, cli.seed),
    }
}

fn dispatch(command: Command, seed: u64) -> Result<()> {
    match command {
        Command::GenCorpus { count, fs, out } => cmd_gen_corpus(count as usize, seed, fs, &out),
        Command::Train {
            ratings,
            audio,
            out,
            synthetic,
            epochs,
            log,
        } => {
            let log = log.unwrap_or_else(|| {
                let mut p = OsString::from(out.as_os_str());
                p.push(".log.csv");
                PathBuf::from(p)
            });
            cmd_train(
                &ratings,
                &audio,
                &out,
                &log,
                synthetic,
                epochs as usize,
                seed,
            )
        }
        Command::Score { model, input } => cmd_score(&model, &input),
        Command::Enhance {
            model,
            corpus,
            input,
            out,
            report,
            top_k,
            encoding,
            trace_dir,
        } => cmd_enhance(
            &model,
            &corpus,
            &input,
            &out,
            &report,
            top_k,
            encoding,
            trace_dir.as_deref(),
        ),
        Command::Stats {
            model,
            corpus,
            notes,
            threshold,
            top_k,
            out,
        } => cmd_stats(&model, &corpus, &notes, threshold, top_k, &out),
    }
}

fn cmd_gen_corpus(count: usize, seed: u64, fs: u32, out: &Path) -> Result<()> {
    let manifest = generate_corpus(out, count, seed, fs)?;
    for (class, n) in manifest.class_counts() {
        eprintln!("{}: {n}", class.as_str());
    }
    eprintln!(
        "wrote {} impulse responses to {}",
        manifest.entries.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(
    ratings: &Path,
    audio: &Path,
    out: &Path,
    log: &Path,
    synthetic: Option<usize>,
    epochs: usize,
    seed: u64,
) -> Result<()> {
    if let Some(n) = synthetic {
        if n < 2 {
            return Err(UsageError("--synthetic needs at least 2 notes".into()).into());
        }
        write_synthetic_corpus(n, seed, audio, ratings)?;
        eprintln!("wrote {n} synthetic notes to {}", audio.display());
    } else if !ratings.is_file() {
        return Err(
            UsageError(format!("ratings file {} does not exist", ratings.display())).into(),
        );
    }
    let manifest = read_ratings(ratings)?;
    let config = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train_from_ratings(&manifest, audio, &config)?;
    save_model(out, &outcome.model)?;
    write_training_log(log, &outcome.log)?;
    eprintln!(
        "best validation loss {:.6} at epoch {}; validation accuracy {:.4}",
        outcome.best_val_loss, outcome.best_epoch, outcome.val_accuracy
    );
    Ok(())
}

fn cmd_score(model: &Path, input: &Path) -> Result<()> {
    let model = load_model(model)?;
    let audio = read_wav(input)?;
    let prepared = roomrank_core::audio::prepare_for_scoring(&audio);
    let score = score_prepared(&model, &FeatureExtractor::new(), &prepared)?;
    println!("{score:.4}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_enhance(
    model: &Path,
    corpus: &Path,
    input: &Path,
    out: &Path,
    report: &Path,
    top_k: usize,
    encoding: WavEncoding,
    trace_dir: Option<&Path>,
) -> Result<()> {
    let model = load_model(model)?;
    let corpus = Corpus::open(corpus)?;
    let note = NoteInput {
        path: input.display().to_string(),
        audio: read_wav(input)?,
    };
    let enhanced = enhance_note(&model, &corpus, &note, top_k)?;
    write_wav(out, &enhanced.audio, encoding)?;
    let rep = note_report(&corpus, &enhanced.result, &enhanced.excluded);
    write_json(report, &rep)?;
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_trace(&dir.join("dry_trace.csv"), &enhanced.prepared.audio)?;
        write_trace(&dir.join("enhanced_trace.csv"), &enhanced.audio)?;
    }
    let room = match (rep.room_id, rep.point_id) {
        (Some(r), Some(p)) => format!("room {r} point {p}"),
        _ => "identity (no room)".into(),
    };
    eprintln!(
        "original score {:.4}, best score {:.4}, best room: {room}",
        rep.original_score, rep.best_score
    );
    Ok(())
}

fn read_notes_dir(dir: &Path) -> Result<Vec<NoteInput>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading notes directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")));
    paths.sort();
    anyhow::ensure!(!paths.is_empty(), "no .wav notes in {}", dir.display());
    paths
        .iter()
        .map(|p| {
            let name = p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            Ok(NoteInput {
                path: name,
                audio: read_wav(p)?,
            })
        })
        .collect()
}

fn cmd_stats(
    model: &Path,
    corpus: &Path,
    notes: &Path,
    threshold: f64,
    top_k: usize,
    out: &Path,
) -> Result<()> {
    if !threshold.is_finite() {
        return Err(UsageError("--threshold must be finite".into()).into());
    }
    let model = load_model(model)?;
    let corpus = Corpus::open(corpus)?;
    let notes = read_notes_dir(notes)?;
    let outcome = batch_stats(&model, &corpus, &notes, threshold, top_k)?;
    let summary = Summary {
        n_notes: outcome.stats.n_notes,
        n_input: notes.len(),
        threshold,
        fraction_improved: outcome.stats.fraction_improved,
        median_delta: outcome.stats.median_delta,
    };
    let reports: Vec<_> = outcome
        .results
        .iter()
        .map(|r| note_report(&corpus, r, &outcome.excluded))
        .collect();
    write_stats(out, &outcome.stats, &summary, &reports)?;
    eprintln!(
        "{} of {} notes below {threshold}; fraction improved {:.4}; median delta {:.4}",
        summary.n_notes, summary.n_input, summary.fraction_improved, summary.median_delta
    );
    Ok(())
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}
