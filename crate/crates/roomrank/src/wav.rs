//! WAV reading and writing: PCM16 or IEEE float32, mono or stereo. Stereo
//! input is averaged to mono; output is always mono.

use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use roomrank_core::AudioBuffer;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed WAV ({detail})")]
    Malformed { path: PathBuf, detail: String },
    #[error("{path}: unsupported WAV encoding ({detail})")]
    Unsupported { path: PathBuf, detail: String },
    #[error("{path}: WAV has no samples")]
    Empty { path: PathBuf },
    #[error("{path}: {source}")]
    Content {
        path: PathBuf,
        #[source]
        source: roomrank_core::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

const PCM16_SCALE: f32 = 32768.0;

fn classify(path: &Path, e: hound::Error) -> WavError {
    let path = path.to_owned();
    match e {
        hound::Error::IoError(source) => WavError::Io { path, source },
        hound::Error::FormatError(m) => WavError::Malformed {
            path,
            detail: m.into(),
        },
        hound::Error::UnfinishedSample => WavError::Malformed {
            path,
            detail: "partial sample at end of data".into(),
        },
        other => WavError::Unsupported {
            path,
            detail: other.to_string(),
        },
    }
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer, WavError> {
    let file = File::open(path).map_err(|source| WavError::Io {
        path: path.to_owned(),
        source,
    })?;
    // once the file is open, any read failure means the content is bad
    let malformed = |e| match e {
        hound::Error::IoError(e) => WavError::Malformed {
            path: path.to_owned(),
            detail: e.to_string(),
        },
        e => classify(path, e),
    };
    let reader = WavReader::new(BufReader::new(file)).map_err(malformed)?;
    let spec = reader.spec();
    let unsupported = |detail: String| WavError::Unsupported {
        path: path.to_owned(),
        detail,
    };
    if !(1..=2).contains(&spec.channels) {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>(),
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / PCM16_SCALE))
            .collect::<Result<_, _>>(),
        (format, bits) => return Err(unsupported(format!("{bits}-bit {format:?}"))),
    }
    .map_err(malformed)?;
    if interleaved.is_empty() {
        return Err(WavError::Empty {
            path: path.to_owned(),
        });
    }
    let mono = if spec.channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|f| (f[0] + f[1]) / 2.0)
            .collect()
    };
    AudioBuffer::new(mono, spec.sample_rate).map_err(|source| WavError::Content {
        path: path.to_owned(),
        source,
    })
}

pub fn write_wav(path: &Path, audio: &AudioBuffer, encoding: WavEncoding) -> Result<(), WavError> {
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| classify(path, e))?;
    for &s in audio.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (s.clamp(-1.0, 1.0) * PCM16_SCALE)
                    .round()
                    .clamp(-PCM16_SCALE, PCM16_SCALE - 1.0);
                writer.write_sample(q as i16)
            }
            WavEncoding::Float32 => writer.write_sample(s),
        }
        .map_err(|e| classify(path, e))?;
    }
    writer.finalize().map_err(|e| classify(path, e))
}
