//! Allocation-only core of `roomrank`.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! image-source room impulse responses, FFT convolution, mel features, and a
//! small convolutional scorer with its training loop. File formats, the CLI
//! and parallel corpus scans live in the `roomrank` crate.
#![no_std]

extern crate alloc;

pub mod audio;
pub mod augment;
pub mod convolve;
pub mod dataset;
pub mod error;
pub mod features;
pub mod fft;
pub mod nn;
pub mod rank;
pub mod rir;
pub mod train;

pub use audio::AudioBuffer;
pub use convolve::{
    apply_room, convolve_direct, convolve_fft, ConvolutionResult, Convolver, RoomRenderer,
};
pub use error::{Error, Result};
pub use features::{FeatureExtractor, FeatureTrace, MelSpectrogram};
pub use nn::{Architecture, ScorerModel};
pub use rir::{ImpulseResponse, IrRef, RoomSpec};
