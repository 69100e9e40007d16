//! Multi-channel far-field speech enhancement and diarization front-end:
//! STFT primitives, room simulation, guided and blind source separation,
//! clustering-based diarization support, and batch pipeline plumbing.

pub mod audio;
pub mod augment;
pub mod diar;
pub mod dsp;
pub mod error;
pub mod gss;
pub mod iva;
pub mod metrics;
pub mod pipeline;
pub mod rir;
pub mod stft;

pub use audio::{read_wav, write_wav, AudioBuffer, WavFormat};
pub use error::{Error, HookError, Result};
pub use stft::{istft, stft, Spectrogram, StftConfig, Window};
