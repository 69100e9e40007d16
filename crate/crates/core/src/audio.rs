//! Time-domain audio container and WAV file I/O.

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Multi-channel time-domain samples plus sample rate.
///
/// Samples are stored channels x num_samples with nominal amplitude in
/// [-1, 1]. All constructors reject non-finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::InvalidInput("audio needs at least one channel".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("audio contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn from_mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let n = samples.len();
        let samples = Array2::from_shape_vec((1, n), samples)
            .expect("shape matches by construction");
        Self::new(samples, sample_rate)
    }

    pub fn zeros(channels: usize, num_samples: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels.max(1), num_samples)),
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.num_samples() as f64 / self.sample_rate as f64
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.samples.row(c)
    }

    /// Extract one channel as a new mono buffer.
    pub fn to_mono_channel(&self, c: usize) -> Result<AudioBuffer> {
        if c >= self.channels() {
            return Err(Error::InvalidInput(format!(
                "channel {c} out of range (have {})",
                self.channels()
            )));
        }
        AudioBuffer::new(
            self.samples.row(c).insert_axis(Axis(0)).to_owned(),
            self.sample_rate,
        )
    }

    /// Average all channels into a single mono buffer.
    pub fn downmix_mono(&self) -> AudioBuffer {
        let mono = self.samples.mean_axis(Axis(0)).expect("at least one channel");
        AudioBuffer {
            samples: mono.insert_axis(Axis(0)),
            sample_rate: self.sample_rate,
        }
    }

    /// Select a subset of channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<AudioBuffer> {
        let mut out = Array2::zeros((channels.len(), self.num_samples()));
        for (i, &c) in channels.iter().enumerate() {
            if c >= self.channels() {
                return Err(Error::InvalidInput(format!(
                    "channel {c} out of range (have {})",
                    self.channels()
                )));
            }
            out.row_mut(i).assign(&self.samples.row(c));
        }
        AudioBuffer::new(out, self.sample_rate)
    }

    /// Cut a sample range (clamped to the buffer) across all channels.
    pub fn slice_samples(&self, start: usize, len: usize) -> AudioBuffer {
        let start = start.min(self.num_samples());
        let end = (start + len).min(self.num_samples());
        AudioBuffer {
            samples: self
                .samples
                .slice(ndarray::s![.., start..end])
                .to_owned(),
            sample_rate: self.sample_rate,
        }
    }

    /// Total energy, summed over channels.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Mean power per sample, summed over channels.
    pub fn power(&self) -> f64 {
        if self.num_samples() == 0 {
            return 0.0;
        }
        self.energy() / self.num_samples() as f64
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|s| *s == 0.0)
    }

    /// Multiply every sample in place.
    pub fn scale(&mut self, gain: f64) {
        self.samples.mapv_inplace(|v| v * gain);
    }

    /// Pad with trailing zeros (no-op when already long enough).
    pub fn zero_pad_to(&self, num_samples: usize) -> AudioBuffer {
        if num_samples <= self.num_samples() {
            return self.clone();
        }
        let mut out = Array2::zeros((self.channels(), num_samples));
        out.slice_mut(ndarray::s![.., ..self.num_samples()])
            .assign(&self.samples);
        AudioBuffer {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }
}

/// Output sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Read a PCM 16-bit or 32-bit-float little-endian WAV file.
///
/// Other encodings are rejected; no implicit resampling happens anywhere in
/// this crate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader =
        hound::WavReader::open(path).map_err(|e| Error::wav(path, e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::wav(path, "zero channels"));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::wav(path, e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::wav(path, e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::wav(
                path,
                format!("unsupported encoding {fmt:?}/{bits} bit (need PCM16 or float32)"),
            ))
        }
    };

    let frames = interleaved.len() / channels;
    let mut samples = Array2::zeros((channels, frames));
    for (i, v) in interleaved.iter().enumerate() {
        samples[(i % channels, i / channels)] = *v;
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Write a WAV file in the requested encoding.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: audio.channels() as u16,
        sample_rate: audio.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| Error::wav(path, e.to_string()))?;
    for t in 0..audio.num_samples() {
        for c in 0..audio.channels() {
            let v = audio.samples()[(c, t)];
            match format {
                WavFormat::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer
                        .write_sample(q)
                        .map_err(|e| Error::wav(path, e.to_string()))?;
                }
                WavFormat::Float32 => {
                    writer
                        .write_sample(v as f32)
                        .map_err(|e| Error::wav(path, e.to_string()))?;
                }
            }
        }
    }
    writer.finalize().map_err(|e| Error::wav(path, e.to_string()))
}
