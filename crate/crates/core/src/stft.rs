//! Short-time Fourier transform with weighted overlap-add inverse.

use ndarray::Array3;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Analysis/synthesis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    SqrtHann,
}

impl Window {
    /// Periodic (DFT-even) window samples.
    pub fn samples(self, length: usize) -> Vec<f64> {
        (0..length)
            .map(|n| {
                let hann =
                    0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / length as f64).cos());
                match self {
                    Window::Hann => hann,
                    Window::SqrtHann => hann.sqrt(),
                }
            })
            .collect()
    }
}

/// STFT framing parameters. Construction validates the overlap-add
/// condition, so any held value supports exact resynthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl StftConfig {
    pub fn new(window_length: usize, hop: usize, fft_size: usize, window: Window) -> Result<Self> {
        if hop == 0 || hop > window_length || window_length > fft_size {
            return Err(Error::InvalidInput(format!(
                "need 0 < hop <= window_length <= fft_size, got {hop}/{window_length}/{fft_size}"
            )));
        }
        let cfg = Self { window_length, hop, fft_size, window };
        if !cfg.satisfies_cola() {
            return Err(Error::NonCola);
        }
        Ok(cfg)
    }

    /// 1024-sample sqrt-hann window with 256 hop: a standard enhancement
    /// setting for 16 kHz audio.
    pub fn default_16k() -> Self {
        Self::new(1024, 256, 1024, Window::SqrtHann).expect("default config is valid")
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a given signal length (no centering).
    pub fn num_frames(&self, num_samples: usize) -> Result<usize> {
        if num_samples < self.window_length {
            return Err(Error::TooShort { got: num_samples, need: self.window_length });
        }
        Ok((num_samples - self.window_length) / self.hop + 1)
    }

    /// The synthesis uses the analysis window again, so perfect
    /// reconstruction needs `sum_m w^2(n - m*hop)` constant over n.
    fn satisfies_cola(&self) -> bool {
        let w = self.window.samples(self.window_length);
        let mut coverage = vec![0.0; self.hop];
        for (n, &v) in w.iter().enumerate() {
            coverage[n % self.hop] += v * v;
        }
        let max = coverage.iter().cloned().fold(f64::MIN, f64::max);
        let min = coverage.iter().cloned().fold(f64::MAX, f64::min);
        min > 0.0 && (max - min) / max < 1e-10
    }
}

/// Complex time-frequency tensor (channels x frames x bins).
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[2]
    }

    /// The multi-channel observation vector at one time-frequency point.
    pub fn vector_at(&self, frame: usize, bin: usize) -> Vec<Complex64> {
        (0..self.channels()).map(|c| self.data[(c, frame, bin)]).collect()
    }
}

/// Analyze audio into overlapping windowed DFT frames.
pub fn stft(audio: &AudioBuffer, config: StftConfig) -> Result<Spectrogram> {
    let frames = config.num_frames(audio.num_samples())?;
    let bins = config.bins();
    let w = config.window.samples(config.window_length);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(config.fft_size);

    let mut data = Array3::zeros((audio.channels(), frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); config.fft_size];
    for c in 0..audio.channels() {
        let x = audio.channel(c);
        for t in 0..frames {
            let start = t * config.hop;
            for n in 0..config.fft_size {
                buf[n] = if n < config.window_length {
                    Complex64::new(x[start + n] * w[n], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            fft.process(&mut buf);
            for (f, v) in buf[..bins].iter().enumerate() {
                data[(c, t, f)] = *v;
            }
        }
    }
    Ok(Spectrogram { data, config, sample_rate: audio.sample_rate() })
}

/// Weighted overlap-add resynthesis; output length `(T-1)*hop + window_length`.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    let cfg = spec.config;
    let frames = spec.frames();
    if frames == 0 {
        return Ok(AudioBuffer::zeros(spec.channels(), 0, spec.sample_rate));
    }
    let out_len = (frames - 1) * cfg.hop + cfg.window_length;
    let w = cfg.window.samples(cfg.window_length);
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.fft_size);

    let mut out = ndarray::Array2::zeros((spec.channels(), out_len));
    let mut weight = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for c in 0..spec.channels() {
        if c == 0 {
            // Window-squared normalization is channel independent.
            for t in 0..frames {
                for (n, &v) in w.iter().enumerate() {
                    weight[t * cfg.hop + n] += v * v;
                }
            }
        }
        for t in 0..frames {
            // Rebuild the full Hermitian spectrum from the half kept by stft.
            for f in 0..spec.bins() {
                buf[f] = spec.data[(c, t, f)];
            }
            for f in spec.bins()..cfg.fft_size {
                buf[f] = spec.data[(c, t, cfg.fft_size - f)].conj();
            }
            ifft.process(&mut buf);
            let scale = 1.0 / cfg.fft_size as f64;
            for n in 0..cfg.window_length {
                out[(c, t * cfg.hop + n)] += buf[n].re * scale * w[n];
            }
        }
    }
    for c in 0..spec.channels() {
        for n in 0..out_len {
            if weight[n] > 1e-12 {
                out[(c, n)] /= weight[n];
            } else {
                out[(c, n)] = 0.0;
            }
        }
    }
    AudioBuffer::new(out, spec.sample_rate)
}
