//! Single-pass spectral gating: estimate a per-band noise floor from the
//! quietest frames and attenuate everything near it.

use crate::audio::AudioBuffer;
use crate::error::Result;
use crate::stft::{istft, stft, Spectrogram, StftConfig};

/// Settings for [`spectral_gate_denoise`].
#[derive(Debug, Clone, Copy)]
pub struct DenoiseConfig {
    pub stft: StftConfig,
    /// Fraction of quietest frames per band treated as noise.
    pub noise_quantile: f64,
    /// Floor multiplier; >1 compensates for sampling the distribution's tail.
    pub oversubtraction: f64,
    /// Minimum gain, keeps residual noise natural instead of gating to zero.
    pub gain_floor: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default_16k(),
            noise_quantile: 0.1,
            oversubtraction: 4.0,
            gain_floor: 0.1,
        }
    }
}

/// Attenuate stationary background noise. Channels are processed
/// independently; output length and energy never exceed the input's.
pub fn spectral_gate_denoise(audio: &AudioBuffer, config: &DenoiseConfig) -> Result<AudioBuffer> {
    let mut spec = stft(audio, config.stft)?;
    gate(&mut spec, config);
    let out = istft(&spec)?.zero_pad_to(audio.num_samples());
    let mut out = out.slice_samples(0, audio.num_samples());

    // The gate only attenuates bins, but overlap-add can shift a little
    // energy between samples; clamp the total so this never amplifies.
    let (ein, eout) = (audio.energy(), out.energy());
    if eout > ein && eout > 0.0 {
        let scale = (ein / eout).sqrt();
        out.scale(scale);
    }
    Ok(out)
}

fn gate(spec: &mut Spectrogram, config: &DenoiseConfig) {
    let frames = spec.frames();
    let take = ((config.noise_quantile * frames as f64).floor() as usize).max(1).min(frames);
    for channel in 0..spec.channels() {
        for f in 0..spec.bins() {
            let mut magnitudes: Vec<f64> =
                (0..frames).map(|t| spec.data[(channel, t, f)].norm()).collect();
            magnitudes.sort_by(f64::total_cmp);
            let floor =
                magnitudes[..take].iter().sum::<f64>() / take as f64 * config.oversubtraction;
            for t in 0..frames {
                let mag = spec.data[(channel, t, f)].norm();
                let gain = if mag > 0.0 {
                    (1.0 - floor / mag).max(config.gain_floor)
                } else {
                    config.gain_floor
                };
                spec.data[(channel, t, f)] *= gain;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::si_sdr;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// A bin-centered tone that pulses with soft ramps, so every band sees
    /// noise-only frames and the gate is measured on noise suppression
    /// rather than on spectral-leakage distortion.
    fn pulsed_tone(n: usize, fs: u32) -> Vec<f64> {
        let f0 = 28.0 * fs as f64 / 1024.0;
        let ramp = 0.01;
        (0..n)
            .map(|t| {
                let second = (t as f64 / fs as f64).fract();
                let env = (second / ramp).min((0.4 - second) / ramp).clamp(0.0, 1.0);
                let env = if second < 0.4 {
                    0.5 - 0.5 * (std::f64::consts::PI * env).cos()
                } else {
                    0.0
                };
                0.3 * env * (std::f64::consts::TAU * f0 * t as f64 / fs as f64).sin()
            })
            .collect()
    }

    #[test]
    fn improves_snr_of_pulsed_tone_in_white_noise() {
        let fs = 16000;
        let n = 3 * fs as usize;
        let clean: Vec<f64> = pulsed_tone(n, fs);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy: Vec<f64> =
            clean.iter().map(|&c| c + 0.15 * rng.random_range(-1.0..1.0)).collect();
        let audio =
            AudioBuffer::new(Array2::from_shape_vec((1, n), noisy.clone()).unwrap(), fs).unwrap();

        let denoised = spectral_gate_denoise(&audio, &DenoiseConfig::default()).unwrap();
        let reference = AudioBuffer::from_mono(clean.clone(), fs).unwrap();
        let before = si_sdr(&reference, &audio).unwrap().value_db;
        let after = si_sdr(&reference, &denoised).unwrap().value_db;
        assert!(
            after - before >= 4.0,
            "expected >= 4 dB improvement, got {before:.2} -> {after:.2}"
        );
    }

    #[test]
    fn silence_stays_silent_and_length_is_preserved() {
        let audio = AudioBuffer::zeros(2, 12345, 16000);
        let out = spectral_gate_denoise(&audio, &DenoiseConfig::default()).unwrap();
        assert_eq!(out.num_samples(), 12345);
        assert_eq!(out.channels(), 2);
        assert_eq!(out.energy(), 0.0);
    }

    #[test]
    fn energy_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let n = rng.random_range(4000..20000);
            let data = Array2::from_shape_fn((1, n), |_| rng.random_range(-0.4..0.4));
            let audio = AudioBuffer::new(data, 16000).unwrap();
            let out = spectral_gate_denoise(&audio, &DenoiseConfig::default()).unwrap();
            assert!(out.energy() <= audio.energy() * (1.0 + 1e-9));
        }
    }
}
