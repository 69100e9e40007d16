//! Far-field data augmentation primitives: SNR mixing, speed perturbation,
//! SpecAugment mask generation, spectral flatness and a music heuristic.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Add noise to a clean signal at an exact target SNR.
///
/// The gain is computed from the powers of the clean signal and the selected
/// noise segment, so the realized SNR equals `snr_db` by construction. With
/// `rng_offset` the segment starts at a random position inside the noise;
/// otherwise at 0. The RNG is untouched when `rng_offset` is false.
pub fn mix_at_snr<R: Rng>(
    clean: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    rng_offset: bool,
    rng: &mut R,
) -> Result<AudioBuffer> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: clean.sample_rate(),
            right: noise.sample_rate(),
        });
    }
    if clean.channels() != noise.channels() {
        return Err(Error::ChannelMismatch { left: clean.channels(), right: noise.channels() });
    }
    if noise.num_samples() < clean.num_samples() {
        return Err(Error::TooShort { got: noise.num_samples(), need: clean.num_samples() });
    }
    let max_offset = noise.num_samples() - clean.num_samples();
    let offset = if rng_offset && max_offset > 0 {
        rng.random_range(0..=max_offset)
    } else {
        0
    };
    let segment = noise.slice_samples(offset, clean.num_samples());
    let p_clean = clean.power();
    let p_noise = segment.power();
    if p_clean == 0.0 {
        return Err(Error::SilentSignal("mix_at_snr clean".into()));
    }
    if p_noise == 0.0 {
        return Err(Error::SilentSignal("mix_at_snr noise".into()));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean.samples() + &(segment.samples() * gain);
    AudioBuffer::new(samples, clean.sample_rate())
}

/// Sinc interpolation kernel taps for speed perturbation.
const RESAMPLE_TAPS: usize = 64;

/// Tempo+pitch change by windowed-sinc resampling.
///
/// Output sample m is the band-limited interpolation of the input at
/// position m*factor, with the cutoff lowered when slowing-down factors > 1
/// would otherwise alias. `factor = 1.0` returns the input bit-identically.
pub fn speed_perturb(audio: &AudioBuffer, factor: f64) -> Result<AudioBuffer> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(Error::SpeedFactorOutOfRange(factor));
    }
    if factor == 1.0 {
        return Ok(audio.clone());
    }
    let n = audio.num_samples();
    let out_len = (n as f64 / factor).round() as usize;
    let half = (RESAMPLE_TAPS / 2) as isize;
    // Anti-alias cutoff: full band when speeding up audio playback keeps
    // output rate fixed; only factor > 1 compresses spectra past Nyquist.
    let cutoff = if factor > 1.0 { 1.0 / factor } else { 1.0 };

    let mut out = Array2::zeros((audio.channels(), out_len));
    for c in 0..audio.channels() {
        let x = audio.channel(c);
        for m in 0..out_len {
            let p = m as f64 * factor;
            let i0 = p.floor() as isize;
            let mut acc = 0.0;
            for j in (i0 - half + 1)..=(i0 + half) {
                if j < 0 || j >= n as isize {
                    continue;
                }
                let t = p - j as f64;
                // Hann-windowed sinc over the tap span.
                let w = 0.5 * (1.0 + (std::f64::consts::PI * t / half as f64).cos());
                let s = if t == 0.0 {
                    1.0
                } else {
                    let a = std::f64::consts::PI * t * cutoff;
                    a.sin() / a
                };
                acc += x[j as usize] * s * cutoff * w;
            }
            out[(c, m)] = acc;
        }
    }
    AudioBuffer::new(out, audio.sample_rate())
}

/// SpecAugment mask policy: counts and maximum widths of the zeroed bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecAugmentPolicy {
    pub num_time_masks: usize,
    pub max_time_width: usize,
    pub num_freq_masks: usize,
    pub max_freq_width: usize,
    pub seed: u64,
}

/// Generate a T x F binary mask with the configured number of contiguous
/// zeroed time bands and frequency bands. Deterministic given the seed.
pub fn spec_augment_masks(shape: (usize, usize), policy: &SpecAugmentPolicy) -> Array2<f64> {
    let (t_len, f_len) = shape;
    let mut mask = Array2::ones((t_len, f_len));
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);

    let zero_bands = |axis_len: usize, count: usize, max_width: usize,
                          rng: &mut ChaCha8Rng|
     -> Vec<(usize, usize)> {
        let max_width = max_width.min(axis_len);
        (0..count)
            .map(|_| {
                let width = if max_width == 0 { 0 } else { rng.random_range(0..=max_width) };
                let start = if axis_len > width {
                    rng.random_range(0..=axis_len - width)
                } else {
                    0
                };
                (start, width)
            })
            .collect()
    };

    for (start, width) in zero_bands(t_len, policy.num_time_masks, policy.max_time_width, &mut rng)
    {
        for t in start..start + width {
            for f in 0..f_len {
                mask[(t, f)] = 0.0;
            }
        }
    }
    for (start, width) in zero_bands(f_len, policy.num_freq_masks, policy.max_freq_width, &mut rng)
    {
        for f in start..start + width {
            for t in 0..t_len {
                mask[(t, f)] = 0.0;
            }
        }
    }
    mask
}

/// Per-frame spectral flatness (geometric mean over arithmetic mean of the
/// power spectrum), in [0, 1]. Silent frames report 1.0 so silence never
/// looks tonal.
pub fn spectral_flatness(audio: &AudioBuffer, frame: usize) -> Result<Vec<f64>> {
    if frame < 64 {
        return Err(Error::InvalidInput(format!("flatness frame {frame} < 64 samples")));
    }
    let mono = audio.downmix_mono();
    let x = mono.channel(0);
    let num_frames = x.len() / frame;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame);
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / frame as f64).cos()))
        .collect();

    let mut out = Vec::with_capacity(num_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame];
    for i in 0..num_frames {
        let chunk = &x.as_slice().expect("contiguous mono")[i * frame..(i + 1) * frame];
        if chunk.iter().all(|&v| v == 0.0) {
            out.push(1.0);
            continue;
        }
        for (n, &v) in chunk.iter().enumerate() {
            buf[n] = Complex64::new(v * window[n], 0.0);
        }
        fft.process(&mut buf);
        let bins = frame / 2 + 1;
        let mut log_sum = 0.0;
        let mut lin_sum = 0.0;
        for b in &buf[..bins] {
            let p = b.norm_sqr().max(1e-30);
            log_sum += p.ln();
            lin_sum += p;
        }
        let gm = (log_sum / bins as f64).exp();
        let am = lin_sum / bins as f64;
        out.push((gm / am).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Heuristic stand-in for a music classifier. Sustained harmonic stacks over
/// a modest floor land in a narrow flatness band: well below broadband noise
/// (around 0.5 on the per-frame periodogram) yet above the numerical zero a
/// lone pure tone collapses to. An energy gate keeps silence out. Heavily
/// band-limited rumble can fall into the band too; for pool filtering that
/// trade (drop a usable clip rather than let music through) is intended.
#[derive(Debug, Clone, Copy)]
pub struct MusicFilterConfig {
    pub flatness_frame: usize,
    pub flatness_low: f64,
    pub flatness_high: f64,
    pub energy_threshold: f64,
}

impl Default for MusicFilterConfig {
    fn default() -> Self {
        Self {
            flatness_frame: 1024,
            flatness_low: 2e-3,
            flatness_high: 5e-2,
            energy_threshold: 1e-4,
        }
    }
}

/// True when the utterance should be dropped by the music heuristic.
pub fn is_music_like(audio: &AudioBuffer, cfg: &MusicFilterConfig) -> Result<bool> {
    if audio.num_samples() < cfg.flatness_frame {
        return Ok(false);
    }
    let flat = spectral_flatness(audio, cfg.flatness_frame)?;
    let mean_flat = flat.iter().sum::<f64>() / flat.len().max(1) as f64;
    let mean_power = audio.power();
    Ok((cfg.flatness_low..=cfg.flatness_high).contains(&mean_flat)
        && mean_power > cfg.energy_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::snr_db;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn noise_buf(n: usize, seed: u64) -> AudioBuffer {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::from_mono((0..n).map(|_| r.random_range(-0.5..0.5)).collect(), 16000)
            .unwrap()
    }

    #[test]
    fn equal_power_zero_snr_gain_is_one() {
        let clean = AudioBuffer::from_mono(vec![0.5, -0.5, 0.5, -0.5], 16000).unwrap();
        let noise = AudioBuffer::from_mono(vec![-0.5, 0.5, -0.5, 0.5], 16000).unwrap();
        let mixed = mix_at_snr(&clean, &noise, 0.0, false, &mut rng()).unwrap();
        // g = 1 exactly, so the mix is a plain sum.
        for (m, (c, n)) in mixed
            .channel(0)
            .iter()
            .zip(clean.channel(0).iter().zip(noise.channel(0).iter()))
        {
            assert_eq!(*m, c + n);
        }
    }

    #[test]
    fn measured_snr_matches_request() {
        let clean = noise_buf(4000, 1);
        let noise = noise_buf(9000, 2);
        for &snr in &[-5.0, 0.0, 5.0, 7.0, 10.0, 20.0] {
            let mut r = rng();
            let mixed = mix_at_snr(&clean, &noise, snr, true, &mut r).unwrap();
            let added = AudioBuffer::new(mixed.samples() - clean.samples(), 16000).unwrap();
            let measured = snr_db(&clean, &added).unwrap();
            assert!((measured - snr).abs() < 0.01, "snr {snr}: measured {measured}");
        }
    }

    #[test]
    fn mix_rejects_silent_inputs_and_short_noise() {
        let clean = noise_buf(100, 1);
        let silent = AudioBuffer::from_mono(vec![0.0; 100], 16000).unwrap();
        assert!(mix_at_snr(&silent, &clean, 0.0, false, &mut rng()).is_err());
        assert!(mix_at_snr(&clean, &silent, 0.0, false, &mut rng()).is_err());
        let short = noise_buf(50, 2);
        assert!(matches!(
            mix_at_snr(&clean, &short, 0.0, false, &mut rng()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn speed_factor_one_is_identity() {
        let audio = noise_buf(1000, 5);
        let out = speed_perturb(&audio, 1.0).unwrap();
        assert_eq!(out.samples(), audio.samples());
    }

    #[test]
    fn speed_length_formula() {
        let audio = noise_buf(16000, 6);
        let fast = speed_perturb(&audio, 1.1).unwrap();
        assert!((fast.num_samples() as i64 - 14545).unsigned_abs() <= 1);
        let slow = speed_perturb(&audio, 0.9).unwrap();
        assert!((slow.num_samples() as i64 - 17778).unsigned_abs() <= 1);
        assert!(speed_perturb(&audio, 2.5).is_err());
        assert!(speed_perturb(&audio, 0.4).is_err());
    }

    #[test]
    fn speed_shifts_pitch_by_factor() {
        let fs = 16000.0;
        let f0 = 440.0;
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * std::f64::consts::PI * f0 * n as f64 / fs).sin())
            .collect();
        let audio = AudioBuffer::from_mono(x, 16000).unwrap();
        for factor in [0.9, 1.1] {
            let out = speed_perturb(&audio, factor).unwrap();
            // Count zero crossings to estimate the dominant frequency.
            let y = out.channel(0);
            let crossings = y
                .iter()
                .zip(y.iter().skip(1))
                .filter(|(a, b)| (**a <= 0.0) != (**b <= 0.0))
                .count();
            let est = crossings as f64 * fs / (2.0 * y.len() as f64);
            let want = f0 * factor;
            assert!((est - want).abs() < 5.0, "factor {factor}: {est} vs {want}");
        }
    }

    #[test]
    fn specaugment_zero_policy_is_all_ones() {
        let policy = SpecAugmentPolicy {
            num_time_masks: 0,
            max_time_width: 0,
            num_freq_masks: 0,
            max_freq_width: 0,
            seed: 1,
        };
        let mask = spec_augment_masks((50, 40), &policy);
        assert!(mask.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn specaugment_deterministic_and_bounded() {
        let policy = SpecAugmentPolicy {
            num_time_masks: 2,
            max_time_width: 10,
            num_freq_masks: 2,
            max_freq_width: 8,
            seed: 77,
        };
        let a = spec_augment_masks((100, 80), &policy);
        let b = spec_augment_masks((100, 80), &policy);
        assert_eq!(a, b);
        let zero_rows = (0..100).filter(|&t| (0..80).all(|f| a[(t, f)] == 0.0)).count();
        let zero_cols = (0..80)
            .filter(|&f| (0..100).all(|t| a[(t, f)] == 0.0))
            .count();
        assert!(zero_rows <= 20, "zero rows {zero_rows}");
        assert!(zero_cols <= 16, "zero cols {zero_cols}");
    }

    #[test]
    fn flatness_separates_noise_tone_silence() {
        let mut noise_means = Vec::new();
        let mut tone_means = Vec::new();
        for seed in 0..50u64 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..4096).map(|_| r.random_range(-0.5..0.5)).collect();
            let f0: f64 = r.random_range(200.0..3000.0);
            let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let tone: Vec<f64> = (0..4096)
                .map(|n| (std::f64::consts::TAU * f0 * n as f64 / 16000.0 + phase).sin())
                .collect();
            let nf = spectral_flatness(&AudioBuffer::from_mono(noise, 16000).unwrap(), 1024)
                .unwrap();
            let tf =
                spectral_flatness(&AudioBuffer::from_mono(tone, 16000).unwrap(), 1024).unwrap();
            noise_means.push(nf.iter().sum::<f64>() / nf.len() as f64);
            tone_means.push(tf.iter().sum::<f64>() / tf.len() as f64);
        }
        let noise_mean = noise_means.iter().sum::<f64>() / noise_means.len() as f64;
        let tone_mean = tone_means.iter().sum::<f64>() / tone_means.len() as f64;
        assert!(noise_mean > 0.5, "white noise flatness {noise_mean}");
        assert!(tone_mean < 0.1, "tone flatness {tone_mean}");

        let silent = AudioBuffer::from_mono(vec![0.0; 2048], 16000).unwrap();
        let sf = spectral_flatness(&silent, 1024).unwrap();
        assert!(sf.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn music_heuristic_ignores_silence_and_quiet() {
        let cfg = MusicFilterConfig::default();
        let silent = AudioBuffer::from_mono(vec![0.0; 4096], 16000).unwrap();
        assert!(!is_music_like(&silent, &cfg).unwrap());
        let mut r = rng();
        let quiet: Vec<f64> = (0..4096).map(|_| r.random_range(-1e-4..1e-4)).collect();
        assert!(!is_music_like(&AudioBuffer::from_mono(quiet, 16000).unwrap(), &cfg).unwrap());
    }

    #[test]
    fn music_heuristic_flags_chords_but_keeps_noise() {
        let cfg = MusicFilterConfig::default();
        let fs = 16000.0;
        let mut r = rng();
        let partials = [220.0, 277.0, 330.0, 440.0, 554.0, 660.0, 880.0, 1108.0, 1320.0];
        let phases: Vec<f64> = partials.iter().map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        let chord: Vec<f64> = (0..16384)
            .map(|n| {
                let t = n as f64 / fs;
                let tones: f64 = partials
                    .iter()
                    .zip(&phases)
                    .map(|(f, p)| (std::f64::consts::TAU * f * t + p).sin())
                    .sum();
                0.1 * tones + 0.04 * r.random_range(-1.0..1.0)
            })
            .collect();
        assert!(is_music_like(&AudioBuffer::from_mono(chord, 16000).unwrap(), &cfg).unwrap());

        let white: Vec<f64> = (0..16384).map(|_| r.random_range(-0.4..0.4)).collect();
        assert!(!is_music_like(&AudioBuffer::from_mono(white, 16000).unwrap(), &cfg).unwrap());

        // One-pole low-passed noise: engine-like rumble stays in the pool.
        let mut engine = vec![0.0f64; 16384];
        for i in 1..engine.len() {
            engine[i] = 0.9 * engine[i - 1] + r.random_range(-0.2..0.2);
        }
        assert!(!is_music_like(&AudioBuffer::from_mono(engine, 16000).unwrap(), &cfg).unwrap());
    }
}
