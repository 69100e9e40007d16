//! Energy-based voice activity detection with an adaptive noise floor.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Detection settings for [`energy_vad`].
#[derive(Debug, Clone, Copy)]
pub struct VadConfig {
    /// Analysis frame length in seconds (non-overlapping).
    pub frame_seconds: f64,
    /// Threshold in dB above the estimated noise floor.
    pub threshold_db: f64,
    /// Frames at or below this level are dead air: never speech, and not
    /// counted when estimating the noise floor.
    pub absolute_floor_db: f64,
    /// Frames of speech kept alive after the last loud frame.
    pub hangover_frames: usize,
    /// Segments shorter than this are dropped (seconds).
    pub min_speech: f64,
    /// Gaps shorter than this are bridged (seconds).
    pub min_silence: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_seconds: 0.025,
            threshold_db: 6.0,
            absolute_floor_db: -70.0,
            hangover_frames: 3,
            min_speech: 0.2,
            min_silence: 0.2,
        }
    }
}

/// Per-frame energies in dB.
fn frame_energies(samples: &[f64], frame_len: usize) -> Vec<f64> {
    samples
        .chunks_exact(frame_len)
        .map(|frame| {
            let power = frame.iter().map(|x| x * x).sum::<f64>() / frame_len as f64;
            10.0 * (power + 1e-12).log10()
        })
        .collect()
}

/// Noise floor estimate: mean of the quietest decile of frames.
fn noise_floor_db(energies: &[f64]) -> f64 {
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let take = (sorted.len() / 10).max(1);
    sorted[..take].iter().sum::<f64>() / take as f64
}

/// Detect speech regions as half-open `(start, end)` intervals in seconds.
pub fn energy_vad(audio: &AudioBuffer, config: &VadConfig) -> Result<Vec<(f64, f64)>> {
    if config.frame_seconds <= 0.0 {
        return Err(Error::InvalidInput("vad frame length must be positive".into()));
    }
    let frame_len = (config.frame_seconds * audio.sample_rate() as f64).round() as usize;
    if frame_len == 0 {
        return Err(Error::InvalidInput("vad frame length rounds to zero samples".into()));
    }
    let mono = audio.downmix_mono();
    let samples = mono.channel(0);
    let energies = frame_energies(samples.as_slice().unwrap(), frame_len);
    if energies.is_empty() {
        return Ok(Vec::new());
    }

    // Dead air (zero padding between takes, muted stretches) would drag the
    // floor to digital silence; estimate it from audible frames only.
    let audible: Vec<f64> =
        energies.iter().copied().filter(|&e| e > config.absolute_floor_db).collect();
    if audible.is_empty() {
        return Ok(Vec::new());
    }
    let threshold =
        (noise_floor_db(&audible) + config.threshold_db).max(config.absolute_floor_db);
    let mut active: Vec<bool> = energies.iter().map(|&e| e > threshold).collect();

    // Trailing hangover keeps decaying speech attached to its segment.
    let mut remaining = 0usize;
    for flag in active.iter_mut() {
        if *flag {
            remaining = config.hangover_frames;
        } else if remaining > 0 {
            *flag = true;
            remaining -= 1;
        }
    }

    let frame_sec = frame_len as f64 / audio.sample_rate() as f64;
    let mut segments: Vec<(f64, f64)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &flag) in active.iter().enumerate() {
        match (flag, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                segments.push((s as f64 * frame_sec, i as f64 * frame_sec));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segments.push((s as f64 * frame_sec, active.len() as f64 * frame_sec));
    }

    // Bridge short gaps first so a briefly interrupted utterance survives the
    // minimum-duration prune as one piece.
    let mut bridged: Vec<(f64, f64)> = Vec::new();
    for seg in segments {
        match bridged.last_mut() {
            Some(last) if seg.0 - last.1 < config.min_silence => last.1 = seg.1,
            _ => bridged.push(seg),
        }
    }
    bridged.retain(|&(s, e)| e - s >= config.min_speech);
    Ok(bridged)
}
