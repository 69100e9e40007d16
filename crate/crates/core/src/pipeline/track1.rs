//! Speaker-attributed enhancement: run the guided and the blind separator on
//! the same segment and let an external recognizer pick the winner.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioBuffer, WavFormat};
use crate::diar::rttm::RttmSegmentList;
use crate::error::Result;
use crate::gss::{gss_enhance, GssConfig, SegmentSpec};
use crate::iva::{iva_enhance, IvaConfig};
use crate::pipeline::hooks::{unique_path, ScoreHook};

/// Settings for [`track1_enhance`].
#[derive(Debug, Clone)]
pub struct Track1Config {
    pub gss: GssConfig,
    pub iva: IvaConfig,
    /// Context around the segment handed to the blind separator.
    pub iva_context_seconds: f64,
    pub asr_hook: Option<ScoreHook>,
    pub scratch_dir: PathBuf,
}

impl Track1Config {
    pub fn new(scratch_dir: PathBuf) -> Self {
        Self {
            gss: GssConfig::default(),
            iva: IvaConfig::default(),
            iva_context_seconds: 2.0,
            asr_hook: None,
            scratch_dir,
        }
    }
}

/// A scored candidate, kept for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    pub method: String,
    pub score: f64,
}

/// The winning candidate plus how it was chosen.
#[derive(Debug, Clone)]
pub struct Track1Output {
    pub audio: AudioBuffer,
    pub method: String,
    pub score: Option<f64>,
    pub candidates: Vec<CandidateScore>,
}

/// Enhance one attributed segment.
///
/// The guided separator always produces a candidate; the blind separator adds
/// one per demixed stream when it succeeds. Without a hook the guided result
/// wins outright. With a hook every candidate is scored and the best score
/// wins; on ties the earlier candidate — the guided one first — is kept.
pub fn track1_enhance(
    audio: &AudioBuffer,
    rttm: &RttmSegmentList,
    recording_id: &str,
    segment: &SegmentSpec,
    config: &Track1Config,
) -> Result<Track1Output> {
    let mut candidates: Vec<(String, AudioBuffer)> = Vec::new();

    let guided = gss_enhance(audio, rttm, recording_id, segment, &config.gss)?;
    candidates.push(("gss".into(), guided));

    match blind_candidates(audio, segment, config) {
        Ok(streams) => {
            for (i, stream) in streams.into_iter().enumerate() {
                candidates.push((format!("iva{i}"), stream));
            }
        }
        Err(e) => log::warn!("blind separation skipped: {e}"),
    }

    let Some(hook) = &config.asr_hook else {
        let (method, audio) = candidates.swap_remove(0);
        return Ok(Track1Output { audio, method, score: None, candidates: Vec::new() });
    };

    std::fs::create_dir_all(&config.scratch_dir)
        .map_err(|e| crate::error::Error::io(&config.scratch_dir, e))?;
    let mut scored = Vec::with_capacity(candidates.len());
    for (method, candidate) in candidates {
        let wav = unique_path(&config.scratch_dir, &format!("t1-{method}"), "wav");
        write_wav(&wav, &candidate, WavFormat::Pcm16)?;
        let score = hook.score(&wav, &config.scratch_dir)?;
        scored.push((method, candidate, score));
    }

    let mut best = 0;
    for (i, entry) in scored.iter().enumerate().skip(1) {
        if entry.2 > scored[best].2 {
            best = i;
        }
    }
    let provenance: Vec<CandidateScore> = scored
        .iter()
        .map(|(method, _, score)| CandidateScore { method: method.clone(), score: *score })
        .collect();
    let (method, audio, score) = scored.swap_remove(best);
    Ok(Track1Output { audio, method, score: Some(score), candidates: provenance })
}

/// Cut the segment with some context, demix blindly, and trim each stream
/// back to the exact segment span.
fn blind_candidates(
    audio: &AudioBuffer,
    segment: &SegmentSpec,
    config: &Track1Config,
) -> Result<Vec<AudioBuffer>> {
    let fs = audio.sample_rate() as f64;
    let seg_start = (segment.onset * fs).round() as usize;
    let seg_len = (segment.duration * fs).round() as usize;
    let context = (config.iva_context_seconds.max(0.0) * fs).round() as usize;
    let cut_start = seg_start.saturating_sub(context);
    let cut_len = (seg_start + seg_len + context).min(audio.num_samples()) - cut_start;
    let cut = audio.slice_samples(cut_start, cut_len);
    let streams = iva_enhance(&cut, &config.iva)?;
    Ok(streams
        .into_iter()
        .map(|s| s.slice_samples(seg_start - cut_start, seg_len))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diar::rttm::RttmSegment;
    use crate::error::{Error, HookError};
    use crate::pipeline::hooks::HookSpec;
    use crate::rir::{simulate_scene, RoomSpec, ScenePlacement};
    use crate::stft::{StftConfig, Window};
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_scene() -> (AudioBuffer, RttmSegmentList, SegmentSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let fs = 16000usize;
        let n = 2 * fs;
        // Two speakers: A talks in [0.2, 1.0), B in [1.0, 1.8).
        let mut a = Array2::zeros((1, n));
        let mut b = Array2::zeros((1, n));
        for t in 0..n {
            let sec = t as f64 / fs as f64;
            if (0.2..1.0).contains(&sec) {
                a[(0, t)] = 0.4 * rng.random_range(-1.0..1.0);
            }
            if (1.0..1.8).contains(&sec) {
                b[(0, t)] = 0.4 * rng.random_range(-1.0..1.0);
            }
        }
        let room = RoomSpec::new([2.8, 1.5, 1.2], 0.7, 1, 16000).unwrap();
        let placement = ScenePlacement::new(
            &room,
            vec![[0.9, 0.4, 0.9], [2.1, 1.1, 0.9]],
            vec![[1.2, 0.75, 1.15], [1.5, 0.75, 1.15], [1.8, 0.75, 1.15]],
        )
        .unwrap();
        let mixed = simulate_scene(
            &room,
            &placement,
            &[
                AudioBuffer::new(a, 16000).unwrap(),
                AudioBuffer::new(b, 16000).unwrap(),
            ],
        )
        .unwrap();
        let mixed = mixed.slice_samples(0, n);

        let mut rttm = RttmSegmentList::default();
        rttm.push(RttmSegment {
            recording_id: "car".into(),
            speaker_id: "A".into(),
            onset: 0.2,
            duration: 0.8,
        });
        rttm.push(RttmSegment {
            recording_id: "car".into(),
            speaker_id: "B".into(),
            onset: 1.0,
            duration: 0.8,
        });
        let segment = SegmentSpec { speaker: "A".into(), onset: 0.2, duration: 0.8 };
        (mixed, rttm, segment)
    }

    fn fast_config(scratch: PathBuf) -> Track1Config {
        let mut config = Track1Config::new(scratch);
        config.gss.stft = StftConfig::new(256, 128, 256, Window::SqrtHann).unwrap();
        config.gss.em_iterations = 4;
        config.iva.stft = config.gss.stft;
        config.iva.iterations = 4;
        config
    }

    #[test]
    fn without_hook_the_guided_result_wins() {
        let dir = tempfile::tempdir().unwrap();
        let (audio, rttm, segment) = test_scene();
        let config = fast_config(dir.path().to_path_buf());
        let out = track1_enhance(&audio, &rttm, "car", &segment, &config).unwrap();
        assert_eq!(out.method, "gss");
        assert_eq!(out.score, None);
        assert_eq!(out.audio.num_samples(), (0.8 * 16000.0) as usize);

        let again = track1_enhance(&audio, &rttm, "car", &segment, &config).unwrap();
        for (x, y) in out.audio.channel(0).iter().zip(again.audio.channel(0).iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn constant_scores_tie_break_to_guided() {
        let dir = tempfile::tempdir().unwrap();
        let (audio, rttm, segment) = test_scene();
        let mut config = fast_config(dir.path().to_path_buf());
        config.asr_hook = Some(ScoreHook::new(
            HookSpec::new("true {in} && echo 1.0 > {out}", 10.0).unwrap(),
        ));
        let out = track1_enhance(&audio, &rttm, "car", &segment, &config).unwrap();
        assert_eq!(out.method, "gss");
        assert!(out.candidates.len() >= 2, "{:?}", out.candidates);
        assert!(out.candidates.iter().all(|c| c.score == 1.0));
    }

    #[test]
    fn argmax_follows_the_hook() {
        let dir = tempfile::tempdir().unwrap();
        let (audio, rttm, segment) = test_scene();
        let mut config = fast_config(dir.path().to_path_buf());
        // Deterministic per-candidate score: one sample byte from the wav.
        config.asr_hook = Some(ScoreHook::new(
            HookSpec::new("od -An -tu1 -j 2001 -N 1 {in} > {out}", 10.0).unwrap(),
        ));
        let out = track1_enhance(&audio, &rttm, "car", &segment, &config).unwrap();
        let best = out
            .candidates
            .iter()
            .max_by(|a, b| a.score.partial_cmp(&b.score).unwrap())
            .unwrap();
        assert_eq!(out.score, Some(best.score));
        let first_at_best =
            out.candidates.iter().find(|c| c.score == best.score).unwrap();
        assert_eq!(out.method, first_at_best.method);
    }

    #[test]
    fn hook_failures_propagate() {
        let dir = tempfile::tempdir().unwrap();
        let (audio, rttm, segment) = test_scene();
        let mut config = fast_config(dir.path().to_path_buf());
        config.asr_hook = Some(ScoreHook::new(
            HookSpec::new("true {in} {out}; exit 9", 10.0).unwrap(),
        ));
        assert!(matches!(
            track1_enhance(&audio, &rttm, "car", &segment, &config),
            Err(Error::Hook(HookError::ExitStatus { got: 9, .. }))
        ));
    }
}
