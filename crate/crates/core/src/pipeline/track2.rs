//! Unattributed enhancement: derive a first-pass diarization, enhance and
//! re-segment each speaker, then enhance again with the refined activity.

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::Array2;

use crate::audio::{read_wav, write_wav, AudioBuffer, WavFormat};
use crate::diar::cluster::{spectral_cluster, EmbeddingSet};
use crate::diar::refine::refine_rttm;
use crate::diar::rttm::{RttmSegment, RttmSegmentList};
use crate::diar::vad::{energy_vad, VadConfig};
use crate::error::{Error, Result};
use crate::gss::{gss_enhance, GssConfig, SegmentSpec};
use crate::pipeline::denoise::{spectral_gate_denoise, DenoiseConfig};
use crate::pipeline::hooks::{unique_path, WavHook};

/// Settings for [`track2_diarize`].
#[derive(Debug, Clone)]
pub struct Track2Config {
    pub gss: GssConfig,
    pub vad: VadConfig,
    pub denoise: DenoiseConfig,
    /// Optional external denoiser; failures fall back to the built-in one.
    pub denoise_hook: Option<WavHook>,
    pub max_speakers: usize,
    /// Refinement: fragments shorter than this are dropped (seconds).
    pub min_duration: f64,
    /// Refinement: holes shorter than this inside an utterance are bridged.
    pub gap_merge: f64,
    pub cluster_seed: u64,
    pub scratch_dir: PathBuf,
}

impl Track2Config {
    pub fn new(scratch_dir: PathBuf) -> Self {
        Self {
            gss: GssConfig::default(),
            vad: VadConfig::default(),
            denoise: DenoiseConfig::default(),
            denoise_hook: None,
            max_speakers: 8,
            min_duration: 0.2,
            gap_merge: 0.3,
            cluster_seed: 0,
            scratch_dir,
        }
    }
}

/// Final diarization plus the per-speaker enhanced signals.
#[derive(Debug, Clone)]
pub struct Track2Output {
    /// Refined second-pass segmentation.
    pub rttm: RttmSegmentList,
    /// The segmentation the pipeline started from.
    pub first_pass: RttmSegmentList,
    /// Second-pass enhancement per speaker, zero outside that speaker's
    /// segments.
    pub streams: Vec<(String, AudioBuffer)>,
}

/// Two-pass guided enhancement without reference diarization.
///
/// The first pass needs either a rough RTTM or an embedding set whose keys
/// are `start-end` spans in seconds (optionally `recording/start-end`);
/// embeddings are clustered into speakers. Each speaker is then enhanced,
/// denoised, re-segmented by voice activity, and the refined segmentation
/// drives a second guided pass.
pub fn track2_diarize(
    audio: &AudioBuffer,
    recording_id: &str,
    rttm1: Option<&RttmSegmentList>,
    embeddings: Option<&EmbeddingSet>,
    config: &Track2Config,
) -> Result<Track2Output> {
    let first_pass = match (rttm1, embeddings) {
        (Some(list), _) => clip_to_recording(list, recording_id, audio)?,
        (None, Some(set)) => cluster_first_pass(set, recording_id, audio, config)?,
        (None, None) => return Err(Error::NoDiarizationSource),
    };
    if first_pass.is_empty() {
        return Err(Error::RecordingMissing(recording_id.to_string()));
    }

    // Pass 1: enhance each speaker with the rough activity, then listen for
    // where they actually talk.
    let speakers: BTreeSet<String> = first_pass
        .for_recording(recording_id)
        .iter()
        .map(|s| s.speaker_id.clone())
        .collect();
    let mut refined_all = RttmSegmentList::default();
    for speaker in &speakers {
        let stream = enhance_speaker_stream(audio, &first_pass, recording_id, speaker, config)?;
        let denoised = denoise_stream(&stream, config);
        let speech = energy_vad(&denoised, &config.vad)?;
        let mut speaker_list = RttmSegmentList::default();
        for seg in first_pass.for_recording(recording_id).iter() {
            if &seg.speaker_id == speaker {
                speaker_list.push(seg.clone());
            }
        }
        let refined = refine_rttm(
            &speaker_list,
            recording_id,
            &speech,
            config.min_duration,
            config.gap_merge,
        )?;
        for seg in refined.iter() {
            refined_all.push(seg.clone());
        }
    }
    let rttm2 = refined_all.sorted();
    if rttm2.is_empty() {
        log::warn!("{recording_id}: refinement removed all speech; keeping first pass");
        let streams = final_streams(audio, &first_pass, recording_id, config)?;
        return Ok(Track2Output { rttm: first_pass.clone(), first_pass, streams });
    }

    // Pass 2: enhance again under the refined activity.
    let streams = final_streams(audio, &rttm2, recording_id, config)?;
    Ok(Track2Output { rttm: rttm2, first_pass, streams })
}

/// Keep segments of one recording, clipped to the audio extent.
fn clip_to_recording(
    list: &RttmSegmentList,
    recording_id: &str,
    audio: &AudioBuffer,
) -> Result<RttmSegmentList> {
    let duration = audio.duration_seconds();
    let mut out = RttmSegmentList::default();
    for seg in list.for_recording(recording_id).iter() {
        let onset = seg.onset.max(0.0).min(duration);
        let end = seg.end().min(duration);
        if end - onset > 1e-6 {
            out.push(RttmSegment {
                recording_id: recording_id.to_string(),
                speaker_id: seg.speaker_id.clone(),
                onset,
                duration: end - onset,
            });
        }
    }
    Ok(out.sorted())
}

/// Build the first-pass RTTM by clustering span-keyed embeddings.
fn cluster_first_pass(
    set: &EmbeddingSet,
    recording_id: &str,
    audio: &AudioBuffer,
    config: &Track2Config,
) -> Result<RttmSegmentList> {
    let mut spans = Vec::new();
    let mut rows = Vec::new();
    for (i, key) in set.keys().iter().enumerate() {
        match parse_span_key(key, recording_id)? {
            Some(span) => {
                spans.push(span);
                rows.push(i);
            }
            None => continue,
        }
    }
    if spans.is_empty() {
        return Err(Error::NoDiarizationSource);
    }
    let mut vectors = Array2::zeros((rows.len(), set.dim()));
    for (r, &i) in rows.iter().enumerate() {
        for d in 0..set.dim() {
            vectors[(r, d)] = set.vectors()[(i, d)] as f64;
        }
    }
    let labels = spectral_cluster(&vectors, config.max_speakers.min(rows.len()), config.cluster_seed)?;
    let mut list = RttmSegmentList::default();
    for (&(start, end), &label) in spans.iter().zip(labels.iter()) {
        list.push(RttmSegment {
            recording_id: recording_id.to_string(),
            speaker_id: format!("SPK{label:02}"),
            onset: start,
            duration: end - start,
        });
    }
    clip_to_recording(&list, recording_id, audio)
}

/// Parse `start-end` or `recording/start-end`; `None` means the key belongs
/// to a different recording.
fn parse_span_key(key: &str, recording_id: &str) -> Result<Option<(f64, f64)>> {
    let span = match key.rsplit_once('/') {
        Some((rec, span)) => {
            if rec != recording_id {
                return Ok(None);
            }
            span
        }
        None => key,
    };
    let bad = || Error::EmbeddingFormat(format!("key {key:?} is not 'start-end' in seconds"));
    let (a, b) = span.split_once('-').ok_or_else(bad)?;
    let start: f64 = a.parse().map_err(|_| bad())?;
    let end: f64 = b.parse().map_err(|_| bad())?;
    if !(start >= 0.0 && end > start) {
        return Err(bad());
    }
    Ok(Some((start, end)))
}

/// Guided enhancement of every segment of one speaker, assembled into one
/// stream at the original timeline.
fn enhance_speaker_stream(
    audio: &AudioBuffer,
    rttm: &RttmSegmentList,
    recording_id: &str,
    speaker: &str,
    config: &Track2Config,
) -> Result<AudioBuffer> {
    let fs = audio.sample_rate() as f64;
    let mut stream = Array2::zeros((1, audio.num_samples()));
    for seg in rttm.for_recording(recording_id).iter() {
        if seg.speaker_id != speaker {
            continue;
        }
        let spec = SegmentSpec {
            speaker: speaker.to_string(),
            onset: seg.onset,
            duration: seg.duration,
        };
        if (seg.duration * fs) as usize <= config.gss.stft.window_length {
            log::warn!(
                "{recording_id}/{speaker}: segment at {:.2}s shorter than one frame, skipped",
                seg.onset
            );
            continue;
        }
        let enhanced = gss_enhance(audio, rttm, recording_id, &spec, &config.gss)?;
        let start = (seg.onset * fs).round() as usize;
        for (i, &v) in enhanced.channel(0).iter().enumerate() {
            if start + i < stream.ncols() {
                stream[(0, start + i)] = v;
            }
        }
    }
    AudioBuffer::new(stream, audio.sample_rate())
}

/// External denoiser when configured and healthy, built-in gate otherwise.
fn denoise_stream(stream: &AudioBuffer, config: &Track2Config) -> AudioBuffer {
    if let Some(hook) = &config.denoise_hook {
        match run_denoise_hook(stream, hook, config) {
            Ok(out) => return out,
            Err(e) => log::warn!("denoise hook failed ({e}); using built-in gate"),
        }
    }
    match spectral_gate_denoise(stream, &config.denoise) {
        Ok(out) => out,
        Err(e) => {
            log::warn!("built-in denoiser failed ({e}); using raw stream");
            stream.clone()
        }
    }
}

fn run_denoise_hook(
    stream: &AudioBuffer,
    hook: &WavHook,
    config: &Track2Config,
) -> Result<AudioBuffer> {
    std::fs::create_dir_all(&config.scratch_dir)
        .map_err(|e| Error::io(&config.scratch_dir, e))?;
    let input = unique_path(&config.scratch_dir, "dn-in", "wav");
    let output = unique_path(&config.scratch_dir, "dn-out", "wav");
    write_wav(&input, stream, WavFormat::Float32)?;
    hook.process(&input, &output)?;
    let out = read_wav(&output)?;
    if out.sample_rate() != stream.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: out.sample_rate(),
            right: stream.sample_rate(),
        });
    }
    Ok(out.zero_pad_to(stream.num_samples()).slice_samples(0, stream.num_samples()))
}

/// Second-pass streams, one per speaker present in the segmentation.
fn final_streams(
    audio: &AudioBuffer,
    rttm: &RttmSegmentList,
    recording_id: &str,
    config: &Track2Config,
) -> Result<Vec<(String, AudioBuffer)>> {
    let speakers: BTreeSet<String> = rttm
        .for_recording(recording_id)
        .iter()
        .map(|s| s.speaker_id.clone())
        .collect();
    let mut out = Vec::with_capacity(speakers.len());
    for speaker in speakers {
        let stream = enhance_speaker_stream(audio, rttm, recording_id, &speaker, config)?;
        out.push((speaker, stream));
    }
    Ok(out)
}
