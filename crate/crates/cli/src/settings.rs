//! Bridges the key=value config file onto the library's config structs.

use std::path::{Path, PathBuf};

use mcfe_core::diar::VadConfig;
use mcfe_core::gss::GssConfig;
use mcfe_core::iva::IvaConfig;
use mcfe_core::pipeline::{AugmentConfig, DenoiseConfig, RunConfig};
use mcfe_core::rir::{cabin_preset, RoomSpec};
use mcfe_core::Result;

/// Read the config file, or start from an empty one.
pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p),
        None => RunConfig::parse(""),
    }
}

/// Room geometry under `room.*`; unset keys fall back to the cabin preset.
pub fn room(cfg: &RunConfig) -> Result<RoomSpec> {
    let preset = cabin_preset().0;
    let dims = cfg.vec3("room.dims")?.unwrap_or(preset.dimensions);
    let absorption = cfg.f64_or("room.absorption", preset.absorption)?;
    let max_order = cfg.usize_or("room.max_order", preset.max_order)?;
    let fs = cfg.u64_or("room.fs", preset.sample_rate as u64)? as u32;
    RoomSpec::new(dims, absorption, max_order, fs)
}

/// Guided separation tuning under `gss.*`.
pub fn gss(cfg: &RunConfig) -> Result<GssConfig> {
    let d = GssConfig::default();
    Ok(GssConfig {
        stft: cfg.stft_or("gss", d.stft)?,
        context_seconds: cfg.f64_or("gss.context", d.context_seconds)?,
        activity_context_seconds: cfg
            .f64_or("gss.activity_context", d.activity_context_seconds)?,
        em_iterations: cfg.usize_or("gss.iterations", d.em_iterations)?,
        epsilon: cfg.f64_or("gss.epsilon", d.epsilon)?,
        mask_floor: cfg.f64_or("gss.mask_floor", d.mask_floor)?,
        post_mask: cfg.bool_or("gss.post_mask", d.post_mask)?,
        ref_channel: cfg.usize_or("gss.ref_channel", d.ref_channel)?,
        loading: cfg.f64_or("gss.loading", d.loading)?,
        seed: d.seed,
    })
}

/// Blind separation tuning under `iva.*`.
pub fn iva(cfg: &RunConfig) -> Result<IvaConfig> {
    let d = IvaConfig::default();
    Ok(IvaConfig {
        stft: cfg.stft_or("iva", d.stft)?,
        iterations: cfg.usize_or("iva.iterations", d.iterations)?,
        ref_channel: cfg.usize_or("iva.ref_channel", d.ref_channel)?,
    })
}

/// Voice-activity tuning under `vad.*`.
pub fn vad(cfg: &RunConfig) -> Result<VadConfig> {
    let d = VadConfig::default();
    Ok(VadConfig {
        frame_seconds: cfg.f64_or("vad.frame", d.frame_seconds)?,
        threshold_db: cfg.f64_or("vad.threshold_db", d.threshold_db)?,
        absolute_floor_db: cfg.f64_or("vad.floor_db", d.absolute_floor_db)?,
        hangover_frames: cfg.usize_or("vad.hangover", d.hangover_frames)?,
        min_speech: cfg.f64_or("vad.min_speech", d.min_speech)?,
        min_silence: cfg.f64_or("vad.min_silence", d.min_silence)?,
    })
}

/// Spectral-gate tuning under `denoise.*`.
pub fn denoise(cfg: &RunConfig) -> Result<DenoiseConfig> {
    let d = DenoiseConfig::default();
    Ok(DenoiseConfig {
        stft: cfg.stft_or("denoise", d.stft)?,
        noise_quantile: cfg.f64_or("denoise.quantile", d.noise_quantile)?,
        oversubtraction: cfg.f64_or("denoise.oversubtraction", d.oversubtraction)?,
        gain_floor: cfg.f64_or("denoise.gain_floor", d.gain_floor)?,
    })
}

/// Corpus settings under `augment.*`, `room.*`, `source.N`, `mic.N`,
/// `noise.position` and `music.*`, starting from the cabin preset.
pub fn augment(
    cfg: &RunConfig,
    output_dir: PathBuf,
    seed: u64,
    workers: usize,
) -> Result<AugmentConfig> {
    let mut a = AugmentConfig::cabin(output_dir, seed);
    a.room = room(cfg)?;
    a.variants_per_entry = cfg.usize_or("augment.variants", a.variants_per_entry)?;
    a.snr_choices = cfg.f64_list_or("augment.snr", &a.snr_choices)?;
    a.speed_choices = cfg.f64_list_or("augment.speed", &a.speed_choices)?;
    let sources = cfg.positions("source")?;
    if !sources.is_empty() {
        a.source_positions = sources;
    }
    let mics = cfg.positions("mic")?;
    if !mics.is_empty() {
        a.mic_positions = mics;
    }
    if let Some(p) = cfg.vec3("noise.position")? {
        a.noise_position = p;
    }
    a.music_filter.flatness_frame = cfg.usize_or("music.frame", a.music_filter.flatness_frame)?;
    a.music_filter.flatness_low = cfg.f64_or("music.flatness_low", a.music_filter.flatness_low)?;
    a.music_filter.flatness_high =
        cfg.f64_or("music.flatness_high", a.music_filter.flatness_high)?;
    a.music_filter.energy_threshold =
        cfg.f64_or("music.energy_threshold", a.music_filter.energy_threshold)?;
    a.workers = workers;
    Ok(a)
}
