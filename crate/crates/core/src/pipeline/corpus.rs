//! Training-corpus augmentation: speed perturbation, cabin reverberation,
//! and noise mixing at controlled SNRs, with music-like noise filtered out.

use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, AudioBuffer, WavFormat};
use crate::augment::{is_music_like, mix_at_snr, speed_perturb, MusicFilterConfig};
use crate::dsp::derive_seed;
use crate::error::{Error, Result};
use crate::pipeline::manifest::{EntryKind, Manifest, ManifestEntry};
use crate::rir::{cabin_preset, simulate_scene, RoomSpec, ScenePlacement};

/// Settings for [`augment_corpus`].
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub variants_per_entry: usize,
    pub snr_choices: Vec<f64>,
    pub speed_choices: Vec<f64>,
    pub room: RoomSpec,
    /// Candidate seat positions; each variant picks one.
    pub source_positions: Vec<[f64; 3]>,
    pub mic_positions: Vec<[f64; 3]>,
    pub noise_position: [f64; 3],
    pub music_filter: MusicFilterConfig,
    /// Entries are independent; values above 1 render them in parallel.
    pub workers: usize,
}

impl AugmentConfig {
    /// Cabin geometry with the usual perturbation grid.
    pub fn cabin(output_dir: PathBuf, seed: u64) -> Self {
        let (room, placement) = cabin_preset();
        Self {
            output_dir,
            seed,
            variants_per_entry: 1,
            snr_choices: vec![0.0, 5.0, 10.0, 15.0],
            speed_choices: vec![0.9, 1.0, 1.1],
            room,
            source_positions: placement.sources,
            mic_positions: placement.microphones,
            noise_position: [1.4, 0.75, 0.3],
            music_filter: MusicFilterConfig::default(),
            workers: 1,
        }
    }
}

/// Metadata for one generated mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentedItem {
    pub id: String,
    pub path: PathBuf,
    pub source_id: String,
    pub noise_id: String,
    pub speed: f64,
    pub snr_db: f64,
}

/// What [`augment_corpus`] produced.
#[derive(Debug, Clone)]
pub struct AugmentReport {
    pub items: Vec<AugmentedItem>,
    pub skipped_speech: usize,
    pub filtered_noise: usize,
}

/// Extend a mono signal to `len` samples by cyclic repetition.
fn tile_mono(audio: &AudioBuffer, len: usize) -> AudioBuffer {
    let x = audio.channel(0);
    let samples: Vec<f64> = (0..len).map(|i| x[i % x.len()]).collect();
    AudioBuffer::from_mono(samples, audio.sample_rate()).expect("tiled copy stays finite")
}

/// Render far-field mixtures for every speech entry.
///
/// Each variant draws its own RNG stream from the entry id, so results do not
/// depend on corpus order. Unreadable speech entries are skipped with a
/// warning; music-like or unreadable noise entries are dropped from the pool.
pub fn augment_corpus(
    speech: &Manifest,
    noise: &Manifest,
    config: &AugmentConfig,
) -> Result<AugmentReport> {
    if config.variants_per_entry == 0 {
        return Err(Error::InvalidInput("variants_per_entry must be at least 1".into()));
    }
    if config.snr_choices.is_empty() || config.speed_choices.is_empty() {
        return Err(Error::InvalidInput("need at least one SNR and one speed choice".into()));
    }
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(&config.output_dir, e))?;

    // Assemble the noise pool once, dropping anything tagged or detected as
    // music and anything unreadable.
    let mut pool: Vec<(String, AudioBuffer)> = Vec::new();
    let mut filtered_noise = 0usize;
    for entry in noise.entries() {
        match entry.kind {
            EntryKind::Speech => continue,
            EntryKind::Music => {
                log::info!("noise {}: tagged as music, skipping", entry.id);
                filtered_noise += 1;
                continue;
            }
            EntryKind::Noise => {}
        }
        let audio = match read_wav(&entry.audio) {
            Ok(a) => a.downmix_mono(),
            Err(e) => {
                log::warn!("noise {}: {e}, skipping", entry.id);
                filtered_noise += 1;
                continue;
            }
        };
        match is_music_like(&audio, &config.music_filter) {
            Ok(true) => {
                log::info!("noise {}: music-like, skipping", entry.id);
                filtered_noise += 1;
            }
            Ok(false) => pool.push((entry.id.clone(), audio)),
            Err(e) => {
                log::warn!("noise {}: {e}, skipping", entry.id);
                filtered_noise += 1;
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::InvalidInput("no usable noise entries after filtering".into()));
    }

    let entries: Vec<&ManifestEntry> = speech.of_kind(EntryKind::Speech).collect();
    let workers = config.workers.max(1).min(entries.len().max(1));
    let results: Vec<Option<EntryOutput>> = if workers <= 1 {
        entries.iter().map(|e| process_entry(e, &pool, config)).collect::<Result<_>>()?
    } else {
        process_parallel(&entries, &pool, config, workers)?
    };

    let mut items = Vec::new();
    let mut skipped_speech = 0usize;
    let mut out_entries = Vec::new();
    for result in results {
        match result {
            None => skipped_speech += 1,
            Some(output) => {
                items.extend(output.items);
                out_entries.extend(output.entries);
            }
        }
    }

    Manifest::new(out_entries)?.write(&config.output_dir.join("augmented.jsonl"))?;
    let mut meta = String::new();
    for item in &items {
        meta.push_str(&serde_json::to_string(item).expect("item serializes"));
        meta.push('\n');
    }
    crate::pipeline::atomic_write(&config.output_dir.join("augmented_meta.jsonl"), meta.as_bytes())?;
    Ok(AugmentReport { items, skipped_speech, filtered_noise })
}

struct EntryOutput {
    items: Vec<AugmentedItem>,
    entries: Vec<ManifestEntry>,
}

/// All variants of one speech entry; `None` when the entry is skipped.
fn process_entry(
    entry: &ManifestEntry,
    pool: &[(String, AudioBuffer)],
    config: &AugmentConfig,
) -> Result<Option<EntryOutput>> {
    let dry = match read_wav(&entry.audio) {
        Ok(a) => a.downmix_mono(),
        Err(e) => {
            log::warn!("speech {}: {e}, skipping", entry.id);
            return Ok(None);
        }
    };
    if dry.sample_rate() != config.room.sample_rate {
        log::warn!(
            "speech {}: sample rate {} does not match room {}, skipping",
            entry.id,
            dry.sample_rate(),
            config.room.sample_rate
        );
        return Ok(None);
    }
    let mut output = EntryOutput { items: Vec::new(), entries: Vec::new() };
    for v in 0..config.variants_per_entry {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("{}/v{v}", entry.id)));
        let speed = config.speed_choices[rng.random_range(0..config.speed_choices.len())];
        let snr = config.snr_choices[rng.random_range(0..config.snr_choices.len())];
        let seat = config.source_positions[rng.random_range(0..config.source_positions.len())];
        let (noise_id, noise_dry) = &pool[rng.random_range(0..pool.len())];

        let perturbed = speed_perturb(&dry, speed)?;
        let speech_scene =
            ScenePlacement::new(&config.room, vec![seat], config.mic_positions.clone())?;
        let wet_speech = simulate_scene(&config.room, &speech_scene, &[perturbed.clone()])?;

        // Tile the noise a second past the speech so the mixer can draw a
        // random aligned segment even after both pick up reverb tails.
        let tiled =
            tile_mono(noise_dry, perturbed.num_samples() + config.room.sample_rate as usize);
        let noise_scene = ScenePlacement::new(
            &config.room,
            vec![config.noise_position],
            config.mic_positions.clone(),
        )?;
        let wet_noise = simulate_scene(&config.room, &noise_scene, &[tiled])?;

        let mixed = mix_at_snr(&wet_speech, &wet_noise, snr, true, &mut rng)?;
        let id = format!("{}-v{v}", entry.id);
        let name = format!("{id}.wav");
        let path = config.output_dir.join(&name);
        write_wav(&path, &mixed, WavFormat::Float32)?;
        // Manifest paths are relative to the manifest's own directory.
        output.entries.push(ManifestEntry {
            id: id.clone(),
            audio: PathBuf::from(name),
            kind: EntryKind::Speech,
            rttm: None,
            embeddings: None,
            speaker: entry.speaker.clone(),
            text: entry.text.clone(),
        });
        output.items.push(AugmentedItem {
            id,
            path,
            source_id: entry.id.clone(),
            noise_id: noise_id.clone(),
            speed,
            snr_db: snr,
        });
    }
    Ok(Some(output))
}

/// Work-stealing render over a scoped pool; slot order preserves entry order.
fn process_parallel(
    entries: &[&ManifestEntry],
    pool: &[(String, AudioBuffer)],
    config: &AugmentConfig,
    workers: usize,
) -> Result<Vec<Option<EntryOutput>>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::mpsc;

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= entries.len() {
                    break;
                }
                if tx.send((i, process_entry(entries[i], pool, config))).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut slots: Vec<Option<Result<Option<EntryOutput>>>> =
        (0..entries.len()).map(|_| None).collect();
    for (i, result) in rx {
        slots[i] = Some(result);
    }
    slots.into_iter().map(|slot| slot.expect("every entry is processed")).collect()
}
