//! Implementations behind the CLI subcommands.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use mcfe_core::diar::der::DerReport;
use mcfe_core::diar::{
    der, energy_vad, read_rttm, refine_rttm, spectral_cluster, write_rttm, EmbeddingSet,
};
use mcfe_core::gss::{gss_enhance, SegmentSpec};
use mcfe_core::iva::iva_enhance;
use mcfe_core::metrics::si_sdr;
use mcfe_core::pipeline::track1::CandidateScore;
use mcfe_core::pipeline::{
    atomic_write, augment_corpus, report_json, report_row, track1_enhance, track2_diarize,
    HookSpec, Manifest, ScoreHook, Track1Config, Track2Config, WavHook,
};
use mcfe_core::rir::{cabin_preset, simulate_scene, ScenePlacement};
use mcfe_core::{read_wav, write_wav, AudioBuffer, Error, Result, WavFormat};

use crate::settings;
use crate::{
    AugmentArgs, ClusterArgs, DerArgs, GssArgs, IvaArgs, RefineArgs, ReportArgs, SimulateArgs,
    SisdrArgs, Track1Args, Track2Args, VadArgs,
};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn scratch_under(dir: &Path) -> Result<PathBuf> {
    let scratch = dir.join(".scratch");
    ensure_dir(&scratch)?;
    Ok(scratch)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    let room = settings::room(&cfg)?;
    let preset = cabin_preset().1;

    let mut sources = cfg.positions("source")?;
    if sources.is_empty() {
        sources = preset.sources;
    }
    if args.source.len() > sources.len() {
        return Err(Error::InvalidInput(format!(
            "{} dry signals but only {} source positions",
            args.source.len(),
            sources.len()
        )));
    }
    sources.truncate(args.source.len());
    let mut mics = cfg.positions("mic")?;
    if mics.is_empty() {
        mics = preset.microphones;
    }

    let dry: Vec<AudioBuffer> = args
        .source
        .iter()
        .map(|p| Ok(read_wav(p)?.downmix_mono()))
        .collect::<Result<_>>()?;
    let placement = ScenePlacement::new(&room, sources, mics)?;
    let wet = simulate_scene(&room, &placement, &dry)?;
    write_wav(&args.output, &wet, WavFormat::Float32)?;
    println!(
        "{} channels, {:.2} s -> {}",
        wet.channels(),
        wet.duration_seconds(),
        args.output.display()
    );
    Ok(())
}

pub fn augment(args: &AugmentArgs) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    ensure_dir(&args.output_dir)?;
    let config =
        settings::augment(&cfg, args.output_dir.clone(), args.seed, args.workers)?;
    let speech = Manifest::read(&args.speech)?;
    let noise = Manifest::read(&args.noise)?;
    let report = augment_corpus(&speech, &noise, &config)?;
    println!(
        "{} mixtures written to {} ({} speech entries skipped, {} noise entries filtered)",
        report.items.len(),
        args.output_dir.display(),
        report.skipped_speech,
        report.filtered_noise
    );
    Ok(())
}

pub fn gss(args: &GssArgs) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    let config = settings::gss(&cfg)?;
    let audio = read_wav(&args.audio)?;
    let rttm = read_rttm(&args.rttm)?;
    let segment = SegmentSpec {
        speaker: args.speaker.clone(),
        onset: args.onset,
        duration: args.duration,
    };
    let enhanced = gss_enhance(&audio, &rttm, &args.recording, &segment, &config)?;
    write_wav(&args.output, &enhanced, WavFormat::Float32)?;
    println!("{:.2} s enhanced -> {}", enhanced.duration_seconds(), args.output.display());
    Ok(())
}

pub fn iva(args: &IvaArgs) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    let config = settings::iva(&cfg)?;
    let audio = read_wav(&args.audio)?;
    let streams = iva_enhance(&audio, &config)?;
    ensure_dir(&args.output_dir)?;
    for (i, stream) in streams.iter().enumerate() {
        write_wav(&args.output_dir.join(format!("iva-{i}.wav")), stream, WavFormat::Float32)?;
    }
    println!("{} streams -> {}", streams.len(), args.output_dir.display());
    Ok(())
}

pub fn vad(args: &VadArgs) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    let config = settings::vad(&cfg)?;
    let audio = read_wav(&args.audio)?;
    let segments = energy_vad(&audio, &config)?;
    let mut text = String::new();
    for &(start, end) in &segments {
        text.push_str(&format!("{start:.6} {end:.6}\n"));
    }
    atomic_write(&args.output, text.as_bytes())?;
    let speech: f64 = segments.iter().map(|(s, e)| e - s).sum();
    println!("{} segments, {speech:.2} s speech -> {}", segments.len(), args.output.display());
    Ok(())
}

/// Two whitespace-separated floats per line: segment start and end in seconds.
fn read_vad_file(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || {
            Error::InvalidInput(format!(
                "{}:{}: expected 'start end' in seconds",
                path.display(),
                i + 1
            ))
        };
        if fields.len() != 2 {
            return Err(bad());
        }
        let start: f64 = fields[0].parse().map_err(|_| bad())?;
        let end: f64 = fields[1].parse().map_err(|_| bad())?;
        out.push((start, end));
    }
    Ok(out)
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    let set = EmbeddingSet::read(&args.embeddings)?;
    let vectors: Array2<f64> = set.vectors().mapv(f64::from);
    let labels = spectral_cluster(&vectors, args.max_speakers.min(set.len()), args.seed)?;
    let mut text = String::new();
    for (key, label) in set.keys().iter().zip(&labels) {
        text.push_str(&format!("{key}\t{label}\n"));
    }
    atomic_write(&args.output, text.as_bytes())?;
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    println!("{} embeddings in {k} clusters -> {}", set.len(), args.output.display());
    Ok(())
}

pub fn der_cmd(args: &DerArgs) -> Result<()> {
    let reference = read_rttm(&args.reference)?;
    let hypothesis = read_rttm(&args.hypothesis)?;
    let report = der(&reference, &hypothesis, args.collar, args.resolution)?;
    let text =
        if args.json { report_json(&report) } else { report_row(&report) };
    println!("{text}");
    if let Some(path) = &args.output {
        atomic_write(path, format!("{text}\n").as_bytes())?;
    }
    Ok(())
}

pub fn refine(args: &RefineArgs) -> Result<()> {
    let list = read_rttm(&args.rttm)?;
    let vad = match (&args.vad, &args.audio) {
        (Some(path), _) => read_vad_file(path)?,
        (None, Some(audio)) => {
            let cfg = settings::load(args.config.as_deref())?;
            energy_vad(&read_wav(audio)?, &settings::vad(&cfg)?)?
        }
        (None, None) => {
            return Err(Error::InvalidInput("refine needs --vad or --audio".into()))
        }
    };
    let refined =
        refine_rttm(&list, &args.recording, &vad, args.min_duration, args.gap_merge)?;
    write_rttm(&args.output, &refined.sorted())?;
    println!(
        "{:.2} s -> {:.2} s labeled speech, {}",
        list.for_recording(&args.recording).total_speech(),
        refined.total_speech(),
        args.output.display()
    );
    Ok(())
}

/// Provenance record for one enhanced utterance.
#[derive(Debug, Serialize)]
struct SelectionRecord {
    id: String,
    speaker: String,
    onset: f64,
    duration: f64,
    method: String,
    score: Option<f64>,
    candidates: Vec<CandidateScore>,
}

pub fn track1(args: &Track1Args) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    ensure_dir(&args.output_dir)?;
    let mut config = Track1Config::new(scratch_under(&args.output_dir)?);
    config.gss = settings::gss(&cfg)?;
    config.iva = settings::iva(&cfg)?;
    config.iva_context_seconds = cfg.f64_or("iva.context", config.iva_context_seconds)?;
    if let Some(template) = &args.hook_asr {
        config.asr_hook = Some(ScoreHook::new(HookSpec::new(template, args.hook_timeout)?));
    }

    let audio = read_wav(&args.audio)?;
    let rttm = read_rttm(&args.rttm)?;
    let segments = rttm.for_recording(&args.recording).sorted();
    if segments.is_empty() {
        return Err(Error::RecordingMissing(args.recording.clone()));
    }

    let mut lines = String::new();
    for (i, seg) in segments.iter().enumerate() {
        let spec = SegmentSpec {
            speaker: seg.speaker_id.clone(),
            onset: seg.onset,
            duration: seg.duration,
        };
        let out = track1_enhance(&audio, &rttm, &args.recording, &spec, &config)?;
        let id = format!("{}-{i:04}", args.recording);
        write_wav(&args.output_dir.join(format!("{id}.wav")), &out.audio, WavFormat::Float32)?;
        println!("{id} {} {:.2}+{:.2} -> {}", seg.speaker_id, seg.onset, seg.duration, out.method);
        let record = SelectionRecord {
            id,
            speaker: seg.speaker_id.clone(),
            onset: seg.onset,
            duration: seg.duration,
            method: out.method,
            score: out.score,
            candidates: out.candidates,
        };
        lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
        lines.push('\n');
    }
    atomic_write(&args.output_dir.join("selection.jsonl"), lines.as_bytes())?;
    println!("{} utterances -> {}", segments.len(), args.output_dir.display());
    Ok(())
}

/// Session summary written next to the Track II artifacts.
#[derive(Debug, Serialize)]
struct Track2Report {
    recording: String,
    speakers: Vec<String>,
    first_pass_speech_seconds: f64,
    refined_speech_seconds: f64,
    streams: Vec<String>,
}

pub fn track2(args: &Track2Args) -> Result<()> {
    let cfg = settings::load(args.config.as_deref())?;
    ensure_dir(&args.output_dir)?;
    let mut config = Track2Config::new(scratch_under(&args.output_dir)?);
    config.gss = settings::gss(&cfg)?;
    config.vad = settings::vad(&cfg)?;
    config.denoise = settings::denoise(&cfg)?;
    config.max_speakers = cfg.usize_or("track2.max_speakers", config.max_speakers)?;
    config.min_duration = cfg.f64_or("track2.min_duration", config.min_duration)?;
    config.gap_merge = cfg.f64_or("track2.gap_merge", config.gap_merge)?;
    config.cluster_seed = args.seed;
    if let Some(template) = &args.hook_denoise {
        config.denoise_hook = Some(WavHook::new(HookSpec::new(template, args.hook_timeout)?));
    }

    let audio = read_wav(&args.audio)?;
    let rttm1 = match &args.rttm1 {
        Some(path) => Some(read_rttm(path)?),
        None => None,
    };
    let embeddings = match &args.embeddings {
        Some(path) => Some(EmbeddingSet::read(path)?),
        None => None,
    };
    let out = track2_diarize(&audio, &args.recording, rttm1.as_ref(), embeddings.as_ref(), &config)?;

    write_rttm(&args.output_dir.join("first_pass.rttm"), &out.first_pass.sorted())?;
    write_rttm(&args.output_dir.join("refined.rttm"), &out.rttm.sorted())?;
    let mut streams = Vec::new();
    for (speaker, stream) in &out.streams {
        let name = format!("{speaker}.wav");
        write_wav(&args.output_dir.join(&name), stream, WavFormat::Float32)?;
        streams.push(name);
    }
    let report = Track2Report {
        recording: args.recording.clone(),
        speakers: out.rttm.speakers_for(&args.recording),
        first_pass_speech_seconds: out.first_pass.total_speech(),
        refined_speech_seconds: out.rttm.total_speech(),
        streams,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    atomic_write(&args.output_dir.join("track2.json"), format!("{json}\n").as_bytes())?;
    println!(
        "{} speakers, {:.2} s -> {:.2} s labeled speech, {}",
        report.speakers.len(),
        report.first_pass_speech_seconds,
        report.refined_speech_seconds,
        args.output_dir.display()
    );
    Ok(())
}

/// One scorable artifact in a session file.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SessionItem {
    Der { name: String, reference: PathBuf, hypothesis: PathBuf },
    Sisdr { name: String, reference: PathBuf, estimate: PathBuf },
}

#[derive(Debug, Serialize)]
struct DerRow {
    name: String,
    #[serde(flatten)]
    report: DerReport,
}

#[derive(Debug, Serialize)]
struct SisdrRow {
    name: String,
    value_db: f64,
}

#[derive(Debug, Serialize)]
struct SessionReport {
    diarization: Vec<DerRow>,
    si_sdr: Vec<SisdrRow>,
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.session).map_err(|e| Error::io(&args.session, e))?;
    let mut diarization = Vec::new();
    let mut si_sdr_rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let item: SessionItem = serde_json::from_str(line).map_err(|e| {
            Error::Manifest(format!("{}:{}: {e}", args.session.display(), i + 1))
        })?;
        match item {
            SessionItem::Der { name, reference, hypothesis } => {
                let report = der(
                    &read_rttm(&reference)?,
                    &read_rttm(&hypothesis)?,
                    args.collar,
                    args.resolution,
                )?;
                diarization.push(DerRow { name, report });
            }
            SessionItem::Sisdr { name, reference, estimate } => {
                let value = pair_si_sdr(&reference, &estimate)?;
                si_sdr_rows.push(SisdrRow { name, value_db: value });
            }
        }
    }

    let mut table = String::new();
    table.push_str(&format!("{:<20} {:>7} {:>7} {:>7} {:>7}\n", "name", "MS", "FA", "SC", "DER"));
    for row in &diarization {
        table.push_str(&format!("{:<20} {}\n", row.name, aligned_row(&row.report)));
    }
    table.push('\n');
    table.push_str(&format!("{:<20} {:>7}\n", "name", "SI-SDR"));
    for row in &si_sdr_rows {
        table.push_str(&format!("{:<20} {:>7.2}\n", row.name, row.value_db));
    }
    if !si_sdr_rows.is_empty() {
        let mean = si_sdr_rows.iter().map(|r| r.value_db).sum::<f64>() / si_sdr_rows.len() as f64;
        table.push_str(&format!("{:<20} {:>7.2}\n", "mean", mean));
    }
    print!("{table}");
    if let Some(path) = &args.output {
        atomic_write(path, table.as_bytes())?;
    }
    if let Some(path) = &args.json_output {
        let report = SessionReport { diarization, si_sdr: si_sdr_rows };
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        atomic_write(path, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}

/// `report_row` rendered into the session table's column widths.
fn aligned_row(report: &DerReport) -> String {
    report_row(report)
        .split_whitespace()
        .map(|v| format!("{v:>7}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// SI-SDR of two wav files, downmixed to mono and cut to the shorter length.
fn pair_si_sdr(reference: &Path, estimate: &Path) -> Result<f64> {
    let reference = read_wav(reference)?.downmix_mono();
    let estimate = read_wav(estimate)?.downmix_mono();
    if reference.num_samples() != estimate.num_samples() {
        log::warn!(
            "length mismatch ({} vs {} samples), scoring the common prefix",
            reference.num_samples(),
            estimate.num_samples()
        );
    }
    let len = reference.num_samples().min(estimate.num_samples());
    let breakdown =
        si_sdr(&reference.slice_samples(0, len), &estimate.slice_samples(0, len))?;
    Ok(breakdown.value_db)
}

pub fn sisdr(args: &SisdrArgs) -> Result<()> {
    let value = pair_si_sdr(&args.reference, &args.estimate)?;
    println!("{value:.6}");
    if let Some(path) = &args.output {
        atomic_write(path, format!("{value:.6}\n").as_bytes())?;
    }
    Ok(())
}
