//! Batch front-end for the in-car enhancement and diarization toolkit:
//! corpus simulation and augmentation, guided and blind separation, VAD,
//! clustering, scoring, and the two end-to-end track pipelines.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcfe_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_HOOK: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mcfe", version, about = "Multi-channel far-field enhancement pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render dry sources into a multi-channel cabin recording.
    Simulate(SimulateArgs),
    /// Build an augmented training corpus from speech and noise manifests.
    Augment(AugmentArgs),
    /// Enhance one annotated utterance with guided source separation.
    Gss(GssArgs),
    /// Blindly separate a multi-channel recording into per-source streams.
    Iva(IvaArgs),
    /// Detect speech intervals with the energy VAD.
    Vad(VadArgs),
    /// Cluster an embedding container into speaker labels.
    Cluster(ClusterArgs),
    /// Score a hypothesis RTTM against a reference.
    Der(DerArgs),
    /// Snap RTTM segments to voice activity.
    Refine(RefineArgs),
    /// Enhance annotated utterances and pick the best system per utterance.
    Track1(Track1Args),
    /// Diarize, enhance, refine, and re-enhance one recording.
    Track2(Track2Args),
    /// Render DER and SI-SDR summaries for a session file.
    Report(ReportArgs),
    /// Print the scale-invariant SDR of an estimate against a reference.
    Sisdr(SisdrArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Dry mono wav per source, in `source.N` position order.
    #[arg(long, required = true, num_args = 1..)]
    pub source: Vec<PathBuf>,
    /// Multi-channel output wav.
    #[arg(long)]
    pub output: PathBuf,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Speech manifest (JSON lines).
    #[arg(long)]
    pub speech: PathBuf,
    /// Noise/music manifest (JSON lines).
    #[arg(long)]
    pub noise: PathBuf,
    /// Directory for mixtures and the output manifest.
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Base seed for all per-entry draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parallel render workers.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GssArgs {
    /// Multi-channel input wav.
    #[arg(long)]
    pub audio: PathBuf,
    /// Activity annotations for the recording.
    #[arg(long)]
    pub rttm: PathBuf,
    /// Recording id in the RTTM.
    #[arg(long)]
    pub recording: String,
    /// Target speaker id.
    #[arg(long)]
    pub speaker: String,
    /// Utterance onset in seconds.
    #[arg(long)]
    pub onset: f64,
    /// Utterance duration in seconds.
    #[arg(long)]
    pub duration: f64,
    /// Mono output wav.
    #[arg(long)]
    pub output: PathBuf,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IvaArgs {
    /// Multi-channel input wav.
    #[arg(long)]
    pub audio: PathBuf,
    /// Directory for the separated streams (iva-0.wav, iva-1.wav, ...).
    #[arg(long)]
    pub output_dir: PathBuf,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VadArgs {
    /// Input wav (downmixed before detection).
    #[arg(long)]
    pub audio: PathBuf,
    /// Output text file, one `start end` pair per line in seconds.
    #[arg(long)]
    pub output: PathBuf,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// EMB1 embedding container.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output text file, one `key<TAB>label` per line.
    #[arg(long)]
    pub output: PathBuf,
    /// Cluster-count ceiling (clamped to the number of embeddings).
    #[arg(long, default_value_t = 8)]
    pub max_speakers: usize,
    /// Seed for the k-means restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DerArgs {
    /// Reference RTTM.
    #[arg(long)]
    pub reference: PathBuf,
    /// Hypothesis RTTM.
    #[arg(long)]
    pub hypothesis: PathBuf,
    /// No-score collar around reference boundaries, in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub collar: f64,
    /// Scoring frame length in seconds.
    #[arg(long, default_value_t = 0.01)]
    pub resolution: f64,
    /// Emit the full JSON breakdown instead of the `MS FA SC DER` row.
    #[arg(long)]
    pub json: bool,
    /// Also write the rendered result here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Input RTTM.
    #[arg(long)]
    pub rttm: PathBuf,
    /// Recording id to refine.
    #[arg(long)]
    pub recording: String,
    /// Precomputed speech intervals (`start end` per line).
    #[arg(long, conflicts_with = "audio")]
    pub vad: Option<PathBuf>,
    /// Run the energy VAD on this wav instead.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Refined output RTTM.
    #[arg(long)]
    pub output: PathBuf,
    /// Drop refined fragments shorter than this, in seconds.
    #[arg(long, default_value_t = 0.2)]
    pub min_duration: f64,
    /// Bridge holes shorter than this inside an utterance, in seconds.
    #[arg(long, default_value_t = 0.3)]
    pub gap_merge: f64,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Track1Args {
    /// Multi-channel session wav.
    #[arg(long)]
    pub audio: PathBuf,
    /// Utterance annotations for the session.
    #[arg(long)]
    pub rttm: PathBuf,
    /// Recording id in the RTTM.
    #[arg(long)]
    pub recording: String,
    /// Directory for chosen wavs and selection.jsonl.
    #[arg(long)]
    pub output_dir: PathBuf,
    /// ASR scoring hook: shell template with {in} (wav) and {out} (score file).
    #[arg(long)]
    pub hook_asr: Option<String>,
    /// Hook wall-clock budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub hook_timeout: f64,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Track2Args {
    /// Multi-channel session wav.
    #[arg(long)]
    pub audio: PathBuf,
    /// Recording id for the emitted RTTMs.
    #[arg(long)]
    pub recording: String,
    /// Directory for RTTMs, per-speaker streams, and track2.json.
    #[arg(long)]
    pub output_dir: PathBuf,
    /// First-pass RTTM; omit to cluster --embeddings instead.
    #[arg(long)]
    pub rttm1: Option<PathBuf>,
    /// EMB1 container with `recording/start-end` keys.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Denoiser hook: shell template with {in} and {out} wav paths.
    #[arg(long)]
    pub hook_denoise: Option<String>,
    /// Hook wall-clock budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub hook_timeout: f64,
    /// Seed for the clustering restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Session file: JSON lines of der/sisdr items.
    #[arg(long)]
    pub session: PathBuf,
    /// Also write the aligned text table here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    pub json_output: Option<PathBuf>,
    /// No-score collar for der items, in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub collar: f64,
    /// Scoring frame length for der items, in seconds.
    #[arg(long, default_value_t = 0.01)]
    pub resolution: f64,
}

#[derive(Debug, Args)]
pub struct SisdrArgs {
    /// Reference wav.
    #[arg(long)]
    pub reference: PathBuf,
    /// Estimate wav.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Also write the value here (one line, dB).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn run(cli: &Cli) -> mcfe_core::Result<()> {
    match &cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Augment(args) => commands::augment(args),
        Command::Gss(args) => commands::gss(args),
        Command::Iva(args) => commands::iva(args),
        Command::Vad(args) => commands::vad(args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Der(args) => commands::der_cmd(args),
        Command::Refine(args) => commands::refine(args),
        Command::Track1(args) => commands::track1(args),
        Command::Track2(args) => commands::track2(args),
        Command::Report(args) => commands::report(args),
        Command::Sisdr(args) => commands::sisdr(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_USAGE) };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Hook(_) => ExitCode::from(EXIT_HOOK),
                _ => ExitCode::from(EXIT_DATA),
            }
        }
    }
}
