//! Batch-processing plumbing: manifests, run configuration, external hooks,
//! and the two enhancement tracks.

pub mod config;
pub mod corpus;
pub mod denoise;
pub mod hooks;
pub mod manifest;
pub mod report;
pub mod track1;
pub mod track2;

use std::path::Path;

use crate::error::{Error, Result};

pub use config::RunConfig;
pub use corpus::{augment_corpus, AugmentConfig};
pub use denoise::{spectral_gate_denoise, DenoiseConfig};
pub use hooks::{HookSpec, ScoreHook, WavHook};
pub use manifest::{EntryKind, Manifest, ManifestEntry};
pub use report::{report_json, report_row};
pub use track1::{track1_enhance, Track1Config, Track1Output};
pub use track2::{track2_diarize, Track2Config, Track2Output};

/// Write a file via a temporary sibling and an atomic rename, so readers
/// never observe a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
