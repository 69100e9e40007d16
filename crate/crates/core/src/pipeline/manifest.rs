//! JSON-lines manifests describing audio corpora.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What an entry contributes to augmentation or enhancement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    #[default]
    Speech,
    Noise,
    Music,
}

/// One corpus item: an id, an audio path, and optional side information.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: PathBuf,
    #[serde(default)]
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rttm: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    /// Transcription, when the corpus provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Ordered collection of entries with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for entry in &entries {
            if entry.id.is_empty() {
                return Err(Error::Manifest("entry with empty id".into()));
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id {:?}", entry.id)));
            }
        }
        Ok(Self { entries })
    }

    /// Parse one JSON object per line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", lineno + 1)))?;
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        // Paths inside a manifest are relative to the manifest's directory.
        let mut manifest = Self::parse(&text)?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            for entry in &mut manifest.entries {
                anchor(&mut entry.audio, base);
                if let Some(p) = entry.rttm.as_mut() {
                    anchor(p, base);
                }
                if let Some(p) = entry.embeddings.as_mut() {
                    anchor(p, base);
                }
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for entry in &self.entries {
            text.push_str(&serde_json::to_string(entry).expect("manifest entry serializes"));
            text.push('\n');
        }
        crate::pipeline::atomic_write(path, text.as_bytes())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn of_kind(&self, kind: EntryKind) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    /// Error listing every referenced file that does not exist.
    pub fn validate_paths(&self) -> Result<()> {
        let mut missing = Vec::new();
        for entry in &self.entries {
            for path in [Some(&entry.audio), entry.rttm.as_ref(), entry.embeddings.as_ref()]
                .into_iter()
                .flatten()
            {
                if !path.exists() {
                    missing.push(format!("{} ({})", path.display(), entry.id));
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Manifest(format!("missing files: {}", missing.join(", "))))
        }
    }
}

fn anchor(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = r#"{"id":"a","audio":"a.wav","kind":"noise"}
{"id":"b","audio":"b.wav","rttm":"b.rttm","speaker":"S1"}

{"id":"c","audio":"sub/c.wav"}
"#;
        let manifest = Manifest::parse(text).unwrap();
        assert_eq!(manifest.len(), 3);
        assert_eq!(manifest.get("a").unwrap().kind, EntryKind::Noise);
        assert_eq!(manifest.get("b").unwrap().speaker.as_deref(), Some("S1"));
        assert_eq!(manifest.get("c").unwrap().kind, EntryKind::Speech);
        assert_eq!(manifest.of_kind(EntryKind::Speech).count(), 2);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        manifest.write(&path).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back.len(), 3);
        // Relative paths are re-anchored at the manifest directory.
        assert_eq!(back.get("c").unwrap().audio, dir.path().join("sub/c.wav"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = "{\"id\":\"a\",\"audio\":\"x.wav\"}\n{\"id\":\"a\",\"audio\":\"y.wav\"}\n";
        assert!(matches!(Manifest::parse(text), Err(Error::Manifest(_))));
    }

    #[test]
    fn malformed_json_reports_the_line() {
        let text = "{\"id\":\"a\",\"audio\":\"x.wav\"}\nnot json\n";
        let err = Manifest::parse(text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn validation_lists_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let present = dir.path().join("ok.wav");
        std::fs::write(&present, b"x").unwrap();
        let manifest = Manifest::new(vec![
            ManifestEntry {
                id: "ok".into(),
                audio: present,
                kind: EntryKind::Speech,
                rttm: None,
                embeddings: None,
                speaker: None,
                text: None,
            },
            ManifestEntry {
                id: "gone".into(),
                audio: dir.path().join("gone.wav"),
                kind: EntryKind::Speech,
                rttm: None,
                embeddings: None,
                speaker: None,
                text: None,
            },
        ])
        .unwrap();
        let err = manifest.validate_paths().unwrap_err();
        assert!(err.to_string().contains("gone.wav"), "{err}");
    }
}
