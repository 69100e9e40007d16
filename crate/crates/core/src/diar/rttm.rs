//! NIST RTTM segment lists: parsing, serialization, helpers.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// One diarization segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RttmSegment {
    pub recording_id: String,
    pub speaker_id: String,
    pub onset: f64,
    pub duration: f64,
}

impl RttmSegment {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// A list of RTTM segments, not necessarily sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RttmSegmentList {
    pub segments: Vec<RttmSegment>,
}

impl RttmSegmentList {
    pub fn new(segments: Vec<RttmSegment>) -> Self {
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn push(&mut self, seg: RttmSegment) {
        self.segments.push(seg);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RttmSegment> {
        self.segments.iter()
    }

    /// All recording ids, sorted and deduplicated.
    pub fn recordings(&self) -> Vec<String> {
        self.segments
            .iter()
            .map(|s| s.recording_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// All speaker ids for one recording, sorted and deduplicated.
    pub fn speakers_for(&self, recording_id: &str) -> Vec<String> {
        self.segments
            .iter()
            .filter(|s| s.recording_id == recording_id)
            .map(|s| s.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Segments belonging to one recording.
    pub fn for_recording(&self, recording_id: &str) -> RttmSegmentList {
        RttmSegmentList::new(
            self.segments
                .iter()
                .filter(|s| s.recording_id == recording_id)
                .cloned()
                .collect(),
        )
    }

    /// Sum of all segment durations (overlap counted multiply).
    pub fn total_speech(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Sorted by (recording, onset, speaker) for stable output.
    pub fn sorted(&self) -> RttmSegmentList {
        let mut segments = self.segments.clone();
        segments.sort_by(|a, b| {
            a.recording_id
                .cmp(&b.recording_id)
                .then(a.onset.total_cmp(&b.onset))
                .then(a.speaker_id.cmp(&b.speaker_id))
        });
        RttmSegmentList::new(segments)
    }
}

/// Parse RTTM text: 10 whitespace-separated fields per line, type `SPEAKER`.
/// Unknown line types are skipped with a warning; malformed SPEAKER lines are
/// errors carrying the 1-based line number.
pub fn parse_rttm(text: &str) -> Result<RttmSegmentList> {
    let mut segments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            log::warn!("rttm line {line}: skipping unknown type '{}'", fields[0]);
            continue;
        }
        if fields.len() != 10 {
            return Err(Error::RttmParse {
                line,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let onset: f64 = fields[3].parse().map_err(|_| Error::RttmParse {
            line,
            message: format!("bad onset '{}'", fields[3]),
        })?;
        let duration: f64 = fields[4].parse().map_err(|_| Error::RttmParse {
            line,
            message: format!("bad duration '{}'", fields[4]),
        })?;
        if onset < 0.0 {
            return Err(Error::RttmParse { line, message: format!("negative onset {onset}") });
        }
        if duration <= 0.0 {
            return Err(Error::RttmParse {
                line,
                message: format!("non-positive duration {duration}"),
            });
        }
        segments.push(RttmSegment {
            recording_id: fields[1].to_string(),
            speaker_id: fields[7].to_string(),
            onset,
            duration,
        });
    }
    Ok(RttmSegmentList::new(segments))
}

/// Serialize to RTTM text with 2-decimal onsets/durations.
pub fn serialize_rttm(list: &RttmSegmentList) -> String {
    let mut out = String::new();
    for s in &list.segments {
        out.push_str(&format!(
            "SPEAKER {} 1 {:.2} {:.2} <NA> <NA> {} <NA> <NA>\n",
            s.recording_id, s.onset, s.duration, s.speaker_id
        ));
    }
    out
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<RttmSegmentList> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rttm(&text)
}

pub fn write_rttm(path: impl AsRef<Path>, list: &RttmSegmentList) -> Result<()> {
    let path = path.as_ref();
    crate::pipeline::atomic_write(path, serialize_rttm(list).as_bytes())
}
