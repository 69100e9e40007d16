//! Frame-level speaker activity derived from RTTM annotations.

use ndarray::Array2;

use crate::diar::rttm::RttmSegmentList;
use crate::error::{Error, Result};

/// Binary class-activity matrix (classes K x frames T). Row K-1 is the
/// always-on noise class; rows 0..K-1 follow `speakers` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrix {
    pub active: Array2<bool>,
    pub speakers: Vec<String>,
}

impl ActivityMatrix {
    pub fn classes(&self) -> usize {
        self.active.nrows()
    }

    pub fn frames(&self) -> usize {
        self.active.ncols()
    }

    pub fn noise_class(&self) -> usize {
        self.classes() - 1
    }

    /// Row index of a speaker, if present.
    pub fn speaker_class(&self, speaker_id: &str) -> Option<usize> {
        self.speakers.iter().position(|s| s == speaker_id)
    }
}

/// Build per-frame activity for one recording. A speaker is active at frame
/// t when the frame start t*hop falls inside one of its segments, after
/// dilating each segment's frame range by ceil(context/hop) frames per side.
/// Speaker rows are ordered by sorted speaker id; the noise row is last and
/// always on.
///
/// An empty RTTM yields the noise-only matrix; a non-empty RTTM that does
/// not mention the recording is an error.
pub fn activity_from_rttm(
    rttm: &RttmSegmentList,
    recording_id: &str,
    frames: usize,
    hop_seconds: f64,
    context_seconds: f64,
) -> Result<ActivityMatrix> {
    if frames == 0 || hop_seconds <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "need frames >= 1 and positive hop, got {frames} frames, hop {hop_seconds}"
        )));
    }
    let speakers = rttm.speakers_for(recording_id);
    if speakers.is_empty() && !rttm.is_empty() {
        return Err(Error::RecordingMissing(recording_id.to_string()));
    }
    let classes = speakers.len() + 1;
    let mut active = Array2::from_elem((classes, frames), false);
    active.row_mut(classes - 1).fill(true);

    let dilate = (context_seconds / hop_seconds).ceil() as i64;
    for seg in rttm.iter().filter(|s| s.recording_id == recording_id) {
        let k = speakers
            .iter()
            .position(|s| *s == seg.speaker_id)
            .expect("speaker listed for this recording");
        // Frames whose start lies in [onset, end), with a tiny slack so that
        // boundaries landing exactly on a frame start are classified stably.
        let first = (seg.onset / hop_seconds - 1e-9).ceil() as i64 - dilate;
        let last_excl = (seg.end() / hop_seconds - 1e-9).ceil() as i64 + dilate;
        let lo = first.clamp(0, frames as i64) as usize;
        let hi = last_excl.clamp(0, frames as i64) as usize;
        for t in lo..hi {
            active[(k, t)] = true;
        }
    }
    Ok(ActivityMatrix { active, speakers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diar::rttm::{RttmSegment, RttmSegmentList};

    fn one_segment(onset: f64, duration: f64) -> RttmSegmentList {
        RttmSegmentList::new(vec![RttmSegment {
            recording_id: "rec".into(),
            speaker_id: "spkA".into(),
            onset,
            duration,
        }])
    }

    #[test]
    fn empty_rttm_is_noise_only() {
        let act = activity_from_rttm(&RttmSegmentList::default(), "rec", 10, 0.016, 0.0).unwrap();
        assert_eq!(act.classes(), 1);
        assert!(act.active.iter().all(|&a| a));
        assert!(act.speakers.is_empty());
    }

    #[test]
    fn missing_recording_is_error() {
        let rttm = one_segment(0.0, 1.0);
        assert!(matches!(
            activity_from_rttm(&rttm, "other", 10, 0.016, 0.0),
            Err(Error::RecordingMissing(_))
        ));
    }

    #[test]
    fn frame_range_matches_index_arithmetic() {
        // Segment [1.0, 2.0) at hop 0.016: frame starts t*0.016 lie inside
        // for t in 63..=124.
        let act = activity_from_rttm(&one_segment(1.0, 1.0), "rec", 200, 0.016, 0.0).unwrap();
        assert_eq!(act.classes(), 2);
        for t in 0..200 {
            let want = (63..=124).contains(&t);
            assert_eq!(act.active[(0, t)], want, "frame {t}");
            assert!(act.active[(1, t)], "noise frame {t}");
        }
    }

    #[test]
    fn context_dilates_by_ceil_frames() {
        // ceil(0.2 / 0.016) = 13 frames each side of 63..=124.
        let act = activity_from_rttm(&one_segment(1.0, 1.0), "rec", 200, 0.016, 0.2).unwrap();
        for t in 0..200 {
            let want = (63 - 13..=124 + 13).contains(&t);
            assert_eq!(act.active[(0, t)], want, "frame {t}");
        }
    }

    #[test]
    fn speaker_rows_sorted_and_clamped() {
        let rttm = RttmSegmentList::new(vec![
            RttmSegment {
                recording_id: "rec".into(),
                speaker_id: "zeta".into(),
                onset: 0.0,
                duration: 0.1,
            },
            RttmSegment {
                recording_id: "rec".into(),
                speaker_id: "alpha".into(),
                onset: 100.0,
                duration: 5.0,
            },
        ]);
        let act = activity_from_rttm(&rttm, "rec", 50, 0.016, 0.0).unwrap();
        assert_eq!(act.speakers, vec!["alpha".to_string(), "zeta".to_string()]);
        // alpha's segment lies past the matrix end: row stays silent.
        assert!((0..50).all(|t| !act.active[(0, t)]));
        assert!(act.active[(1, 0)]);
    }
}
