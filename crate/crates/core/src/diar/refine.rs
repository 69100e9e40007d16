//! Post-processing of diarization output: clip segments to detected speech,
//! drop fragments, and re-join segments that one utterance produced.

use std::collections::BTreeSet;

use crate::diar::rttm::{RttmSegment, RttmSegmentList};
use crate::error::{Error, Result};

/// Merge possibly overlapping `(start, end)` intervals into a sorted disjoint
/// union.
pub fn union_intervals(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.retain(|&(s, e)| e > s);
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Intersect two sorted disjoint interval lists.
fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if e > s {
            out.push((s, e));
        }
        if a[i].1 <= b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Clean one recording's segments against a voice-activity mask.
///
/// Per speaker: the segment union is intersected with the speech intervals,
/// pieces shorter than `min_duration` are dropped, and surviving pieces that
/// came from the same original utterance are re-joined when the hole between
/// them is shorter than `gap_merge`. Total speech per speaker never exceeds
/// the input union, and the operation is idempotent.
pub fn refine_rttm(
    list: &RttmSegmentList,
    recording_id: &str,
    vad: &[(f64, f64)],
    min_duration: f64,
    gap_merge: f64,
) -> Result<RttmSegmentList> {
    if min_duration < 0.0 || gap_merge < 0.0 {
        return Err(Error::InvalidInput(
            "min_duration and gap_merge must be non-negative".into(),
        ));
    }
    if !list.recordings().iter().any(|r| r == recording_id) {
        return Err(Error::RecordingMissing(recording_id.to_string()));
    }
    let speech = union_intervals(vad.to_vec());

    let recording = list.for_recording(recording_id);
    let speakers: BTreeSet<&str> = recording.iter().map(|s| s.speaker_id.as_str()).collect();

    let mut refined = RttmSegmentList::default();
    for speaker in speakers {
        let parents = union_intervals(
            recording
                .iter()
                .filter(|s| s.speaker_id == speaker)
                .map(|s| (s.onset, s.end()))
                .collect(),
        );
        for &(ps, pe) in &parents {
            let mut pieces = intersect(&[(ps, pe)], &speech);
            pieces.retain(|&(s, e)| e - s >= min_duration);
            // Bridge holes inside this utterance only; the merged span stays
            // within the parent interval.
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for piece in pieces {
                match merged.last_mut() {
                    Some(last) if piece.0 - last.1 < gap_merge => last.1 = piece.1,
                    _ => merged.push(piece),
                }
            }
            for (s, e) in merged {
                refined.push(RttmSegment {
                    recording_id: recording_id.to_string(),
                    speaker_id: speaker.to_string(),
                    onset: s,
                    duration: e - s,
                });
            }
        }
    }
    Ok(refined.sorted())
}
