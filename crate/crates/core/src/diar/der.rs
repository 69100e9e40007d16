//! Diarization error rate scoring with collar handling and optimal speaker
//! mapping.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::diar::rttm::RttmSegmentList;
use crate::error::{Error, Result};

/// Largest speaker inventory the exact mapping search will accept per side.
const MAX_MAPPED_SPEAKERS: usize = 20;

/// Scoring breakdown; percentages are relative to scored reference speech and
/// the rate is their exact sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerReport {
    pub scored_speech_seconds: f64,
    pub missed_seconds: f64,
    pub false_alarm_seconds: f64,
    pub confusion_seconds: f64,
    pub missed_percent: f64,
    pub false_alarm_percent: f64,
    pub confusion_percent: f64,
    pub der_percent: f64,
}

struct RecordingFrames {
    /// Active-speaker bitmask per scored frame, reference side.
    ref_masks: Vec<u64>,
    /// Active-speaker bitmask per scored frame, hypothesis side.
    hyp_masks: Vec<u64>,
    ref_speakers: usize,
    hyp_speakers: usize,
}

/// Rasterize one recording at frame midpoints, dropping frames whose midpoint
/// falls within the collar around any reference boundary.
fn rasterize(
    reference: &RttmSegmentList,
    hypothesis: &RttmSegmentList,
    recording: &str,
    collar: f64,
    resolution: f64,
) -> Result<RecordingFrames> {
    let ref_list = reference.for_recording(recording);
    let hyp_list = hypothesis.for_recording(recording);
    let ref_segs = &ref_list.segments;
    let hyp_segs = &hyp_list.segments;
    let ref_names: Vec<&str> = {
        let set: BTreeSet<&str> = ref_segs.iter().map(|s| s.speaker_id.as_str()).collect();
        set.into_iter().collect()
    };
    let hyp_names: Vec<&str> = {
        let set: BTreeSet<&str> = hyp_segs.iter().map(|s| s.speaker_id.as_str()).collect();
        set.into_iter().collect()
    };
    if ref_names.len() > 64 || hyp_names.len() > 64 {
        return Err(Error::InvalidInput(format!(
            "recording '{recording}' has more than 64 speakers on one side"
        )));
    }

    let span = ref_segs
        .iter()
        .chain(hyp_segs.iter())
        .map(|s| s.end())
        .fold(0.0f64, f64::max);
    let frames = (span / resolution).ceil() as usize;

    let boundaries: Vec<f64> = ref_segs
        .iter()
        .flat_map(|s| [s.onset, s.end()])
        .collect();

    let mut ref_masks = Vec::new();
    let mut hyp_masks = Vec::new();
    for i in 0..frames {
        let mid = (i as f64 + 0.5) * resolution;
        if collar > 0.0 && boundaries.iter().any(|&b| mid >= b - collar && mid < b + collar) {
            continue;
        }
        let mut rm = 0u64;
        for seg in ref_segs {
            if seg.onset <= mid && mid < seg.end() {
                let idx = ref_names.binary_search(&seg.speaker_id.as_str()).unwrap();
                rm |= 1 << idx;
            }
        }
        let mut hm = 0u64;
        for seg in hyp_segs {
            if seg.onset <= mid && mid < seg.end() {
                let idx = hyp_names.binary_search(&seg.speaker_id.as_str()).unwrap();
                hm |= 1 << idx;
            }
        }
        ref_masks.push(rm);
        hyp_masks.push(hm);
    }
    Ok(RecordingFrames {
        ref_masks,
        hyp_masks,
        ref_speakers: ref_names.len(),
        hyp_speakers: hyp_names.len(),
    })
}

/// One-to-one speaker mapping maximizing overlapped frames, as an exact
/// assignment search over the smaller speaker set.
fn best_mapping(frames: &RecordingFrames) -> Result<Vec<(usize, usize)>> {
    let nr = frames.ref_speakers;
    let nh = frames.hyp_speakers;
    if nr == 0 || nh == 0 {
        return Ok(Vec::new());
    }
    if nr.min(nh) > MAX_MAPPED_SPEAKERS {
        return Err(Error::InvalidInput(format!(
            "exact speaker mapping supports at most {MAX_MAPPED_SPEAKERS} speakers per side"
        )));
    }

    let mut overlap = vec![vec![0u64; nh]; nr];
    for (rm, hm) in frames.ref_masks.iter().zip(&frames.hyp_masks) {
        let mut r = *rm;
        while r != 0 {
            let i = r.trailing_zeros() as usize;
            r &= r - 1;
            let mut h = *hm;
            while h != 0 {
                let j = h.trailing_zeros() as usize;
                h &= h - 1;
                overlap[i][j] += 1;
            }
        }
    }

    // Assign items of the larger set to a subset of the smaller set.
    let swap = nh > nr;
    let (big, small) = if swap { (nh, nr) } else { (nr, nh) };
    let score = |b: usize, s: usize| if swap { overlap[s][b] } else { overlap[b][s] };

    let mut dp = vec![(0u64, Vec::<(usize, usize)>::new()); 1 << small];
    for b in 0..big {
        let mut next = dp.clone();
        for mask in 0..1usize << small {
            let (base, ref pairs) = dp[mask];
            for s in 0..small {
                if mask & (1 << s) != 0 {
                    continue;
                }
                let cand = base + score(b, s);
                let slot = &mut next[mask | (1 << s)];
                if cand > slot.0 {
                    let mut p = pairs.clone();
                    p.push(if swap { (s, b) } else { (b, s) });
                    *slot = (cand, p);
                }
            }
        }
        dp = next;
    }
    let best = dp
        .into_iter()
        .max_by(|a, b| a.0.cmp(&b.0))
        .map(|(_, pairs)| pairs)
        .unwrap_or_default();
    Ok(best)
}

/// Score a hypothesis against a reference across all recordings present in
/// either list. Speakers are mapped per recording.
pub fn der(
    reference: &RttmSegmentList,
    hypothesis: &RttmSegmentList,
    collar: f64,
    resolution: f64,
) -> Result<DerReport> {
    if resolution <= 0.0 {
        return Err(Error::InvalidInput("scoring resolution must be positive".into()));
    }
    if collar < 0.0 {
        return Err(Error::InvalidInput("collar must be non-negative".into()));
    }
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }

    let recordings: BTreeSet<String> = reference
        .recordings()
        .into_iter()
        .chain(hypothesis.recordings())
        .collect();

    let mut scored = 0u64;
    let mut missed = 0u64;
    let mut false_alarm = 0u64;
    let mut confusion = 0u64;
    for recording in &recordings {
        let frames = rasterize(reference, hypothesis, recording, collar, resolution)?;
        let mapping = best_mapping(&frames)?;
        for (rm, hm) in frames.ref_masks.iter().zip(&frames.hyp_masks) {
            let nr = rm.count_ones() as u64;
            let nh = hm.count_ones() as u64;
            let matched = mapping
                .iter()
                .filter(|&&(r, h)| rm & (1 << r) != 0 && hm & (1 << h) != 0)
                .count() as u64;
            scored += nr;
            missed += nr.saturating_sub(nh);
            false_alarm += nh.saturating_sub(nr);
            confusion += nr.min(nh) - matched;
        }
    }

    if scored == 0 {
        return Err(Error::EmptyReference);
    }
    let denom = scored as f64 * resolution;
    let pct = |frames: u64| 100.0 * (frames as f64 * resolution) / denom;
    let missed_percent = pct(missed);
    let false_alarm_percent = pct(false_alarm);
    let confusion_percent = pct(confusion);
    Ok(DerReport {
        scored_speech_seconds: denom,
        missed_seconds: missed as f64 * resolution,
        false_alarm_seconds: false_alarm as f64 * resolution,
        confusion_seconds: confusion as f64 * resolution,
        missed_percent,
        false_alarm_percent,
        confusion_percent,
        der_percent: missed_percent + false_alarm_percent + confusion_percent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diar::rttm::RttmSegment;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn list(segments: &[(&str, &str, f64, f64)]) -> RttmSegmentList {
        RttmSegmentList::new(
            segments
                .iter()
                .map(|&(rec, spk, onset, duration)| RttmSegment {
                    recording_id: rec.into(),
                    speaker_id: spk.into(),
                    onset,
                    duration,
                })
                .collect(),
        )
    }

    #[test]
    fn truncated_hypothesis_is_pure_miss() {
        let reference = list(&[("r", "A", 0.0, 10.0)]);
        let hypothesis = list(&[("r", "A", 0.0, 8.0)]);
        let report = der(&reference, &hypothesis, 0.0, 0.01).unwrap();
        assert!((report.missed_percent - 20.0).abs() < 1e-9, "{report:?}");
        assert_eq!(report.false_alarm_percent, 0.0);
        assert_eq!(report.confusion_percent, 0.0);
        assert!((report.der_percent - 20.0).abs() < 1e-9);
        assert!((report.scored_speech_seconds - 10.0).abs() < 1e-9);
    }

    #[test]
    fn single_hypothesis_speaker_across_two_reference_speakers() {
        let reference = list(&[("r", "A", 0.0, 5.0), ("r", "B", 5.0, 5.0)]);
        let hypothesis = list(&[("r", "C", 0.0, 10.0)]);
        let report = der(&reference, &hypothesis, 0.0, 0.01).unwrap();
        assert!((report.confusion_percent - 50.0).abs() < 1e-9, "{report:?}");
        assert_eq!(report.missed_percent, 0.0);
        assert_eq!(report.false_alarm_percent, 0.0);
    }

    #[test]
    fn collar_absorbs_boundary_error() {
        let reference = list(&[("r", "A", 0.0, 10.0)]);
        let hypothesis = list(&[("r", "A", 0.2, 9.8)]);
        let strict = der(&reference, &hypothesis, 0.0, 0.01).unwrap();
        assert!((strict.missed_percent - 2.0).abs() < 1e-9, "{strict:?}");
        let relaxed = der(&reference, &hypothesis, 0.25, 0.01).unwrap();
        assert_eq!(relaxed.der_percent, 0.0, "{relaxed:?}");
        assert!((relaxed.scored_speech_seconds - 9.5).abs() < 1e-9);
    }

    #[test]
    fn overlapped_speech_counts_in_the_denominator() {
        let reference = list(&[("r", "A", 0.0, 10.0), ("r", "B", 0.0, 10.0)]);
        let hypothesis = list(&[("r", "A", 0.0, 10.0)]);
        let report = der(&reference, &hypothesis, 0.0, 0.01).unwrap();
        assert!((report.scored_speech_seconds - 20.0).abs() < 1e-9);
        assert!((report.missed_percent - 50.0).abs() < 1e-9, "{report:?}");
        assert_eq!(report.confusion_percent, 0.0);
    }

    #[test]
    fn empty_hypothesis_and_empty_reference() {
        let reference = list(&[("r", "A", 0.0, 4.0)]);
        let report = der(&reference, &RttmSegmentList::default(), 0.0, 0.01).unwrap();
        assert!((report.missed_percent - 100.0).abs() < 1e-9);
        assert!(matches!(
            der(&RttmSegmentList::default(), &reference, 0.0, 0.01),
            Err(Error::EmptyReference)
        ));
    }

    #[test]
    fn renamed_speakers_score_perfectly() {
        let reference = list(&[("r", "A", 0.0, 3.0), ("r", "B", 4.0, 3.0)]);
        let hypothesis = list(&[("r", "x7", 0.0, 3.0), ("r", "q2", 4.0, 3.0)]);
        let report = der(&reference, &hypothesis, 0.0, 0.01).unwrap();
        assert_eq!(report.der_percent, 0.0, "{report:?}");
    }

    /// Independent scorer: same rasterization semantics, but the mapping is an
    /// exhaustive recursive search and errors are accumulated per mapping.
    fn brute_der(
        reference: &RttmSegmentList,
        hypothesis: &RttmSegmentList,
        collar: f64,
        resolution: f64,
    ) -> f64 {
        let mut recs: Vec<String> = reference.recordings().into_iter().collect();
        for r in hypothesis.recordings() {
            if !recs.contains(&r) {
                recs.push(r);
            }
        }
        let mut err_frames = 0u64;
        let mut denom_frames = 0u64;
        for rec in &recs {
            let frames = rasterize(reference, hypothesis, rec, collar, resolution).unwrap();
            denom_frames += frames.ref_masks.iter().map(|m| m.count_ones() as u64).sum::<u64>();
            err_frames += brute_recording(&frames);
        }
        100.0 * err_frames as f64 / denom_frames as f64
    }

    fn brute_recording(frames: &RecordingFrames) -> u64 {
        let nr = frames.ref_speakers;
        let nh = frames.hyp_speakers;
        let mut best = u64::MAX;
        let mut assignment = vec![usize::MAX; nh];
        search(frames, 0, nr, &mut assignment, &mut best);
        best
    }

    fn search(
        frames: &RecordingFrames,
        h: usize,
        nr: usize,
        assignment: &mut Vec<usize>,
        best: &mut u64,
    ) {
        if h == assignment.len() {
            let mut err = 0u64;
            for (rm, hm) in frames.ref_masks.iter().zip(&frames.hyp_masks) {
                let a = rm.count_ones() as u64;
                let b = hm.count_ones() as u64;
                let matched = assignment
                    .iter()
                    .enumerate()
                    .filter(|&(hj, &ri)| {
                        ri != usize::MAX && hm & (1 << hj) != 0 && rm & (1 << ri) != 0
                    })
                    .count() as u64;
                err += a.max(b) - matched;
            }
            *best = (*best).min(err);
            return;
        }
        for ri in 0..nr {
            if assignment[..h].contains(&ri) {
                continue;
            }
            assignment[h] = ri;
            search(frames, h + 1, nr, assignment, best);
        }
        assignment[h] = usize::MAX;
        search(frames, h + 1, nr, assignment, best);
        assignment[h] = usize::MAX;
    }

    #[test]
    fn matches_exhaustive_mapping_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..30 {
            let mut reference = RttmSegmentList::default();
            let mut hypothesis = RttmSegmentList::default();
            for (side, out) in [(0, &mut reference), (1, &mut hypothesis)] {
                let speakers = rng.random_range(1..=3);
                for s in 0..speakers {
                    for _ in 0..rng.random_range(1..=3) {
                        let onset = rng.random_range(0.0..8.0);
                        let duration = rng.random_range(0.3..3.0);
                        out.push(RttmSegment {
                            recording_id: "r".into(),
                            speaker_id: format!("s{side}{s}"),
                            onset,
                            duration,
                        });
                    }
                }
            }
            let collar = if case % 2 == 0 { 0.0 } else { 0.1 };
            let report = der(&reference, &hypothesis, collar, 0.05).unwrap();
            let expected = brute_der(&reference, &hypothesis, collar, 0.05);
            assert!(
                (report.der_percent - expected).abs() < 1e-9,
                "case {case}: {} vs {expected}",
                report.der_percent
            );
            let sum = report.missed_percent + report.false_alarm_percent
                + report.confusion_percent;
            assert_eq!(report.der_percent, sum);
        }
    }

    #[test]
    fn report_serializes_with_stable_field_order() {
        let reference = list(&[("r", "A", 0.0, 10.0)]);
        let hypothesis = list(&[("r", "A", 0.0, 8.0)]);
        let report = der(&reference, &hypothesis, 0.0, 0.01).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let miss_at = json.find("missed_percent").unwrap();
        let fa_at = json.find("false_alarm_percent").unwrap();
        let sc_at = json.find("confusion_percent").unwrap();
        let der_at = json.find("der_percent").unwrap();
        assert!(miss_at < fa_at && fa_at < sc_at && sc_at < der_at);
        let back: DerReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.der_percent, report.der_percent);
    }
}
