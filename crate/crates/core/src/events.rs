//! Event-level explanation generation: picks representative segments for
//! each selected interval, samples frames across the event span, and asks
//! the model for one grounded narrative per event.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cea::{Segment, SegmentVerdict};
use crate::frames::FrameStore;
use crate::gateway::Gateway;
use crate::math::Real;
use crate::rea::{EvidenceField, Window};

/// Narrative used when the captioning call fails; the pipeline continues.
pub const UNAVAILABLE_NARRATIVE: &str = "<unavailable>";

/// Hard cap on representative segments per event.
pub const REPRESENTATIVE_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("interval [{l}, {r}] does not fit a field of length {len}")]
    BadInterval { l: usize, r: usize, len: usize },
    #[error("representative set is empty")]
    NoRepresentatives,
    #[error("interval maps to no readable source frame")]
    NoReadableFrames,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    Boundary,
    Peak,
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentativeSegment {
    pub index: usize,
    pub reason: SelectionReason,
}

/// Representative segments of one interval, sorted ascending, at most
/// [`REPRESENTATIVE_CAP`] entries, boundaries always included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeSet {
    pub interval: Window,
    pub members: Vec<RepresentativeSegment>,
}

impl RepresentativeSet {
    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }
}

/// Selects representatives with priority boundary > peak > transition: both
/// interval boundaries, then the highest-evidence segments (ties to the
/// earlier index) filling the remaining capacity, then segments where the
/// evidence crosses `theta_mean` between consecutive indices. Deduplicated,
/// truncated to `cap`, sorted ascending.
pub fn select_representatives<F: Real>(
    field: &EvidenceField<F>,
    verdicts: &[SegmentVerdict],
    interval: &Window<F>,
    theta_mean: F,
    cap: usize,
) -> Result<RepresentativeSet, EventError> {
    let (l, r) = (interval.l, interval.r);
    if l > r || r >= field.len() || r >= verdicts.len() {
        return Err(EventError::BadInterval {
            l,
            r,
            len: field.len().min(verdicts.len()),
        });
    }
    let mut members: Vec<RepresentativeSegment> = Vec::new();
    let push = |index: usize, reason: SelectionReason, members: &mut Vec<RepresentativeSegment>| {
        if members.len() < cap && !members.iter().any(|m| m.index == index) {
            members.push(RepresentativeSegment { index, reason });
        }
    };

    push(l, SelectionReason::Boundary, &mut members);
    push(r, SelectionReason::Boundary, &mut members);

    // Highest-evidence fill under the cap, excluding the boundaries.
    let quota = cap.saturating_sub(members.len());
    let mut by_score: Vec<usize> = (l..=r).filter(|i| *i != l && *i != r).collect();
    by_score.sort_by(|a, b| {
        field.scores[*b]
            .partial_cmp(&field.scores[*a])
            .expect("finite evidence")
            .then(a.cmp(b))
    });
    for index in by_score.into_iter().take(quota) {
        push(index, SelectionReason::Peak, &mut members);
    }

    // Crossings of theta_mean mark onset and resolution; keep the in-event
    // side of each crossing.
    for i in l..r {
        let above_now = field.scores[i] >= theta_mean;
        let above_next = field.scores[i + 1] >= theta_mean;
        if above_now != above_next {
            let transition = if above_next { i + 1 } else { i };
            push(transition, SelectionReason::Transition, &mut members);
        }
    }

    members.sort_by_key(|m| m.index);
    if members.is_empty() {
        return Err(EventError::NoRepresentatives);
    }
    Ok(RepresentativeSet {
        interval: to_f64_window(interval),
        members,
    })
}

fn to_f64_window<F: Real>(w: &Window<F>) -> Window {
    Window {
        l: w.l,
        r: w.r,
        mean: w.mean.to_f64().unwrap_or(0.0),
        peak: w.peak.to_f64().unwrap_or(0.0),
        cumulative: w.cumulative.to_f64().unwrap_or(0.0),
    }
}

/// Frame indices spaced uniformly (inclusive endpoints, nearest-integer
/// rounding) across the interval's source-frame span. Spans shorter than
/// `kappa` repeat frames by nearest index.
pub fn event_frame_indices<F: Real>(
    segments: &[Segment],
    interval: &Window<F>,
    kappa: usize,
) -> Vec<u64> {
    let first = segments[interval.l].frame_range.0;
    let last = segments[interval.r].frame_range.1;
    uniform_indices(first, last, kappa)
}

pub(crate) fn uniform_indices(first: u64, last: u64, kappa: usize) -> Vec<u64> {
    if kappa == 0 {
        return Vec::new();
    }
    if kappa == 1 || last <= first {
        return vec![first.min(last); kappa];
    }
    let span = (last - first) as f64;
    (0..kappa)
        .map(|k| {
            let offset = (k as f64) * span / ((kappa - 1) as f64);
            first + offset.round() as u64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSubstitution {
    pub requested: u64,
    pub used: u64,
}

#[derive(Debug, Clone)]
pub struct SampledFrames {
    pub indices: Vec<u64>,
    pub bytes: Vec<Vec<u8>>,
    pub substitutions: Vec<FrameSubstitution>,
}

/// Reads the uniformly sampled event frames, substituting the nearest
/// readable frame when one cannot be loaded. Substitutions are recorded.
pub fn sample_event_frames<F: Real>(
    store: &dyn FrameStore,
    segments: &[Segment],
    interval: &Window<F>,
    kappa: usize,
) -> Result<SampledFrames, EventError> {
    let indices = event_frame_indices(segments, interval, kappa);
    let lo = segments[interval.l].frame_range.0;
    let hi = segments[interval.r].frame_range.1;
    let mut bytes = Vec::with_capacity(indices.len());
    let mut used_indices = Vec::with_capacity(indices.len());
    let mut substitutions = Vec::new();
    for &requested in &indices {
        match nearest_readable(store, requested, lo, hi) {
            Some((used, data)) => {
                if used != requested {
                    substitutions.push(FrameSubstitution { requested, used });
                }
                used_indices.push(used);
                bytes.push(data);
            }
            None => return Err(EventError::NoReadableFrames),
        }
    }
    Ok(SampledFrames {
        indices: used_indices,
        bytes,
        substitutions,
    })
}

fn nearest_readable(
    store: &dyn FrameStore,
    requested: u64,
    lo: u64,
    hi: u64,
) -> Option<(u64, Vec<u8>)> {
    if let Ok(data) = store.frame_bytes(requested) {
        return Some((requested, data));
    }
    for distance in 1..=hi.saturating_sub(lo) {
        if requested >= lo + distance {
            if let Ok(data) = store.frame_bytes(requested - distance) {
                return Some((requested - distance, data));
            }
        }
        if requested + distance <= hi {
            if let Ok(data) = store.frame_bytes(requested + distance) {
                return Some((requested + distance, data));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub segment_index: usize,
    pub explanation: String,
    pub reason: SelectionReason,
}

/// One grounded narrative for one selected interval, with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventExplanation {
    pub interval: Window,
    pub narrative: String,
    pub evidence_used: Vec<EvidenceRef>,
    pub frames_used: Vec<u64>,
    pub frame_substitutions: Vec<FrameSubstitution>,
    pub sentence_count: usize,
    pub error: Option<String>,
}

/// Generates the event narrative from the representatives' explanations (in
/// temporal order) and the sampled frames. A captioning failure yields a
/// placeholder narrative and records the error; the pipeline continues.
pub fn explain_event(
    gateway: &Gateway,
    reps: &RepresentativeSet,
    frames: &SampledFrames,
    verdicts: &[SegmentVerdict],
) -> Result<EventExplanation, EventError> {
    if reps.members.is_empty() {
        return Err(EventError::NoRepresentatives);
    }
    let evidence_used: Vec<EvidenceRef> = reps
        .members
        .iter()
        .map(|m| EvidenceRef {
            segment_index: m.index,
            explanation: verdicts[m.index].explanation.clone(),
            reason: m.reason,
        })
        .collect();
    let texts: Vec<String> = evidence_used
        .iter()
        .map(|e| e.explanation.clone())
        .collect();
    let (narrative, error) = match gateway.caption_event(&frames.bytes, &texts) {
        Ok(narrative) => (narrative, None),
        Err(err) => (UNAVAILABLE_NARRATIVE.to_string(), Some(err.to_string())),
    };
    let sentence_count = count_sentences(&narrative);
    Ok(EventExplanation {
        interval: reps.interval,
        narrative,
        evidence_used,
        frames_used: frames.indices.clone(),
        frame_substitutions: frames.substitutions.clone(),
        sentence_count,
        error,
    })
}

/// Sentence count used for narrative-length reporting; model compliance
/// with the 4-sentence bound is advisory, never enforced.
pub fn count_sentences(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|chunk| chunk.chars().any(char::is_alphanumeric))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rea::window_stats;

    fn field(scores: &[f64]) -> EvidenceField {
        EvidenceField {
            scores: scores.to_vec(),
            alpha: 0.9,
            gamma: 0.05,
            delta: 0.25,
        }
    }

    fn verdicts(n: usize) -> Vec<SegmentVerdict> {
        (0..n)
            .map(|i| SegmentVerdict {
                segment_index: i,
                flag: 0,
                explanation: format!("segment {i} text"),
                used_summary: false,
                summary_snapshot: None,
            })
            .collect()
    }

    #[test]
    fn two_segment_interval_is_exactly_the_boundaries() {
        let f = field(&[0.0, 0.9, 0.95, 0.0]);
        let w = window_stats(&f, 1, 2).unwrap();
        let reps = select_representatives(&f, &verdicts(4), &w, 0.5, 10).unwrap();
        assert_eq!(reps.indices(), vec![1, 2]);
        assert!(reps
            .members
            .iter()
            .all(|m| m.reason == SelectionReason::Boundary));
    }

    #[test]
    fn flat_interval_fills_with_earliest_peaks() {
        let f = field(&[0.6; 20]);
        let w = window_stats(&f, 0, 19).unwrap();
        let reps = select_representatives(&f, &verdicts(20), &w, 0.5, 10).unwrap();
        // Boundaries 0 and 19 plus the eight earliest of the tied scores.
        assert_eq!(reps.indices(), vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 19]);
    }

    #[test]
    fn cap_truncates_by_priority() {
        // Crossings exist, but peaks fill the quota first, so transitions
        // are dropped once the cap is reached.
        let mut scores = vec![0.9; 30];
        scores[10] = 0.1;
        scores[11] = 0.1;
        let f = field(&scores);
        let w = window_stats(&f, 0, 29).unwrap();
        let reps = select_representatives(&f, &verdicts(30), &w, 0.5, 10).unwrap();
        assert_eq!(reps.members.len(), 10);
        assert!(!reps
            .members
            .iter()
            .any(|m| m.reason == SelectionReason::Transition));
    }

    #[test]
    fn transitions_fill_remaining_capacity() {
        let scores = vec![0.0, 0.9, 0.9, 0.0, 0.0, 0.9];
        let f = field(&scores);
        let w = window_stats(&f, 0, 5).unwrap();
        let reps = select_representatives(&f, &verdicts(6), &w, 0.5, 10).unwrap();
        assert_eq!(reps.indices(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn selection_is_deterministic_and_capped() {
        let f = field(&[0.3, 0.9, 0.4, 0.9, 0.2, 0.8, 0.1, 0.9]);
        let w = window_stats(&f, 0, 7).unwrap();
        let a = select_representatives(&f, &verdicts(8), &w, 0.5, 5).unwrap();
        let b = select_representatives(&f, &verdicts(8), &w, 0.5, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.members.len() <= 5);
    }

    #[test]
    fn uniform_sampling_hits_inclusive_endpoints() {
        assert_eq!(
            uniform_indices(0, 70, 8),
            vec![0, 10, 20, 30, 40, 50, 60, 70]
        );
    }

    #[test]
    fn short_span_repeats_by_nearest_index() {
        let picks = uniform_indices(0, 2, 8);
        assert_eq!(picks.len(), 8);
        assert_eq!(picks[0], 0);
        assert_eq!(picks[7], 2);
        assert!(picks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_frame_interval_repeats_kappa_times() {
        assert_eq!(uniform_indices(5, 5, 4), vec![5, 5, 5, 5]);
    }

    #[test]
    fn sentence_counting_ignores_empty_chunks() {
        assert_eq!(count_sentences("One. Two! Three?"), 3);
        assert_eq!(count_sentences("Trailing dot."), 1);
        assert_eq!(count_sentences("...  "), 0);
    }
}
