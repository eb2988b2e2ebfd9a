//! Frame-level score post-processing, detection metrics, fragmentation
//! counting, and the explanation-quality judge protocol.
//!
//! Metrics are pure over immutable tracks; dataset-level pooling is the
//! caller's concern.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cea::SegmentVerdict;
use crate::events::EventExplanation;
use crate::gateway::{sha256_hex, Gateway};
use crate::labels::CANONICAL_CATEGORIES;
use crate::math::{clip01, real, Real};
use crate::rea::EvidenceField;

pub use crate::labels::normalize_alias;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("segment ranges do not tile the frame axis: {0}")]
    BadSegmentation(String),
    #[error("annotation for {video_id} invalid: {message}")]
    BadAnnotation { video_id: String, message: String },
}

/// Per-frame anomaly scores for one video, with optional frame labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreTrack<F = f64> {
    pub video_id: String,
    pub scores: Vec<F>,
    pub labels: Option<Vec<u8>>,
}

impl<F: Real> FrameScoreTrack<F> {
    pub fn validate(&self) -> Result<(), EvalError> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.scores.len() {
                return Err(EvalError::LengthMismatch {
                    scores: self.scores.len(),
                    labels: labels.len(),
                });
            }
        }
        Ok(())
    }
}

/// Ground-truth annotation for one video: its category and the anomalous
/// frame intervals (inclusive), within `[0, total_frames - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub category: String,
    pub anomalous_intervals: Vec<(u64, u64)>,
    pub total_frames: u64,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut previous_end: Option<u64> = None;
        for &(start, end) in &self.anomalous_intervals {
            if start > end || end >= self.total_frames {
                return Err(EvalError::BadAnnotation {
                    video_id: self.video_id.clone(),
                    message: format!(
                        "interval [{start}, {end}] outside [0, {}]",
                        self.total_frames.saturating_sub(1)
                    ),
                });
            }
            if let Some(prev) = previous_end {
                if start <= prev {
                    return Err(EvalError::BadAnnotation {
                        video_id: self.video_id.clone(),
                        message: "intervals overlap or are unsorted".to_string(),
                    });
                }
            }
            previous_end = Some(end);
        }
        Ok(())
    }

    pub fn is_abnormal(&self) -> bool {
        !self.anomalous_intervals.is_empty()
    }

    pub fn frame_labels(&self) -> Vec<u8> {
        let mut labels = vec![0u8; self.total_frames as usize];
        for &(start, end) in &self.anomalous_intervals {
            for label in labels
                .iter_mut()
                .take(end as usize + 1)
                .skip(start as usize)
            {
                *label = 1;
            }
        }
        labels
    }
}

/// Expands per-segment evidence to frames and applies Gaussian smoothing
/// with standard deviation `sigma` frames (kernel truncated at `3 * sigma`,
/// renormalized at the boundaries). `sigma <= 0` skips smoothing. Output is
/// clipped to `[0, 1]`.
pub fn expand_and_smooth<F: Real>(
    field: &EvidenceField<F>,
    segment_ranges: &[(u64, u64)],
    total_frames: u64,
    sigma: f64,
) -> Result<Vec<F>, EvalError> {
    if segment_ranges.len() != field.len() {
        return Err(EvalError::BadSegmentation(format!(
            "{} ranges for {} segment scores",
            segment_ranges.len(),
            field.len()
        )));
    }
    let mut expected = 0u64;
    for &(start, end) in segment_ranges {
        if start != expected || end < start {
            return Err(EvalError::BadSegmentation(format!(
                "range [{start}, {end}] does not continue at frame {expected}"
            )));
        }
        expected = end + 1;
    }
    if expected != total_frames {
        return Err(EvalError::BadSegmentation(format!(
            "ranges cover {expected} frames, video has {total_frames}"
        )));
    }

    let mut track: Vec<F> = Vec::with_capacity(total_frames as usize);
    for (score, &(start, end)) in field.scores.iter().zip(segment_ranges) {
        for _ in start..=end {
            track.push(clip01(*score));
        }
    }
    if sigma <= 0.0 {
        return Ok(track);
    }

    let radius = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let n = track.len() as i64;
    let mut smoothed: Vec<F> = Vec::with_capacity(track.len());
    for i in 0..n {
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (w, j) in weights.iter().zip(-radius..=radius) {
            let t = i + j;
            if t < 0 || t >= n {
                continue;
            }
            numerator += w * track[t as usize].to_f64().unwrap_or(0.0);
            denominator += w;
        }
        smoothed.push(clip01(real::<F>(numerator / denominator)));
    }
    Ok(smoothed)
}

/// Frame-level ROC AUC over pooled scores, computed from the rank statistic
/// with tie correction (equivalent to trapezoidal ROC integration).
pub fn roc_auc<F: Real>(scores: &[F], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::UndefinedMetric(
            "ROC AUC needs both classes in the pool".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].partial_cmp(&scores[*b]).expect("finite scores"));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let average_rank = ((i + 1) + (j + 1)) as f64 / 2.0;
        for &index in &order[i..=j] {
            if labels[index] == 1 {
                positive_rank_sum += average_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Frame-level average precision: the precision-weighted recall sum over
/// descending-score order, ties broken by stable input order.
pub fn average_precision<F: Real>(scores: &[F], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 {
        return Err(EvalError::UndefinedMetric(
            "average precision needs at least one positive".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].partial_cmp(&scores[*a]).expect("finite scores"));
    let mut true_positives = 0usize;
    let mut sum = 0.0;
    for (k, &index) in order.iter().enumerate() {
        if labels[index] == 1 {
            true_positives += 1;
            sum += true_positives as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Mean intersection-over-union between thresholded predictions and the
/// annotated anomalous frame sets, averaged over abnormal videos. A video
/// with an empty prediction-union contributes zero.
pub fn mean_iou<F: Real>(
    tracks: &[FrameScoreTrack<F>],
    annotations: &BTreeMap<String, AnnotationRecord>,
    threshold: F,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for track in tracks {
        let Some(annotation) = annotations.get(&track.video_id) else {
            continue;
        };
        if !annotation.is_abnormal() {
            continue;
        }
        let gt = annotation.frame_labels();
        let mut intersection = 0u64;
        let mut union = 0u64;
        for (i, score) in track.scores.iter().enumerate() {
            let predicted = *score >= threshold;
            let actual = gt.get(i).copied().unwrap_or(0) == 1;
            if predicted && actual {
                intersection += 1;
            }
            if predicted || actual {
                union += 1;
            }
        }
        count += 1;
        if union > 0 {
            total += intersection as f64 / union as f64;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Number of maximal runs of frames at or above `threshold`.
pub fn count_events<F: Real>(scores: &[F], threshold: F) -> usize {
    let mut runs = 0;
    let mut inside = false;
    for score in scores {
        let above = *score >= threshold;
        if above && !inside {
            runs += 1;
        }
        inside = above;
    }
    runs
}

/// Gold category inferred from a video file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldCategory {
    Label(String),
    /// Names indicating normal content are out of scope for the protocol.
    SkipNormal,
    /// No leading alphabetic prefix to classify.
    SkipUnparsable,
}

/// Extracts the leading alphabetic run of the name, lowercases it, and
/// alias-normalizes it into the canonical label set.
pub fn infer_gold_category(video_name: &str) -> GoldCategory {
    let prefix: String = video_name
        .chars()
        .take_while(char::is_ascii_alphabetic)
        .collect();
    if prefix.is_empty() {
        return GoldCategory::SkipUnparsable;
    }
    let lowered = prefix.to_lowercase();
    if lowered == "normal" {
        return GoldCategory::SkipNormal;
    }
    GoldCategory::Label(normalize_alias(&lowered))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationVariant {
    EventLevel,
    PeakSegment,
    RandomSegment,
    Concatenated,
}

impl ExplanationVariant {
    pub const ALL: [ExplanationVariant; 4] = [
        ExplanationVariant::EventLevel,
        ExplanationVariant::PeakSegment,
        ExplanationVariant::RandomSegment,
        ExplanationVariant::Concatenated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExplanationVariant::EventLevel => "event_level",
            ExplanationVariant::PeakSegment => "peak_segment",
            ExplanationVariant::RandomSegment => "random_segment",
            ExplanationVariant::Concatenated => "concatenated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResult {
    pub video_id: String,
    pub event_index: usize,
    pub explanation_variant: ExplanationVariant,
    pub predicted: String,
    pub gold: String,
    pub correct: bool,
    /// Whitespace token count of the judged text.
    pub token_length: usize,
}

/// Builds the four explanation variants per detected event and judges each
/// independently. Judge failures degrade to "unknown"; nothing aborts.
pub fn judge_variants(
    gateway: &Gateway,
    video_id: &str,
    gold: &str,
    events: &[EventExplanation],
    verdicts: &[SegmentVerdict],
    field: &EvidenceField,
    rng_seed: u64,
) -> Vec<JudgeResult> {
    let labels: Vec<&str> = CANONICAL_CATEGORIES.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ video_seed(video_id));
    let mut results = Vec::with_capacity(events.len() * 4);
    for (event_index, event) in events.iter().enumerate() {
        let (l, r) = (event.interval.l, event.interval.r);
        let peak = peak_segment(field, l, r);
        let random = rng.random_range(l..=r);
        let concatenated = verdicts[l..=r]
            .iter()
            .map(|v| v.explanation.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let variants = [
            (ExplanationVariant::EventLevel, event.narrative.clone()),
            (
                ExplanationVariant::PeakSegment,
                verdicts[peak].explanation.clone(),
            ),
            (
                ExplanationVariant::RandomSegment,
                verdicts[random].explanation.clone(),
            ),
            (ExplanationVariant::Concatenated, concatenated),
        ];
        for (variant, text) in variants {
            let predicted = gateway.judge_category(&text, &labels);
            results.push(JudgeResult {
                video_id: video_id.to_string(),
                event_index,
                explanation_variant: variant,
                predicted: predicted.clone(),
                gold: gold.to_string(),
                correct: predicted == gold,
                token_length: text.split_whitespace().count(),
            });
        }
    }
    results
}

/// Index of the highest evidence score inside `[l, r]`, earliest on ties.
pub fn peak_segment(field: &EvidenceField, l: usize, r: usize) -> usize {
    let mut best = l;
    for i in l..=r {
        if field.scores[i] > field.scores[best] {
            best = i;
        }
    }
    best
}

fn video_seed(video_id: &str) -> u64 {
    let digest = sha256_hex(video_id.as_bytes());
    u64::from_str_radix(&digest[..16], 16).unwrap_or(0)
}

/// Per-variant accuracy over a batch of judge results.
pub fn accuracy_by_variant(results: &[JudgeResult]) -> BTreeMap<String, f64> {
    aggregate_by_variant(results, |r| if r.correct { 1.0 } else { 0.0 })
}

/// Per-variant mean whitespace token length.
pub fn token_length_by_variant(results: &[JudgeResult]) -> BTreeMap<String, f64> {
    aggregate_by_variant(results, |r| r.token_length as f64)
}

fn aggregate_by_variant(
    results: &[JudgeResult],
    value: impl Fn(&JudgeResult) -> f64,
) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for result in results {
        let entry = sums
            .entry(result.explanation_variant.as_str().to_string())
            .or_insert((0.0, 0));
        entry.0 += value(result);
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(scores: &[f64]) -> EvidenceField {
        EvidenceField {
            scores: scores.to_vec(),
            alpha: 0.9,
            gamma: 0.05,
            delta: 0.25,
        }
    }

    // O(n^2) definitional oracle: fraction of (positive, negative) pairs
    // ranked correctly, ties worth one half.
    fn auc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn ap_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|a, b| scores[*b].partial_cmp(&scores[*a]).unwrap());
        let total: usize = labels.iter().map(|&y| y as usize).sum();
        let mut tp = 0usize;
        let mut sum = 0.0;
        for (k, &i) in order.iter().enumerate() {
            if labels[i] == 1 {
                tp += 1;
                sum += tp as f64 / (k + 1) as f64;
            }
        }
        sum / total as f64
    }

    #[test]
    fn auc_perfect_ranking() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(roc_auc(&[0.1, 0.9], &[1, 1]).is_err());
    }

    #[test]
    fn ap_perfect_and_single_positive() {
        assert_eq!(average_precision(&[0.9, 0.1, 0.2], &[1, 0, 0]).unwrap(), 1.0);
        // Single positive ranked 3rd of 4.
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[0, 0, 1, 0]).unwrap();
        assert!((ap - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ap_needs_a_positive() {
        assert!(average_precision(&[0.5, 0.4], &[0, 0]).is_err());
    }

    #[test]
    fn miou_hand_cases() {
        let mut annotations = BTreeMap::new();
        annotations.insert(
            "v".to_string(),
            AnnotationRecord {
                video_id: "v".to_string(),
                category: "arson".to_string(),
                anomalous_intervals: vec![(5, 14)],
                total_frames: 20,
            },
        );
        let mut scores = vec![0.0; 20];
        for s in scores.iter_mut().take(10) {
            *s = 1.0;
        }
        let track = FrameScoreTrack {
            video_id: "v".to_string(),
            scores,
            labels: None,
        };
        let value = mean_iou(&[track], &annotations, 0.5);
        assert!((value - 5.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn miou_perfect_and_disjoint() {
        let mut annotations = BTreeMap::new();
        annotations.insert(
            "v".to_string(),
            AnnotationRecord {
                video_id: "v".to_string(),
                category: "arson".to_string(),
                anomalous_intervals: vec![(0, 4)],
                total_frames: 10,
            },
        );
        let perfect = FrameScoreTrack {
            video_id: "v".to_string(),
            scores: vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            labels: None,
        };
        assert_eq!(mean_iou(&[perfect], &annotations, 0.5), 1.0);
        let disjoint = FrameScoreTrack {
            video_id: "v".to_string(),
            scores: vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            labels: None,
        };
        assert_eq!(mean_iou(&[disjoint], &annotations, 0.5), 0.0);
    }

    #[test]
    fn count_events_runs() {
        assert_eq!(count_events(&[0.1, 0.2, 0.3], 0.5), 0);
        assert_eq!(count_events(&[0.9, 0.1, 0.9, 0.9, 0.1, 0.0], 0.5), 2);
        assert_eq!(count_events(&[0.9, 0.9], 0.5), 1);
    }

    #[test]
    fn smoothing_sigma_zero_is_identity() {
        let f = field(&[0.2, 0.8, 0.4]);
        let ranges = [(0, 15), (16, 31), (32, 47)];
        let track = expand_and_smooth(&f, &ranges, 48, 0.0).unwrap();
        assert_eq!(track.len(), 48);
        assert!(track[..16].iter().all(|&x| x == 0.2));
        assert!(track[16..32].iter().all(|&x| x == 0.8));
        assert!(track[32..].iter().all(|&x| x == 0.4));
    }

    #[test]
    fn smoothing_preserves_constants() {
        let f = field(&[0.37; 6]);
        let ranges: Vec<(u64, u64)> = (0..6u64).map(|i| (i * 16, i * 16 + 15)).collect();
        let track = expand_and_smooth(&f, &ranges, 96, 16.0).unwrap();
        assert!(track.iter().all(|&x| (x - 0.37).abs() < 1e-12));
    }

    #[test]
    fn smoothing_spike_is_a_symmetric_mass_preserving_bump() {
        let mut scores = vec![0.0; 21];
        scores[10] = 1.0;
        let f = field(&scores);
        let ranges: Vec<(u64, u64)> = (0..21u64).map(|i| (i * 16, i * 16 + 15)).collect();
        let track = expand_and_smooth(&f, &ranges, 21 * 16, 16.0).unwrap();
        // Total mass preserved away from boundaries (16 unit frames).
        let mass: f64 = track.iter().sum();
        assert!((mass - 16.0).abs() < 1e-6, "mass {mass}");
        // Symmetric around the spike segment's plateau.
        let (lo, hi) = (10 * 16, 10 * 16 + 15);
        let center2 = lo + hi; // track[lo+hi-i] mirrors track[i]
        for i in 0..track.len() {
            let mirrored = center2 as i64 - i as i64;
            if (0..track.len() as i64).contains(&mirrored) {
                assert!((track[i] - track[mirrored as usize]).abs() < 1e-9);
            }
        }
        // Peak sits on the spike plateau.
        let argmax = track
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((lo..=hi).contains(&argmax));
    }

    #[test]
    fn smoothing_rejects_non_tiling_ranges() {
        let f = field(&[0.5, 0.5]);
        assert!(expand_and_smooth(&f, &[(0, 15), (17, 31)], 32, 0.0).is_err());
        assert!(expand_and_smooth(&f, &[(0, 15), (16, 30)], 32, 0.0).is_err());
    }

    #[test]
    fn gold_category_from_names() {
        assert_eq!(
            infer_gold_category("Robbery102_x264"),
            GoldCategory::Label("robbery".to_string())
        );
        assert_eq!(
            infer_gold_category("RoadAccidents021_x264"),
            GoldCategory::Label("roadaccidents".to_string())
        );
        assert_eq!(infer_gold_category("Normal_Videos_003"), GoldCategory::SkipNormal);
        assert_eq!(infer_gold_category("123clip"), GoldCategory::SkipUnparsable);
    }

    #[test]
    fn gold_round_trips_all_canonical_classes() {
        for label in CANONICAL_CATEGORIES {
            let mut name: String = label.to_string();
            // Video names capitalize words; mimic that surface form.
            name[0..1].make_ascii_uppercase();
            let file = format!("{name}042_x264");
            assert_eq!(
                infer_gold_category(&file),
                GoldCategory::Label(label.to_string()),
                "{file}"
            );
        }
    }

    #[test]
    fn peak_segment_prefers_earliest_max() {
        let f = field(&[0.1, 0.9, 0.3, 0.9, 0.2]);
        assert_eq!(peak_segment(&f, 0, 4), 1);
        assert_eq!(peak_segment(&f, 2, 4), 3);
    }

    #[test]
    fn annotation_validation() {
        let bad = AnnotationRecord {
            video_id: "v".to_string(),
            category: "arson".to_string(),
            anomalous_intervals: vec![(5, 30)],
            total_frames: 20,
        };
        assert!(bad.validate().is_err());
        let overlapping = AnnotationRecord {
            anomalous_intervals: vec![(0, 5), (3, 8)],
            ..bad.clone()
        };
        assert!(overlapping.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn auc_and_ap_match_oracles(
            raw in proptest::collection::vec((0u8..2, 0.0f64..1.0), 5..80),
        ) {
            let mut labels: Vec<u8> = raw.iter().map(|(y, _)| *y).collect();
            // Quantize some scores to force ties through the tie-corrected path.
            let scores: Vec<f64> = raw
                .iter()
                .map(|(_, s)| (s * 8.0).round() / 8.0)
                .collect();
            if !labels.contains(&1) {
                labels[0] = 1;
            }
            if !labels.contains(&0) {
                labels[0] = 0;
            }
            if labels.contains(&1) && labels.contains(&0) {
                let auc = roc_auc(&scores, &labels).unwrap();
                prop_assert!((auc - auc_oracle(&scores, &labels)).abs() < 1e-9);
                let ap = average_precision(&scores, &labels).unwrap();
                prop_assert!((ap - ap_oracle(&scores, &labels)).abs() < 1e-9);
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transforms(
            raw in proptest::collection::vec((0u8..2, 0.0f64..1.0), 5..60),
        ) {
            let mut labels: Vec<u8> = raw.iter().map(|(y, _)| *y).collect();
            let scores: Vec<f64> = raw.iter().map(|(_, s)| *s).collect();
            labels[0] = 1;
            if labels.len() > 1 {
                labels[1] = 0;
            }
            let base = roc_auc(&scores, &labels).unwrap();
            let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
            let affine: Vec<f64> = scores.iter().map(|s| 0.5 + 0.5 * s).collect();
            prop_assert!((roc_auc(&cubed, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((roc_auc(&affine, &labels).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn smoothing_stays_in_unit_interval(
            scores in proptest::collection::vec(0.0f64..1.0, 1..12),
            sigma in 0.0f64..40.0,
        ) {
            let f = field(&scores);
            let ranges: Vec<(u64, u64)> =
                (0..scores.len() as u64).map(|i| (i * 16, i * 16 + 15)).collect();
            let track =
                expand_and_smooth(&f, &ranges, scores.len() as u64 * 16, sigma).unwrap();
            prop_assert!(track.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn count_events_invariant_under_threshold_fixing_transforms(
            scores in proptest::collection::vec(0.0f64..1.0, 1..64),
        ) {
            // x -> 0.5 + 0.5x and x -> x^3 both fix the preimage of 0.5 when
            // the threshold is transformed alongside; use the affine one with
            // its mapped threshold.
            let base = count_events(&scores, 0.5);
            let affine: Vec<f64> = scores.iter().map(|s| 0.5 + 0.5 * s).collect();
            prop_assert_eq!(base, count_events(&affine, 0.75));
            let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
            prop_assert_eq!(base, count_events(&cubed, 0.125));
        }
    }
}
