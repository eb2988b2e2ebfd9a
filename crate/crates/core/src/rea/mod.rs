//! Recursive evidence aggregation: builds a continuous per-segment evidence
//! field from verdicts, proposes anomaly windows by recursive binary
//! partitioning, merges them for temporal continuity, and keeps the top-K
//! windows by cumulative evidence.
//!
//! Everything in this module is a pure function of verdicts + lexicon +
//! config; no model is ever called from here.

pub mod lexicon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cea::SegmentVerdict;
use crate::math::{clip01, real, Real};
pub use lexicon::Lexicon;

#[derive(Debug, Error)]
pub enum ReaError {
    #[error("window [{l}, {r}] out of range for field of length {len}")]
    WindowOutOfRange { l: usize, r: usize, len: usize },
    #[error("evidence field is empty")]
    EmptyField,
}

/// Continuous per-segment anomaly evidence, one score in `[0, 1]` per
/// segment, together with the coefficients that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceField<F = f64> {
    pub scores: Vec<F>,
    pub alpha: F,
    pub gamma: F,
    pub delta: F,
}

impl<F: Real> EvidenceField<F> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Builds the field by applying [`evidence_score`] to every verdict.
    pub fn from_verdicts(
        verdicts: &[SegmentVerdict],
        config: &ReaConfig<F>,
        lexicon: &Lexicon,
    ) -> Self {
        let scores = verdicts
            .iter()
            .map(|v| evidence_score(v, lexicon, config.alpha, config.gamma, config.delta))
            .collect();
        Self {
            scores,
            alpha: config.alpha,
            gamma: config.gamma,
            delta: config.delta,
        }
    }
}

/// An inclusive segment-index window with its evidence statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window<F = f64> {
    pub l: usize,
    pub r: usize,
    pub mean: F,
    pub peak: F,
    pub cumulative: F,
}

impl<F: Real> Window<F> {
    /// Number of segments covered, inclusive of both endpoints.
    pub fn span(&self) -> usize {
        self.r - self.l + 1
    }
}

/// Selected anomaly windows, sorted ascending by left endpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSet<F = f64> {
    pub windows: Vec<Window<F>>,
}

impl<F: Real> IntervalSet<F> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Tuning for evidence construction and window proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaConfig<F = f64> {
    /// Weight of the binary segment flag in the evidence score.
    pub alpha: F,
    /// Weight per distinct cue keyword match.
    pub gamma: F,
    /// Penalty per distinct negation pattern match.
    pub delta: F,
    /// A window is anomalous when its peak reaches this value...
    pub theta_peak: F,
    /// ...or its mean reaches this one.
    pub theta_mean: F,
    /// Minimum window length below which recursion stops splitting.
    pub min_window: usize,
    /// Maximum recursion depth.
    pub max_depth: usize,
    /// Gap (in empty segments) bridged when merging proposal intervals.
    pub merge_gap: usize,
    /// Maximum number of retained intervals.
    pub k_max: usize,
}

impl<F: Real> Default for ReaConfig<F> {
    fn default() -> Self {
        Self {
            alpha: real(0.90),
            gamma: real(0.05),
            delta: real(0.25),
            theta_peak: real(0.8),
            theta_mean: real(0.5),
            min_window: 2,
            max_depth: 8,
            merge_gap: 1,
            k_max: 6,
        }
    }
}

/// Evidence arithmetic on pre-extracted counts:
/// `clip(alpha * flag + gamma * cues - delta * negs, 0, 1)`.
pub fn evidence_from_counts<F: Real>(
    flag: u8,
    cues: usize,
    negs: usize,
    alpha: F,
    gamma: F,
    delta: F,
) -> F {
    let flag = real::<F>(f64::from(flag.min(1)));
    let cues = real::<F>(cues as f64);
    let negs = real::<F>(negs as f64);
    clip01(alpha * flag + gamma * cues - delta * negs)
}

/// Evidence score for one verdict: the flag weighted by `alpha`, plus
/// `gamma` per distinct cue keyword in the explanation, minus `delta` per
/// distinct negation pattern, clipped to `[0, 1]`.
pub fn evidence_score<F: Real>(
    verdict: &SegmentVerdict,
    lexicon: &Lexicon,
    alpha: F,
    gamma: F,
    delta: F,
) -> F {
    evidence_from_counts(
        verdict.flag,
        lexicon.count_cues(&verdict.explanation),
        lexicon.count_negations(&verdict.explanation),
        alpha,
        gamma,
        delta,
    )
}

/// Mean, peak, and cumulative evidence over the inclusive window `[l, r]`.
pub fn window_stats<F: Real>(
    field: &EvidenceField<F>,
    l: usize,
    r: usize,
) -> Result<Window<F>, ReaError> {
    if l > r || r >= field.len() {
        return Err(ReaError::WindowOutOfRange {
            l,
            r,
            len: field.len(),
        });
    }
    let mut count = 0u64;
    Ok(stats_unchecked(field, l, r, &mut count))
}

fn stats_unchecked<F: Real>(
    field: &EvidenceField<F>,
    l: usize,
    r: usize,
    evaluations: &mut u64,
) -> Window<F> {
    *evaluations += 1;
    let slice = &field.scores[l..=r];
    let cumulative: F = slice.iter().copied().sum();
    let peak = slice
        .iter()
        .copied()
        .fold(F::neg_infinity(), |acc, x| acc.max(x));
    let mean = cumulative / real::<F>(slice.len() as f64);
    Window {
        l,
        r,
        mean,
        peak,
        cumulative,
    }
}

/// A window is likely anomalous when it has a sufficiently strong local peak
/// or sustained mean evidence.
pub fn likely_anomalous<F: Real>(window: &Window<F>, theta_peak: F, theta_mean: F) -> bool {
    window.peak >= theta_peak || window.mean >= theta_mean
}

/// Recursive binary partitioning of `[l, r]` into anomaly window proposals.
///
/// A window that fails the anomaly criteria is dropped together with its
/// entire subtree. A passing window is emitted whole once the depth budget
/// is exhausted or it is no longer longer than `min_window`; otherwise it is
/// split at its midpoint and the child proposals are merged with gap 1.
pub fn recurse_localize<F: Real>(
    field: &EvidenceField<F>,
    l: usize,
    r: usize,
    config: &ReaConfig<F>,
    depth: usize,
) -> Vec<Window<F>> {
    recurse_localize_counting(field, l, r, config, depth).0
}

/// Same as [`recurse_localize`], additionally reporting how many window-stat
/// evaluations the recursion performed (used to check the `O(h log h)`
/// complexity contract).
pub fn recurse_localize_counting<F: Real>(
    field: &EvidenceField<F>,
    l: usize,
    r: usize,
    config: &ReaConfig<F>,
    depth: usize,
) -> (Vec<Window<F>>, u64) {
    let mut evaluations = 0u64;
    let windows = recurse_inner(field, l, r, config, depth, &mut evaluations);
    (windows, evaluations)
}

fn recurse_inner<F: Real>(
    field: &EvidenceField<F>,
    l: usize,
    r: usize,
    config: &ReaConfig<F>,
    depth: usize,
    evaluations: &mut u64,
) -> Vec<Window<F>> {
    if l > r || r >= field.len() {
        return Vec::new();
    }
    let window = stats_unchecked(field, l, r, evaluations);
    if !likely_anomalous(&window, config.theta_peak, config.theta_mean) {
        return Vec::new();
    }
    if depth >= config.max_depth || window.span() <= config.min_window {
        return vec![window];
    }
    let mid = (l + r) / 2;
    let mut left = recurse_inner(field, l, mid, config, depth + 1, evaluations);
    let right = recurse_inner(field, mid + 1, r, config, depth + 1, evaluations);
    left.extend(right);
    merge_counted(field, left, 1, evaluations)
}

/// Merges overlapping or near-adjacent windows: after sorting by left
/// endpoint, two consecutive windows merge when at most `gap` empty segments
/// separate them. Output stats are recomputed from the field.
pub fn merge_intervals<F: Real>(
    field: &EvidenceField<F>,
    intervals: Vec<Window<F>>,
    gap: usize,
) -> Vec<Window<F>> {
    let mut evaluations = 0u64;
    merge_counted(field, intervals, gap, &mut evaluations)
}

fn merge_counted<F: Real>(
    field: &EvidenceField<F>,
    mut intervals: Vec<Window<F>>,
    gap: usize,
    evaluations: &mut u64,
) -> Vec<Window<F>> {
    if intervals.len() <= 1 {
        return intervals;
    }
    intervals.sort_by(|a, b| a.l.cmp(&b.l).then(a.r.cmp(&b.r)));
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(intervals.len());
    for window in &intervals {
        match spans.last_mut() {
            Some((_, prev_r)) if window.l <= *prev_r + gap + 1 => {
                *prev_r = (*prev_r).max(window.r);
            }
            _ => spans.push((window.l, window.r)),
        }
    }
    spans
        .into_iter()
        .map(|(l, r)| stats_unchecked(field, l, r, evaluations))
        .collect()
}

/// Ranks candidates by cumulative evidence (ties: earlier left endpoint,
/// then longer window), keeps at most `k_max`, and returns them sorted by
/// left endpoint.
pub fn select_top_k<F: Real>(
    field: &EvidenceField<F>,
    candidates: Vec<Window<F>>,
    k_max: usize,
) -> IntervalSet<F> {
    let _ = field; // stats are already consistent; kept for signature symmetry
    let mut ranked = candidates;
    ranked.sort_by(|a, b| {
        b.cumulative
            .partial_cmp(&a.cumulative)
            .expect("evidence scores are finite")
            .then(a.l.cmp(&b.l))
            .then(b.r.cmp(&a.r))
    });
    ranked.truncate(k_max);
    ranked.sort_by_key(|w| w.l);
    IntervalSet { windows: ranked }
}

/// Full aggregation pass: evidence field, recursive proposals over the whole
/// segment axis, merge with the configured gap, top-K selection.
pub fn run_rea<F: Real>(
    verdicts: &[SegmentVerdict],
    config: &ReaConfig<F>,
    lexicon: &Lexicon,
) -> Result<(EvidenceField<F>, IntervalSet<F>), ReaError> {
    if verdicts.is_empty() {
        return Err(ReaError::EmptyField);
    }
    let field = EvidenceField::from_verdicts(verdicts, config, lexicon);
    let h = field.len();
    let proposals = recurse_localize(&field, 0, h - 1, config, 0);
    let merged = merge_intervals(&field, proposals, config.merge_gap);
    let selected = select_top_k(&field, merged, config.k_max);
    Ok((field, selected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(scores: &[f64]) -> EvidenceField {
        EvidenceField {
            scores: scores.to_vec(),
            alpha: 0.90,
            gamma: 0.05,
            delta: 0.25,
        }
    }

    fn verdict(flag: u8, explanation: &str) -> SegmentVerdict {
        SegmentVerdict {
            segment_index: 0,
            flag,
            explanation: explanation.to_string(),
            used_summary: false,
            summary_snapshot: None,
        }
    }

    #[test]
    fn evidence_score_paper_coefficients() {
        let lex = Lexicon::fixed();
        let v = verdict(1, "something odd happens");
        let score: f64 = evidence_score(&v, lex, 0.90, 0.05, 0.25);
        assert!((score - 0.90).abs() < 1e-12);
    }

    #[test]
    fn evidence_score_all_zero_input() {
        let lex = Lexicon::fixed();
        let v = verdict(0, "a quiet hallway");
        assert_eq!(evidence_score::<f64>(&v, lex, 0.90, 0.05, 0.25), 0.0);
    }

    #[test]
    fn evidence_score_clips_both_ends() {
        let lex = Lexicon::fixed();
        // Two distinct cues push past 1.0.
        let high = verdict(1, "a fire and an explosion");
        assert_eq!(evidence_score::<f64>(&high, lex, 0.90, 0.05, 0.25), 1.0);
        // Two negation patterns drag below 0.0.
        let low = verdict(0, "there is no anomaly");
        assert_eq!(evidence_score::<f64>(&low, lex, 0.90, 0.05, 0.25), 0.0);
    }

    #[test]
    fn window_stats_hand_example() {
        let f = field(&[0.2, 0.8]);
        let w = window_stats(&f, 0, 1).unwrap();
        assert!((w.mean - 0.5).abs() < 1e-12);
        assert!((w.peak - 0.8).abs() < 1e-12);
        assert!((w.cumulative - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_stats_single_element() {
        let f = field(&[0.0, 0.7, 0.0]);
        let w = window_stats(&f, 1, 1).unwrap();
        assert_eq!(w.mean, 0.7);
        assert_eq!(w.peak, 0.7);
        assert_eq!(w.cumulative, 0.7);
    }

    #[test]
    fn window_stats_rejects_bad_bounds() {
        let f = field(&[0.1, 0.2]);
        assert!(window_stats(&f, 1, 0).is_err());
        assert!(window_stats(&f, 0, 2).is_err());
    }

    #[test]
    fn likely_anomalous_is_a_disjunction() {
        let w = Window {
            l: 0,
            r: 3,
            mean: 0.1,
            peak: 0.95,
            cumulative: 0.4,
        };
        assert!(likely_anomalous(&w, 0.8, 0.5));
        let sustained = Window { mean: 0.6, peak: 0.3, ..w };
        assert!(likely_anomalous(&sustained, 0.8, 0.5));
        let quiet = Window { mean: 0.1, peak: 0.3, ..w };
        assert!(!likely_anomalous(&quiet, 0.8, 0.5));
    }

    #[test]
    fn recursion_hand_trace() {
        let f = field(&[0.0, 0.0, 0.9, 0.95, 0.9, 0.0, 0.0, 0.0]);
        let cfg = ReaConfig { min_window: 2, max_depth: 6, ..ReaConfig::default() };
        let windows = recurse_localize(&f, 0, 7, &cfg, 0);
        assert_eq!(windows.len(), 1);
        assert_eq!((windows[0].l, windows[0].r), (2, 5));
    }

    #[test]
    fn all_zero_field_yields_nothing() {
        let f = field(&[0.0; 8]);
        assert!(recurse_localize(&f, 0, 7, &ReaConfig::default(), 0).is_empty());
    }

    #[test]
    fn short_passing_field_returned_whole() {
        let f = field(&[0.9, 0.95]);
        let windows = recurse_localize(&f, 0, 1, &ReaConfig::default(), 0);
        assert_eq!(windows.len(), 1);
        assert_eq!((windows[0].l, windows[0].r), (0, 1));
    }

    #[test]
    fn merge_bridges_single_gap() {
        let f = field(&[0.0, 0.9, 0.9, 0.9, 0.0, 0.9, 0.9, 0.9, 0.0]);
        let a = window_stats(&f, 1, 3).unwrap();
        let b = window_stats(&f, 5, 7).unwrap();
        let merged = merge_intervals(&f, vec![a, b], 1);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].l, merged[0].r), (1, 7));
    }

    #[test]
    fn merge_respects_wider_gap() {
        let f = field(&[0.0, 0.9, 0.9, 0.9, 0.0, 0.0, 0.9, 0.9, 0.9]);
        let a = window_stats(&f, 1, 3).unwrap();
        let b = window_stats(&f, 6, 8).unwrap();
        let merged = merge_intervals(&f, vec![a, b], 1);
        assert_eq!(merged.len(), 2);
    }

    #[test]
    fn overlap_always_merges() {
        let f = field(&[0.5; 8]);
        let a = window_stats(&f, 1, 4).unwrap();
        let b = window_stats(&f, 3, 6).unwrap();
        let merged = merge_intervals(&f, vec![a, b], 0);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].l, merged[0].r), (1, 6));
    }

    #[test]
    fn top_k_ranks_by_cumulative_with_tiebreaks() {
        let f = field(&[0.9, 0.9, 0.0, 0.9, 0.0, 0.0, 0.9, 0.9, 0.9]);
        let big = window_stats(&f, 6, 8).unwrap();
        let pair = window_stats(&f, 0, 1).unwrap();
        let single = window_stats(&f, 3, 3).unwrap();
        let set = select_top_k(&f, vec![single, big, pair], 2);
        // big (2.7) and pair (1.8) survive; output re-sorted by l.
        assert_eq!(set.len(), 2);
        assert_eq!((set.windows[0].l, set.windows[0].r), (0, 1));
        assert_eq!((set.windows[1].l, set.windows[1].r), (6, 8));
    }

    #[test]
    fn top_k_equal_cumulative_prefers_earlier() {
        let f = field(&[0.9, 0.0, 0.0, 0.9]);
        let early = window_stats(&f, 0, 0).unwrap();
        let late = window_stats(&f, 3, 3).unwrap();
        let set = select_top_k(&f, vec![late, early], 1);
        assert_eq!(set.windows[0].l, 0);
    }

    #[test]
    fn top_k_empty_candidates() {
        let f = field(&[0.0; 4]);
        assert!(select_top_k(&f, Vec::new(), 6).is_empty());
    }

    #[test]
    fn run_rea_contiguous_block_becomes_one_interval() {
        let lex = Lexicon::fixed();
        let verdicts: Vec<SegmentVerdict> = (0..10)
            .map(|i| {
                let flag = u8::from((3..=6).contains(&i));
                let text = if flag == 1 { "people struggle" } else { "quiet" };
                SegmentVerdict {
                    segment_index: i,
                    flag,
                    explanation: text.to_string(),
                    used_summary: false,
                    summary_snapshot: None,
                }
            })
            .collect();
        let (field, set) = run_rea::<f64>(&verdicts, &ReaConfig::default(), lex).unwrap();
        assert_eq!(field.len(), 10);
        assert_eq!(set.len(), 1);
        assert_eq!((set.windows[0].l, set.windows[0].r), (3, 6));
    }

    #[test]
    fn run_rea_all_normal_is_empty() {
        let lex = Lexicon::fixed();
        let verdicts: Vec<SegmentVerdict> =
            (0..12).map(|i| SegmentVerdict {
                segment_index: i,
                flag: 0,
                explanation: "an empty corridor".to_string(),
                used_summary: false,
                summary_snapshot: None,
            }).collect();
        let (field, set) = run_rea::<f64>(&verdicts, &ReaConfig::default(), lex).unwrap();
        assert!(field.scores.iter().all(|s| *s == 0.0));
        assert!(set.is_empty());
    }

    #[test]
    fn stat_evaluations_within_linearithmic_bound() {
        for h in [1usize, 2, 3, 7, 16, 33, 128, 240, 512] {
            let f = field(&vec![0.9; h]);
            let (_, evals) =
                recurse_localize_counting(&f, 0, h - 1, &ReaConfig::default(), 0);
            let bound = 4.0 * (h as f64) * (h as f64).log2().max(1.0) + 4.0;
            assert!(
                (evals as f64) <= bound,
                "h={h}: {evals} stat evaluations exceed bound {bound}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn merge_is_idempotent(
            spans in proptest::collection::vec((0usize..14, 0usize..3), 0..6),
            gap in 0usize..3,
        ) {
            let f = field(&[0.5; 16]);
            let windows: Vec<Window> = spans
                .iter()
                .map(|(l, len)| window_stats(&f, *l, (l + len).min(15)).unwrap())
                .collect();
            let once = merge_intervals(&f, windows.clone(), gap);
            let twice = merge_intervals(&f, once.clone(), gap);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn selected_intervals_are_disjoint_and_sorted(
            scores in proptest::collection::vec(
                proptest::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]),
                1..16,
            ),
        ) {
            let f = field(&scores);
            let cfg = ReaConfig::default();
            let proposals = recurse_localize(&f, 0, f.len() - 1, &cfg, 0);
            let merged = merge_intervals(&f, proposals, cfg.merge_gap);
            let set = select_top_k(&f, merged, cfg.k_max);
            for pair in set.windows.windows(2) {
                prop_assert!(pair[0].r < pair[1].l);
                prop_assert!(pair[1].l - pair[0].r - 1 > cfg.merge_gap);
            }
        }

        #[test]
        fn evidence_is_clipped(flag in 0u8..2, cues in 0usize..101, negs in 0usize..101) {
            // Synthesise counts directly through crafted text is unwieldy at
            // this scale; exercise the arithmetic contract instead.
            let raw = 0.90 * f64::from(flag) + 0.05 * cues as f64 - 0.25 * negs as f64;
            let clipped = clip01(raw);
            prop_assert!((0.0..=1.0).contains(&clipped));
        }

        #[test]
        fn extra_cue_never_decreases_score(flag in 0u8..2, base in "[a-z ]{0,40}") {
            let lex = Lexicon::fixed();
            let with_cue = format!("{base} explosion");
            let v0 = verdict(flag, &base);
            let v1 = verdict(flag, &with_cue);
            let s0: f64 = evidence_score(&v0, lex, 0.90, 0.05, 0.25);
            let s1: f64 = evidence_score(&v1, lex, 0.90, 0.05, 0.25);
            prop_assert!(s1 >= s0 - 1e-12);
        }

        #[test]
        fn extra_negation_never_increases_score(flag in 0u8..2, base in "[a-z ]{0,40}") {
            let lex = Lexicon::fixed();
            let with_neg = format!("{base}. no unusual activity");
            let v0 = verdict(flag, &base);
            let v1 = verdict(flag, &with_neg);
            let s0: f64 = evidence_score(&v0, lex, 0.90, 0.05, 0.25);
            let s1: f64 = evidence_score(&v1, lex, 0.90, 0.05, 0.25);
            prop_assert!(s1 <= s0 + 1e-12);
        }
    }
}
