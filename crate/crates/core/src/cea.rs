//! Context-aware anomaly scoring.
//!
//! For each segment the stage keeps a bounded visual memory of prior
//! center-frame embeddings, periodically summarizes a diverse key-frame
//! subset of that memory, validates the summary against the current segment
//! through a cross-modal grounding gate, and scores the segment with or
//! without the summary as historical context. Per-video state is strictly
//! sequential: segment `i + 1` depends on segment `i`'s history update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{FrameError, FrameStore};
use crate::gateway::{sha256_hex, Gateway, GatewayError, JointInput};
use crate::math::{dot, euclidean, l2_normalize, normalized_entropy, top_k_mean, Real};

/// Summary text used before any refresh has produced one.
pub const NO_PRIOR_SUMMARY: &str = "No prior events observed yet";

#[derive(Debug, Error)]
pub enum CeaError {
    #[error("embedding cannot be normalized (zero or non-finite vector)")]
    ZeroEmbedding,
    #[error("history buffer is empty")]
    EmptyBuffer,
    #[error("summary text is empty")]
    EmptySummary,
    #[error("no segments to score")]
    NoSegments,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// A 16-frame slice of the video: the unit of model scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// 0-based segment ordinal.
    pub index: usize,
    /// Inclusive source-frame range covered by the segment.
    pub frame_range: (u64, u64),
    /// Uniformly sampled frame indices (length enforced by ingestion).
    pub frames: Vec<u64>,
    /// The middle sampled frame, used for the history embedding.
    pub center_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry<F = f64> {
    pub segment_index: usize,
    pub embedding: Vec<F>,
    pub center_frame: u64,
}

/// Bounded FIFO of unit-norm center-frame embeddings, ordered by segment
/// index ascending; insertion beyond capacity evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct HistoryBuffer<F = f64> {
    entries: Vec<HistoryEntry<F>>,
    capacity: usize,
}

impl<F: Real> HistoryBuffer<F> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history capacity must be at least 1");
        Self {
            entries: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// Normalizes `raw` and appends it, evicting the oldest entry when the
    /// buffer is full.
    pub fn push(
        &mut self,
        segment_index: usize,
        center_frame: u64,
        raw: &[F],
    ) -> Result<(), CeaError> {
        let embedding = l2_normalize(raw).ok_or(CeaError::ZeroEmbedding)?;
        debug_assert!(self
            .entries
            .last()
            .is_none_or(|last| last.segment_index < segment_index));
        if self.entries.len() == self.capacity {
            self.entries.remove(0);
        }
        self.entries.push(HistoryEntry {
            segment_index,
            embedding,
            center_frame,
        });
        Ok(())
    }

    /// Builds a buffer from pre-computed entries without normalizing them.
    /// Intended for tests and replay tooling.
    pub fn from_raw_entries(capacity: usize, entries: Vec<HistoryEntry<F>>) -> Self {
        assert!(entries.len() <= capacity);
        Self { entries, capacity }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[HistoryEntry<F>] {
        &self.entries
    }
}

/// Greedy farthest-point selection order over `entries`, seeded with the
/// most recent entry. Returns positions into `entries` in selection order;
/// distance ties break toward the lowest segment index.
pub fn farthest_point_trace<F: Real>(entries: &[HistoryEntry<F>], k: usize) -> Vec<usize> {
    if entries.is_empty() || k == 0 {
        return Vec::new();
    }
    let take = k.min(entries.len());
    let mut selected = vec![entries.len() - 1];
    let mut remaining: Vec<usize> = (0..entries.len() - 1).collect();
    while selected.len() < take {
        let mut best: Option<(usize, F)> = None;
        for (slot, &candidate) in remaining.iter().enumerate() {
            let dist = selected
                .iter()
                .map(|&s| euclidean(&entries[candidate].embedding, &entries[s].embedding))
                .fold(F::infinity(), |acc, d| acc.min(d));
            // Strict `>` keeps the earliest (lowest segment index) candidate
            // on ties, since `remaining` is in ascending index order.
            let better = match best {
                None => true,
                Some((_, best_dist)) => dist > best_dist,
            };
            if better {
                best = Some((slot, dist));
            }
        }
        let (slot, _) = best.expect("remaining is non-empty");
        selected.push(remaining.remove(slot));
    }
    selected
}

/// Selects up to `k` diverse entries by farthest-point sampling and returns
/// them ordered by segment index ascending.
pub fn select_key_frames<F: Real>(buffer: &HistoryBuffer<F>, k: usize) -> Vec<&HistoryEntry<F>> {
    let entries = buffer.entries();
    let mut picked: Vec<&HistoryEntry<F>> = farthest_point_trace(entries, k)
        .into_iter()
        .map(|i| &entries[i])
        .collect();
    picked.sort_by_key(|e| e.segment_index);
    picked
}

/// Cross-modal grounding statistics for one summary against one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStats<F = f64> {
    /// Cosine similarities between the summary embedding and each frame.
    pub similarities: Vec<F>,
    /// Mean of the top-K similarities.
    pub mu: F,
    /// Normalized Shannon entropy of the softmax-scaled similarities.
    pub entropy: F,
    pub tau: F,
    pub top_k: usize,
}

/// Builds [`GateStats`] from raw similarity values.
pub fn grounding_stats<F: Real>(similarities: Vec<F>, tau: F, top_k: usize) -> GateStats<F> {
    assert!(!similarities.is_empty(), "grounding needs at least one frame");
    let mu = top_k_mean(&similarities, top_k);
    let entropy = normalized_entropy(&similarities, tau);
    GateStats {
        similarities,
        mu,
        entropy,
        tau,
        top_k,
    }
}

/// Embeds the summary text jointly with the segment frames and derives the
/// grounding statistics from the pairwise cosine similarities.
pub fn compute_grounding(
    gateway: &Gateway,
    summary: &str,
    frames: &[Vec<u8>],
    tau: f64,
    top_k: usize,
) -> Result<GateStats, CeaError> {
    if summary.trim().is_empty() {
        return Err(CeaError::EmptySummary);
    }
    let mut items: Vec<JointInput> = Vec::with_capacity(frames.len() + 1);
    items.push(JointInput::Text(summary));
    items.extend(frames.iter().map(|f| JointInput::Image(f)));
    let vectors = gateway.embed_joint(&items)?;
    let text = l2_normalize(&vectors[0]).ok_or(CeaError::ZeroEmbedding)?;
    let mut similarities = Vec::with_capacity(frames.len());
    for vector in &vectors[1..] {
        let unit = l2_normalize(vector).ok_or(CeaError::ZeroEmbedding)?;
        let cosine = dot(&text, &unit);
        similarities.push(cosine.clamp(-1.0, 1.0));
    }
    Ok(grounding_stats(similarities, tau, top_k))
}

/// The gate accepts a summary only under strict inequalities on both
/// statistics: strong alignment and concentrated evidence.
pub fn gate_decision<F: Real>(stats: &GateStats<F>, delta_sim: F, delta_ent: F) -> bool {
    stats.mu > delta_sim && stats.entropy < delta_ent
}

/// True when the summary passes a verdict instead of describing content.
/// Summaries are forbidden from labeling events as normal or anomalous.
pub fn summary_violates_constraints(summary: &str) -> bool {
    summary
        .split(|c: char| !c.is_alphanumeric())
        .any(|word| word.eq_ignore_ascii_case("normal") || word.eq_ignore_ascii_case("anomalous"))
}

/// Rolling summary state carried across segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryState {
    pub text: String,
    pub last_refresh_segment: Option<usize>,
    pub accepted: bool,
    pub stats: Option<GateStats>,
}

impl SummaryState {
    pub fn initial() -> Self {
        Self {
            text: NO_PRIOR_SUMMARY.to_string(),
            last_refresh_segment: None,
            accepted: false,
            stats: None,
        }
    }
}

impl Default for SummaryState {
    fn default() -> Self {
        Self::initial()
    }
}

/// One scored segment: the binary flag, the model's explanation, and the
/// summary snapshot that conditioned the prompt (if any).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentVerdict {
    pub segment_index: usize,
    pub flag: u8,
    pub explanation: String,
    pub used_summary: bool,
    pub summary_snapshot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeaConfig {
    /// Frames sampled per segment.
    pub kappa: usize,
    /// History buffer capacity.
    pub history_capacity: usize,
    /// Diverse key frames selected per summary.
    pub key_frames: usize,
    /// Summary refresh stride, in segments.
    pub summary_stride: usize,
    /// Minimum history entries before the first refresh.
    pub min_history: usize,
    /// Softmax temperature for the entropy statistic.
    pub tau: f64,
    /// K for the top-K mean similarity.
    pub top_k_mean: usize,
    /// Similarity threshold (gate passes strictly above).
    pub delta_sim: f64,
    /// Entropy threshold (gate passes strictly below).
    pub delta_ent: f64,
}

impl Default for CeaConfig {
    fn default() -> Self {
        Self {
            kappa: 8,
            history_capacity: 8,
            key_frames: 4,
            summary_stride: 5,
            min_history: 3,
            tau: 0.1,
            top_k_mean: 4,
            delta_sim: 0.30,
            delta_ent: 0.80,
        }
    }
}

/// What a refresh cycle did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefreshOutcome {
    /// Stride or history preconditions not met; state untouched.
    NotDue,
    /// Summary regenerated and gated (accepted or not).
    Refreshed,
    /// A model call failed; prior text kept, `accepted` cleared.
    Failed(String),
}

/// Refreshes the summary when the stride and history preconditions hold:
/// selects diverse key frames, summarizes them, grounds the summary against
/// the current segment's frames, and applies the gate. Model failures leave
/// the prior text intact and clear `accepted` for this cycle.
#[allow(clippy::too_many_arguments)]
pub fn maybe_refresh_summary(
    state: &mut SummaryState,
    buffer: &HistoryBuffer,
    segment: &Segment,
    segment_frames: &[Vec<u8>],
    counter: usize,
    config: &CeaConfig,
    gateway: &Gateway,
    store: &dyn FrameStore,
) -> RefreshOutcome {
    if buffer.len() < config.min_history || !counter.is_multiple_of(config.summary_stride) {
        return RefreshOutcome::NotDue;
    }
    match refresh(state, buffer, segment, segment_frames, config, gateway, store) {
        Ok(()) => RefreshOutcome::Refreshed,
        Err(err) => {
            state.accepted = false;
            state.stats = None;
            RefreshOutcome::Failed(err.to_string())
        }
    }
}

fn refresh(
    state: &mut SummaryState,
    buffer: &HistoryBuffer,
    segment: &Segment,
    segment_frames: &[Vec<u8>],
    config: &CeaConfig,
    gateway: &Gateway,
    store: &dyn FrameStore,
) -> Result<(), CeaError> {
    if buffer.is_empty() {
        return Err(CeaError::EmptyBuffer);
    }
    let keys = select_key_frames(buffer, config.key_frames);
    let mut key_bytes = Vec::with_capacity(keys.len());
    for entry in &keys {
        key_bytes.push(store.frame_bytes(entry.center_frame)?);
    }
    let summary = gateway.summarize(&key_bytes)?;
    let stats = compute_grounding(gateway, &summary, segment_frames, config.tau, config.top_k_mean)?;
    let accepted = gate_decision(&stats, config.delta_sim, config.delta_ent)
        && !summary_violates_constraints(&summary);
    state.text = summary;
    state.accepted = accepted;
    state.stats = Some(stats);
    state.last_refresh_segment = Some(segment.index);
    Ok(())
}

/// One audit-trace record per segment, also the input contract for the
/// downstream aggregation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTraceRow {
    pub index: usize,
    pub flag: u8,
    pub explanation: String,
    pub used_summary: bool,
    pub mu: Option<f64>,
    pub entropy: Option<f64>,
    pub summary_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub segment_index: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CeaOutcome {
    pub verdicts: Vec<SegmentVerdict>,
    pub trace: Vec<SegmentTraceRow>,
    /// Counter values (1-based) at which a summary refresh was attempted.
    pub refresh_attempts: Vec<usize>,
    pub errors: Vec<StageError>,
}

/// Scores every segment in order, maintaining history and summary state.
///
/// Scorer failures degrade to a `flag = 0` verdict with the literal
/// explanation `"<error>"` and are surfaced in `errors`; history-update
/// failures skip the push but keep the run alive.
pub fn run_cea(
    segments: &[Segment],
    store: &dyn FrameStore,
    config: &CeaConfig,
    gateway: &Gateway,
) -> Result<CeaOutcome, CeaError> {
    if segments.is_empty() {
        return Err(CeaError::NoSegments);
    }
    let mut buffer: HistoryBuffer = HistoryBuffer::new(config.history_capacity);
    let mut state = SummaryState::initial();
    let mut outcome = CeaOutcome::default();

    for segment in segments {
        let counter = segment.index + 1;
        let segment_frames = match load_frames(store, &segment.frames) {
            Ok(frames) => frames,
            Err(err) => {
                outcome.errors.push(StageError {
                    segment_index: segment.index,
                    stage: "frames".to_string(),
                    message: err.to_string(),
                });
                Vec::new()
            }
        };

        if buffer.len() >= config.min_history && counter.is_multiple_of(config.summary_stride) {
            outcome.refresh_attempts.push(counter);
            if let RefreshOutcome::Failed(message) = maybe_refresh_summary(
                &mut state,
                &buffer,
                segment,
                &segment_frames,
                counter,
                config,
                gateway,
                store,
            ) {
                outcome.errors.push(StageError {
                    segment_index: segment.index,
                    stage: "summary".to_string(),
                    message,
                });
            }
        }

        let summary_arg = state.accepted.then_some(state.text.as_str());
        let verdict = if segment_frames.is_empty() {
            error_verdict(segment.index, &state)
        } else {
            match gateway.score_segment(&segment_frames, summary_arg) {
                Ok(raw) => SegmentVerdict {
                    segment_index: segment.index,
                    flag: raw.flag,
                    explanation: raw.explanation,
                    used_summary: state.accepted,
                    summary_snapshot: state.accepted.then(|| state.text.clone()),
                },
                Err(err) => {
                    outcome.errors.push(StageError {
                        segment_index: segment.index,
                        stage: "scorer".to_string(),
                        message: err.to_string(),
                    });
                    error_verdict(segment.index, &state)
                }
            }
        };

        outcome.trace.push(trace_row(&verdict, &state));
        outcome.verdicts.push(verdict);

        match store
            .frame_bytes(segment.center_frame)
            .map_err(CeaError::from)
            .and_then(|bytes| Ok(gateway.embed_image(&bytes)?))
            .and_then(|emb| buffer.push(segment.index, segment.center_frame, &emb))
        {
            Ok(()) => {}
            Err(err) => outcome.errors.push(StageError {
                segment_index: segment.index,
                stage: "history".to_string(),
                message: err.to_string(),
            }),
        }
    }
    Ok(outcome)
}

fn load_frames(store: &dyn FrameStore, indices: &[u64]) -> Result<Vec<Vec<u8>>, FrameError> {
    indices.iter().map(|i| store.frame_bytes(*i)).collect()
}

fn error_verdict(segment_index: usize, state: &SummaryState) -> SegmentVerdict {
    SegmentVerdict {
        segment_index,
        flag: 0,
        explanation: "<error>".to_string(),
        used_summary: state.accepted,
        summary_snapshot: state.accepted.then(|| state.text.clone()),
    }
}

fn trace_row(verdict: &SegmentVerdict, state: &SummaryState) -> SegmentTraceRow {
    SegmentTraceRow {
        index: verdict.segment_index,
        flag: verdict.flag,
        explanation: verdict.explanation.clone(),
        used_summary: verdict.used_summary,
        mu: state.stats.as_ref().map(|s| s.mu),
        entropy: state.stats.as_ref().map(|s| s.entropy),
        summary_digest: verdict
            .summary_snapshot
            .as_ref()
            .map(|text| sha256_hex(text.as_bytes())),
    }
}
