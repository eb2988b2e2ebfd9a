//! Synthetic scripted scenarios: desk-scale videos with known gold events,
//! deterministic model outputs, and optional fragmentation noise for
//! aggregation tests.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::AnnotationRecord;
use crate::gateway::{ScriptedScenario, ScriptedVerdict};
use crate::math::l2_normalize;
use crate::rea::lexicon::CUE_KEYWORDS;

use super::PipelineError;

fn default_segment_len() -> u64 {
    16
}

fn default_embedding_dim() -> usize {
    16
}

/// Declarative description of one synthetic video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub id: String,
    /// Number of segments (h).
    pub segments: usize,
    #[serde(default = "default_segment_len")]
    pub segment_len: u64,
    /// Gold anomalous events as inclusive segment-index intervals.
    #[serde(default)]
    pub events: Vec<(usize, usize)>,
    /// Expected cue keywords injected per anomalous explanation.
    #[serde(default)]
    pub cue_density: f64,
    /// Expected negation phrases injected per normal explanation.
    #[serde(default)]
    pub negation_density: f64,
    /// Isolated single-segment false flags placed outside the events.
    #[serde(default)]
    pub noise_spikes: usize,
    /// Gold anomaly category, scripted as the judge's reply.
    #[serde(default)]
    pub category: Option<String>,
    pub seed: u64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub segment_intervals: Vec<(usize, usize)>,
    pub frame_intervals: Vec<(u64, u64)>,
    pub category: Option<String>,
}

/// A generated scenario plus everything needed to run and score it offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBundle {
    pub id: String,
    pub segments: usize,
    pub segment_len: u64,
    pub total_frames: u64,
    pub scenario: ScriptedScenario,
    pub gold: GoldAnnotation,
    /// Where the fragmentation noise was injected (not part of the gold).
    pub noise_segments: Vec<usize>,
}

impl ScenarioBundle {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Scenario(e.to_string()))?;
        fs::write(path, json).map_err(|e| PipelineError::Io {
            context: format!("scenario {}", path.display()),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            context: format!("scenario {}", path.display()),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Scenario(e.to_string()))
    }

    /// Gold annotation in the evaluation-facing record form.
    pub fn annotation(&self) -> AnnotationRecord {
        AnnotationRecord {
            video_id: self.id.clone(),
            category: self.gold.category.clone().unwrap_or_default(),
            anomalous_intervals: self.gold.frame_intervals.clone(),
            total_frames: self.total_frames,
        }
    }
}

const NORMAL_TEXTS: [&str; 4] = [
    "pedestrians walk along the sidewalk",
    "vehicles move through the intersection at steady speed",
    "a quiet corridor with occasional passersby",
    "people browse shelves under even lighting",
];

const ANOMALY_TEXTS: [&str; 4] = [
    "a man shoves another person to the ground",
    "two people struggle near a parked car",
    "someone smashes a window and reaches inside",
    "smoke pours from a doorway as people scatter",
];

const NEGATION_TEXTS: [&str; 3] = [
    "there is no anomaly",
    "no unusual activity can be seen",
    "no visible damage to any property",
];

const SUMMARY_TEXTS: [&str; 4] = [
    "- a street scene with steady pedestrian flow\n- lighting stays constant",
    "- several people pass through the frame\n- background traffic is continuous",
    "- the area is mostly static\n- brief movement near the left edge, details unclear",
    "- repeated foot traffic across the walkway\n- no other motion is discernible",
];

/// Expands a synthetic spec into a deterministic scripted scenario with
/// matching frame-level gold labels. Overlapping event intervals are
/// rejected; noise spikes are placed on isolated segments only.
pub fn generate_scenario(spec: &SynthSpec) -> Result<ScenarioBundle, PipelineError> {
    if spec.segments == 0 {
        return Err(PipelineError::Scenario("segments must be >= 1".to_string()));
    }
    let mut events = spec.events.clone();
    events.sort_by_key(|e| e.0);
    let mut previous_end: Option<usize> = None;
    for &(l, r) in &events {
        if l > r || r >= spec.segments {
            return Err(PipelineError::Scenario(format!(
                "event [{l}, {r}] outside [0, {}]",
                spec.segments - 1
            )));
        }
        if let Some(prev) = previous_end {
            if l <= prev {
                return Err(PipelineError::Scenario(
                    "event intervals overlap".to_string(),
                ));
            }
        }
        previous_end = Some(r);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut flags = vec![0u8; spec.segments];
    for &(l, r) in &events {
        for flag in flags.iter_mut().take(r + 1).skip(l) {
            *flag = 1;
        }
    }

    let noise_segments = place_noise(&flags, spec.noise_spikes, &mut rng)?;
    for &index in &noise_segments {
        flags[index] = 1;
    }

    let verdicts: Vec<ScriptedVerdict> = flags
        .iter()
        .map(|&flag| {
            if flag == 1 {
                let base = ANOMALY_TEXTS[rng.random_range(0..ANOMALY_TEXTS.len())];
                ScriptedVerdict {
                    flag,
                    explanation: inject_cues(base, spec.cue_density, &mut rng),
                }
            } else {
                let base = NORMAL_TEXTS[rng.random_range(0..NORMAL_TEXTS.len())];
                ScriptedVerdict {
                    flag,
                    explanation: inject_negations(base, spec.negation_density, &mut rng),
                }
            }
        })
        .collect();

    let embedding_count = spec.segments * 3 + 32;
    let embeddings: Vec<Vec<f64>> = (0..embedding_count)
        .map(|_| {
            let raw: Vec<f64> = (0..spec.embedding_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            l2_normalize(&raw).unwrap_or_else(|| {
                let mut unit = vec![0.0; spec.embedding_dim.max(1)];
                unit[0] = 1.0;
                unit
            })
        })
        .collect();

    let summaries: Vec<String> = SUMMARY_TEXTS.iter().map(|s| s.to_string()).collect();
    let captions: Vec<String> = match &spec.category {
        Some(category) => vec![
            format!("A {category} incident unfolds across consecutive segments."),
            format!("The footage shows one continuous {category} event from onset to end."),
        ],
        None => vec![
            "A single coherent incident unfolds across the highlighted span.".to_string(),
            "The activity begins abruptly, peaks, and subsides within the window.".to_string(),
        ],
    };
    let judge_labels = match &spec.category {
        Some(category) => vec![format!(r#"{{"label": "{category}"}}"#)],
        None => vec![r#"{"label": "unknown"}"#.to_string()],
    };

    let total_frames = spec.segments as u64 * spec.segment_len;
    let frame_intervals: Vec<(u64, u64)> = events
        .iter()
        .map(|&(l, r)| {
            (
                l as u64 * spec.segment_len,
                ((r as u64 + 1) * spec.segment_len - 1).min(total_frames - 1),
            )
        })
        .collect();

    Ok(ScenarioBundle {
        id: spec.id.clone(),
        segments: spec.segments,
        segment_len: spec.segment_len,
        total_frames,
        scenario: ScriptedScenario {
            verdicts,
            summaries,
            embeddings,
            judge_labels,
            captions,
        },
        gold: GoldAnnotation {
            segment_intervals: events,
            frame_intervals,
            category: spec.category.clone(),
        },
        noise_segments,
    })
}

/// Picks `count` spike positions on zero-flag segments such that every
/// spike is isolated: not adjacent to an event or another spike.
fn place_noise(
    flags: &[u8],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, PipelineError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let isolated = |flags: &[u8], i: usize| {
        flags[i] == 0
            && (i == 0 || flags[i - 1] == 0)
            && (i + 1 == flags.len() || flags[i + 1] == 0)
    };
    let mut candidates: Vec<usize> = (0..flags.len()).filter(|&i| isolated(flags, i)).collect();
    candidates.shuffle(rng);
    let mut taken: Vec<usize> = Vec::with_capacity(count);
    for candidate in candidates {
        if taken.len() == count {
            break;
        }
        if taken
            .iter()
            .all(|&t| candidate.abs_diff(t) > 1)
        {
            taken.push(candidate);
        }
    }
    if taken.len() < count {
        return Err(PipelineError::Scenario(format!(
            "cannot place {count} isolated noise spikes in {} segments",
            flags.len()
        )));
    }
    taken.sort_unstable();
    Ok(taken)
}

fn sample_count(density: f64, rng: &mut ChaCha8Rng) -> usize {
    let base = density.floor() as usize;
    let fractional = density - density.floor();
    base + usize::from(rng.random_range(0.0..1.0) < fractional)
}

fn inject_cues(base: &str, density: f64, rng: &mut ChaCha8Rng) -> String {
    let count = sample_count(density, rng).min(CUE_KEYWORDS.len());
    if count == 0 {
        return base.to_string();
    }
    let mut picks: Vec<&str> = CUE_KEYWORDS.to_vec();
    picks.shuffle(rng);
    format!("{base}; clear signs of {} are visible", picks[..count].join(" and "))
}

fn inject_negations(base: &str, density: f64, rng: &mut ChaCha8Rng) -> String {
    let count = sample_count(density, rng).min(NEGATION_TEXTS.len());
    if count == 0 {
        return base.to_string();
    }
    let mut picks: Vec<&str> = NEGATION_TEXTS.to_vec();
    picks.shuffle(rng);
    format!("{base}; {}", picks[..count].join("; "))
}
