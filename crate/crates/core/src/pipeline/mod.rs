//! Per-video orchestration of scoring, aggregation, explanation, and
//! metrics, plus dataset fan-out, run artifacts, and sweep mode.
//!
//! Videos are independent units of work with isolated state; within a video
//! the scoring stage is strictly sequential. All artifacts other than the
//! report are timing-free, so scripted re-runs are byte-identical.

pub mod config;
pub mod ingest;
pub mod scenario;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cea::{run_cea, CeaError, CeaOutcome, Segment, SegmentTraceRow, SegmentVerdict};
use crate::eval::{
    accuracy_by_variant, average_precision, count_events, expand_and_smooth, infer_gold_category,
    judge_variants, mean_iou, roc_auc, token_length_by_variant, AnnotationRecord, EvalError,
    FrameScoreTrack, GoldCategory, JudgeResult,
};
use crate::events::{
    explain_event, sample_event_frames, select_representatives, EventError, EventExplanation,
    REPRESENTATIVE_CAP,
};
use crate::frames::{FrameError, FrameStore, SyntheticFrameStore};
use crate::gateway::{CallLedger, Gateway, GatewayError, HttpBackend, ResponseCache, Role};
use crate::rea::{run_rea, EvidenceField, IntervalSet, Lexicon, ReaError};

pub use config::{BackendKind, PipelineConfig};
pub use scenario::{generate_scenario, ScenarioBundle, SynthSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("annotation for {video_id}: {message}")]
    Annotation { video_id: String, message: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("ingestion error: {0}")]
    Ingest(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Cea(#[from] CeaError),
    #[error(transparent)]
    Rea(#[from] ReaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// One dataset to run: videos plus optional shared annotation database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    pub videos: Vec<ManifestVideo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVideo {
    pub id: String,
    /// Frame-directory video (http backend).
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
    /// Scripted scenario bundle (scripted backend).
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    /// Inline annotation, overriding the shared database.
    #[serde(default)]
    pub annotation: Option<AnnotationRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            context: format!("manifest {}", path.display()),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Manifest(e.to_string()))
    }
}

/// Everything needed to process one video.
pub struct VideoInput {
    pub id: String,
    pub store: Box<dyn FrameStore>,
    pub segments: Vec<Segment>,
    pub annotation: Option<AnnotationRecord>,
    pub gold_category: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub cea_ms: u128,
    pub rea_ms: u128,
    pub events_ms: u128,
    pub metrics_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoRunResult {
    pub video_id: String,
    pub cea: CeaOutcome,
    pub field: EvidenceField,
    pub intervals: IntervalSet,
    pub events: Vec<EventExplanation>,
    pub track: FrameScoreTrack,
    pub annotation: Option<AnnotationRecord>,
    pub gold_category: Option<String>,
    pub judge_results: Vec<JudgeResult>,
    pub ledger: CallLedger,
    pub raw_flag_runs: usize,
    pub errors: Vec<String>,
    pub timings: StageTimings,
}

/// Number of maximal runs of `flag == 1` verdicts, before any aggregation.
pub fn flag_run_count(verdicts: &[SegmentVerdict]) -> usize {
    let mut runs = 0;
    let mut inside = false;
    for verdict in verdicts {
        let flagged = verdict.flag == 1;
        if flagged && !inside {
            runs += 1;
        }
        inside = flagged;
    }
    runs
}

/// Runs the full per-video pipeline: context-aware scoring, recursive
/// aggregation, one explanation per selected interval, frame-level score
/// expansion, and (when enabled and a gold category exists) the judge
/// protocol over the four explanation variants.
pub fn run_video(
    input: &VideoInput,
    config: &PipelineConfig,
    gateway: &Gateway,
    judge_enabled: bool,
) -> Result<VideoRunResult, PipelineError> {
    let mut timings = StageTimings::default();
    let mut errors = Vec::new();

    let started = Instant::now();
    let cea = run_cea(&input.segments, input.store.as_ref(), &config.cea(), gateway)?;
    timings.cea_ms = started.elapsed().as_millis();

    let started = Instant::now();
    let (field, intervals) = run_rea(&cea.verdicts, &config.rea(), Lexicon::fixed())?;
    timings.rea_ms = started.elapsed().as_millis();

    let started = Instant::now();
    let mut events = Vec::with_capacity(intervals.len());
    for window in &intervals.windows {
        let reps = select_representatives(
            &field,
            &cea.verdicts,
            window,
            config.theta_mean,
            REPRESENTATIVE_CAP,
        )?;
        match sample_event_frames(input.store.as_ref(), &input.segments, window, config.kappa) {
            Ok(frames) => {
                events.push(explain_event(gateway, &reps, &frames, &cea.verdicts)?);
            }
            Err(err) => {
                errors.push(format!("event [{}, {}]: {err}", window.l, window.r));
            }
        }
    }
    timings.events_ms = started.elapsed().as_millis();

    let started = Instant::now();
    let segment_ranges: Vec<(u64, u64)> = input.segments.iter().map(|s| s.frame_range).collect();
    let total_frames = input.store.frame_count();
    let scores = expand_and_smooth(&field, &segment_ranges, total_frames, config.sigma_smooth)?;
    let track = FrameScoreTrack {
        video_id: input.id.clone(),
        scores,
        labels: input.annotation.as_ref().map(AnnotationRecord::frame_labels),
    };
    track.validate()?;

    let gold_category = input.gold_category.clone().or_else(|| {
        match infer_gold_category(&input.id) {
            GoldCategory::Label(label) if label != "unknown" => Some(label),
            _ => None,
        }
    });
    let judge_results = match (&gold_category, judge_enabled, events.is_empty()) {
        (Some(gold), true, false) => judge_variants(
            gateway,
            &input.id,
            gold,
            &events,
            &cea.verdicts,
            &field,
            config.seed,
        ),
        _ => Vec::new(),
    };
    timings.metrics_ms = started.elapsed().as_millis();

    let raw_flag_runs = flag_run_count(&cea.verdicts);
    Ok(VideoRunResult {
        video_id: input.id.clone(),
        raw_flag_runs,
        judge_results,
        gold_category,
        annotation: input.annotation.clone(),
        track,
        events,
        intervals,
        field,
        cea,
        ledger: gateway.ledger(),
        errors,
        timings,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub miou: Option<f64>,
    pub events_per_video: Option<f64>,
    pub raw_flag_runs_per_video: Option<f64>,
    pub frame_events_per_video: Option<f64>,
    pub judge_accuracy_by_variant: BTreeMap<String, f64>,
    pub judge_token_length_by_variant: BTreeMap<String, f64>,
    pub judged_events: usize,
    pub narrative_sentences_mean: Option<f64>,
    pub narrative_tokens_mean: Option<f64>,
    pub videos_run: usize,
    pub missing_videos: Vec<String>,
    pub video_errors: Vec<String>,
    pub metric_notes: Vec<String>,
    pub call_ledger: CallLedger,
    /// Content digest of each cache file at the end of the run.
    pub cache_digests: BTreeMap<String, String>,
    pub timing_ms: BTreeMap<String, u128>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunArtifact {
    pub config: PipelineConfig,
    pub report: Report,
    #[serde(skip)]
    pub videos: Vec<VideoRunResult>,
}

/// Builds the pooled report from per-video results.
pub fn build_report(videos: &[VideoRunResult], config: &PipelineConfig) -> Report {
    let mut report = Report {
        videos_run: videos.len(),
        ..Report::default()
    };

    let mut pooled_scores: Vec<f64> = Vec::new();
    let mut pooled_labels: Vec<u8> = Vec::new();
    let mut annotations: BTreeMap<String, AnnotationRecord> = BTreeMap::new();
    let mut judge_results: Vec<JudgeResult> = Vec::new();
    let mut sentences = 0usize;
    let mut narrative_tokens = 0usize;
    let mut narratives = 0usize;

    for video in videos {
        if let Some(labels) = &video.track.labels {
            pooled_scores.extend_from_slice(&video.track.scores);
            pooled_labels.extend_from_slice(labels);
        }
        if let Some(annotation) = &video.annotation {
            annotations.insert(video.video_id.clone(), annotation.clone());
        }
        judge_results.extend(video.judge_results.iter().cloned());
        for event in &video.events {
            sentences += event.sentence_count;
            narrative_tokens += event.narrative.split_whitespace().count();
            narratives += 1;
        }
        report.call_ledger.merge(&video.ledger);
        for error in &video.errors {
            report.video_errors.push(format!("{}: {error}", video.video_id));
        }
        for error in &video.cea.errors {
            report.video_errors.push(format!(
                "{}: segment {} {} stage: {}",
                video.video_id, error.segment_index, error.stage, error.message
            ));
        }
    }

    if !videos.is_empty() {
        let events_total: usize = videos.iter().map(|v| v.intervals.len()).sum();
        let raw_total: usize = videos.iter().map(|v| v.raw_flag_runs).sum();
        let frame_events_total: usize = videos
            .iter()
            .map(|v| count_events(&v.track.scores, config.binarize))
            .sum();
        report.events_per_video = Some(events_total as f64 / videos.len() as f64);
        report.raw_flag_runs_per_video = Some(raw_total as f64 / videos.len() as f64);
        report.frame_events_per_video = Some(frame_events_total as f64 / videos.len() as f64);
    }

    match roc_auc(&pooled_scores, &pooled_labels) {
        Ok(auc) => report.auc = Some(auc),
        Err(err) => report.metric_notes.push(format!("auc: {err}")),
    }
    match average_precision(&pooled_scores, &pooled_labels) {
        Ok(ap) => report.ap = Some(ap),
        Err(err) => report.metric_notes.push(format!("ap: {err}")),
    }
    let tracks: Vec<FrameScoreTrack> = videos.iter().map(|v| v.track.clone()).collect();
    report.miou = Some(mean_iou(&tracks, &annotations, config.binarize));

    if !judge_results.is_empty() {
        report.judge_accuracy_by_variant = accuracy_by_variant(&judge_results);
        report.judge_token_length_by_variant = token_length_by_variant(&judge_results);
        report.judged_events = judge_results.len() / 4;
    }
    if narratives > 0 {
        report.narrative_sentences_mean = Some(sentences as f64 / narratives as f64);
        report.narrative_tokens_mean = Some(narrative_tokens as f64 / narratives as f64);
    }
    report
}

/// Aggregation-facing view of one stored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaTrace {
    pub evidence: Vec<f64>,
    pub intervals: Vec<crate::rea::Window>,
}

pub fn write_cea_trace(path: &Path, rows: &[SegmentTraceRow]) -> Result<(), PipelineError> {
    let mut file = File::create(path).map_err(|e| PipelineError::Io {
        context: format!("trace {}", path.display()),
        source: e,
    })?;
    for row in rows {
        let line =
            serde_json::to_string(row).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| PipelineError::Io {
            context: format!("trace {}", path.display()),
            source: e,
        })?;
    }
    Ok(())
}

pub fn read_cea_trace(path: &Path) -> Result<Vec<SegmentTraceRow>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::Io {
        context: format!("trace {}", path.display()),
        source: e,
    })?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| PipelineError::Io {
            context: format!("trace {}", path.display()),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| PipelineError::Manifest(e.to_string()))?,
        );
    }
    Ok(rows)
}

/// Reconstructs scoring verdicts from a persisted trace, the input contract
/// for running aggregation over stored runs.
pub fn verdicts_from_trace(rows: &[SegmentTraceRow]) -> Vec<SegmentVerdict> {
    rows.iter()
        .map(|row| SegmentVerdict {
            segment_index: row.index,
            flag: row.flag,
            explanation: row.explanation.clone(),
            used_summary: row.used_summary,
            summary_snapshot: None,
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json =
        serde_json::to_string_pretty(value).map_err(|e| PipelineError::Manifest(e.to_string()))?;
    fs::write(path, json).map_err(|e| PipelineError::Io {
        context: format!("write {}", path.display()),
        source: e,
    })
}

fn persist_video(out_dir: &Path, video: &VideoRunResult) -> Result<(), PipelineError> {
    let traces = out_dir.join("traces");
    write_cea_trace(
        &traces.join(format!("{}.cea.jsonl", video.video_id)),
        &video.cea.trace,
    )?;
    write_json(
        &traces.join(format!("{}.rea.json", video.video_id)),
        &ReaTrace {
            evidence: video.field.scores.clone(),
            intervals: video.intervals.windows.clone(),
        },
    )?;
    write_json(
        &traces.join(format!("{}.events.json", video.video_id)),
        &video.events,
    )?;
    Ok(())
}

fn write_frame_scores(path: &Path, videos: &[VideoRunResult]) -> Result<(), PipelineError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| PipelineError::Io {
        context: format!("csv {}", path.display()),
        source: std::io::Error::other(e),
    })?;
    writer
        .write_record(["video_id", "frame", "score", "label"])
        .map_err(|e| PipelineError::Manifest(e.to_string()))?;
    for video in videos {
        for (frame, score) in video.track.scores.iter().enumerate() {
            let label = video
                .track
                .labels
                .as_ref()
                .map(|l| l[frame].to_string())
                .unwrap_or_default();
            writer
                .write_record([
                    video.video_id.as_str(),
                    &frame.to_string(),
                    &format!("{score:.6}"),
                    &label,
                ])
                .map_err(|e| PipelineError::Manifest(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| PipelineError::Io {
        context: format!("csv {}", path.display()),
        source: e,
    })?;
    Ok(())
}

fn resolve_input(
    entry: &ManifestVideo,
    shared: &BTreeMap<String, AnnotationRecord>,
    config: &PipelineConfig,
) -> Result<(VideoInput, Option<ScenarioBundle>), PipelineError> {
    let annotation = entry
        .annotation
        .clone()
        .or_else(|| shared.get(&entry.id).cloned());
    match config.backend {
        BackendKind::Scripted => {
            let path = entry.scenario.as_ref().ok_or_else(|| {
                PipelineError::Manifest(format!(
                    "video {} has no scenario (scripted backend)",
                    entry.id
                ))
            })?;
            let bundle = ScenarioBundle::load(path)?;
            let store = SyntheticFrameStore::new(entry.id.clone(), bundle.total_frames);
            let segments =
                ingest::segment_video(bundle.total_frames, bundle.segment_len, config.kappa)?;
            let mut annotation = annotation.unwrap_or_else(|| bundle.annotation());
            annotation.total_frames = bundle.total_frames;
            annotation
                .validate()
                .map_err(|e| PipelineError::Annotation {
                    video_id: entry.id.clone(),
                    message: e.to_string(),
                })?;
            let gold_category = bundle.gold.category.clone();
            Ok((
                VideoInput {
                    id: entry.id.clone(),
                    store: Box::new(store),
                    segments,
                    annotation: Some(annotation),
                    gold_category,
                },
                Some(bundle),
            ))
        }
        BackendKind::Http => {
            let dir = entry.frames_dir.as_ref().ok_or_else(|| {
                PipelineError::Manifest(format!(
                    "video {} has no frames_dir (http backend)",
                    entry.id
                ))
            })?;
            let (store, segments, annotation) =
                ingest::ingest_video(&entry.id, dir, annotation, config.segment_len, config.kappa)?;
            Ok((
                VideoInput {
                    id: entry.id.clone(),
                    store: Box::new(store),
                    segments,
                    annotation,
                    gold_category: None,
                },
                None,
            ))
        }
    }
}

fn make_gateway(
    config: &PipelineConfig,
    bundle: Option<&ScenarioBundle>,
    cache: Arc<ResponseCache>,
) -> Result<Gateway, PipelineError> {
    match config.backend {
        BackendKind::Scripted => {
            let bundle = bundle.ok_or_else(|| {
                PipelineError::Manifest("scripted run without a scenario".to_string())
            })?;
            Ok(Gateway::scripted(
                bundle.scenario.clone(),
                config.kappa,
                cache,
            )?)
        }
        BackendKind::Http => {
            for role in [
                Role::Scorer,
                Role::Captioner,
                Role::ImageEmbedder,
                Role::JointEmbedder,
            ] {
                if !config.endpoints.iter().any(|e| e.role == role) {
                    return Err(PipelineError::Config {
                        field: "endpoints".to_string(),
                        message: format!("missing endpoint for role {role:?}"),
                    });
                }
            }
            Ok(Gateway::new(
                Box::new(HttpBackend::new()?),
                config.endpoints.clone(),
                config.kappa,
                cache,
            )?)
        }
    }
}

/// Runs every manifest video, pools metrics, and writes the run artifacts:
/// `report.json`, `frame_scores.csv`, per-video trace files, and the cache.
/// Missing or failing videos are reported; the run continues without them.
pub fn run_dataset(
    manifest: &Manifest,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<RunArtifact, PipelineError> {
    config.validate()?;
    let started = Instant::now();
    fs::create_dir_all(out_dir.join("traces")).map_err(|e| PipelineError::Io {
        context: format!("out dir {}", out_dir.display()),
        source: e,
    })?;
    let cache_dir = config
        .cache_dir
        .clone()
        .unwrap_or_else(|| out_dir.join("cache"));
    let cache = Arc::new(ResponseCache::open(Some(&cache_dir))?);

    let shared = match &manifest.annotations {
        Some(path) => ingest::load_annotations(path)?,
        None => BTreeMap::new(),
    };

    let judge_enabled = config.backend == BackendKind::Scripted
        || config.endpoints.iter().any(|e| e.role == Role::Judge);

    let mut videos: Vec<VideoRunResult> = Vec::new();
    let mut missing: Vec<String> = Vec::new();
    for entry in &manifest.videos {
        let (input, bundle) = match resolve_input(entry, &shared, config) {
            Ok(resolved) => resolved,
            Err(err) => {
                missing.push(format!("{}: {err}", entry.id));
                continue;
            }
        };
        let gateway = match make_gateway(config, bundle.as_ref(), cache.clone()) {
            Ok(gateway) => gateway,
            Err(err) => {
                missing.push(format!("{}: {err}", entry.id));
                continue;
            }
        };
        match run_video(&input, config, &gateway, judge_enabled) {
            Ok(result) => {
                persist_video(out_dir, &result)?;
                videos.push(result);
            }
            Err(err) => missing.push(format!("{}: {err}", entry.id)),
        }
    }

    let mut report = build_report(&videos, config);
    report.missing_videos = missing;
    for role in Role::ALL {
        let path = cache_dir.join(format!("{}.jsonl", role.as_str()));
        if let Ok(bytes) = fs::read(&path) {
            report
                .cache_digests
                .insert(role.as_str().to_string(), crate::gateway::sha256_hex(&bytes));
        }
    }
    report
        .timing_ms
        .insert("total".to_string(), started.elapsed().as_millis());
    for video in &videos {
        *report.timing_ms.entry("cea".to_string()).or_insert(0) += video.timings.cea_ms;
        *report.timing_ms.entry("rea".to_string()).or_insert(0) += video.timings.rea_ms;
        *report.timing_ms.entry("events".to_string()).or_insert(0) += video.timings.events_ms;
        *report.timing_ms.entry("metrics".to_string()).or_insert(0) += video.timings.metrics_ms;
    }

    write_frame_scores(&out_dir.join("frame_scores.csv"), &videos)?;
    let artifact = RunArtifact {
        config: config.clone(),
        report,
        videos,
    };
    write_json(&out_dir.join("report.json"), &artifact)?;
    fs::write(out_dir.join("run_config.toml"), config.to_toml()?).map_err(|e| {
        PipelineError::Io {
            context: "run_config.toml".to_string(),
            source: e,
        }
    })?;
    Ok(artifact)
}

/// Flat grid sweep: every combination of the declared parameter lists runs
/// into its own cell directory, and a `grid.csv` summarizes headline
/// metrics per cell.
pub fn run_sweep(
    manifest: &Manifest,
    base: &PipelineConfig,
    grid: &BTreeMap<String, Vec<toml::Value>>,
    out_dir: &Path,
) -> Result<Vec<(PathBuf, Report)>, PipelineError> {
    let keys: Vec<&String> = grid.keys().collect();
    let sizes: Vec<usize> = keys.iter().map(|k| grid[*k].len()).collect();
    if sizes.contains(&0) {
        return Err(PipelineError::Manifest(
            "sweep grid has an empty value list".to_string(),
        ));
    }
    let cells: usize = sizes.iter().product();
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::Io {
        context: format!("sweep dir {}", out_dir.display()),
        source: e,
    })?;

    let mut results = Vec::with_capacity(cells);
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(cells);
    for cell in 0..cells {
        let mut remainder = cell;
        let mut overrides: Vec<(String, toml::Value)> = Vec::with_capacity(keys.len());
        for (key, &size) in keys.iter().zip(&sizes) {
            overrides.push(((*key).clone(), grid[*key][remainder % size].clone()));
            remainder /= size;
        }
        let config = apply_overrides(base, &overrides)?;
        let cell_dir = out_dir.join(format!("cell_{cell:03}"));
        let artifact = run_dataset(manifest, &config, &cell_dir)?;
        let mut row: Vec<String> = vec![format!("cell_{cell:03}")];
        row.extend(overrides.iter().map(|(k, v)| format!("{k}={v}")));
        row.push(format_metric(artifact.report.auc));
        row.push(format_metric(artifact.report.ap));
        row.push(format_metric(artifact.report.miou));
        row.push(format_metric(artifact.report.events_per_video));
        rows.push(row);
        results.push((cell_dir, artifact.report));
    }

    let mut writer =
        csv::Writer::from_path(out_dir.join("grid.csv")).map_err(|e| PipelineError::Io {
            context: "grid.csv".to_string(),
            source: std::io::Error::other(e),
        })?;
    let mut header = vec!["cell".to_string()];
    header.extend(keys.iter().map(|k| (*k).clone()));
    header.extend(
        ["auc", "ap", "miou", "events_per_video"]
            .into_iter()
            .map(String::from),
    );
    writer
        .write_record(&header)
        .map_err(|e| PipelineError::Manifest(e.to_string()))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| PipelineError::Manifest(e.to_string()))?;
    }
    writer.flush().map_err(|e| PipelineError::Io {
        context: "grid.csv".to_string(),
        source: e,
    })?;
    Ok(results)
}

fn format_metric(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Applies `key = value` overrides through the TOML layer so sweeps get the
/// same unknown-key and validation treatment as config files.
pub fn apply_overrides(
    base: &PipelineConfig,
    overrides: &[(String, toml::Value)],
) -> Result<PipelineConfig, PipelineError> {
    let serialized = toml::Value::try_from(base.clone())
        .map_err(|e| PipelineError::ConfigParse(e.to_string()))?;
    let mut table = match serialized {
        toml::Value::Table(table) => table,
        _ => {
            return Err(PipelineError::ConfigParse(
                "config is not a table".to_string(),
            ))
        }
    };
    for (key, value) in overrides {
        if !table.contains_key(key) && !is_config_key(key) {
            return Err(PipelineError::Config {
                field: key.clone(),
                message: "unknown sweep parameter".to_string(),
            });
        }
        table.insert(key.clone(), value.clone());
    }
    let config: PipelineConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| PipelineError::ConfigParse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn is_config_key(key: &str) -> bool {
    // Option-typed fields serialize away when None; accept them by name.
    matches!(key, "cache_dir")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_runs_counts_maximal_blocks() {
        let verdicts: Vec<SegmentVerdict> = [0u8, 1, 1, 0, 1, 0, 1, 1]
            .iter()
            .enumerate()
            .map(|(i, &flag)| SegmentVerdict {
                segment_index: i,
                flag,
                explanation: String::new(),
                used_summary: false,
                summary_snapshot: None,
            })
            .collect();
        assert_eq!(flag_run_count(&verdicts), 3);
    }

    #[test]
    fn overrides_go_through_validation() {
        let base = PipelineConfig::default();
        let ok =
            apply_overrides(&base, &[("k_max".to_string(), toml::Value::Integer(2))]).unwrap();
        assert_eq!(ok.k_max, 2);
        let unknown =
            apply_overrides(&base, &[("k_maximum".to_string(), toml::Value::Integer(2))]);
        assert!(unknown.is_err());
        let invalid =
            apply_overrides(&base, &[("delta_ent".to_string(), toml::Value::Float(1.5))]);
        assert!(invalid.is_err());
    }
}
