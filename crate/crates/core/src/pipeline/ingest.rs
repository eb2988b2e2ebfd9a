//! Dataset ingestion: segmentation of frame sequences, frame-directory
//! videos, and annotation files (temporal-annotation text lines and the
//! normalized JSON form).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::cea::Segment;
use crate::eval::AnnotationRecord;
use crate::events::uniform_indices;
use crate::frames::{DirFrameStore, FrameStore};

use super::PipelineError;

/// Splits `total_frames` into segments of `segment_len` source frames (the
/// last may be short), each with `kappa` uniformly sampled frames and the
/// middle sample as center frame.
pub fn segment_video(
    total_frames: u64,
    segment_len: u64,
    kappa: usize,
) -> Result<Vec<Segment>, PipelineError> {
    if total_frames == 0 {
        return Err(PipelineError::Ingest(
            "video has zero frames".to_string(),
        ));
    }
    let count = total_frames.div_ceil(segment_len);
    let mut segments = Vec::with_capacity(count as usize);
    for i in 0..count {
        let first = i * segment_len;
        let last = ((i + 1) * segment_len - 1).min(total_frames - 1);
        let frames = uniform_indices(first, last, kappa);
        let center_frame = frames[kappa / 2];
        segments.push(Segment {
            index: i as usize,
            frame_range: (first, last),
            frames,
            center_frame,
        });
    }
    Ok(segments)
}

/// Opens a frame-directory video and segments it; the annotation, when
/// given, is validated against the observed frame count.
pub fn ingest_video(
    id: &str,
    frames_dir: &Path,
    annotation: Option<AnnotationRecord>,
    segment_len: u64,
    kappa: usize,
) -> Result<(DirFrameStore, Vec<Segment>, Option<AnnotationRecord>), PipelineError> {
    let store = DirFrameStore::open(id, frames_dir)?;
    let segments = segment_video(store.frame_count(), segment_len, kappa)?;
    let annotation = match annotation {
        Some(mut record) => {
            record.total_frames = store.frame_count();
            record.validate().map_err(|e| PipelineError::Annotation {
                video_id: id.to_string(),
                message: e.to_string(),
            })?;
            Some(record)
        }
        None => None,
    };
    Ok((store, segments, annotation))
}

/// Parses one temporal-annotation text line:
/// `<name> <class> <s1> <e1> <s2> <e2>` with `-1` marking absent intervals.
/// The video id is the file name without its extension.
pub fn parse_annotation_line(line: &str) -> Result<AnnotationRecord, PipelineError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 2 || !fields.len().is_multiple_of(2) {
        return Err(PipelineError::Annotation {
            video_id: fields.first().unwrap_or(&"?").to_string(),
            message: format!("expected `<name> <class> <s1> <e1> ...`, got {line:?}"),
        });
    }
    let video_id = fields[0]
        .rsplit_once('.')
        .map(|(stem, _)| stem)
        .unwrap_or(fields[0])
        .to_string();
    let category = fields[1].to_lowercase();
    let mut intervals = Vec::new();
    for pair in fields[2..].chunks(2) {
        let start: i64 = pair[0].parse().map_err(|_| PipelineError::Annotation {
            video_id: video_id.clone(),
            message: format!("bad frame index {:?}", pair[0]),
        })?;
        let end: i64 = pair[1].parse().map_err(|_| PipelineError::Annotation {
            video_id: video_id.clone(),
            message: format!("bad frame index {:?}", pair[1]),
        })?;
        if start < 0 || end < 0 {
            continue;
        }
        intervals.push((start as u64, end as u64));
    }
    Ok(AnnotationRecord {
        video_id,
        category,
        anomalous_intervals: intervals,
        // Unknown until matched to an ingested video.
        total_frames: u64::MAX,
    })
}

/// Loads an annotation database: a `.json` file holding an array of
/// normalized records, or a text file of temporal-annotation lines.
pub fn load_annotations(path: &Path) -> Result<BTreeMap<String, AnnotationRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
        context: format!("annotations {}", path.display()),
        source: e,
    })?;
    let records: Vec<AnnotationRecord> =
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|e| PipelineError::Annotation {
                video_id: path.display().to_string(),
                message: e.to_string(),
            })?
        } else {
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(parse_annotation_line)
                .collect::<Result<Vec<_>, _>>()?
        };
    Ok(records
        .into_iter()
        .map(|r| (r.video_id.clone(), r))
        .collect())
}
