//! Frame access for videos supplied as pre-extracted frame directories or as
//! deterministic synthetic frames for scripted runs. Raw video decoding is
//! out of scope; an external extraction step produces one image per frame.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame index {index} out of range (video has {count} frames)")]
    OutOfRange { index: u64, count: u64 },
    #[error("failed to read frame {index} ({path}): {source}")]
    Read {
        index: u64,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("frame directory {0} contains no image files")]
    EmptyDirectory(PathBuf),
    #[error("failed to list frame directory {path}: {source}")]
    List {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Uniform access to a video's frames by index.
pub trait FrameStore: Send + Sync {
    fn video_id(&self) -> &str;
    fn frame_count(&self) -> u64;
    fn frame_bytes(&self, index: u64) -> Result<Vec<u8>, FrameError>;
}

/// Frames stored as one image file per frame, ordered by file name.
pub struct DirFrameStore {
    id: String,
    paths: Vec<PathBuf>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

impl DirFrameStore {
    pub fn open(id: impl Into<String>, dir: &Path) -> Result<Self, FrameError> {
        let entries = fs::read_dir(dir).map_err(|source| FrameError::List {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_lowercase().as_str()))
            })
            .collect();
        if paths.is_empty() {
            return Err(FrameError::EmptyDirectory(dir.to_path_buf()));
        }
        paths.sort();
        Ok(Self {
            id: id.into(),
            paths,
        })
    }
}

impl FrameStore for DirFrameStore {
    fn video_id(&self) -> &str {
        &self.id
    }

    fn frame_count(&self) -> u64 {
        self.paths.len() as u64
    }

    fn frame_bytes(&self, index: u64) -> Result<Vec<u8>, FrameError> {
        let path = self
            .paths
            .get(index as usize)
            .ok_or(FrameError::OutOfRange {
                index,
                count: self.frame_count(),
            })?;
        fs::read(path).map_err(|source| FrameError::Read {
            index,
            path: path.clone(),
            source,
        })
    }
}

/// Deterministic synthetic frames for scripted runs: every `(video, index)`
/// pair yields a unique, decodable 2x2 PNG derived from a content hash, so
/// cache keys never collide across videos.
pub struct SyntheticFrameStore {
    id: String,
    count: u64,
}

impl SyntheticFrameStore {
    pub fn new(id: impl Into<String>, count: u64) -> Self {
        Self {
            id: id.into(),
            count,
        }
    }
}

impl FrameStore for SyntheticFrameStore {
    fn video_id(&self) -> &str {
        &self.id
    }

    fn frame_count(&self) -> u64 {
        self.count
    }

    fn frame_bytes(&self, index: u64) -> Result<Vec<u8>, FrameError> {
        if index >= self.count {
            return Err(FrameError::OutOfRange {
                index,
                count: self.count,
            });
        }
        let mut hasher = Sha256::new();
        hasher.update(self.id.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let image = RgbImage::from_raw(2, 2, digest[..12].to_vec()).expect("2x2 rgb buffer");
        let mut bytes = Cursor::new(Vec::new());
        image
            .write_to(&mut bytes, ImageFormat::Png)
            .expect("in-memory png encode");
        Ok(bytes.into_inner())
    }
}
