//! Context-aware video anomaly event engine.
//!
//! The engine turns per-segment vision-language-model verdicts on a video
//! into continuous anomaly evidence, temporally coherent anomaly intervals,
//! and one grounded narrative per detected event. It is organised as a
//! pipeline of small, independently testable stages:
//!
//! - [`gateway`] — uniform access to the external models (scorer, captioner,
//!   embedders, judge) over an OpenAI-compatible wire protocol, with a
//!   deterministic scripted backend and a persistent response cache.
//! - [`cea`] — context-aware anomaly scoring: visual history buffer, diverse
//!   key-frame selection, gated historical summaries, per-segment verdicts.
//! - [`rea`] — recursive evidence aggregation: lexicon-based evidence field,
//!   recursive window proposals, merging, top-K interval selection.
//! - [`events`] — representative-segment selection and event-level
//!   explanation generation for each selected interval.
//! - [`eval`] — frame-level score post-processing, detection metrics
//!   (AUC / AP / mIoU), fragmentation counting, and the explanation-quality
//!   judge protocol.
//! - [`pipeline`] — configuration, ingestion, per-video orchestration, run
//!   artifacts, and synthetic scenario generation for offline verification.
//!
//! The scoring and metric mathematics are generic over the scalar type (see
//! [`math::Real`]); the shipped pipeline instantiates everything with the
//! [`Score`] alias below.

pub mod cea;
pub mod eval;
pub mod events;
pub mod frames;
pub mod gateway;
pub mod labels;
pub mod math;
pub mod pipeline;
pub mod rea;

/// Concrete scalar used by the shipped pipeline and all emitted artifacts.
pub type Score = f64;

pub use cea::{CeaConfig, SegmentVerdict};
pub use gateway::{Gateway, ModelEndpoint, Role, ScriptedScenario};
pub use pipeline::{run_dataset, run_video, Manifest, PipelineConfig};
pub use rea::{EvidenceField, IntervalSet, ReaConfig, Window};
