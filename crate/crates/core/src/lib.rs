//! Deterministic proctoring engine.
//!
//! Replays timestamped sensor events (object detections, face embeddings,
//! one-second audio windows, evidence frames) through a rule-based state
//! machine and produces a `Clean`/`Suspect` session report.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and parallel drivers live in the `proctorline` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audio;
pub mod events;
pub mod facematch;
pub mod objectgate;
pub mod pipeline;
pub mod segmentation;
pub mod seed;
pub mod simulator;

pub use events::{
    resample_frames, AudioPayload, Detection, FrameDetections, FrameImageRef, FrameMeta,
    MaskRef, ObjectClass, SensorEvent, SessionLog, SessionLogError,
};
pub use facematch::{
    classify_identity, euclidean_distance, min_reference_distance, Embedding, FaceMatchError,
    IdentityDecision, IdentityVerdict, ReferenceSet, EMBEDDING_DIM,
};
pub use objectgate::{BoundingBox, DeviceThresholds, DeviceVerdict};
pub use pipeline::{
    run_session, EngineConfig, FinalLabel, FlagEvent, FlagKind, PipelineState, SessionReport,
};
