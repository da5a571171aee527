//! Sensor-event data model, session-log validation and frame-rate capping.

use alloc::borrow::Cow;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::PcmWindow;
use crate::facematch::{Embedding, ReferenceSet};
use crate::objectgate::BoundingBox;
use crate::pipeline::EngineConfig;
use crate::segmentation::FaceKeypoints;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionLogError {
    #[error("session log has no reference embeddings")]
    MissingReferences,
    #[error("event {index} at t={t_ms} ms precedes previous event at t={prev_ms} ms")]
    NonMonotonicTime { index: usize, prev_ms: u64, t_ms: u64 },
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
}

/// Detector class. Only person, phone and laptop drive the rules; every other
/// label is carried through verbatim.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ObjectClass {
    Person,
    Phone,
    Laptop,
    Other(String),
}

impl ObjectClass {
    pub fn label(&self) -> Cow<'_, str> {
        match self {
            ObjectClass::Person => Cow::Borrowed("person"),
            ObjectClass::Phone => Cow::Borrowed("phone"),
            ObjectClass::Laptop => Cow::Borrowed("laptop"),
            ObjectClass::Other(s) => Cow::Borrowed(s.as_str()),
        }
    }
}

impl From<String> for ObjectClass {
    fn from(s: String) -> Self {
        match s.as_str() {
            "person" => ObjectClass::Person,
            // COCO names the phone class "cell phone".
            "phone" | "cell phone" => ObjectClass::Phone,
            "laptop" => ObjectClass::Laptop,
            _ => ObjectClass::Other(s),
        }
    }
}

impl From<ObjectClass> for String {
    fn from(c: ObjectClass) -> Self {
        c.label().into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDetections {
    pub detections: Vec<Detection>,
}

/// Reference to a one-second PCM file (16-bit little-endian mono) with its
/// SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFileRef {
    pub path: String,
    pub sample_rate: u32,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioPayload {
    Inline(PcmWindow),
    File(AudioFileRef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRef {
    pub id: u32,
    pub path: String,
}

/// An evidence frame on disk with its person masks and the candidate's
/// facial keypoints, when the landmark detector produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameImageRef {
    pub image: String,
    #[serde(default)]
    pub masks: Vec<MaskRef>,
    #[serde(default)]
    pub keypoints: Option<FaceKeypoints>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    FrameDetections(FrameDetections),
    FaceEmbedding(Embedding),
    AudioWindow(AudioPayload),
    FrameImage(FrameImageRef),
}

impl EventPayload {
    pub fn is_frame(&self) -> bool {
        !matches!(self, EventPayload::AudioWindow(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            EventPayload::FrameDetections(_) => "frame_detections",
            EventPayload::FaceEmbedding(_) => "face_embedding",
            EventPayload::AudioWindow(_) => "audio_window",
            EventPayload::FrameImage(_) => "frame_image",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl SensorEvent {
    pub fn new(t_ms: u64, payload: EventPayload) -> Self {
        Self { t_ms, payload }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub width: u32,
    pub height: u32,
}

impl Default for FrameMeta {
    fn default() -> Self {
        Self { width: 400, height: 224 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub config: EngineConfig,
    pub references: ReferenceSet,
    pub events: Vec<SensorEvent>,
}

impl SessionLog {
    /// Checks the log-level invariants: references present, timestamps
    /// non-decreasing, payloads well formed.
    pub fn validate(&self) -> Result<(), SessionLogError> {
        if self.references.is_empty() {
            return Err(SessionLogError::MissingReferences);
        }
        let mut prev = 0u64;
        for (index, ev) in self.events.iter().enumerate() {
            if ev.t_ms < prev {
                return Err(SessionLogError::NonMonotonicTime { index, prev_ms: prev, t_ms: ev.t_ms });
            }
            prev = ev.t_ms;
            validate_payload(&ev.payload).map_err(|reason| SessionLogError::InvalidEvent { index, reason })?;
        }
        Ok(())
    }
}

fn validate_payload(p: &EventPayload) -> Result<(), String> {
    match p {
        EventPayload::FrameDetections(f) => {
            for d in &f.detections {
                if !(0.0..=1.0).contains(&d.score) {
                    return Err(alloc::format!("detection score {} outside [0, 1]", d.score));
                }
                if !d.bbox.is_valid() {
                    return Err("bounding box has negative extent".to_string());
                }
            }
            Ok(())
        }
        EventPayload::AudioWindow(AudioPayload::Inline(w)) => w.validate().map_err(|e| e.to_string()),
        EventPayload::AudioWindow(AudioPayload::File(f)) => {
            if f.sample_rate == 0 {
                Err("audio sample rate is zero".to_string())
            } else {
                Ok(())
            }
        }
        EventPayload::FaceEmbedding(_) | EventPayload::FrameImage(_) => Ok(()),
    }
}

/// Caps frame-kind events at `max_fps`.
///
/// Time is cut into buckets of `1000 / max_fps` ms. In every bucket only the
/// first frame timestamp survives; all frame events sharing that exact
/// timestamp are kept, so detections and the embedding of the same frame stay
/// together. Audio windows pass through untouched. A non-positive or
/// non-finite `max_fps` disables the cap.
pub fn resample_frames(log: &SessionLog, max_fps: f64) -> SessionLog {
    SessionLog {
        session_id: log.session_id.clone(),
        config: log.config.clone(),
        references: log.references.clone(),
        events: resample_events(&log.events, max_fps),
    }
}

pub fn resample_events(events: &[SensorEvent], max_fps: f64) -> Vec<SensorEvent> {
    if !(max_fps > 0.0 && max_fps.is_finite()) {
        return events.to_vec();
    }
    let bucket = |t: u64| libm::floor(t as f64 * max_fps / 1000.0) as u64;
    let mut current: Option<(u64, u64)> = None; // (bucket, kept timestamp)
    events
        .iter()
        .filter(|ev| {
            if !ev.payload.is_frame() {
                return true;
            }
            let b = bucket(ev.t_ms);
            match current {
                Some((cb, kept)) if cb == b => ev.t_ms == kept,
                _ => {
                    current = Some((b, ev.t_ms));
                    true
                }
            }
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facematch::Embedding;
    use alloc::vec;
    use proptest::prelude::*;

    fn frame(t: u64) -> SensorEvent {
        SensorEvent::new(t, EventPayload::FrameDetections(FrameDetections::default()))
    }

    fn audio(t: u64) -> SensorEvent {
        SensorEvent::new(
            t,
            EventPayload::AudioWindow(AudioPayload::File(AudioFileRef {
                path: "a.pcm".into(),
                sample_rate: 16000,
                sha256: String::new(),
            })),
        )
    }

    fn log_of(events: Vec<SensorEvent>) -> SessionLog {
        SessionLog {
            session_id: "s".into(),
            config: EngineConfig::default(),
            references: ReferenceSet::new(vec![Embedding::zeros()]),
            events,
        }
    }

    /// Enumerates bucket intervals explicitly and picks the first frame in each.
    fn bucket_oracle(times: &[u64], fps: f64) -> Vec<u64> {
        let width = 1000.0 / fps;
        let last = times.iter().copied().max().unwrap_or(0);
        let mut kept = Vec::new();
        let mut k = 0u64;
        loop {
            let lo = k as f64 * width;
            if lo > last as f64 {
                break;
            }
            let hi = (k + 1) as f64 * width;
            if let Some(&t) = times.iter().find(|&&t| {
                let tf = t as f64;
                tf >= lo && tf < hi
            }) {
                kept.push(t);
            }
            k += 1;
        }
        kept
    }

    #[test]
    fn thirty_frames_in_a_second_become_three() {
        let times: Vec<u64> = (0..30).map(|i| i * 1000 / 30).collect();
        let out = resample_events(&times.iter().map(|&t| frame(t)).collect::<Vec<_>>(), 3.0);
        let kept: Vec<u64> = out.iter().map(|e| e.t_ms).collect();
        assert_eq!(kept, bucket_oracle(&times, 3.0));
        assert_eq!(kept, vec![0, 366, 700]);
    }

    #[test]
    fn slow_frames_pass_unchanged() {
        let events: Vec<_> = (0..5).map(|i| frame(i * 1000)).collect();
        assert_eq!(resample_events(&events, 3.0), events);
        assert!(resample_events(&[], 3.0).is_empty());
    }

    #[test]
    fn same_timestamp_frame_events_stay_together() {
        let events = vec![
            frame(0),
            SensorEvent::new(0, EventPayload::FaceEmbedding(Embedding::zeros())),
            frame(100),
            audio(150),
        ];
        let out = resample_events(&events, 3.0);
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].t_ms, 150);
    }

    #[test]
    fn validation_errors() {
        let mut log = log_of(vec![frame(500), frame(400)]);
        assert_eq!(
            log.validate(),
            Err(SessionLogError::NonMonotonicTime { index: 1, prev_ms: 500, t_ms: 400 })
        );
        log.events.clear();
        log.references = ReferenceSet::default();
        assert_eq!(log.validate(), Err(SessionLogError::MissingReferences));
    }

    #[test]
    fn class_labels_round_trip() {
        for s in ["person", "phone", "laptop", "cup"] {
            assert_eq!(ObjectClass::from(String::from(s)).label(), s);
        }
        assert_eq!(ObjectClass::from(String::from("cell phone")), ObjectClass::Phone);
    }

    fn arb_events() -> impl Strategy<Value = Vec<SensorEvent>> {
        proptest::collection::vec((0u64..400, any::<bool>()), 0..60).prop_map(|steps| {
            let mut t = 0;
            steps
                .into_iter()
                .map(|(dt, is_audio)| {
                    t += dt;
                    if is_audio { audio(t) } else { frame(t) }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn resampling_is_idempotent(events in arb_events(), fps in 0.5f64..30.0) {
            let once = resample_events(&events, fps);
            prop_assert_eq!(resample_events(&once, fps), once);
        }

        #[test]
        fn resampling_keeps_order_and_audio(events in arb_events(), fps in 0.5f64..30.0) {
            let out = resample_events(&events, fps);
            prop_assert!(out.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
            let audio_in = events.iter().filter(|e| !e.payload.is_frame()).count();
            let audio_out = out.iter().filter(|e| !e.payload.is_frame()).count();
            prop_assert_eq!(audio_in, audio_out);
            // kept events form a subsequence of the input
            let mut it = events.iter();
            for e in &out {
                prop_assert!(it.any(|x| x == e));
            }
        }
    }
}
