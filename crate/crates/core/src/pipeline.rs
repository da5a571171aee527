//! Session state machine.
//!
//! Events are folded one at a time into a [`PipelineState`]. Rules:
//!
//! * a frame with no person opens an absence episode; the first frame with
//!   a person closes it. Gaps longer than `absence_long_ms` raise
//!   `CandidateAbsence`; gaps longer than `absence_recheck_min_ms` arm an
//!   identity recheck on the next face embedding;
//! * two or more persons raise `MultiplePersons` once per episode;
//! * phone/laptop scores at or above the low threshold form a device
//!   episode, reported once when it ends with the band of its maximum score;
//! * audio windows classified as voice raise `VoiceDetection` once per run.
//!
//! Every flag requests an evidence clip starting at the flag time.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, FrontEnd, PcmWindow, VoiceModel};
use crate::events::{AudioPayload, EventPayload, FrameDetections, SensorEvent, SessionLog};
use crate::facematch::{classify_identity, Embedding, FaceMatchError, IdentityVerdict, ReferenceSet};
use crate::objectgate::{
    gate_device_score, max_device_score, person_count, DeviceClass, DeviceThresholds, DeviceVerdict,
    IouThresholds, ObjectGateError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("event at t={t_ms} ms arrived after t={prev_ms} ms")]
    OutOfOrderEvent { t_ms: u64, prev_ms: u64 },
    #[error("audio window at t={0} ms needs a voice model")]
    MissingVoiceModel(u64),
    #[error("audio window at t={0} ms references a file that was not loaded")]
    UnresolvedAudio(u64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Face(#[from] FaceMatchError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    ObjectGate(#[from] ObjectGateError),
    #[error("event {index}: {source}")]
    AtEvent { index: usize, source: alloc::boxed::Box<PipelineError> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub face_threshold: f64,
    pub device_thresholds: DeviceThresholds,
    pub person_score_min: f64,
    pub absence_long_ms: u64,
    pub absence_recheck_min_ms: u64,
    pub evidence_clip_ms: u64,
    pub max_fps: f64,
    pub voice_threshold: f64,
    pub reference_count: usize,
    pub iou_thresholds: IouThresholds,
    pub blur_radius: u32,
    /// Recheck identity after every return, not only after 5 to 10 s gaps.
    pub recheck_on_any_return: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            face_threshold: 0.6,
            device_thresholds: DeviceThresholds::default(),
            person_score_min: 0.5,
            absence_long_ms: 10_000,
            absence_recheck_min_ms: 5_000,
            evidence_clip_ms: 5_000,
            max_fps: 3.0,
            voice_threshold: 0.5,
            reference_count: 20,
            iou_thresholds: IouThresholds::default(),
            blur_radius: 9,
            recheck_on_any_return: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(String::from(m)));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.face_threshold > 0.0 && self.face_threshold.is_finite()) {
            return bad("face_threshold must be positive");
        }
        self.device_thresholds.validate()?;
        if !unit(self.person_score_min) {
            return bad("person_score_min must be in [0, 1]");
        }
        if self.absence_recheck_min_ms >= self.absence_long_ms {
            return bad("absence_recheck_min_ms must be below absence_long_ms");
        }
        if self.evidence_clip_ms == 0 {
            return bad("evidence_clip_ms must be positive");
        }
        if !(self.max_fps > 0.0 && self.max_fps.is_finite()) {
            return bad("max_fps must be positive");
        }
        if !unit(self.voice_threshold) {
            return bad("voice_threshold must be in [0, 1]");
        }
        if self.reference_count == 0 {
            return bad("reference_count must be at least 1");
        }
        if !self.iou_thresholds.0.values().all(|&v| unit(v)) {
            return bad("iou thresholds must be in [0, 1]");
        }
        if self.blur_radius == 0 {
            return bad("blur_radius must be at least 1");
        }
        Ok(())
    }
}

/// Maps a one-second window to a voice probability.
pub trait VoiceClassifier {
    fn voice_probability(&self, w: &PcmWindow) -> Result<f64, AudioError>;
}

/// Spectrogram front end plus trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceDetector {
    pub front_end: FrontEnd,
    pub model: VoiceModel,
}

impl VoiceClassifier for VoiceDetector {
    fn voice_probability(&self, w: &PcmWindow) -> Result<f64, AudioError> {
        self.model.voice_probability(&self.front_end.features(w)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlagKind {
    AnotherPerson,
    PhoneDetection,
    GeneralSuspicious,
    CandidateAbsence,
    MultiplePersons,
    VoiceDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagDetail {
    Distance(f64),
    Score(f64),
    AbsenceMs(u64),
    Persons(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceClipRequest {
    pub start_t_ms: u64,
    pub duration_ms: u64,
    pub trigger: FlagKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagEvent {
    pub kind: FlagKind,
    pub t_ms: u64,
    pub detail: FlagDetail,
    pub clip: EvidenceClipRequest,
}

impl FlagEvent {
    fn new(kind: FlagKind, t_ms: u64, detail: FlagDetail, cfg: &EngineConfig) -> Self {
        let clip = EvidenceClipRequest { start_t_ms: t_ms, duration_ms: cfg.evidence_clip_ms, trigger: kind };
        Self { kind, t_ms, detail, clip }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalLabel {
    Clean,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub final_label: FinalLabel,
    pub flags: Vec<FlagEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceEpisode {
    pub start_t_ms: u64,
    pub class: DeviceClass,
    pub max_score: f64,
}

/// Everything the engine remembers between events.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineState {
    pub last_t_ms: Option<u64>,
    pub last_present_t_ms: Option<u64>,
    pub absence_since_t_ms: Option<u64>,
    pub pending_identity_recheck: bool,
    pub multi_person_active: bool,
    pub device_episode: Option<DeviceEpisode>,
    pub voice_active: bool,
    /// Kept sorted by `t_ms`; equal times keep emission order.
    pub flags: Vec<FlagEvent>,
}

/// Read-only inputs shared by every step of a session.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub cfg: &'a EngineConfig,
    pub references: &'a ReferenceSet,
    pub voice: Option<&'a dyn VoiceClassifier>,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a EngineConfig, references: &'a ReferenceSet, voice: Option<&'a dyn VoiceClassifier>) -> Self {
        Self { cfg, references, voice }
    }
}

impl PipelineState {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&mut self, flag: FlagEvent, out: &mut Vec<FlagEvent>) {
        let at = self.flags.partition_point(|f| f.t_ms <= flag.t_ms);
        self.flags.insert(at, flag);
        out.push(flag);
    }

    /// Applies one event and returns the flags it emitted.
    pub fn step(&mut self, ev: &SensorEvent, engine: &Engine<'_>) -> Result<Vec<FlagEvent>, PipelineError> {
        if let Some(prev) = self.last_t_ms {
            if ev.t_ms < prev {
                return Err(PipelineError::OutOfOrderEvent { t_ms: ev.t_ms, prev_ms: prev });
            }
        }
        let mut out = Vec::new();
        match &ev.payload {
            EventPayload::FrameDetections(frame) => self.on_frame(ev.t_ms, frame, engine.cfg, &mut out)?,
            EventPayload::FaceEmbedding(e) => self.on_embedding(ev.t_ms, e, engine, &mut out)?,
            EventPayload::AudioWindow(a) => self.on_audio(ev.t_ms, a, engine, &mut out)?,
            EventPayload::FrameImage(_) => {}
        }
        self.last_t_ms = Some(ev.t_ms);
        Ok(out)
    }

    fn on_frame(
        &mut self,
        t: u64,
        frame: &FrameDetections,
        cfg: &EngineConfig,
        out: &mut Vec<FlagEvent>,
    ) -> Result<(), PipelineError> {
        let persons = person_count(frame, cfg.person_score_min);

        if persons == 0 {
            self.absence_since_t_ms.get_or_insert(t);
        } else {
            if let Some(since) = self.absence_since_t_ms.take() {
                let gap = t - self.last_present_t_ms.unwrap_or(since);
                if gap > cfg.absence_long_ms {
                    self.record(FlagEvent::new(FlagKind::CandidateAbsence, t, FlagDetail::AbsenceMs(gap), cfg), out);
                } else if gap > cfg.absence_recheck_min_ms {
                    self.pending_identity_recheck = true;
                }
                if cfg.recheck_on_any_return {
                    self.pending_identity_recheck = true;
                }
            }
            self.last_present_t_ms = Some(t);
        }

        if persons >= 2 {
            if !self.multi_person_active {
                self.multi_person_active = true;
                let detail = FlagDetail::Persons(persons as u32);
                self.record(FlagEvent::new(FlagKind::MultiplePersons, t, detail, cfg), out);
            }
        } else {
            self.multi_person_active = false;
        }

        let device = match max_device_score(frame) {
            Some((class, score)) => {
                gate_device_score(class, score, &cfg.device_thresholds)?;
                Some((class, score)).filter(|&(_, s)| s >= cfg.device_thresholds.low)
            }
            None => None,
        };
        match (device, self.device_episode.as_mut()) {
            (Some((class, score)), Some(ep)) => {
                if score > ep.max_score {
                    ep.max_score = score;
                    ep.class = class;
                }
            }
            (Some((class, score)), None) => {
                self.device_episode = Some(DeviceEpisode { start_t_ms: t, class, max_score: score });
            }
            (None, _) => self.close_device_episode(cfg, out)?,
        }
        Ok(())
    }

    fn close_device_episode(&mut self, cfg: &EngineConfig, out: &mut Vec<FlagEvent>) -> Result<(), PipelineError> {
        if let Some(ep) = self.device_episode.take() {
            let kind = match gate_device_score(ep.class, ep.max_score, &cfg.device_thresholds)? {
                DeviceVerdict::NoFlag => return Ok(()),
                DeviceVerdict::GeneralSuspicious => FlagKind::GeneralSuspicious,
                DeviceVerdict::PhoneDetection => FlagKind::PhoneDetection,
            };
            self.record(FlagEvent::new(kind, ep.start_t_ms, FlagDetail::Score(ep.max_score), cfg), out);
        }
        Ok(())
    }

    fn on_embedding(
        &mut self,
        t: u64,
        e: &Embedding,
        engine: &Engine<'_>,
        out: &mut Vec<FlagEvent>,
    ) -> Result<(), PipelineError> {
        if !self.pending_identity_recheck {
            return Ok(());
        }
        let decision = classify_identity(e, engine.references, engine.cfg.face_threshold)?;
        self.pending_identity_recheck = false;
        if decision.verdict == IdentityVerdict::AnotherPerson {
            let detail = FlagDetail::Distance(decision.min_distance);
            self.record(FlagEvent::new(FlagKind::AnotherPerson, t, detail, engine.cfg), out);
        }
        Ok(())
    }

    fn on_audio(
        &mut self,
        t: u64,
        a: &AudioPayload,
        engine: &Engine<'_>,
        out: &mut Vec<FlagEvent>,
    ) -> Result<(), PipelineError> {
        let window = match a {
            AudioPayload::Inline(w) => w,
            AudioPayload::File(_) => return Err(PipelineError::UnresolvedAudio(t)),
        };
        let voice = engine.voice.ok_or(PipelineError::MissingVoiceModel(t))?;
        let p = voice.voice_probability(window)?;
        if p > engine.cfg.voice_threshold {
            if !self.voice_active {
                self.voice_active = true;
                self.record(FlagEvent::new(FlagKind::VoiceDetection, t, FlagDetail::Score(p), engine.cfg), out);
            }
        } else {
            self.voice_active = false;
        }
        Ok(())
    }

    /// Closes episodes still open at the end of the session. An open absence
    /// counts up to the last event time.
    pub fn close(&mut self, cfg: &EngineConfig) -> Result<Vec<FlagEvent>, PipelineError> {
        let mut out = Vec::new();
        self.close_device_episode(cfg, &mut out)?;
        if let (Some(since), Some(end)) = (self.absence_since_t_ms.take(), self.last_t_ms) {
            let gap = end - self.last_present_t_ms.unwrap_or(since);
            if gap > cfg.absence_long_ms {
                self.record(FlagEvent::new(FlagKind::CandidateAbsence, end, FlagDetail::AbsenceMs(gap), cfg), &mut out);
            }
        }
        self.multi_person_active = false;
        self.voice_active = false;
        Ok(out)
    }
}

/// Suspect iff at least one flag; flags ordered by time.
pub fn finalize_report(state: PipelineState, session_id: &str) -> SessionReport {
    let mut flags = state.flags;
    flags.sort_by_key(|f| f.t_ms);
    let final_label = if flags.is_empty() { FinalLabel::Clean } else { FinalLabel::Suspect };
    SessionReport { session_id: String::from(session_id), final_label, flags }
}

/// Folds every event of an (already resampled) log through the engine.
pub fn run_session(
    log: &SessionLog,
    cfg: &EngineConfig,
    voice: Option<&dyn VoiceClassifier>,
) -> Result<SessionReport, PipelineError> {
    cfg.validate()?;
    log.references.warn_if_short(cfg.reference_count);
    let engine = Engine::new(cfg, &log.references, voice);
    let mut state = PipelineState::new();
    run_events(&mut state, &log.events, &engine, 0)?;
    state.close(cfg)?;
    Ok(finalize_report(state, &log.session_id))
}

/// Steps a slice of events, tagging errors with `first_index + offset`.
pub fn run_events(
    state: &mut PipelineState,
    events: &[SensorEvent],
    engine: &Engine<'_>,
    first_index: usize,
) -> Result<(), PipelineError> {
    for (i, ev) in events.iter().enumerate() {
        state.step(ev, engine).map_err(|e| PipelineError::AtEvent {
            index: first_index + i,
            source: alloc::boxed::Box::new(e),
        })?;
    }
    Ok(())
}
