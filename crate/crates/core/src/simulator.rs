//! Synthetic exam sessions with injected cheating episodes.
//!
//! A scenario is rendered on the engine's frame grid (`ceil(1000 / max_fps)`
//! ms) plus one audio window per second. Ground-truth windows are derived
//! from the same grid, so a noise-free scenario has exactly one expected
//! flag per visible episode.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::PcmWindow;
use crate::events::{AudioPayload, Detection, EventPayload, FrameDetections, ObjectClass, SensorEvent, SessionLog};
use crate::facematch::{Embedding, ReferenceSet, EMBEDDING_DIM};
use crate::objectgate::{gate_device_score, BoundingBox, DeviceClass, DeviceVerdict};
use crate::pipeline::{EngineConfig, FinalLabel, FlagKind, SessionReport};
use crate::seed;

pub const SAMPLE_RATE: u32 = 16_000;
pub const FUNDAMENTAL_HZ: f64 = 120.0;
pub const HARMONICS: usize = 6;
pub const AM_HZ: f64 = 4.0;
pub const PEAK: f32 = 0.5;
/// Amplitude of the background noise relative to [`PEAK`].
pub const BACKGROUND_LEVEL: f32 = 0.1;

const REFERENCE_SPREAD: f64 = 0.05;
const CANDIDATE_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("{reports} reports but {gts} ground truths")]
    LengthMismatch { reports: usize, gts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    Clean,
    PhoneUse,
    LaptopUse,
    ImpostorSwap,
    Absence,
    SecondPerson,
    BackgroundSpeech,
}

impl EpisodeKind {
    fn hides_candidate(self) -> bool {
        matches!(self, EpisodeKind::Absence | EpisodeKind::ImpostorSwap)
    }

    fn is_visual(self) -> bool {
        !matches!(self, EpisodeKind::Clean | EpisodeKind::BackgroundSpeech)
    }
}

fn default_intensity() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub kind: EpisodeKind,
    pub start_ms: u64,
    pub length_ms: u64,
    /// Device score for phone/laptop episodes, loudness for speech.
    #[serde(default = "default_intensity")]
    pub intensity: f64,
}

impl Episode {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.length_ms
    }

    fn covers(&self, t: u64) -> bool {
        self.start_ms <= t && t < self.end_ms()
    }
}

fn default_impostor_distance() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub duration_ms: u64,
    #[serde(default)]
    pub episodes: Vec<Episode>,
    #[serde(default)]
    pub seed: u64,
    /// Offset of impostor embeddings from the reference centroid.
    #[serde(default = "default_impostor_distance")]
    pub impostor_distance: f64,
    /// Adds harmless clutter: unrelated objects and sub-threshold phone scores.
    #[serde(default)]
    pub distractors: bool,
}

impl ScenarioSpec {
    pub fn new(duration_ms: u64, episodes: Vec<Episode>, seed: u64) -> Self {
        Self { duration_ms, episodes, seed, impostor_distance: default_impostor_distance(), distractors: false }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.duration_ms == 0 {
            return bad("duration_ms must be positive".into());
        }
        if !(self.impostor_distance > 0.0 && self.impostor_distance.is_finite()) {
            return bad("impostor_distance must be positive".into());
        }
        for (i, e) in self.episodes.iter().enumerate() {
            if e.end_ms() > self.duration_ms {
                return bad(format!("episode {i} ends after the session"));
            }
            if !(0.0..=1.0).contains(&e.intensity) {
                return bad(format!("episode {i} intensity must be in [0, 1]"));
            }
        }
        let mut visual: Vec<&Episode> = self.episodes.iter().filter(|e| e.kind.is_visual()).collect();
        visual.sort_by_key(|e| e.start_ms);
        for w in visual.windows(2) {
            if w[1].start_ms < w[0].end_ms() {
                return bad(format!("visual episodes at {} and {} overlap", w[0].start_ms, w[1].start_ms));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagWindow {
    pub kind: FlagKind,
    /// Inclusive bounds.
    pub start_ms: u64,
    pub end_ms: u64,
}

impl FlagWindow {
    pub fn contains(&self, t: u64) -> bool {
        self.start_ms <= t && t <= self.end_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub expected_label: FinalLabel,
    pub windows: Vec<FlagWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AudioKind {
    Voiced,
    Unvoiced,
}

/// One second of synthetic audio, peak-normalized to [`PEAK`].
///
/// Voiced windows are a 120 Hz fundamental plus six harmonics under a 4 Hz
/// amplitude envelope; unvoiced windows are uniform white noise.
pub fn synth_audio(kind: AudioKind, seed: u64) -> PcmWindow {
    let mut rng = seed::rng(seed, &[]);
    let n = SAMPLE_RATE as usize;
    let raw: Vec<f64> = match kind {
        AudioKind::Voiced => {
            let phases: Vec<f64> = (0..=HARMONICS + 1).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / SAMPLE_RATE as f64;
                    let tone: f64 = (1..=HARMONICS + 1)
                        .map(|h| libm::sin(2.0 * PI * FUNDAMENTAL_HZ * h as f64 * t + phases[h - 1]) / h as f64)
                        .sum();
                    let envelope = 1.0 + 0.5 * libm::sin(2.0 * PI * AM_HZ * t + phases[HARMONICS + 1]);
                    tone * envelope
                })
                .collect()
        }
        AudioKind::Unvoiced => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { PEAK as f64 / peak } else { 0.0 };
    PcmWindow { sample_rate: SAMPLE_RATE, samples: raw.iter().map(|&v| (v * scale) as f32).collect() }
}

/// Multiplies every sample by `gain` (clamped to [0, 2] so samples stay in range).
pub fn scale_window(mut w: PcmWindow, gain: f32) -> PcmWindow {
    let g = gain.clamp(0.0, 2.0);
    w.samples.iter_mut().for_each(|s| *s *= g);
    w
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn offset(centroid: &[f64], rng: &mut ChaCha8Rng, radius: f64) -> Embedding {
    let u = unit_vector(rng);
    Embedding::new(centroid.iter().zip(&u).map(|(c, d)| c + radius * d).collect())
        .expect("offset of a finite centroid is finite")
}

/// Frame spacing of the generator: the smallest whole-ms period within `max_fps`.
pub fn frame_period_ms(max_fps: f64) -> u64 {
    libm::ceil(1000.0 / max_fps) as u64
}

fn person(rng: &mut ChaCha8Rng, x: f64) -> Detection {
    Detection {
        class: ObjectClass::Person,
        score: rng.random_range(0.85..0.95),
        bbox: BoundingBox::new(x + rng.random_range(-4.0..4.0), 30.0 + rng.random_range(-4.0..4.0), 120.0, 180.0),
    }
}

fn device(class: DeviceClass, score: f64) -> Detection {
    let class = match class {
        DeviceClass::Phone => ObjectClass::Phone,
        DeviceClass::Laptop => ObjectClass::Laptop,
    };
    Detection { class, score, bbox: BoundingBox::new(250.0, 150.0, 60.0, 40.0) }
}

/// Renders a scenario into a session log and its ground truth.
pub fn generate_session(spec: &ScenarioSpec, cfg: &EngineConfig) -> Result<(SessionLog, GroundTruth), SimError> {
    spec.validate()?;
    cfg.validate().map_err(|e| SimError::InvalidSpec(format!("{e}")))?;
    let period = frame_period_ms(cfg.max_fps);
    let grid: Vec<u64> = (0..).map(|k| k * period).take_while(|&t| t < spec.duration_ms).collect();
    let audio_times: Vec<u64> = (0..).map(|s| s * 1000).take_while(|&t| t + 1000 <= spec.duration_ms).collect();

    let mut id_rng = seed::rng(spec.seed, &[0]);
    let centroid: Vec<f64> = (0..EMBEDDING_DIM).map(|_| id_rng.random_range(-0.1..0.1)).collect();
    let references =
        ReferenceSet::new((0..cfg.reference_count).map(|_| offset(&centroid, &mut id_rng, REFERENCE_SPREAD)).collect());

    let active = |t: u64, kind: EpisodeKind| spec.episodes.iter().find(|e| e.kind == kind && e.covers(t));
    let hidden = |t: u64| spec.episodes.iter().any(|e| e.kind.hides_candidate() && e.covers(t));
    let present: Vec<bool> = grid.iter().map(|&t| !hidden(t)).collect();

    let mut events: Vec<SensorEvent> = Vec::new();
    let mut frame_rng = seed::rng(spec.seed, &[1]);
    let mut last_embedding = None;
    for (k, &t) in grid.iter().enumerate() {
        let mut dets = Vec::new();
        if present[k] {
            dets.push(person(&mut frame_rng, 140.0));
        }
        if active(t, EpisodeKind::SecondPerson).is_some() {
            dets.push(person(&mut frame_rng, 20.0));
        }
        if let Some(e) = active(t, EpisodeKind::PhoneUse) {
            dets.push(device(DeviceClass::Phone, e.intensity));
        }
        if let Some(e) = active(t, EpisodeKind::LaptopUse) {
            dets.push(device(DeviceClass::Laptop, e.intensity));
        }
        if spec.distractors && frame_rng.random_bool(0.2) {
            let low = cfg.device_thresholds.low;
            dets.push(device(DeviceClass::Phone, frame_rng.random_range(0.0..low * 0.5)));
            dets.push(Detection {
                class: ObjectClass::Other("cup".into()),
                score: frame_rng.random_range(0.3..0.9),
                bbox: BoundingBox::new(300.0, 180.0, 30.0, 30.0),
            });
        }
        events.push(SensorEvent::new(t, EventPayload::FrameDetections(FrameDetections { detections: dets })));

        // Embedding on every return and every few seconds while present.
        let returning = present[k] && k > 0 && !present[k - 1];
        let periodic = present[k] && last_embedding.is_none_or(|l| t >= l + 5_000);
        if returning || periodic {
            let impostor = returning && spec.episodes.iter().any(|e| {
                e.kind == EpisodeKind::ImpostorSwap && grid[k - 1] >= e.start_ms && grid[k - 1] < e.end_ms()
            });
            let mut rng = seed::rng(spec.seed, &[2, t]);
            let radius = if impostor { spec.impostor_distance } else { CANDIDATE_SPREAD };
            events.push(SensorEvent::new(t, EventPayload::FaceEmbedding(offset(&centroid, &mut rng, radius))));
            last_embedding = Some(t);
        }
    }
    for &t in &audio_times {
        let w = match active(t, EpisodeKind::BackgroundSpeech) {
            Some(e) => scale_window(synth_audio(AudioKind::Voiced, seed::derive(spec.seed, &[3, t])), e.intensity as f32),
            None => scale_window(synth_audio(AudioKind::Unvoiced, seed::derive(spec.seed, &[4, t])), BACKGROUND_LEVEL),
        };
        events.push(SensorEvent::new(t, EventPayload::AudioWindow(AudioPayload::Inline(w))));
    }
    events.sort_by_key(|e| e.t_ms);
    let end_t = events.last().map_or(0, |e| e.t_ms);

    let mut windows = Vec::new();
    absence_windows(spec, cfg, &grid, &present, end_t, &mut windows);
    for e in &spec.episodes {
        let on_grid = grid.iter().any(|&t| e.covers(t));
        let window = |kind| FlagWindow { kind, start_ms: e.start_ms, end_ms: e.end_ms() };
        match e.kind {
            EpisodeKind::PhoneUse | EpisodeKind::LaptopUse if on_grid => {
                let class = if e.kind == EpisodeKind::PhoneUse { DeviceClass::Phone } else { DeviceClass::Laptop };
                let verdict = gate_device_score(class, e.intensity, &cfg.device_thresholds)
                    .map_err(|err| SimError::InvalidSpec(format!("{err}")))?;
                match verdict {
                    DeviceVerdict::NoFlag => {}
                    DeviceVerdict::GeneralSuspicious => windows.push(window(FlagKind::GeneralSuspicious)),
                    DeviceVerdict::PhoneDetection => windows.push(window(FlagKind::PhoneDetection)),
                }
            }
            EpisodeKind::SecondPerson if on_grid => windows.push(window(FlagKind::MultiplePersons)),
            EpisodeKind::BackgroundSpeech if audio_times.iter().any(|&t| e.covers(t)) => {
                windows.push(window(FlagKind::VoiceDetection))
            }
            _ => {}
        }
    }
    windows.sort_by_key(|w| (w.start_ms, w.kind));

    let expected_label = if windows.is_empty() { FinalLabel::Clean } else { FinalLabel::Suspect };
    let log = SessionLog {
        session_id: format!("sim-{:016x}", spec.seed),
        config: cfg.clone(),
        references,
        events,
    };
    Ok((log, GroundTruth { expected_label, windows }))
}

/// Expected absence and identity flags from the zero-person runs of the grid.
fn absence_windows(
    spec: &ScenarioSpec,
    cfg: &EngineConfig,
    grid: &[u64],
    present: &[bool],
    end_t: u64,
    out: &mut Vec<FlagWindow>,
) {
    let mut k = 0;
    while k < grid.len() {
        if present[k] {
            k += 1;
            continue;
        }
        let k0 = k;
        while k < grid.len() && !present[k] {
            k += 1;
        }
        let anchor = if k0 > 0 { grid[k0 - 1] } else { grid[k0] };
        let back = grid.get(k).copied();
        let gap = back.unwrap_or(end_t) - anchor;
        let swap = spec.episodes.iter().any(|e| {
            e.kind == EpisodeKind::ImpostorSwap && grid[k0..k].iter().any(|&t| e.covers(t))
        });
        let end_ms = back.unwrap_or(end_t);
        if gap > cfg.absence_long_ms {
            out.push(FlagWindow { kind: FlagKind::CandidateAbsence, start_ms: grid[k0], end_ms });
        } else if swap && back.is_some() && (gap > cfg.absence_recheck_min_ms || cfg.recheck_on_any_return) {
            out.push(FlagWindow { kind: FlagKind::AnotherPerson, start_ms: grid[k0], end_ms });
        }
    }
}

/// A random scenario whose episodes sit at least 2 s apart and away from
/// every decision boundary.
pub fn random_scenario(seed: u64, duration_ms: u64) -> ScenarioSpec {
    let mut rng = seed::rng(seed, &[9]);
    let mut episodes = Vec::new();
    let mut cursor = 1_000 + rng.random_range(0..2_000u64);
    let count = rng.random_range(0..=4usize);
    for _ in 0..count {
        let (kind, length_ms, intensity) = match rng.random_range(0..6u8) {
            0 => (EpisodeKind::PhoneUse, rng.random_range(1_000..4_000), *pick(&mut rng, &[0.5, 0.9])),
            1 => (EpisodeKind::LaptopUse, rng.random_range(1_000..4_000), *pick(&mut rng, &[0.5, 0.9])),
            2 => (EpisodeKind::ImpostorSwap, rng.random_range(6_000..8_500), 0.9),
            3 => (EpisodeKind::Absence, *pick(&mut rng, &[3_000, 7_000, 12_500]), 0.9),
            4 => (EpisodeKind::SecondPerson, rng.random_range(1_000..4_000), 0.9),
            _ => (EpisodeKind::BackgroundSpeech, rng.random_range(2_000..4_000), rng.random_range(0.6..1.0)),
        };
        if cursor + length_ms + 1_000 > duration_ms {
            break;
        }
        episodes.push(Episode { kind, start_ms: cursor, length_ms, intensity });
        cursor += length_ms + 2_000 + rng.random_range(0..2_000u64);
    }
    ScenarioSpec::new(duration_ms, episodes, seed)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KindMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1.0 when nothing was predicted.
    pub precision: f64,
    /// 1.0 when nothing was expected.
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelConfusion {
    pub suspect_as_suspect: usize,
    pub suspect_as_clean: usize,
    pub clean_as_suspect: usize,
    pub clean_as_clean: usize,
}

impl LabelConfusion {
    pub fn correct(&self) -> usize {
        self.suspect_as_suspect + self.clean_as_clean
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub per_kind: BTreeMap<FlagKind, KindMetrics>,
    pub labels: LabelConfusion,
}

pub const ALL_KINDS: [FlagKind; 6] = [
    FlagKind::AnotherPerson,
    FlagKind::PhoneDetection,
    FlagKind::GeneralSuspicious,
    FlagKind::CandidateAbsence,
    FlagKind::MultiplePersons,
    FlagKind::VoiceDetection,
];

/// Flag-level precision/recall. A flag matches the first unmatched window of
/// its kind that contains its timestamp.
pub fn evaluate_reports(reports: &[SessionReport], gts: &[GroundTruth]) -> Result<Metrics, SimError> {
    if reports.len() != gts.len() {
        return Err(SimError::LengthMismatch { reports: reports.len(), gts: gts.len() });
    }
    let mut per_kind: BTreeMap<FlagKind, KindMetrics> = ALL_KINDS.iter().map(|&k| (k, KindMetrics::default())).collect();
    let mut labels = LabelConfusion::default();
    for (report, gt) in reports.iter().zip(gts) {
        let mut used = vec![false; gt.windows.len()];
        for f in &report.flags {
            let hit = gt
                .windows
                .iter()
                .enumerate()
                .position(|(i, w)| !used[i] && w.kind == f.kind && w.contains(f.t_ms));
            let m = per_kind.get_mut(&f.kind).expect("all kinds present");
            match hit {
                Some(i) => {
                    used[i] = true;
                    m.true_positives += 1;
                }
                None => m.false_positives += 1,
            }
        }
        for (w, _) in gt.windows.iter().zip(&used).filter(|(_, u)| !**u) {
            per_kind.get_mut(&w.kind).expect("all kinds present").false_negatives += 1;
        }
        match (gt.expected_label, report.final_label) {
            (FinalLabel::Suspect, FinalLabel::Suspect) => labels.suspect_as_suspect += 1,
            (FinalLabel::Suspect, FinalLabel::Clean) => labels.suspect_as_clean += 1,
            (FinalLabel::Clean, FinalLabel::Suspect) => labels.clean_as_suspect += 1,
            (FinalLabel::Clean, FinalLabel::Clean) => labels.clean_as_clean += 1,
        }
    }
    for m in per_kind.values_mut() {
        let predicted = m.true_positives + m.false_positives;
        let expected = m.true_positives + m.false_negatives;
        m.precision = if predicted == 0 { 1.0 } else { m.true_positives as f64 / predicted as f64 };
        m.recall = if expected == 0 { 1.0 } else { m.true_positives as f64 / expected as f64 };
    }
    Ok(Metrics { per_kind, labels })
}
