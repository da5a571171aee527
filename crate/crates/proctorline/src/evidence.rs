//! Evidence clips: the recorded frames inside each flag's clip window with
//! everything except the candidate blurred.

use std::path::{Path, PathBuf};

use proctorline_core::events::{EventPayload, FrameImageRef};
use proctorline_core::segmentation::{process_evidence_frames, Frame, PersonMask, SegmentationError};
use proctorline_core::{SessionLog, SessionReport};
use serde::Serialize;
use thiserror::Error;

use crate::netpbm::{self, NetpbmError};

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("{path}: {source}")]
    Image { path: String, source: NetpbmError },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error("writing evidence: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipIndex {
    pub clips: Vec<ClipEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipEntry {
    pub kind: proctorline_core::FlagKind,
    pub start_t_ms: u64,
    pub duration_ms: u64,
    pub frames: Vec<String>,
}

fn load(base: &Path, r: &FrameImageRef) -> Result<(Frame, Vec<PersonMask>), EvidenceError> {
    let frame = netpbm::load_ppm(&base.join(&r.image)).map_err(|source| EvidenceError::Image { path: r.image.clone(), source })?;
    let masks = r
        .masks
        .iter()
        .map(|m| {
            netpbm::load_pbm(&base.join(&m.path), m.id)
                .map_err(|source| EvidenceError::Image { path: m.path.clone(), source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((frame, masks))
}

/// Writes `clip-NNN-<kind>/tXXXXXXXX.ppm` files plus `clips.json` into
/// `out_dir`. Image paths in the log are resolved against `base`.
pub fn render_evidence(
    log: &SessionLog,
    report: &SessionReport,
    base: &Path,
    out_dir: &Path,
    blur_radius: u32,
) -> Result<ClipIndex, EvidenceError> {
    std::fs::create_dir_all(out_dir)?;
    let mut clips = Vec::new();
    for (i, flag) in report.flags.iter().enumerate() {
        let clip = flag.clip;
        let end = clip.start_t_ms.saturating_add(clip.duration_ms);
        let refs: Vec<(u64, &FrameImageRef)> = log
            .events
            .iter()
            .filter(|e| e.t_ms >= clip.start_t_ms && e.t_ms < end)
            .filter_map(|e| match &e.payload {
                EventPayload::FrameImage(r) => Some((e.t_ms, r)),
                _ => None,
            })
            .collect();
        let mut frames = Vec::with_capacity(refs.len());
        let mut masks = Vec::with_capacity(refs.len());
        for (_, r) in &refs {
            let (f, m) = load(base, r)?;
            frames.push(f);
            masks.push(m);
        }
        let keypoints: Vec<_> = refs.iter().map(|(_, r)| r.keypoints).collect();
        let blurred = process_evidence_frames(&frames, &masks, &keypoints, blur_radius)?;

        let dir_name = format!("clip-{i:03}-{}", kind_slug(flag.kind));
        let dir: PathBuf = out_dir.join(&dir_name);
        let mut names = Vec::new();
        if !blurred.is_empty() {
            std::fs::create_dir_all(&dir)?;
        }
        for ((t, _), f) in refs.iter().zip(&blurred) {
            let name = format!("{dir_name}/t{t:08}.ppm");
            netpbm::save_ppm(&out_dir.join(&name), f)?;
            names.push(name);
        }
        clips.push(ClipEntry { kind: flag.kind, start_t_ms: clip.start_t_ms, duration_ms: clip.duration_ms, frames: names });
    }
    let index = ClipIndex { clips };
    let json = crate::canonical::to_canonical_json(&index).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join("clips.json"), json)?;
    Ok(index)
}

fn kind_slug(k: proctorline_core::FlagKind) -> &'static str {
    use proctorline_core::FlagKind::*;
    match k {
        AnotherPerson => "another-person",
        PhoneDetection => "phone-detection",
        GeneralSuspicious => "general-suspicious",
        CandidateAbsence => "candidate-absence",
        MultiplePersons => "multiple-persons",
        VoiceDetection => "voice-detection",
    }
}
