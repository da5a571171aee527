//! Line-delimited session logs.
//!
//! ```text
//! {"kind":"header","session_id":"s1","config":{...}}
//! {"kind":"references","embeddings":[[...128 reals...], ...]}
//! {"t_ms":0,"kind":"frame_detections","payload":{"detections":[...]}}
//! ```
//!
//! Audio windows may reference 16-bit PCM files instead of carrying samples
//! inline; [`resolve_audio`] loads them relative to the log's directory and
//! checks their SHA-256.

use std::io::{BufRead, Write};
use std::path::Path;

use proctorline_core::audio::PcmWindow;
use proctorline_core::events::{AudioFileRef, EventPayload};
use proctorline_core::{AudioPayload, Embedding, EngineConfig, ReferenceSet, SensorEvent, SessionLog, SessionLogError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pcm;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] SessionLogError),
    #[error("reading session log: {0}")]
    Io(#[from] std::io::Error),
    #[error("audio file {path}: {message}")]
    Audio { path: String, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Preamble {
    Header {
        session_id: String,
        #[serde(default)]
        config: EngineConfig,
    },
    References {
        embeddings: Vec<Embedding>,
    },
}

fn malformed(line: usize, message: impl ToString) -> LogError {
    LogError::MalformedRecord { line, message: message.to_string() }
}

/// Parses and validates a session log.
pub fn parse_session_log<R: BufRead>(reader: R) -> Result<SessionLog, LogError> {
    let mut header: Option<(String, EngineConfig)> = None;
    let mut references: Option<ReferenceSet> = None;
    let mut events = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match (&header, &references) {
            (None, _) => match serde_json::from_str::<Preamble>(&line) {
                Ok(Preamble::Header { session_id, config }) => header = Some((session_id, config)),
                Ok(Preamble::References { .. }) => return Err(malformed(line_no, "references before header")),
                Err(e) => return Err(malformed(line_no, format!("expected header record: {e}"))),
            },
            (Some(_), None) => {
                let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
                match value.get("kind").and_then(|k| k.as_str()) {
                    Some("references") => match serde_json::from_value::<Preamble>(value) {
                        Ok(Preamble::References { embeddings }) => references = Some(ReferenceSet::new(embeddings)),
                        Ok(Preamble::Header { .. }) => unreachable!("kind was checked"),
                        Err(e) => return Err(malformed(line_no, e)),
                    },
                    Some("header") => return Err(malformed(line_no, "duplicate header")),
                    _ => return Err(SessionLogError::MissingReferences.into()),
                }
            }
            (Some(_), Some(_)) => {
                let ev: SensorEvent = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
                events.push(ev);
            }
        }
    }

    let (session_id, config) = header.ok_or(SessionLogError::MissingReferences)?;
    let references = references.ok_or(SessionLogError::MissingReferences)?;
    let log = SessionLog { session_id, config, references, events };
    log.validate()?;
    Ok(log)
}

pub fn read_session_log(path: &Path) -> Result<SessionLog, LogError> {
    let file = std::fs::File::open(path)?;
    parse_session_log(std::io::BufReader::new(file))
}

/// Writes the canonical line-delimited form.
pub fn write_session_log<W: Write>(log: &SessionLog, mut out: W) -> std::io::Result<()> {
    let header = Preamble::Header { session_id: log.session_id.clone(), config: log.config.clone() };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    let refs = Preamble::References { embeddings: log.references.iter().cloned().collect() };
    writeln!(out, "{}", serde_json::to_string(&refs)?)?;
    for ev in &log.events {
        writeln!(out, "{}", serde_json::to_string(ev)?)?;
    }
    out.flush()
}

pub fn session_log_string(log: &SessionLog) -> String {
    let mut buf = Vec::new();
    write_session_log(log, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Replaces file-backed audio windows with their samples.
pub fn resolve_audio(log: &mut SessionLog, base_dir: &Path) -> Result<(), LogError> {
    for ev in &mut log.events {
        let EventPayload::AudioWindow(AudioPayload::File(r)) = &ev.payload else {
            continue;
        };
        let window = load_audio_ref(r, base_dir)?;
        ev.payload = EventPayload::AudioWindow(AudioPayload::Inline(window));
    }
    Ok(())
}

fn load_audio_ref(r: &AudioFileRef, base_dir: &Path) -> Result<PcmWindow, LogError> {
    let fail = |message: String| LogError::Audio { path: r.path.clone(), message };
    let bytes = std::fs::read(base_dir.join(&r.path)).map_err(|e| fail(e.to_string()))?;
    let digest = sha256_hex(&bytes);
    if !digest.eq_ignore_ascii_case(&r.sha256) {
        return Err(fail(format!("sha256 mismatch: file has {digest}")));
    }
    pcm::decode_window(&bytes, r.sample_rate).map_err(|e| fail(e.to_string()))
}

/// Moves inline audio into PCM files under `audio_dir` (relative to
/// `base_dir`), returning the rewritten log.
pub fn externalize_audio(log: &SessionLog, base_dir: &Path, audio_dir: &str) -> std::io::Result<SessionLog> {
    let mut out = log.clone();
    let mut created = false;
    for ev in &mut out.events {
        let EventPayload::AudioWindow(AudioPayload::Inline(w)) = &ev.payload else {
            continue;
        };
        if !created {
            std::fs::create_dir_all(base_dir.join(audio_dir))?;
            created = true;
        }
        let bytes = pcm::encode_window(w);
        let rel = format!("{audio_dir}/t{:08}.pcm", ev.t_ms);
        std::fs::write(base_dir.join(&rel), &bytes)?;
        let r = AudioFileRef { path: rel, sample_rate: w.sample_rate, sha256: sha256_hex(&bytes) };
        ev.payload = EventPayload::AudioWindow(AudioPayload::File(r));
    }
    Ok(out)
}
