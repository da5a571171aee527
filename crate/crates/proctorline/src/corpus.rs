//! Audio corpora: a directory of one-second PCM16 files plus a
//! line-delimited manifest of `{"path": ..., "label": "voice" | "non-voice"}`.

use std::io::{BufRead, Write};
use std::path::Path;

use proctorline_core::audio::{AudioError, FrontEnd, LabeledExample, PcmWindow, VoiceLabel};
use proctorline_core::seed;
use proctorline_core::simulator::{scale_window, synth_audio, AudioKind, SAMPLE_RATE};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcm;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Audio { path: String, source: AudioError },
    #[error("manifest lists no audio")]
    Empty,
}

fn default_rate() -> u32 {
    SAMPLE_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub label: VoiceLabel,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    let io = |source| CorpusError::Io { path: path.display().to_string(), source };
    let reader = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Manifest { line: i + 1, message: e.to_string() })?;
        entries.push(e);
    }
    if entries.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(entries)
}

/// Loads every manifest entry, in manifest order.
pub fn read_corpus(dir: &Path, manifest: &Path) -> Result<Vec<(PcmWindow, VoiceLabel)>, CorpusError> {
    read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let full = dir.join(&e.path);
            let bytes = std::fs::read(&full).map_err(|source| CorpusError::Io { path: e.path.clone(), source })?;
            let w = pcm::decode_window(&bytes, e.sample_rate)
                .map_err(|source| CorpusError::Audio { path: e.path.clone(), source })?;
            Ok((w, e.label))
        })
        .collect()
}

pub fn featurize(items: &[(PcmWindow, VoiceLabel)], fe: &FrontEnd) -> Result<Vec<LabeledExample>, AudioError> {
    items.iter().map(|(w, l)| fe.example(w, *l)).collect()
}

/// Synthetic corpus: alternating voiced and unvoiced windows, each scaled
/// by a random gain in [0.05, 1] so that loudness alone cannot separate them.
pub fn synth_corpus(count: usize, base_seed: u64) -> Vec<(PcmWindow, VoiceLabel)> {
    (0..count)
        .map(|i| {
            let (kind, label) = if i % 2 == 0 {
                (AudioKind::Voiced, VoiceLabel::Voice)
            } else {
                (AudioKind::Unvoiced, VoiceLabel::NonVoice)
            };
            let gain = seed::rng(base_seed, &[7, i as u64]).random_range(0.05f32..=1.0);
            (scale_window(synth_audio(kind, seed::derive(base_seed, &[8, i as u64])), gain), label)
        })
        .collect()
}

/// Writes `clip-NNNN.pcm` files and the manifest.
pub fn write_corpus(dir: &Path, manifest: &Path, items: &[(PcmWindow, VoiceLabel)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut m = std::io::BufWriter::new(std::fs::File::create(manifest)?);
    for (i, (w, label)) in items.iter().enumerate() {
        let name = format!("clip-{i:04}.pcm");
        std::fs::write(dir.join(&name), pcm::encode_window(w))?;
        let entry = ManifestEntry { path: name, label: *label, sample_rate: w.sample_rate };
        writeln!(m, "{}", serde_json::to_string(&entry)?)?;
    }
    m.flush()
}
