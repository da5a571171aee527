//! Raw 16-bit little-endian mono PCM.

use proctorline_core::audio::{AudioError, PcmWindow};

pub fn encode_window(w: &PcmWindow) -> Vec<u8> {
    w.samples
        .iter()
        .flat_map(|&s| ((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).to_le_bytes())
        .collect()
}

/// Decodes exactly one second of audio; the byte count must be
/// `2 * sample_rate`.
pub fn decode_window(bytes: &[u8], sample_rate: u32) -> Result<PcmWindow, AudioError> {
    if bytes.len() != 2 * sample_rate as usize {
        return Err(AudioError::WrongLength { expected: sample_rate as usize, got: bytes.len() / 2 });
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
        .collect();
    PcmWindow::new(sample_rate, samples)
}
