//! Human-voice detection on one-second audio windows.
//!
//! Windows are turned into log-magnitude spectrograms and classified by a
//! small convolutional network. Training uses plain mini-batch SGD with
//! early stopping; [`cv`] repeats k-fold cross-validation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod cv;
pub mod model;
pub mod stft;
pub mod train;

pub use cv::{cross_validate, plan_folds, run_fold, summarize, CvParams, CvReport, CvRun, CvRunResult};
pub use model::{Scalar, VoiceModel};
pub use stft::{stft_spectrogram, Spectrogram};
pub use train::{train_voice_model, EarlyStopping, EpochRecord, TrainParams, TrainingHistory};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_FRAME_LEN: usize = 512;
pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("window holds {got} samples, expected exactly one second ({expected})")]
    WrongLength { expected: usize, got: usize },
    #[error("sample {index} is outside [-1, 1] or not finite")]
    SampleOutOfRange { index: usize },
    #[error("window of {len} samples is shorter than the frame length {frame_len}")]
    WindowTooShort { len: usize, frame_len: usize },
    #[error("frame length {frame_len} must be a power of two and hop {hop} in 1..=frame_len")]
    BadFraming { frame_len: usize, hop: usize },
    #[error("spectrogram is {got_frames}x{got_bins}, model expects {frames}x{bins}")]
    ShapeMismatch { frames: usize, bins: usize, got_frames: usize, got_bins: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("{got} samples cannot be split into {k} folds")]
    TooFewSamples { k: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// One second of mono PCM, samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcmWindow {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl PcmWindow {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self, AudioError> {
        let w = Self { sample_rate, samples };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.samples.len() != self.sample_rate as usize {
            return Err(AudioError::WrongLength {
                expected: self.sample_rate as usize,
                got: self.samples.len(),
            });
        }
        match self.samples.iter().position(|s| !(-1.0..=1.0).contains(s)) {
            Some(index) => Err(AudioError::SampleOutOfRange { index }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoiceLabel {
    NonVoice,
    Voice,
}

impl VoiceLabel {
    pub fn class_index(self) -> usize {
        match self {
            VoiceLabel::NonVoice => 0,
            VoiceLabel::Voice => 1,
        }
    }
}

/// Model-ready example: log-compressed spectrogram and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Spectrogram,
    pub label: VoiceLabel,
}

/// Spectrogram front end shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self { frame_len: DEFAULT_FRAME_LEN, hop: DEFAULT_HOP }
    }
}

impl FrontEnd {
    /// Log-compressed spectrogram for the model.
    pub fn features(&self, w: &PcmWindow) -> Result<Spectrogram, AudioError> {
        Ok(stft_spectrogram(w, self.frame_len, self.hop)?.log_compressed())
    }

    pub fn example(&self, w: &PcmWindow, label: VoiceLabel) -> Result<LabeledExample, AudioError> {
        Ok(LabeledExample { features: self.features(w)?, label })
    }

    pub fn shape(&self, num_samples: usize) -> (usize, usize) {
        let frames = if num_samples >= self.frame_len {
            (num_samples - self.frame_len) / self.hop + 1
        } else {
            0
        };
        (frames, self.frame_len / 2 + 1)
    }
}

/// Probability that a window contains human voice.
pub fn classify_window(s: &Spectrogram, m: &VoiceModel) -> Result<f64, AudioError> {
    m.voice_probability(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn window_length_is_exactly_one_second() {
        assert!(PcmWindow::new(16000, vec![0.0; 16000]).is_ok());
        assert_eq!(
            PcmWindow::new(16000, vec![0.0; 15999]),
            Err(AudioError::WrongLength { expected: 16000, got: 15999 })
        );
        let mut s = vec![0.0; 8];
        s[3] = 1.5;
        assert_eq!(PcmWindow::new(8, s), Err(AudioError::SampleOutOfRange { index: 3 }));
    }

    #[test]
    fn default_front_end_shape() {
        assert_eq!(FrontEnd::default().shape(16000), (61, 257));
    }
}
