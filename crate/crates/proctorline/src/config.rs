//! Flat JSON config file. Every key is optional; unknown keys are rejected.
//!
//! Engine keys mirror `EngineConfig`. Audio keys: `learning_rate`,
//! `batch_size`, `patience`, `max_epochs`, `frame_len`, `hop`, `k`,
//! `repeats`, `validation_fraction`.

use std::path::Path;

use proctorline_core::audio::{CvParams, FrontEnd, TrainParams};
use proctorline_core::objectgate::IouThresholds;
use proctorline_core::{DeviceThresholds, EngineConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfigFile {
    pub face_threshold: Option<f64>,
    pub device_thresholds: Option<DeviceThresholds>,
    pub person_score_min: Option<f64>,
    pub absence_long_ms: Option<u64>,
    pub absence_recheck_min_ms: Option<u64>,
    pub evidence_clip_ms: Option<u64>,
    pub max_fps: Option<f64>,
    pub voice_threshold: Option<f64>,
    pub reference_count: Option<usize>,
    pub iou_thresholds: Option<IouThresholds>,
    pub blur_radius: Option<u32>,
    pub recheck_on_any_return: Option<bool>,

    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub frame_len: Option<usize>,
    pub hop: Option<usize>,
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub validation_fraction: Option<f64>,
}

macro_rules! overlay {
    ($src:expr, $dst:expr, $($field:ident),+) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })+
    };
}

impl CliConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: p, source })
    }

    /// Overlays the file onto `base` and validates the result.
    pub fn engine(&self, base: &EngineConfig) -> Result<EngineConfig, ConfigError> {
        let mut cfg = base.clone();
        overlay!(
            self, cfg, face_threshold, device_thresholds, person_score_min, absence_long_ms,
            absence_recheck_min_ms, evidence_clip_ms, max_fps, voice_threshold, reference_count,
            iou_thresholds, blur_radius, recheck_on_any_return
        );
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train(&self, base: &TrainParams) -> Result<TrainParams, ConfigError> {
        let mut hp = *base;
        overlay!(self, hp, learning_rate, batch_size, patience, max_epochs);
        hp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(hp)
    }

    pub fn front_end(&self) -> Result<FrontEnd, ConfigError> {
        let mut fe = FrontEnd::default();
        overlay!(self, fe, frame_len, hop);
        if !fe.frame_len.is_power_of_two() || fe.hop == 0 || fe.hop > fe.frame_len {
            return Err(ConfigError::Invalid(format!("bad framing {} / {}", fe.frame_len, fe.hop)));
        }
        Ok(fe)
    }

    pub fn cv(&self, base: &CvParams) -> Result<CvParams, ConfigError> {
        let mut p = *base;
        overlay!(self, p, k, repeats, validation_fraction);
        p.train = self.train(&base.train)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: CliConfigFile = serde_json::from_str("{}").unwrap();
        assert_eq!(c.engine(&EngineConfig::default()).unwrap(), EngineConfig::default());
        assert_eq!(c.train(&TrainParams::default()).unwrap(), TrainParams::default());
        assert_eq!(c.front_end().unwrap(), FrontEnd::default());
    }

    #[test]
    fn overlay_and_validation() {
        let c: CliConfigFile = serde_json::from_str(r#"{"face_threshold":0.5,"max_epochs":7,"hop":128}"#).unwrap();
        assert_eq!(c.engine(&EngineConfig::default()).unwrap().face_threshold, 0.5);
        assert_eq!(c.train(&TrainParams::default()).unwrap().max_epochs, 7);
        assert_eq!(c.front_end().unwrap().hop, 128);
        let bad: CliConfigFile = serde_json::from_str(r#"{"absence_long_ms":100}"#).unwrap();
        assert!(bad.engine(&EngineConfig::default()).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<CliConfigFile>(r#"{"face_treshold":0.5}"#).is_err());
    }
}
