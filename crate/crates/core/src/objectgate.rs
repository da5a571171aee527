//! Object-detection gating and the IoU accuracy harness.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Detection, FrameDetections, ObjectClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectGateError {
    #[error("score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("device thresholds must satisfy 0 <= low <= high <= 1 (got low={low}, high={high})")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("no IoU threshold configured for class `{0}`")]
    MissingThreshold(String),
}

/// Axis-aligned box in pixel units; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.w >= 0.0 && self.h >= 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = if ix > 0.0 && iy > 0.0 { ix * iy } else { 0.0 };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for DeviceThresholds {
    fn default() -> Self {
        Self { low: 0.35, high: 0.70 }
    }
}

impl DeviceThresholds {
    pub fn new(low: f64, high: f64) -> Result<Self, ObjectGateError> {
        let t = Self { low, high };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ObjectGateError> {
        if (0.0..=1.0).contains(&self.low) && (0.0..=1.0).contains(&self.high) && self.low <= self.high {
            Ok(())
        } else {
            Err(ObjectGateError::InvalidThresholds { low: self.low, high: self.high })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceClass {
    Phone,
    Laptop,
}

/// Ordered by severity: `NoFlag < GeneralSuspicious < PhoneDetection`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceVerdict {
    NoFlag,
    GeneralSuspicious,
    PhoneDetection,
}

/// Phones and laptops share one banding rule.
pub fn gate_device_score(
    _class: DeviceClass,
    score: f64,
    th: &DeviceThresholds,
) -> Result<DeviceVerdict, ObjectGateError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(ObjectGateError::InvalidScore(score));
    }
    Ok(if score < th.low {
        DeviceVerdict::NoFlag
    } else if score <= th.high {
        DeviceVerdict::GeneralSuspicious
    } else {
        DeviceVerdict::PhoneDetection
    })
}

pub fn person_count(frame: &FrameDetections, min_person_score: f64) -> usize {
    frame
        .detections
        .iter()
        .filter(|d| d.class == ObjectClass::Person && d.score >= min_person_score)
        .count()
}

/// Highest phone or laptop score in the frame, with its class.
pub fn max_device_score(frame: &FrameDetections) -> Option<(DeviceClass, f64)> {
    frame
        .detections
        .iter()
        .filter_map(|d: &Detection| match d.class {
            ObjectClass::Phone => Some((DeviceClass::Phone, d.score)),
            ObjectClass::Laptop => Some((DeviceClass::Laptop, d.score)),
            _ => None,
        })
        .fold(None, |best, cur| match best {
            Some((_, s)) if s >= cur.1 => best,
            _ => Some(cur),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedObject {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// One frame of an evaluation dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFrame {
    pub frame_id: String,
    pub gt: Vec<GroundTruthObject>,
    pub pred: Vec<PredictedObject>,
}

/// Per-class IoU thresholds, keyed by class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IouThresholds(pub BTreeMap<String, f64>);

impl Default for IouThresholds {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert(String::from("person"), 0.7);
        m.insert(String::from("laptop"), 0.5);
        m.insert(String::from("phone"), 0.3);
        Self(m)
    }
}

impl IouThresholds {
    pub fn get(&self, class: &ObjectClass) -> Result<f64, ObjectGateError> {
        let label = class.label();
        self.0
            .get(label.as_ref())
            .copied()
            .ok_or_else(|| ObjectGateError::MissingThreshold(label.into_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub accuracy: f64,
    pub iou_threshold: f64,
    pub matched: usize,
    pub total: usize,
}

/// Per-class recall of ground-truth objects at each class's IoU threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub classes: BTreeMap<String, ClassAccuracy>,
}

/// Greedy matching inside one frame. Predictions are visited by descending
/// score (ties by input order); each takes the unmatched same-class ground
/// truth with the highest IoU at or above the class threshold (ties by
/// lower index). Returns a per-ground-truth matched flag.
pub fn greedy_match(
    gt: &[GroundTruthObject],
    pred: &[PredictedObject],
    thresholds: &IouThresholds,
) -> Result<Vec<bool>, ObjectGateError> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| {
        pred[b]
            .score
            .partial_cmp(&pred[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut matched = alloc::vec![false; gt.len()];
    for p in order.into_iter().map(|i| &pred[i]) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if matched[gi] || g.class != p.class {
                continue;
            }
            let th = thresholds.get(&g.class)?;
            let v = iou(&g.bbox, &p.bbox);
            if v >= th && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            matched[gi] = true;
        }
    }
    Ok(matched)
}

/// Single-frame evaluation.
pub fn evaluate_detections(
    gt: &[GroundTruthObject],
    pred: &[PredictedObject],
    thresholds: &IouThresholds,
) -> Result<AccuracyTable, ObjectGateError> {
    let frame = EvalFrame { frame_id: String::new(), gt: gt.to_vec(), pred: pred.to_vec() };
    evaluate_frames(core::slice::from_ref(&frame), thresholds)
}

/// Dataset evaluation; matching never crosses frame boundaries.
pub fn evaluate_frames(
    frames: &[EvalFrame],
    thresholds: &IouThresholds,
) -> Result<AccuracyTable, ObjectGateError> {
    let mut counts: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for frame in frames {
        for g in &frame.gt {
            thresholds.get(&g.class)?;
        }
        let matched = greedy_match(&frame.gt, &frame.pred, thresholds)?;
        for (g, hit) in frame.gt.iter().zip(matched) {
            let th = thresholds.get(&g.class)?;
            let e = counts.entry(g.class.label().into_owned()).or_insert((0, 0, th));
            e.1 += 1;
            if hit {
                e.0 += 1;
            }
        }
    }
    let classes = counts
        .into_iter()
        .map(|(k, (m, t, th))| {
            let acc = ClassAccuracy {
                accuracy: if t == 0 { 0.0 } else { m as f64 / t as f64 },
                iou_threshold: th,
                matched: m,
                total: t,
            };
            (k, acc)
        })
        .collect();
    Ok(AccuracyTable { classes })
}
