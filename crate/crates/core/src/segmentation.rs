//! Candidate attribution and background blurring for evidence frames.
//!
//! The candidate is the person mask that contains at least four of the five
//! facial keypoints. Everything outside that mask is box-blurred; when no
//! mask qualifies the whole frame is blurred.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BLUR_RADIUS: u32 = 9;
pub const MIN_KEYPOINTS_INSIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentationError {
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch { expected_w: u32, expected_h: u32, got_w: u32, got_h: u32 },
    #[error("buffer holds {got} values, expected {expected}")]
    BadBuffer { expected: usize, got: usize },
    #[error("blur radius must be at least 1")]
    InvalidRadius,
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: alloc::boxed::Box<SegmentationError> },
    #[error("{frames} frames but {masks} mask lists and {keypoints} keypoint entries")]
    Misaligned { frames: usize, masks: usize, keypoints: usize },
}

/// 8-bit RGB frame, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, SegmentationError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(SegmentationError::BadBuffer { expected, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Binary person mask from the segmentation network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonMask {
    id: u32,
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl PersonMask {
    pub fn new(id: u32, width: u32, height: u32, bits: Vec<bool>) -> Result<Self, SegmentationError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(SegmentationError::BadBuffer { expected, got: bits.len() });
        }
        Ok(Self { id, width, height, bits })
    }

    pub fn from_fn(id: u32, width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { id, width, height, bits }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// A keypoint lies in the mask when the pixel it falls on is set.
    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        if !(p[0] >= 0.0 && p[1] >= 0.0) {
            return false;
        }
        let (x, y) = (libm::floor(p[0]), libm::floor(p[1]));
        if x >= self.width as f64 || y >= self.height as f64 {
            return false;
        }
        self.get(x as u32, y as u32)
    }
}

/// Left eye, right eye, nose, left mouth corner, right mouth corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaceKeypoints(pub [[f64; 2]; 5]);

impl FaceKeypoints {
    pub fn inside(&self, width: u32, height: u32) -> bool {
        self.0
            .iter()
            .all(|p| p[0] >= 0.0 && p[1] >= 0.0 && p[0] < width as f64 && p[1] < height as f64)
    }
}

fn check_dims(w: u32, h: u32, got_w: u32, got_h: u32) -> Result<(), SegmentationError> {
    if w == got_w && h == got_h {
        Ok(())
    } else {
        Err(SegmentationError::DimensionMismatch { expected_w: w, expected_h: h, got_w, got_h })
    }
}

/// Picks the mask holding at least four keypoints. Among several, the one
/// with more keypoints wins, then the larger area, then the lower id.
pub fn attribute_candidate_mask(
    masks: &[PersonMask],
    kp: &FaceKeypoints,
) -> Result<Option<u32>, SegmentationError> {
    let Some(first) = masks.first() else {
        return Ok(None);
    };
    for m in masks {
        check_dims(first.width, first.height, m.width, m.height)?;
    }
    let best = masks
        .iter()
        .map(|m| (m, kp.0.iter().filter(|p| m.contains_point(**p)).count()))
        .filter(|(_, n)| *n >= MIN_KEYPOINTS_INSIDE)
        .map(|(m, n)| (n, m.area(), m.id))
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)));
    Ok(best.map(|(_, _, id)| id))
}

/// Box blur of side `2 * radius + 1` with edge clamping, rounded half up.
pub fn box_blur(f: &Frame, radius: u32) -> Result<Frame, SegmentationError> {
    if radius == 0 {
        return Err(SegmentationError::InvalidRadius);
    }
    let (w, h) = (f.width as usize, f.height as usize);
    if w == 0 || h == 0 {
        return Ok(f.clone());
    }
    let r = radius as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    // horizontal pass: per-pixel sums over clamped columns
    let mut rows = alloc::vec![0u32; w * h * 3];
    for y in 0..h {
        for c in 0..3 {
            let at = |x: usize| f.pixels[(y * w + x) * 3 + c] as u32;
            let mut sum: u32 = (-r..=r).map(|dx| at(clamp(dx, w))).sum();
            for x in 0..w {
                rows[(y * w + x) * 3 + c] = sum;
                let out = clamp(x as isize - r, w);
                let inn = clamp(x as isize + r + 1, w);
                sum = sum + at(inn) - at(out);
            }
        }
    }
    // vertical pass over the row sums
    let count = ((2 * radius + 1) * (2 * radius + 1)) as u64;
    let mut pixels = alloc::vec![0u8; w * h * 3];
    for x in 0..w {
        for c in 0..3 {
            let at = |y: usize| rows[(y * w + x) * 3 + c] as u64;
            let mut sum: u64 = (-r..=r).map(|dy| at(clamp(dy, h))).sum();
            for y in 0..h {
                pixels[(y * w + x) * 3 + c] = ((2 * sum + count) / (2 * count)) as u8;
                let out = clamp(y as isize - r, h);
                let inn = clamp(y as isize + r + 1, h);
                sum = sum + at(inn) - at(out);
            }
        }
    }
    Ok(Frame { width: f.width, height: f.height, pixels })
}

/// Keeps candidate pixels and replaces everything else with the blurred
/// frame. Without a candidate the whole frame is blurred.
pub fn blur_frame(f: &Frame, candidate: Option<&PersonMask>, radius: u32) -> Result<Frame, SegmentationError> {
    if let Some(m) = candidate {
        check_dims(f.width, f.height, m.width, m.height)?;
    }
    let mut out = box_blur(f, radius)?;
    if let Some(m) = candidate {
        for (i, &keep) in m.bits.iter().enumerate() {
            if keep {
                out.pixels[i * 3..i * 3 + 3].copy_from_slice(&f.pixels[i * 3..i * 3 + 3]);
            }
        }
    }
    Ok(out)
}

/// Attribution followed by blurring, frame by frame, with no tracking across
/// frames. A frame without keypoints has no identifiable candidate.
pub fn process_evidence_frames(
    frames: &[Frame],
    masks: &[Vec<PersonMask>],
    keypoints: &[Option<FaceKeypoints>],
    radius: u32,
) -> Result<Vec<Frame>, SegmentationError> {
    if frames.len() != masks.len() || frames.len() != keypoints.len() {
        return Err(SegmentationError::Misaligned {
            frames: frames.len(),
            masks: masks.len(),
            keypoints: keypoints.len(),
        });
    }
    frames
        .iter()
        .zip(masks)
        .zip(keypoints)
        .enumerate()
        .map(|(index, ((f, ms), kp))| {
            process_one(f, ms, kp.as_ref(), radius)
                .map_err(|e| SegmentationError::Frame { index, source: alloc::boxed::Box::new(e) })
        })
        .collect()
}

fn process_one(
    f: &Frame,
    masks: &[PersonMask],
    kp: Option<&FaceKeypoints>,
    radius: u32,
) -> Result<Frame, SegmentationError> {
    for m in masks {
        check_dims(f.width, f.height, m.width, m.height)?;
    }
    let id = match kp {
        Some(kp) => attribute_candidate_mask(masks, kp)?,
        None => None,
    };
    let candidate = id.and_then(|id| masks.iter().find(|m| m.id == id));
    blur_frame(f, candidate, radius)
}
