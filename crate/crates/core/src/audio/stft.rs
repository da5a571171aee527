//! Short-time Fourier transform.
//!
//! Each frame is multiplied by a periodic Hann window and transformed with
//! an iterative radix-2 FFT. Magnitudes are unnormalized `|X_k|` for bins
//! `0..=frame_len/2`, so a full-frame transform satisfies
//! `sum_k |X_k|^2 = frame_len * sum_n (w_n x_n)^2`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{AudioError, PcmWindow};

/// Magnitude matrix, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    frame_len: usize,
    hop: usize,
    magnitudes: Vec<f64>,
}

impl Spectrogram {
    pub fn from_parts(frames: usize, bins: usize, frame_len: usize, hop: usize, magnitudes: Vec<f64>) -> Self {
        assert_eq!(magnitudes.len(), frames * bins, "magnitude buffer does not match shape");
        Self { frames, bins, frame_len, hop, magnitudes }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.magnitudes[i * self.bins..(i + 1) * self.bins]
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.magnitudes[frame * self.bins + bin]
    }

    /// `log(1 + m)` applied element-wise.
    pub fn log_compressed(&self) -> Spectrogram {
        Spectrogram {
            frames: self.frames,
            bins: self.bins,
            frame_len: self.frame_len,
            hop: self.hop,
            magnitudes: self.magnitudes.iter().map(|&m| libm::log1p(m)).collect(),
        }
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64)).collect()
}

/// In-place iterative radix-2 FFT. `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert!(n.is_power_of_two() && im.len() == n);
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<(f64, f64)> = (0..half)
            .map(|k| (libm::cos(ang * k as f64), libm::sin(ang * k as f64)))
            .collect();
        for start in (0..n).step_by(len) {
            for (k, &(wr, wi)) in twiddles.iter().enumerate() {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Magnitude spectrogram of a one-second window (pre-log).
pub fn stft_spectrogram(w: &PcmWindow, frame_len: usize, hop: usize) -> Result<Spectrogram, AudioError> {
    stft_samples(&w.samples, frame_len, hop)
}

pub fn stft_samples(samples: &[f32], frame_len: usize, hop: usize) -> Result<Spectrogram, AudioError> {
    if !frame_len.is_power_of_two() || hop == 0 || hop > frame_len {
        return Err(AudioError::BadFraming { frame_len, hop });
    }
    if samples.len() < frame_len {
        return Err(AudioError::WindowTooShort { len: samples.len(), frame_len });
    }
    let frames = (samples.len() - frame_len) / hop + 1;
    let bins = frame_len / 2 + 1;
    let window = hann(frame_len);
    let mut magnitudes = Vec::with_capacity(frames * bins);
    let mut re = alloc::vec![0.0; frame_len];
    let mut im = alloc::vec![0.0; frame_len];
    for f in 0..frames {
        let chunk = &samples[f * hop..f * hop + frame_len];
        for ((r, &s), &wv) in re.iter_mut().zip(chunk).zip(&window) {
            *r = s as f64 * wv;
        }
        im.iter_mut().for_each(|v| *v = 0.0);
        fft_in_place(&mut re, &mut im);
        magnitudes.extend((0..bins).map(|k| libm::hypot(re[k], im[k])));
    }
    Ok(Spectrogram { frames, bins, frame_len, hop, magnitudes })
}
