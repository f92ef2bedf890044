//! Audio frontend: waveform loading, video-rate framing, and the
//! 45-dimensional per-frame feature sequence
//! (14 MFCC + 28 MFCC-delta + ZCR + loudness + energy) at 30 fps.

pub mod dsp;
pub mod wav;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use wav::{load_wav, write_wav_16bit_mono};

/// Video frame rate the feature rows are aligned to.
pub const FEATURE_FPS: u32 = 30;
/// Number of base cepstral coefficients.
pub const N_MFCC: usize = 14;
/// Total feature columns: 14 MFCC + 28 deltas + zcr + loudness + energy.
pub const FEATURE_DIM: usize = 45;

/// Mono audio in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Waveform> {
        if samples.is_empty() {
            return Err(Error::data("waveform: empty sample buffer".to_string()));
        }
        if sample_rate < 8000 {
            return Err(Error::data(format!(
                "waveform: sample rate {sample_rate} below 8000 Hz"
            )));
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::data(
                "waveform: samples must be finite and within [-1, 1]".to_string(),
            ));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis parameters for feature extraction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrontendConfig {
    /// Analysis window length in samples, centered on each video frame.
    pub window_len: usize,
    /// Mel filterbank size.
    pub n_mels: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            window_len: 1024,
            n_mels: 26,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::config(format!(
                "frontend.window_len must be >= 2, got {}",
                self.window_len
            )));
        }
        if self.n_mels < N_MFCC {
            return Err(Error::config(format!(
                "frontend.n_mels must be >= {N_MFCC}, got {}",
                self.n_mels
            )));
        }
        Ok(())
    }
}

/// Per-video-frame feature rows, `T x 45`, at 30 fps.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatureSequence {
    rows: Vec<[f64; FEATURE_DIM]>,
}

impl AcousticFeatureSequence {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; FEATURE_DIM]] {
        &self.rows
    }

    /// Channel-major `[45, T]` tensor for the model.
    pub fn to_tensor(&self) -> Tensor {
        let t_len = self.rows.len();
        let mut data = vec![0.0; FEATURE_DIM * t_len];
        for (t, row) in self.rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                data[c * t_len + t] = v;
            }
        }
        Tensor::from_raw(vec![FEATURE_DIM, t_len], data)
    }

    /// CSV with the canonical 45-column header, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&csv_header());
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_sig9(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Canonical feature CSV header.
pub fn csv_header() -> String {
    let mut cols = Vec::with_capacity(FEATURE_DIM);
    for i in 0..N_MFCC {
        cols.push(format!("mfcc{i:02}"));
    }
    for i in 0..N_MFCC {
        cols.push(format!("d1_{i:02}"));
    }
    for i in 0..N_MFCC {
        cols.push(format!("d2_{i:02}"));
    }
    cols.push("zcr".to_string());
    cols.push("loudness".to_string());
    cols.push("energy".to_string());
    cols.join(",")
}

/// Format with 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Number of video-aligned frames for a waveform: `floor(duration * fps)`,
/// computed exactly in integer arithmetic.
pub fn frame_count(n_samples: usize, sample_rate: u32, fps: u32) -> usize {
    (n_samples as u64 * fps as u64 / sample_rate as u64) as usize
}

/// Slice the waveform into `frame_count` windows of `window_len` samples,
/// frame `i` centered at sample `round(i * sample_rate / fps)`, zero-padded
/// at the signal boundaries.
pub fn frame_for_video(w: &Waveform, fps: u32, window_len: usize) -> Result<Vec<Vec<f64>>> {
    if window_len < 2 {
        return Err(Error::contract(
            "frame_for_video: window_len must be >= 2".to_string(),
        ));
    }
    let n = w.samples.len() as i64;
    let count = frame_count(w.samples.len(), w.sample_rate, fps);
    let half = (window_len / 2) as i64;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let center = (i as f64 * w.sample_rate as f64 / fps as f64).round() as i64;
        let start = center - half;
        let mut frame = Vec::with_capacity(window_len);
        for k in 0..window_len as i64 {
            let idx = start + k;
            frame.push(if idx >= 0 && idx < n {
                w.samples[idx as usize]
            } else {
                0.0
            });
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Full feature pipeline: one 45-wide row per video frame.
pub fn extract_features(w: &Waveform, config: &FrontendConfig) -> Result<AcousticFeatureSequence> {
    config.validate()?;
    let frames = frame_for_video(w, FEATURE_FPS, config.window_len)?;

    let mfcc_rows: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| dsp::mfcc(f, w.sample_rate, config.n_mels, N_MFCC))
        .collect::<Result<_>>()?;
    let delta_rows = dsp::delta_features(&mfcc_rows);

    let mut rows = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let mut row = [0.0; FEATURE_DIM];
        row[..N_MFCC].copy_from_slice(&mfcc_rows[i]);
        row[N_MFCC..N_MFCC + 2 * N_MFCC].copy_from_slice(&delta_rows[i]);
        row[42] = dsp::zcr(frame)?;
        row[43] = dsp::loudness(frame)?;
        row[44] = dsp::energy(frame)?;
        rows.push(row);
    }
    Ok(AcousticFeatureSequence { rows })
}

/// Convenience: decode a WAV file and extract features.
pub fn extract_features_from_file(
    path: &Path,
    config: &FrontendConfig,
) -> Result<AcousticFeatureSequence> {
    let w = load_wav(path)?;
    extract_features(&w, config)
}
