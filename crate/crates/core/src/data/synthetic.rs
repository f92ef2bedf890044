//! Deterministic synthetic clips: seeded multi-tone audio with an
//! amplitude envelope, and ground-truth coefficients that are fixed
//! smooth causal functions of the audio's per-frame loudness and zero
//! crossing rate. The audio -> coefficient mapping is therefore exactly
//! learnable from the acoustic features.

use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{self, dsp, FrontendConfig, Waveform, FEATURE_FPS};
use crate::error::{Error, Result};
use crate::model::{CoeffDims, CoeffFrame, CoeffSequence};
use crate::rng::DetRng;

use super::MANIFEST_HEADER;

pub const SYNTH_SAMPLE_RATE: u32 = 16000;

/// Generate `n_clips` clips under `out_dir` and write the manifest.
/// Returns the manifest path. Byte-identical for identical arguments.
pub fn generate_synthetic(
    out_dir: &Path,
    seed: u64,
    n_clips: usize,
    duration_s: f64,
    dims: &CoeffDims,
) -> Result<PathBuf> {
    if n_clips < 1 {
        return Err(Error::config("synthetic: n_clips must be >= 1".to_string()));
    }
    if !duration_s.is_finite() || duration_s < 0.5 {
        return Err(Error::config(
            "synthetic: duration must be >= 0.5 seconds".to_string(),
        ));
    }
    dims.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::data(format!("synthetic: cannot create {}: {e}", out_dir.display())))?;

    let master = DetRng::new(seed);
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    let attitudes = ["positive", "natural", "negative"];

    for i in 0..n_clips {
        let mut rng = master.derive(i as u64 + 1);
        let samples = tone_mixture(&mut rng, duration_s);
        let wav_name = format!("clip_{i:03}.wav");
        let csv_name = format!("clip_{i:03}.csv");
        audio::write_wav_16bit_mono(&out_dir.join(&wav_name), &samples, SYNTH_SAMPLE_RATE)?;

        // Targets are derived from the quantized signal exactly as a
        // loader will see it.
        let quantized: Vec<f64> = samples
            .iter()
            .map(|&s| {
                (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0
            })
            .collect();
        let waveform = Waveform::new(quantized, SYNTH_SAMPLE_RATE)?;
        let coeffs = coefficients_from_audio(&waveform, dims)?;
        super::save_coeffs(&coeffs, &out_dir.join(&csv_name))?;

        manifest.push_str(&format!(
            "clip_{i:03},{wav_name},{csv_name},0,{},train\n",
            attitudes[i % attitudes.len()]
        ));
    }

    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| {
        Error::data(format!(
            "synthetic: cannot write {}: {e}",
            manifest_path.display()
        ))
    })?;
    Ok(manifest_path)
}

/// 2-4 seeded sine tones under a seeded piecewise-linear envelope,
/// peak-normalized to 0.85.
fn tone_mixture(rng: &mut DetRng, duration_s: f64) -> Vec<f64> {
    let n = (duration_s * SYNTH_SAMPLE_RATE as f64).round() as usize;
    let n_tones = 2 + rng.below(3);
    let tones: Vec<(f64, f64)> = (0..n_tones)
        .map(|_| (rng.uniform(80.0, 1000.0), rng.uniform(0.3, 1.0)))
        .collect();

    let n_knots = 4 + rng.below(4);
    let knots: Vec<f64> = (0..n_knots).map(|_| rng.uniform(0.15, 1.0)).collect();
    let envelope = |t: f64| -> f64 {
        // t in [0, 1), piecewise linear through the knots.
        let x = t * (n_knots - 1) as f64;
        let k = (x.floor() as usize).min(n_knots - 2);
        let frac = x - k as f64;
        knots[k] * (1.0 - frac) + knots[k + 1] * frac
    };

    let mut samples: Vec<f64> = (0..n)
        .map(|s| {
            let t = s as f64 / SYNTH_SAMPLE_RATE as f64;
            let env = envelope(s as f64 / n as f64);
            let tone: f64 = tones
                .iter()
                .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum();
            env * tone
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let scale = 0.85 / peak;
    for s in &mut samples {
        *s *= scale;
    }
    samples
}

/// Fixed smooth causal functions of per-frame loudness and ZCR:
/// angle tracks causally smoothed normalized loudness, translation tracks
/// ZCR, expression tracks lagged loudness.
pub fn coefficients_from_audio(waveform: &Waveform, dims: &CoeffDims) -> Result<CoeffSequence> {
    let window_len = FrontendConfig::default().window_len;
    let frames = audio::frame_for_video(waveform, FEATURE_FPS, window_len)?;
    let loud_norm: Vec<f64> = frames
        .iter()
        .map(|f| dsp::loudness(f).map(|db| (db + 100.0) / 100.0))
        .collect::<Result<_>>()?;
    let zcr: Vec<f64> = frames.iter().map(|f| dsp::zcr(f)).collect::<Result<_>>()?;

    // Causal smoothing over the last 4 frames.
    let smoothed: Vec<f64> = (0..loud_norm.len())
        .map(|t| {
            let lo = t.saturating_sub(3);
            let window = &loud_norm[lo..=t];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect();

    let angle_gain = [0.5, -0.4, 0.3];
    let trans_gain = [0.6, -0.5, 0.35];
    let out = (0..frames.len())
        .map(|t| {
            let angle: Vec<f64> = (0..dims.angle)
                .map(|k| angle_gain[k % 3] * smoothed[t] * ((k / 3) as f64 * 0.1 + 1.0))
                .collect();
            let translation: Vec<f64> = (0..dims.translation)
                .map(|k| trans_gain[k % 3] * zcr[t] * ((k / 3) as f64 * 0.1 + 1.0))
                .collect();
            let expression: Vec<f64> = (0..dims.expression)
                .map(|j| {
                    let lag = 1 + j % 3;
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    let gain = 0.4 * sign * (1.0 - j as f64 / (2.0 * dims.expression as f64));
                    gain * loud_norm[t.saturating_sub(lag)]
                })
                .collect();
            CoeffFrame {
                angle,
                translation,
                expression,
            }
        })
        .collect();
    CoeffSequence::new(*dims, out)
}
