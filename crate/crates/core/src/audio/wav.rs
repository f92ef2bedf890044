//! Minimal RIFF/WAVE codec: reads 16-bit PCM and 32-bit float, writes
//! 16-bit PCM mono. Multi-channel input is averaged down to mono.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::Waveform;

fn rd_u16(b: &[u8], at: usize) -> Result<u16> {
    let s = b
        .get(at..at + 2)
        .ok_or_else(|| Error::data("wav: truncated file".to_string()))?;
    Ok(u16::from_le_bytes([s[0], s[1]]))
}

fn rd_u32(b: &[u8], at: usize) -> Result<u32> {
    let s = b
        .get(at..at + 4)
        .ok_or_else(|| Error::data("wav: truncated file".to_string()))?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

/// Decode a WAV file to a mono waveform in [-1, 1].
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| {
        Error::data(format!("wav: cannot read {}: {e}", path.display()))
    })?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::data("wav: not a RIFF/WAVE file".to_string()));
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = rd_u32(bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(Error::data("wav: chunk extends past end of file".to_string()));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::data("wav: fmt chunk too short".to_string()));
                }
                fmt = Some((
                    rd_u16(bytes, body_start)?,
                    rd_u16(bytes, body_start + 2)?,
                    rd_u32(bytes, body_start + 4)?,
                    rd_u16(bytes, body_start + 14)?,
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::data("wav: missing fmt chunk".to_string()))?;
    let raw = data.ok_or_else(|| Error::data("wav: missing data chunk".to_string()))?;
    if channels == 0 {
        return Err(Error::data("wav: zero channels".to_string()));
    }

    let samples: Vec<f64> = match (format, bits) {
        // 16-bit PCM, scaled by 1/32768.
        (1, 16) => {
            let per = 2 * channels as usize;
            let frames = raw.len() / per;
            let mut out = Vec::with_capacity(frames);
            for f in 0..frames {
                let mut acc = 0.0;
                for c in 0..channels as usize {
                    let at = f * per + c * 2;
                    let v = i16::from_le_bytes([raw[at], raw[at + 1]]) as f64;
                    acc += v / 32768.0;
                }
                out.push(acc / channels as f64);
            }
            out
        }
        // IEEE float 32, clamped to [-1, 1].
        (3, 32) => {
            let per = 4 * channels as usize;
            let frames = raw.len() / per;
            let mut out = Vec::with_capacity(frames);
            for f in 0..frames {
                let mut acc = 0.0;
                for c in 0..channels as usize {
                    let at = f * per + c * 4;
                    let v =
                        f32::from_le_bytes([raw[at], raw[at + 1], raw[at + 2], raw[at + 3]]) as f64;
                    acc += v.clamp(-1.0, 1.0);
                }
                out.push(acc / channels as f64);
            }
            out
        }
        _ => {
            return Err(Error::data(format!(
                "wav: unsupported encoding (format {format}, {bits}-bit); only 16-bit PCM and 32-bit float are supported"
            )))
        }
    };

    if samples.is_empty() {
        return Err(Error::data("wav: zero-length audio".to_string()));
    }
    Waveform::new(samples, sample_rate)
}

/// Encode mono 16-bit PCM.
pub fn encode_wav_16bit_mono(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        // Mirror of the decode convention (sample / 32768).
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_16bit_mono(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    fs::write(path, encode_wav_16bit_mono(samples, sample_rate)).map_err(|e| {
        Error::data(format!("wav: cannot write {}: {e}", path.display()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_bytes(channels: u16, rate: u32, frames: &[Vec<i16>]) -> Vec<u8> {
        let data_len = frames.len() * channels as usize * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
        out.extend_from_slice(&(channels * 2).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for f in frames {
            for &s in f {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let frames: Vec<Vec<i16>> = vec![vec![0]; 16000];
        let w = decode_wav(&pcm16_bytes(1, 16000, &frames)).unwrap();
        assert_eq!(w.samples().len(), 16000);
        assert_eq!(w.sample_rate(), 16000);
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_averages_to_mono() {
        let frames: Vec<Vec<i16>> = vec![vec![16384, -16384]; 100];
        let w = decode_wav(&pcm16_bytes(2, 16000, &frames)).unwrap();
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm_scaling_convention() {
        let frames: Vec<Vec<i16>> = vec![vec![32767], vec![-32768]];
        let w = decode_wav(&pcm16_bytes(1, 16000, &frames)).unwrap();
        assert!((w.samples()[0] - 32767.0 / 32768.0).abs() < 1e-12);
        assert!((w.samples()[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_file_is_data_error() {
        let err = load_wav(Path::new("/nonexistent/file.wav")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/file.wav"));
    }

    #[test]
    fn unsupported_encoding_rejected() {
        // 8-bit PCM.
        let mut bytes = pcm16_bytes(1, 16000, &[vec![0]]);
        bytes[34] = 8;
        assert!(decode_wav(&bytes).is_err());
    }

    #[test]
    fn zero_length_audio_rejected() {
        let bytes = pcm16_bytes(1, 16000, &[]);
        let err = decode_wav(&bytes).unwrap_err();
        assert!(err.to_string().contains("zero-length"));
    }

    #[test]
    fn roundtrip_16bit() {
        let samples: Vec<f64> = (0..512)
            .map(|i| (i as f64 * 0.05).sin() * 0.8)
            .collect();
        let bytes = encode_wav_16bit_mono(&samples, 16000);
        let w = decode_wav(&bytes).unwrap();
        for (a, b) in samples.iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn float32_decodes_and_clamps() {
        let mut out = Vec::new();
        let vals: [f32; 3] = [0.5, -0.25, 1.5];
        let data_len = vals.len() * 4;
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&3u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&16000u32.to_le_bytes());
        out.extend_from_slice(&(16000u32 * 4).to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&32u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let w = decode_wav(&out).unwrap();
        assert_eq!(w.samples(), &[0.5, -0.25, 1.0]);
    }
}
