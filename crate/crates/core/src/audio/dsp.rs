//! Per-frame signal measurements: MFCC (Hann window, direct DFT,
//! triangular mel filterbank, orthonormal DCT-II), temporal regression
//! deltas, zero crossing rate, loudness, and energy.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Floor added before logarithms so silence stays finite.
pub const LOG_EPS: f64 = 1e-10;

/// Symmetric Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Magnitude spectrum `|X[k]|` for `k = 0 ..= n/2` via a direct DFT with
/// a precomputed twiddle table. Twiddle angles are reduced modulo `n`
/// exactly in integer arithmetic, so phases never lose precision.
pub fn dft_magnitude(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let half = n / 2;
    let mut cos_t = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    for m in 0..n {
        let a = 2.0 * PI * m as f64 / n as f64;
        cos_t[m] = a.cos();
        sin_t[m] = a.sin();
    }
    let mut mags = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &x) in frame.iter().enumerate() {
            let m = (k * i) % n;
            re += x * cos_t[m];
            im -= x * sin_t[m];
        }
        mags.push((re * re + im * im).sqrt());
    }
    mags
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank: `n_mels` filters spanning 0 Hz to
/// `sample_rate / 2`, applied to a magnitude spectrum of `n_bins`
/// points covering that range.
pub fn mel_filterbank(n_mels: usize, n_bins: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    // n_mels + 2 anchor frequencies, equally spaced on the mel scale.
    let anchors: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| nyquist * k as f64 / (n_bins - 1) as f64;

    let mut filters = Vec::with_capacity(n_mels);
    for j in 1..=n_mels {
        let (lo, mid, hi) = (anchors[j - 1], anchors[j], anchors[j + 1]);
        let mut filt = vec![0.0; n_bins];
        for (k, w) in filt.iter_mut().enumerate() {
            let f = bin_hz(k);
            if f > lo && f < mid {
                *w = (f - lo) / (mid - lo);
            } else if f == mid {
                *w = 1.0;
            } else if f > mid && f < hi {
                *w = (hi - f) / (hi - mid);
            }
        }
        filters.push(filt);
    }
    filters
}

/// Orthonormal DCT-II: `y[k] = s(k) * sum_n x[n] cos(pi (n + 1/2) k / N)`
/// with `s(0) = sqrt(1/N)` and `s(k) = sqrt(2/N)` otherwise.
pub fn dct_ii_orthonormal(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let mut acc = 0.0;
        for (i, &v) in x.iter().enumerate() {
            acc += v * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        out.push(scale * acc);
    }
    out
}

/// MFCC of one frame: Hann window, power spectrum via direct DFT,
/// triangular mel filterbank over the power spectrum, `log(e + eps)`,
/// DCT-II, first `n_mfcc` coefficients (0th included).
pub fn mfcc(frame: &[f64], sample_rate: u32, n_mels: usize, n_mfcc: usize) -> Result<Vec<f64>> {
    if frame.len() < 2 {
        return Err(Error::contract("mfcc: frame length must be >= 2".to_string()));
    }
    if n_mfcc > n_mels {
        return Err(Error::contract(format!(
            "mfcc: n_mfcc {n_mfcc} exceeds n_mels {n_mels}"
        )));
    }
    let window = hann_window(frame.len());
    let windowed: Vec<f64> = frame.iter().zip(&window).map(|(x, w)| x * w).collect();
    let power: Vec<f64> = dft_magnitude(&windowed).iter().map(|m| m * m).collect();
    let filters = mel_filterbank(n_mels, power.len(), sample_rate);
    let log_energies: Vec<f64> = filters
        .iter()
        .map(|filt| {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            (e + LOG_EPS).ln()
        })
        .collect();
    Ok(dct_ii_orthonormal(&log_energies, n_mfcc))
}

/// First- and second-order regression deltas with window `N = 2`:
/// `d_t = sum_{n=1..2} n (x_{t+n} - x_{t-n}) / (2 sum n^2)`, edge frames
/// replicated. Output rows are `[first-order | second-order]`.
pub fn delta_features(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t_len = rows.len();
    if t_len == 0 {
        return Vec::new();
    }
    let dim = rows[0].len();
    let first = regression_delta(rows, t_len, dim);
    let second = regression_delta(&first, t_len, dim);
    (0..t_len)
        .map(|t| {
            let mut row = Vec::with_capacity(2 * dim);
            row.extend_from_slice(&first[t]);
            row.extend_from_slice(&second[t]);
            row
        })
        .collect()
}

fn regression_delta(rows: &[Vec<f64>], t_len: usize, dim: usize) -> Vec<Vec<f64>> {
    const N: i64 = 2;
    const DENOM: f64 = 10.0; // 2 * (1^2 + 2^2)
    let clamp = |t: i64| rows[t.clamp(0, t_len as i64 - 1) as usize].as_slice();
    (0..t_len as i64)
        .map(|t| {
            (0..dim)
                .map(|d| {
                    let mut acc = 0.0;
                    for n in 1..=N {
                        acc += n as f64 * (clamp(t + n)[d] - clamp(t - n)[d]);
                    }
                    acc / DENOM
                })
                .collect()
        })
        .collect()
}

/// Fraction of adjacent sample pairs with a strict sign change; zero
/// counts as non-negative.
pub fn zcr(frame: &[f64]) -> Result<f64> {
    if frame.len() < 2 {
        return Err(Error::contract("zcr: frame length must be >= 2".to_string()));
    }
    let non_neg = |x: f64| x >= 0.0;
    let changes = frame
        .windows(2)
        .filter(|w| non_neg(w[0]) != non_neg(w[1]))
        .count();
    Ok(changes as f64 / (frame.len() - 1) as f64)
}

/// Mean-square level in dB: `10 log10(mean(x^2) + eps)`.
pub fn loudness(frame: &[f64]) -> Result<f64> {
    if frame.is_empty() {
        return Err(Error::contract("loudness: frame must be non-empty".to_string()));
    }
    let ms = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
    Ok(10.0 * (ms + LOG_EPS).log10())
}

/// Sum of squared samples.
pub fn energy(frame: &[f64]) -> Result<f64> {
    if frame.is_empty() {
        return Err(Error::contract("energy: frame must be non-empty".to_string()));
    }
    Ok(frame.iter().map(|x| x * x).sum())
}
