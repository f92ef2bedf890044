//! Independent brute-force reimplementations used as oracles. These are
//! written as plain textbook loops, deliberately sharing no code with the
//! library kernels they check.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `|a - n| <= tol * max(1, |a|, |n|)`.
pub fn close_rel(a: f64, n: f64, tol: f64) -> bool {
    (a - n).abs() <= tol * a.abs().max(n.abs()).max(1.0)
}

pub fn assert_close_rel(a: f64, n: f64, tol: f64, what: &str) {
    assert!(
        close_rel(a, n, tol),
        "{what}: {a} vs {n} (diff {})",
        (a - n).abs()
    );
}

/// Textbook DFT power spectrum: for each bin, accumulate
/// cos/sin of `2 pi ((k n) mod N) / N` in explicit loops.
pub fn oracle_dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let mut out = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &x) in frame.iter().enumerate() {
            let angle = 2.0 * PI * ((k * i) % n) as f64 / n as f64;
            re += x * angle.cos();
            im -= x * angle.sin();
        }
        out.push(re * re + im * im);
    }
    out
}

fn oracle_hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn oracle_mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0_f64.powf(m / 2595.0) - 1.0)
}

/// MFCC recomputed end to end: Hann window, power spectrum, triangular
/// mel filterbank built from scratch, log with the 1e-10 floor,
/// orthonormal DCT-II.
pub fn oracle_mfcc(frame: &[f64], sample_rate: u32, n_mels: usize, n_mfcc: usize) -> Vec<f64> {
    let n = frame.len();
    let mut windowed = vec![0.0; n];
    for i in 0..n {
        let w = if n == 1 {
            1.0
        } else {
            0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        };
        windowed[i] = frame[i] * w;
    }
    let power = oracle_dft_power(&windowed);
    let n_bins = power.len();
    let nyquist = sample_rate as f64 / 2.0;

    let mel_max = oracle_hz_to_mel(nyquist);
    let mut anchors = vec![0.0; n_mels + 2];
    for (i, a) in anchors.iter_mut().enumerate() {
        *a = oracle_mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64);
    }

    let mut log_energies = vec![0.0; n_mels];
    for j in 0..n_mels {
        let (lo, mid, hi) = (anchors[j], anchors[j + 1], anchors[j + 2]);
        let mut acc = 0.0;
        for (k, &p) in power.iter().enumerate() {
            let f = nyquist * k as f64 / (n_bins - 1) as f64;
            let weight = if f > lo && f < mid {
                (f - lo) / (mid - lo)
            } else if f == mid {
                1.0
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            acc += weight * p;
        }
        log_energies[j] = (acc + 1e-10).ln();
    }

    let mut coeffs = vec![0.0; n_mfcc];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &e) in log_energies.iter().enumerate() {
            acc += e * (PI * (i as f64 + 0.5) * k as f64 / n_mels as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / n_mels as f64).sqrt()
        } else {
            (2.0 / n_mels as f64).sqrt()
        };
        *c = scale * acc;
    }
    coeffs
}

/// Regression deltas evaluated directly from the defining formula with
/// replicated edges; returns (first-order, second-order).
pub fn oracle_deltas(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t_len = rows.len();
    let dim = rows[0].len();
    let one = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; dim]; t_len];
        for t in 0..t_len as i64 {
            for d in 0..dim {
                let grab = |idx: i64| src[idx.clamp(0, t_len as i64 - 1) as usize][d];
                let num = 1.0 * (grab(t + 1) - grab(t - 1)) + 2.0 * (grab(t + 2) - grab(t - 2));
                out[t as usize][d] = num / (2.0 * (1.0 + 4.0));
            }
        }
        out
    };
    let first = one(rows);
    let second = one(&first);
    (first, second)
}

pub fn oracle_zcr(frame: &[f64]) -> f64 {
    let mut changes = 0usize;
    for i in 1..frame.len() {
        let a = frame[i - 1] >= 0.0;
        let b = frame[i] >= 0.0;
        if a != b {
            changes += 1;
        }
    }
    changes as f64 / (frame.len() - 1) as f64
}

pub fn oracle_loudness(frame: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &x in frame {
        sum += x * x;
    }
    10.0 * (sum / frame.len() as f64 + 1e-10).log10()
}

pub fn oracle_energy(frame: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &x in frame {
        sum += x * x;
    }
    sum
}
