//! Evaluation metric suite: per-group L1 coefficient distance (x100) and
//! the image metrics SSIM, PSNR, and CPBD on rendered or synthetic frames.

pub mod image;

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::CoeffSequence;

pub use image::{load_png, save_png, GrayImage};

/// Per-group mean absolute coefficient error, pre-multiplied by 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureDistanceReport {
    pub angle: f64,
    pub expression: f64,
    pub translation: f64,
}

/// `100 * mean(|pred - gt|)` over all frames and components, per group.
pub fn feature_distance(pred: &CoeffSequence, gt: &CoeffSequence) -> Result<FeatureDistanceReport> {
    if pred.len() != gt.len() || pred.dims() != gt.dims() {
        return Err(Error::contract(format!(
            "feature_distance: {} frames {:?} vs {} frames {:?}",
            pred.len(),
            pred.dims(),
            gt.len(),
            gt.dims()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("feature_distance: empty sequences".to_string()));
    }
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for (p, g) in pred.frames().iter().zip(gt.frames()) {
        for (a, b) in p.angle.iter().zip(&g.angle) {
            sums[0] += (a - b).abs();
            counts[0] += 1;
        }
        for (a, b) in p.expression.iter().zip(&g.expression) {
            sums[1] += (a - b).abs();
            counts[1] += 1;
        }
        for (a, b) in p.translation.iter().zip(&g.translation) {
            sums[2] += (a - b).abs();
            counts[2] += 1;
        }
    }
    Ok(FeatureDistanceReport {
        angle: 100.0 * sums[0] / counts[0] as f64,
        expression: 100.0 * sums[1] / counts[1] as f64,
        translation: 100.0 * sums[2] / counts[2] as f64,
    })
}

/// Peak signal-to-noise ratio in dB; identical images give +infinity.
pub fn psnr(a: &GrayImage, b: &GrayImage, peak: f64) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::contract(format!(
            "psnr: dimension mismatch {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_C1: f64 = 6.5025; // (0.01 * 255)^2
const SSIM_C2: f64 = 58.5225; // (0.03 * 255)^2

/// Reference SSIM: 11x11 Gaussian window (sigma 1.5), averaged over all
/// fully-contained window positions. For images narrower than the window
/// the window shrinks to the smaller dimension.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::contract(format!(
            "ssim: dimension mismatch {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let min_dim = a.height().min(a.width());
    if min_dim < 8 {
        return Err(Error::contract(format!(
            "ssim: images must be at least 8x8, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let win = 11.min(min_dim);
    let sigma = 1.5;
    let center = (win - 1) as f64 / 2.0;
    let mut weights = Vec::with_capacity(win * win);
    for i in 0..win {
        for j in 0..win {
            let d2 = (i as f64 - center).powi(2) + (j as f64 - center).powi(2);
            weights.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }

    let mut total = 0.0;
    let mut positions = 0usize;
    for y0 in 0..=a.height() - win {
        for x0 in 0..=a.width() - win {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let w = weights[i * win + j];
                    let va = a.at(y0 + i, x0 + j);
                    let vb = b.at(y0 + i, x0 + j);
                    mu_a += w * va;
                    mu_b += w * vb;
                    aa += w * va * va;
                    bb += w * vb * vb;
                    ab += w * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let local = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
            total += local;
            positions += 1;
        }
    }
    Ok(total / positions as f64)
}

/// Constants of the blur-detection probability model.
#[derive(Debug, Clone, Copy)]
pub struct CpbdConfig {
    /// Sobel gradient magnitude above which a pixel counts as an edge.
    pub edge_threshold: f64,
    /// Exponent of the blur-detection probability.
    pub beta: f64,
    /// Just-noticeable-blur width for local contrast <= contrast_split.
    pub jnb_width_low_contrast: f64,
    /// Just-noticeable-blur width for higher contrast.
    pub jnb_width_high_contrast: f64,
    pub contrast_split: f64,
    /// Probability below which an edge counts as sharp.
    pub detection_threshold: f64,
}

impl Default for CpbdConfig {
    fn default() -> Self {
        CpbdConfig {
            edge_threshold: 100.0,
            beta: 3.6,
            jnb_width_low_contrast: 5.0,
            jnb_width_high_contrast: 3.0,
            contrast_split: 50.0,
            detection_threshold: 0.63,
        }
    }
}

/// CPBD result; `zero_edges` flags the degenerate constant-image case,
/// which reports 1.0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpbdResult {
    pub value: f64,
    pub zero_edges: bool,
}

/// Cumulative probability of blur detection: Sobel edge pixels, per-pixel
/// edge-width measurement along the dominant gradient direction, blur
/// probability `1 - exp(-(w / w_jnb)^beta)` with a contrast-dependent
/// just-noticeable-blur width; the score is the fraction of edge pixels
/// whose probability stays below the detection threshold.
pub fn cpbd(img: &GrayImage, cfg: &CpbdConfig) -> Result<CpbdResult> {
    if img.height() < 16 || img.width() < 16 {
        return Err(Error::contract(format!(
            "cpbd: images must be at least 16x16, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height() as i64, img.width() as i64);
    let at = |y: i64, x: i64| img.at(y as usize, x as usize);

    let mut edges = 0usize;
    let mut sharp = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = -at(y - 1, x - 1) + at(y - 1, x + 1) - 2.0 * at(y, x - 1)
                + 2.0 * at(y, x + 1)
                - at(y + 1, x - 1)
                + at(y + 1, x + 1);
            let gy = -at(y - 1, x - 1) - 2.0 * at(y - 1, x) - at(y - 1, x + 1)
                + at(y + 1, x - 1)
                + 2.0 * at(y + 1, x)
                + at(y + 1, x + 1);
            if (gx * gx + gy * gy).sqrt() <= cfg.edge_threshold {
                continue;
            }
            edges += 1;

            // Walk along the dominant gradient axis to the local extrema.
            let (dy, dx) = if gx.abs() >= gy.abs() {
                (0i64, if gx >= 0.0 { 1i64 } else { -1 })
            } else {
                (if gy >= 0.0 { 1i64 } else { -1 }, 0i64)
            };
            let in_bounds = |y: i64, x: i64| y >= 0 && y < h && x >= 0 && x < w;

            // Toward increasing intensity.
            let (mut cy, mut cx, mut w_up) = (y, x, 0u32);
            while in_bounds(cy + dy, cx + dx) && at(cy + dy, cx + dx) > at(cy, cx) {
                cy += dy;
                cx += dx;
                w_up += 1;
            }
            let top = at(cy, cx);
            // Toward decreasing intensity.
            let (mut cy, mut cx, mut w_down) = (y, x, 0u32);
            while in_bounds(cy - dy, cx - dx) && at(cy - dy, cx - dx) < at(cy, cx) {
                cy -= dy;
                cx -= dx;
                w_down += 1;
            }
            let bottom = at(cy, cx);

            let width = (w_up + w_down) as f64;
            let contrast = top - bottom;
            let w_jnb = if contrast <= cfg.contrast_split {
                cfg.jnb_width_low_contrast
            } else {
                cfg.jnb_width_high_contrast
            };
            let p_blur = 1.0 - (-(width / w_jnb).powf(cfg.beta)).exp();
            if p_blur < cfg.detection_threshold {
                sharp += 1;
            }
        }
    }

    if edges == 0 {
        return Ok(CpbdResult {
            value: 1.0,
            zero_edges: true,
        });
    }
    Ok(CpbdResult {
        value: sharp as f64 / edges as f64,
        zero_edges: false,
    })
}

/// Combined evaluation output; image metrics are present only when frame
/// directories were supplied.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub feature: FeatureDistanceReport,
    pub ssim: Option<f64>,
    pub psnr: Option<f64>,
    pub cpbd: Option<f64>,
}

impl EvalReport {
    /// JSON with exactly the metric keys of the benchmark tables;
    /// `fid`/`csim` need pretrained networks and always report "n/a".
    pub fn to_json(&self) -> Value {
        let opt = |v: Option<f64>| match v {
            Some(x) if x.is_infinite() && x > 0.0 => json!("inf"),
            Some(x) => json!(x),
            None => json!("n/a"),
        };
        json!({
            "angle": self.feature.angle,
            "exp": self.feature.expression,
            "trans": self.feature.translation,
            "ssim": opt(self.ssim),
            "psnr": opt(self.psnr),
            "cpbd": opt(self.cpbd),
            "fid": "n/a",
            "csim": "n/a",
        })
    }
}

/// Average SSIM/PSNR over paired frames plus CPBD over the predicted
/// frames. Directories are paired by sorted file name.
pub fn evaluate_frame_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<(f64, f64, f64)> {
    let list = |dir: &Path| -> Result<Vec<std::path::PathBuf>> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::data(format!("cannot read directory {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
            .collect();
        files.sort();
        Ok(files)
    };
    let pred_files = list(pred_dir)?;
    let gt_files = list(gt_dir)?;
    if pred_files.is_empty() {
        return Err(Error::data(format!(
            "no PNG frames found in {}",
            pred_dir.display()
        )));
    }
    if pred_files.len() != gt_files.len() {
        return Err(Error::data(format!(
            "frame count mismatch: {} predicted vs {} ground truth",
            pred_files.len(),
            gt_files.len()
        )));
    }
    let cfg = CpbdConfig::default();
    let (mut ssim_sum, mut psnr_sum, mut cpbd_sum) = (0.0, 0.0, 0.0);
    for (p, g) in pred_files.iter().zip(&gt_files) {
        let pi = load_png(p)?;
        let gi = load_png(g)?;
        ssim_sum += ssim(&pi, &gi)?;
        psnr_sum += psnr(&pi, &gi, 255.0)?;
        cpbd_sum += cpbd(&pi, &cfg)?.value;
    }
    let n = pred_files.len() as f64;
    Ok((ssim_sum / n, psnr_sum / n, cpbd_sum / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoeffDims, CoeffFrame};

    fn dims() -> CoeffDims {
        CoeffDims {
            angle: 3,
            translation: 3,
            expression: 4,
        }
    }

    fn seq(frames: Vec<Vec<f64>>) -> CoeffSequence {
        let d = dims();
        CoeffSequence::new(
            d,
            frames
                .iter()
                .map(|f| CoeffFrame::from_flat(&d, f).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn feature_distance_zero_and_scaled() {
        let a = seq(vec![vec![0.25; 10]; 4]);
        let r = feature_distance(&a, &a).unwrap();
        assert_eq!((r.angle, r.expression, r.translation), (0.0, 0.0, 0.0));

        // Constant absolute error 0.05 on every angle component -> 5.0.
        let mut shifted_rows = vec![vec![0.25; 10]; 4];
        for row in &mut shifted_rows {
            for v in &mut row[0..3] {
                *v += 0.05;
            }
        }
        let b = seq(shifted_rows);
        let r = feature_distance(&b, &a).unwrap();
        assert!((r.angle - 5.0).abs() < 1e-12);
        assert_eq!(r.expression, 0.0);
        assert_eq!(r.translation, 0.0);
    }

    #[test]
    fn feature_distance_symmetry_and_triangle() {
        use crate::rng::DetRng;
        let mut rng = DetRng::new(31);
        let mk = |rng: &mut DetRng| {
            seq((0..3)
                .map(|_| (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect())
        };
        let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let ab = feature_distance(&a, &b).unwrap();
        let ba = feature_distance(&b, &a).unwrap();
        assert_eq!(ab, ba);
        let ac = feature_distance(&a, &c).unwrap();
        let cb = feature_distance(&c, &b).unwrap();
        assert!(ab.angle <= ac.angle + cb.angle + 1e-12);
        assert!(ab.expression <= ac.expression + cb.expression + 1e-12);
        assert!(ab.translation <= ac.translation + cb.translation + 1e-12);
    }

    #[test]
    fn psnr_cases() {
        let black = GrayImage::from_fn(16, 16, |_, _| 0.0);
        let white = GrayImage::from_fn(16, 16, |_, _| 255.0);
        assert!(psnr(&black, &black, 255.0).unwrap().is_infinite());
        assert!((psnr(&black, &white, 255.0).unwrap() - 0.0).abs() < 1e-12);

        let off_by_one = GrayImage::from_fn(16, 16, |_, _| 1.0);
        let expected = 20.0 * 255.0f64.log10();
        assert!((psnr(&black, &off_by_one, 255.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 48.13).abs() < 0.01);
    }

    #[test]
    fn psnr_decreases_with_error() {
        let base = GrayImage::from_fn(16, 16, |_, _| 100.0);
        let mut last = f64::INFINITY;
        for err in [1.0, 2.0, 5.0, 20.0] {
            let other = GrayImage::from_fn(16, 16, |_, _| 100.0 + err);
            let v = psnr(&base, &other, 255.0).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let img = GrayImage::from_fn(24, 24, |y, x| ((x * 13 + y * 7) % 200) as f64 + 20.0);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);

        let other = img.gaussian_blur(1.0);
        let ab = ssim(&img, &other).unwrap();
        let ba = ssim(&other, &img).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_uniform_closed_form() {
        let a = GrayImage::from_fn(16, 16, |_, _| 100.0);
        let b = GrayImage::from_fn(16, 16, |_, _| 110.0);
        let expected = (2.0 * 100.0 * 110.0 + SSIM_C1) / (100.0f64.powi(2) + 110.0f64.powi(2) + SSIM_C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.99548).abs() < 1e-4);
    }

    #[test]
    fn ssim_decreases_with_noise_power() {
        use crate::rng::DetRng;
        // Natural-texture stand-in with additive noise of growing power.
        let base = GrayImage::from_fn(32, 32, |y, x| {
            128.0 + 60.0 * ((x as f64) * 0.4).sin() + 40.0 * ((y as f64) * 0.3).cos()
        });
        let mut last = 1.0;
        for (i, power) in [2.0, 8.0, 24.0, 60.0].iter().enumerate() {
            let mut rng = DetRng::new(100 + i as u64);
            let noise: Vec<f64> = (0..32 * 32).map(|_| rng.uniform(-power, *power)).collect();
            let noisy = GrayImage::from_fn(32, 32, |y, x| base.at(y, x) + noise[y * 32 + x]);
            let v = ssim(&base, &noisy).unwrap();
            assert!(v < last, "power {power}: {v} not below {last}");
            last = v;
        }
    }

    #[test]
    fn ssim_small_image_rejected() {
        let a = GrayImage::from_fn(7, 7, |_, _| 0.0);
        assert!(ssim(&a, &a).is_err());
        let b = GrayImage::from_fn(8, 8, |y, x| (y * 8 + x) as f64);
        assert!((ssim(&b, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    fn step_chart() -> GrayImage {
        GrayImage::from_fn(64, 64, |_, x| if x < 32 { 0.0 } else { 255.0 })
    }

    #[test]
    fn cpbd_constant_image_flags_zero_edges() {
        let img = GrayImage::from_fn(16, 16, |_, _| 128.0);
        let r = cpbd(&img, &CpbdConfig::default()).unwrap();
        assert!(r.zero_edges);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn cpbd_sharp_above_blurred() {
        let sharp = step_chart();
        let blurred = sharp.gaussian_blur(3.0);
        let cfg = CpbdConfig::default();
        let a = cpbd(&sharp, &cfg).unwrap();
        let b = cpbd(&blurred, &cfg).unwrap();
        assert!(!a.zero_edges && !b.zero_edges);
        assert!(a.value > b.value, "sharp {} vs blurred {}", a.value, b.value);
    }

    #[test]
    fn cpbd_monotone_under_blur_on_three_charts() {
        let charts = [
            ("vertical step", step_chart()),
            (
                "horizontal step",
                GrayImage::from_fn(64, 64, |y, _| if y < 32 { 30.0 } else { 220.0 }),
            ),
            (
                "bar grating",
                GrayImage::from_fn(64, 64, |_, x| if (x / 8) % 2 == 0 { 0.0 } else { 255.0 }),
            ),
        ];
        let cfg = CpbdConfig::default();
        for (name, chart) in charts {
            let mut last = f64::INFINITY;
            for sigma in [0.0, 1.0, 2.0, 4.0] {
                let r = cpbd(&chart.gaussian_blur(sigma), &cfg).unwrap();
                assert!(!r.zero_edges, "{name}: sigma {sigma} produced no edges");
                assert!(
                    r.value <= last,
                    "{name}: sigma {sigma}: {} > {last}",
                    r.value
                );
                last = r.value;
            }
        }
    }

    #[test]
    fn cpbd_low_contrast_uses_wider_jnb() {
        // A 40-level step is low contrast: at width 2 it is still sharp
        // under w_jnb = 5 but would not be under 3.
        let low = GrayImage::from_fn(32, 32, |_, x| if x < 16 { 100.0 } else { 140.0 });
        let cfg = CpbdConfig {
            edge_threshold: 50.0,
            ..CpbdConfig::default()
        };
        let r = cpbd(&low, &cfg).unwrap();
        assert!(!r.zero_edges);
        assert!(r.value > 0.9, "sharp low-contrast edge scored {}", r.value);
    }

    #[test]
    fn cpbd_small_image_rejected() {
        let img = GrayImage::from_fn(15, 15, |_, _| 0.0);
        assert!(cpbd(&img, &CpbdConfig::default()).is_err());
    }

    #[test]
    fn report_json_keys() {
        let report = EvalReport {
            feature: FeatureDistanceReport {
                angle: 1.0,
                expression: 2.0,
                translation: 3.0,
            },
            ssim: Some(0.9),
            psnr: Some(f64::INFINITY),
            cpbd: None,
        };
        let v = report.to_json();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["angle", "cpbd", "csim", "exp", "fid", "psnr", "ssim", "trans"]
        );
        assert_eq!(obj["fid"], "n/a");
        assert_eq!(obj["csim"], "n/a");
        assert_eq!(obj["psnr"], "inf");
        assert_eq!(obj["cpbd"], "n/a");
        assert_eq!(obj["exp"], 2.0);
    }
}
