//! Grayscale image container plus PNG input/output.
//!
//! Color frames decode through ITU-R BT.601 luma; pixel intensities are
//! clamped to [0, 255] and kept as f64 for the metric kernels.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<GrayImage> {
        if data.len() != height * width {
            return Err(Error::contract(format!(
                "image data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 255.0) } else { 0.0 })
            .collect();
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> GrayImage {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x).clamp(0.0, 255.0));
            }
        }
        GrayImage {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Separable Gaussian blur with reflected borders; sigma 0 is the
    /// identity. Used to build the synthetic blur charts.
    pub fn gaussian_blur(&self, sigma: f64) -> GrayImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as i64;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let ksum: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|v| v / ksum).collect();

        let reflect = |i: i64, n: i64| -> usize {
            let mut i = i;
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * n - 2 - i;
            }
            i.clamp(0, n - 1) as usize
        };

        let (h, w) = (self.height as i64, self.width as i64);
        let mut horiz = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = reflect(x as i64 + ki as i64 - radius, w);
                    acc += kv * self.data[y * self.width + sx];
                }
                horiz[y * self.width + x] = acc;
            }
        }
        let mut out = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = reflect(y as i64 + ki as i64 - radius, h);
                    acc += kv * horiz[sy * self.width + x];
                }
                out[y * self.width + x] = acc;
            }
        }
        GrayImage {
            height: self.height,
            width: self.width,
            data: out,
        }
    }
}

/// Load an 8-bit grayscale or RGB(A) PNG as luma.
pub fn load_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("png: cannot open {}: {e}", path.display())))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::data(format!("png: {}: {e}", path.display())))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::data(format!("png: {}: {e}", path.display())))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::data(format!(
            "png: {}: only 8-bit images are supported",
            path.display()
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::data(format!(
                "png: {}: unsupported color type {other:?}",
                path.display()
            )))
        }
    };
    let pixels = &buf[..w * h * channels];
    let data: Vec<f64> = (0..w * h)
        .map(|i| {
            let p = &pixels[i * channels..];
            match channels {
                1 | 2 => p[0] as f64,
                // BT.601 luma.
                _ => 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64,
            }
        })
        .collect();
    GrayImage::new(h, w, data)
}

/// Write as 8-bit grayscale PNG (values rounded).
pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::data(format!("png: cannot create {}: {e}", path.display())))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::data(format!("png: {}: {e}", path.display())))?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::data(format!("png: {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = GrayImage::from_fn(20, 30, |y, x| ((x * 7 + y * 3) % 256) as f64);
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.height(), 20);
        assert_eq!(back.width(), 30);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 0.5);
        }
    }

    #[test]
    fn blur_preserves_constant() {
        let img = GrayImage::from_fn(16, 16, |_, _| 101.0);
        let blurred = img.gaussian_blur(2.0);
        for &v in blurred.data() {
            assert!((v - 101.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_zero_sigma_is_identity() {
        let img = GrayImage::from_fn(8, 8, |y, x| (x * y) as f64);
        assert_eq!(img.gaussian_blur(0.0), img);
    }

    #[test]
    fn values_are_clamped() {
        let img = GrayImage::new(1, 2, vec![-5.0, 300.0]).unwrap();
        assert_eq!(img.data(), &[0.0, 255.0]);
    }
}
