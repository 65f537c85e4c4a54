//! PNG-backed image buffers in linear f64, plus the reconstruction metrics.
//!
//! Pixels are RGB triples in [0, 1], scanline order, top-left first. Loading
//! divides integer samples by the type maximum (255 or 65535); saving
//! multiplies back and rounds half away from zero, so a save/load round trip
//! is exactly the quantization and nothing else. Sample positions are pixel
//! centers: pixel (col, row) sits at ((col + 0.5) / W, (row + 0.5) / H).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// RGB, scanline order, `width * height * 3` values in [0, 1].
    pub data: Vec<f64>,
    /// 8 or 16; kept from the source file and used when saving.
    pub bit_depth: u8,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![0.0; width * height * 3],
            bit_depth: 8,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Loads an 8- or 16-bit PNG. Grayscale replicates into all three
    /// channels; an alpha channel, if present, is dropped.
    pub fn load(path: &Path) -> Result<Self> {
        // image::open swallows the path from its I/O errors; put it back so
        // "file not found" names the file.
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(std::io::Error::new(
                io.kind(),
                format!("{}: {io}", path.display()),
            )),
            other => Error::Image(other),
        })?;
        let (bit_depth, rgb16): (u8, image::ImageBuffer<image::Rgb<u16>, Vec<u16>>) = match img {
            image::DynamicImage::ImageLuma8(_)
            | image::DynamicImage::ImageLumaA8(_)
            | image::DynamicImage::ImageRgb8(_)
            | image::DynamicImage::ImageRgba8(_) => (8, image::DynamicImage::to_rgb16(&img)),
            _ => (16, img.to_rgb16()),
        };
        let width = rgb16.width() as usize;
        let height = rgb16.height() as usize;
        // to_rgb16 widens 8-bit samples as v * 257, which is exactly
        // v / 255 when divided by 65535.
        let data = rgb16.into_raw().iter().map(|&v| v as f64 / 65535.0).collect();
        Ok(ImageBuffer {
            width,
            height,
            data,
            bit_depth,
        })
    }

    /// Saves as PNG at this buffer's bit depth. Values are clamped to
    /// [0, 1] and quantized by rounding half away from zero.
    pub fn save(&self, path: &Path) -> Result<()> {
        if self.data.len() != self.width * self.height * 3 {
            return Err(Error::config("image buffer length mismatch"));
        }
        match self.bit_depth {
            8 => {
                let bytes: Vec<u8> = self
                    .data
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect();
                let buf: image::RgbImage =
                    image::ImageBuffer::from_raw(self.width as u32, self.height as u32, bytes)
                        .expect("sized above");
                buf.save(path)?;
            }
            16 => {
                let words: Vec<u16> = self
                    .data
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                    .collect();
                let buf: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
                    image::ImageBuffer::from_raw(self.width as u32, self.height as u32, words)
                        .expect("sized above");
                buf.save(path)?;
            }
            d => return Err(Error::config(format!("unsupported bit depth {d}"))),
        }
        Ok(())
    }
}

/// Flat sample coordinates for every pixel center in scanline order:
/// `[x0, y0, x1, y1, ...]`, length `width * height * 2`.
pub fn pixel_coords(width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height * 2);
    for row in 0..height {
        let y = (row as f64 + 0.5) / height as f64;
        for col in 0..width {
            out.push((col as f64 + 0.5) / width as f64);
            out.push(y);
        }
    }
    out
}

/// Peak signal-to-noise ratio against a peak of 1.0, in dB. Identical
/// inputs give positive infinity.
pub fn psnr(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Inferno-style anchors for the error map, black through yellow-white.
const ERROR_RAMP: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.016],
    [0.157, 0.043, 0.329],
    [0.396, 0.082, 0.431],
    [0.624, 0.165, 0.388],
    [0.831, 0.282, 0.259],
    [0.961, 0.490, 0.082],
    [0.980, 0.757, 0.153],
    [0.988, 1.0, 0.643],
];

/// Maps t in [0, 1] through the embedded ramp with linear interpolation.
pub fn ramp_color(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0) * (ERROR_RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(ERROR_RAMP.len() - 2);
    let f = t - i as f64;
    let a = ERROR_RAMP[i];
    let b = ERROR_RAMP[i + 1];
    [
        a[0] + f * (b[0] - a[0]),
        a[1] + f * (b[1] - a[1]),
        a[2] + f * (b[2] - a[2]),
    ]
}

/// Span of per-pixel mean absolute channel error mapped onto the full ramp.
pub const ERROR_MAP_SPAN: f64 = 0.01;

/// Renders |pred - truth| (mean over channels, scanline RGB inputs) through
/// the embedded color ramp. Errors at or above [`ERROR_MAP_SPAN`] saturate.
pub fn error_map(pred: &[f64], truth: &[f64], width: usize, height: usize) -> ImageBuffer {
    assert_eq!(pred.len(), width * height * 3);
    assert_eq!(truth.len(), pred.len());
    let mut out = ImageBuffer::new(width, height);
    for p in 0..width * height {
        let mut e = 0.0;
        for c in 0..3 {
            e += (pred[p * 3 + c] - truth[p * 3 + c]).abs();
        }
        e /= 3.0;
        let rgb = ramp_color(e / ERROR_MAP_SPAN);
        out.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
    }
    out
}
