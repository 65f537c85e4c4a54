//! Deterministic synthetic photographs for tests and demos.
//!
//! The generator layers a smooth color background, multi-octave value noise
//! with 1/f amplitude falloff, a few dozen anti-aliased ellipses and
//! rectangles, and some sinusoidal gratings. The result has energy across
//! the spectrum like a natural photo, which is what makes reconstruction
//! metrics on it meaningful: a model that only captures low frequencies
//! scores visibly worse than one that resolves edges and texture.

use crate::imageio::ImageBuffer;
use crate::rng::{stream, Rng};

/// Full-frame textured image, deterministic in (width, height, seed).
pub fn natural_test_image(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut rng = Rng::from_stream(seed, stream::SYNTH);
    let mut img = ImageBuffer::new(width, height);
    paint_background(&mut img, &mut rng);
    add_value_noise(&mut img, &mut rng, 6, 0.16);
    add_shapes(&mut img, &mut rng, 30);
    add_gratings(&mut img, &mut rng, 4);
    squash_range(&mut img, 0.02, 0.98);
    img
}

/// Texture confined to the left half; the right half is flat gray. Used to
/// check that data-dependent placement follows the detail.
pub fn half_energy_test_image(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut img = natural_test_image(width, height, seed);
    for y in 0..height {
        for x in width / 2..width {
            img.set_pixel(x, y, [0.5, 0.5, 0.5]);
        }
    }
    img
}

fn paint_background(img: &mut ImageBuffer, rng: &mut Rng) {
    let c0: [f64; 3] = [rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)];
    let c1: [f64; 3] = [rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)];
    let c2: [f64; 3] = [rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)];
    let (cx, cy) = (rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7));
    for row in 0..img.height {
        let y = (row as f64 + 0.5) / img.height as f64;
        for col in 0..img.width {
            let x = (col as f64 + 0.5) / img.width as f64;
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt().min(1.0);
            let mut rgb = [0.0; 3];
            for c in 0..3 {
                let h = c0[c] * (1.0 - x) + c1[c] * x;
                rgb[c] = h * (1.0 - y) + (c2[c] * (1.0 - r) + h * r) * y;
            }
            img.set_pixel(col, row, rgb);
        }
    }
}

/// Smoothstep-interpolated lattice noise, one independent lattice per
/// octave and channel, amplitude halving as frequency doubles.
fn add_value_noise(img: &mut ImageBuffer, rng: &mut Rng, octaves: usize, base_amp: f64) {
    let (w, h) = (img.width, img.height);
    for o in 0..octaves {
        let g = 4usize << o;
        let amp = base_amp / (1 << o) as f64;
        let lattice: Vec<f64> = (0..(g + 1) * (g + 1) * 3)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let at = |ix: usize, iy: usize, c: usize| lattice[(iy * (g + 1) + ix) * 3 + c];
        for row in 0..h {
            let py = (row as f64 + 0.5) / h as f64 * g as f64;
            let iy = (py.floor() as usize).min(g - 1);
            let fy = py - iy as f64;
            let sy = fy * fy * (3.0 - 2.0 * fy);
            for col in 0..w {
                let px = (col as f64 + 0.5) / w as f64 * g as f64;
                let ix = (px.floor() as usize).min(g - 1);
                let fx = px - ix as f64;
                let sx = fx * fx * (3.0 - 2.0 * fx);
                let i = (row * w + col) * 3;
                for c in 0..3 {
                    let top = at(ix, iy, c) * (1.0 - sx) + at(ix + 1, iy, c) * sx;
                    let bot = at(ix, iy + 1, c) * (1.0 - sx) + at(ix + 1, iy + 1, c) * sx;
                    img.data[i + c] += amp * (top * (1.0 - sy) + bot * sy);
                }
            }
        }
    }
}

/// Anti-aliased alpha-blended ellipses and rounded boxes.
fn add_shapes(img: &mut ImageBuffer, rng: &mut Rng, count: usize) {
    let (w, h) = (img.width, img.height);
    let px = 1.0 / w as f64;
    for _ in 0..count {
        let is_rect = rng.f64() < 0.4;
        let (cx, cy) = (rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.92));
        let (a, b) = (rng.uniform(0.02, 0.16), rng.uniform(0.02, 0.16));
        let theta = rng.uniform(0.0, std::f64::consts::PI);
        let (st, ct) = theta.sin_cos();
        let color = [rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)];
        let alpha = rng.uniform(0.45, 1.0);
        let reach = a.max(b) + 3.0 * px;
        let row0 = (((cy - reach) * h as f64).floor().max(0.0)) as usize;
        let row1 = (((cy + reach) * h as f64).ceil() as usize).min(h);
        let col0 = (((cx - reach) * w as f64).floor().max(0.0)) as usize;
        let col1 = (((cx + reach) * w as f64).ceil() as usize).min(w);
        for row in row0..row1 {
            let y = (row as f64 + 0.5) / h as f64 - cy;
            for col in col0..col1 {
                let x = (col as f64 + 0.5) / w as f64 - cx;
                let u = x * ct + y * st;
                let v = -x * st + y * ct;
                // Approximate signed distance in scene units.
                let sd = if is_rect {
                    (u.abs() - a).max(v.abs() - b)
                } else {
                    let q = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
                    (q - 1.0) * a.min(b)
                };
                let cov = (0.5 - sd / (1.5 * px)).clamp(0.0, 1.0) * alpha;
                if cov > 0.0 {
                    let i = (row * w + col) * 3;
                    for c in 0..3 {
                        img.data[i + c] += cov * (color[c] - img.data[i + c]);
                    }
                }
            }
        }
    }
}

/// Sinusoidal texture patches masked by soft ellipses; these carry the
/// mid-to-high frequency content.
fn add_gratings(img: &mut ImageBuffer, rng: &mut Rng, count: usize) {
    let (w, h) = (img.width, img.height);
    for _ in 0..count {
        let (cx, cy) = (rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85));
        let (a, b) = (rng.uniform(0.08, 0.22), rng.uniform(0.08, 0.22));
        let freq = rng.uniform(18.0, 55.0) * std::f64::consts::TAU;
        let dir = rng.uniform(0.0, std::f64::consts::PI);
        let (sd, cd) = dir.sin_cos();
        let amp = rng.uniform(0.05, 0.13);
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        let row0 = (((cy - b) * h as f64).floor().max(0.0)) as usize;
        let row1 = (((cy + b) * h as f64).ceil() as usize).min(h);
        let col0 = (((cx - a) * w as f64).floor().max(0.0)) as usize;
        let col1 = (((cx + a) * w as f64).ceil() as usize).min(w);
        for row in row0..row1 {
            let y = (row as f64 + 0.5) / h as f64 - cy;
            for col in col0..col1 {
                let x = (col as f64 + 0.5) / w as f64 - cx;
                let q = (x / a).powi(2) + (y / b).powi(2);
                if q >= 1.0 {
                    continue;
                }
                let mask = (1.0 - q).powi(2);
                let s = amp * mask * (freq * (x * cd + y * sd) + phase).sin();
                let i = (row * w + col) * 3;
                for c in 0..3 {
                    img.data[i + c] += s;
                }
            }
        }
    }
}

/// Affinely maps the current value range onto [lo, hi] so sigmoid-squashed
/// models never chase unreachable extremes.
fn squash_range(img: &mut ImageBuffer, lo: f64, hi: f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in &img.data {
        min = min.min(v);
        max = max.max(v);
    }
    let span = (max - min).max(1e-12);
    for v in img.data.iter_mut() {
        *v = lo + (*v - min) / span * (hi - lo);
    }
}
