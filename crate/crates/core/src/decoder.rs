//! Small fused-MLP decoder with a sinusoidal residual on the first layer.
//!
//! Layout: fc1 (no activation) -> sinusoidal residual -> fc2 + ReLU -> fc3,
//! with an optional sigmoid on the output. The residual maps the first
//! hidden vector h through `sin(h * m) + h`, where `m` is a fixed geometric
//! frequency ladder over the hidden units. With `m = 0` the residual is the
//! identity bitwise, which is how the plain-MLP variant is expressed.
//!
//! Parameters live in caller-owned flat slices so the training loop can keep
//! every trainable value in one store. All weight matrices are row-major
//! with one row per output unit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fastmath;
use crate::rbf::freq_ladder;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Squash {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub in_dim: usize,
    pub width: usize,
    pub out_dim: usize,
    /// Per-hidden-unit residual frequencies; all zero disables the residual.
    pub m0: Vec<f64>,
    pub squash: Squash,
}

/// Borrowed views of the six trainable segments.
#[derive(Debug, Clone, Copy)]
pub struct DecoderParams<'a> {
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
    pub w3: &'a [f64],
    pub b3: &'a [f64],
}

/// Mutable gradient views matching [`DecoderParams`]. Backward accumulates.
#[derive(Debug)]
pub struct DecoderGrads<'a> {
    pub w1: &'a mut [f64],
    pub b1: &'a mut [f64],
    pub w2: &'a mut [f64],
    pub b2: &'a mut [f64],
    pub w3: &'a mut [f64],
    pub b3: &'a mut [f64],
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    pub h0: Vec<f64>,
    cos0: Vec<f64>,
    pub f0: Vec<f64>,
    a1: Vec<f64>,
    pub h1: Vec<f64>,
    pub out: Vec<f64>,
    d_hidden: Vec<f64>,
    d_f0: Vec<f64>,
}

impl Scratch {
    /// Pre-activations of the gated hidden layer from the last forward.
    /// Their distance to zero bounds how far parameters can move before a
    /// gate flips, which finite-difference probing needs to know.
    pub fn a1(&self) -> &[f64] {
        &self.a1
    }
}

impl Decoder {
    pub fn new(
        in_dim: usize,
        width: usize,
        out_dim: usize,
        m_lo: f64,
        m_hi: f64,
        squash: Squash,
    ) -> Result<Self> {
        let m0 = freq_ladder(m_lo, m_hi, width)?;
        Ok(Decoder {
            in_dim,
            width,
            out_dim,
            m0,
            squash,
        })
    }

    /// Plain three-layer MLP: the residual frequencies are zero, so the
    /// first layer passes through unchanged.
    pub fn new_plain(in_dim: usize, width: usize, out_dim: usize, squash: Squash) -> Self {
        Decoder {
            in_dim,
            width,
            out_dim,
            m0: vec![0.0; width],
            squash,
        }
    }

    pub fn w1_len(&self) -> usize {
        self.width * self.in_dim
    }
    pub fn w2_len(&self) -> usize {
        self.width * self.width
    }
    pub fn w3_len(&self) -> usize {
        self.out_dim * self.width
    }

    /// Total trainable parameter count across the six segments.
    pub fn param_len(&self) -> usize {
        self.w1_len() + self.width + self.w2_len() + self.width + self.w3_len() + self.out_dim
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            h0: vec![0.0; self.width],
            cos0: vec![0.0; self.width],
            f0: vec![0.0; self.width],
            a1: vec![0.0; self.width],
            h1: vec![0.0; self.width],
            out: vec![0.0; self.out_dim],
            d_hidden: vec![0.0; self.width],
            d_f0: vec![0.0; self.width],
        }
    }

    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    pub fn init_params(&self, rng: &mut Rng, p: &mut DecoderGrads<'_>) {
        let fill = |rng: &mut Rng, w: &mut [f64], fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.uniform(-bound, bound);
            }
        };
        fill(rng, p.w1, self.in_dim);
        fill(rng, p.w2, self.width);
        fill(rng, p.w3, self.width);
        p.b1.fill(0.0);
        p.b2.fill(0.0);
        p.b3.fill(0.0);
    }

    /// Forward pass for one sample; the result stays in `s.out`.
    pub fn forward(&self, p: &DecoderParams<'_>, x: &[f64], s: &mut Scratch) {
        debug_assert_eq!(x.len(), self.in_dim);
        let w = self.width;
        for j in 0..w {
            let row = &p.w1[j * self.in_dim..(j + 1) * self.in_dim];
            let mut acc = p.b1[j];
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            s.h0[j] = acc;
            let (sn, cs) = fastmath::sincos(acc * self.m0[j]);
            s.cos0[j] = cs;
            s.f0[j] = sn + acc;
        }
        for j in 0..w {
            let row = &p.w2[j * w..(j + 1) * w];
            let mut acc = p.b2[j];
            for (wi, fi) in row.iter().zip(s.f0.iter()) {
                acc += wi * fi;
            }
            s.a1[j] = acc;
            s.h1[j] = acc.max(0.0);
        }
        for o in 0..self.out_dim {
            let row = &p.w3[o * w..(o + 1) * w];
            let mut acc = p.b3[o];
            for (wi, hi) in row.iter().zip(s.h1.iter()) {
                acc += wi * hi;
            }
            s.out[o] = match self.squash {
                Squash::Linear => acc,
                Squash::Sigmoid => fastmath::sigmoid(acc),
            };
        }
    }

    /// Backward pass for the sample most recently run through [`forward`]
    /// with the same scratch. `d_out` is the loss gradient at the squashed
    /// output. Parameter gradients accumulate into `g`; the input gradient
    /// accumulates into `d_x` (length `in_dim`).
    ///
    /// [`forward`]: Self::forward
    pub fn backward(
        &self,
        p: &DecoderParams<'_>,
        x: &[f64],
        d_out: &[f64],
        s: &mut Scratch,
        g: &mut DecoderGrads<'_>,
        d_x: &mut [f64],
    ) {
        debug_assert_eq!(d_out.len(), self.out_dim);
        debug_assert_eq!(d_x.len(), self.in_dim);
        let w = self.width;
        s.d_hidden.fill(0.0);
        for o in 0..self.out_dim {
            let dz = match self.squash {
                Squash::Linear => d_out[o],
                // s.out holds sigmoid(z); its derivative is s (1 - s).
                Squash::Sigmoid => d_out[o] * s.out[o] * (1.0 - s.out[o]),
            };
            g.b3[o] += dz;
            let wrow = &p.w3[o * w..(o + 1) * w];
            let grow = &mut g.w3[o * w..(o + 1) * w];
            for j in 0..w {
                grow[j] += dz * s.h1[j];
                s.d_hidden[j] += dz * wrow[j];
            }
        }
        s.d_f0.fill(0.0);
        for j in 0..w {
            // ReLU gate on the second hidden layer.
            let da = if s.a1[j] > 0.0 { s.d_hidden[j] } else { 0.0 };
            if da == 0.0 {
                continue;
            }
            g.b2[j] += da;
            let wrow = &p.w2[j * w..(j + 1) * w];
            let grow = &mut g.w2[j * w..(j + 1) * w];
            for k in 0..w {
                grow[k] += da * s.f0[k];
                s.d_f0[k] += da * wrow[k];
            }
        }
        for j in 0..w {
            // d f0 / d h0 = cos(h0 m) m + 1.
            let dh = s.d_f0[j] * (s.cos0[j] * self.m0[j] + 1.0);
            g.b1[j] += dh;
            let wrow = &p.w1[j * self.in_dim..(j + 1) * self.in_dim];
            let grow = &mut g.w1[j * self.in_dim..(j + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += dh * x[i];
                d_x[i] += dh * wrow[i];
            }
        }
    }
}
