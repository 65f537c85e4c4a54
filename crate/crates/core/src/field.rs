//! The assembled hybrid field and its training loop.
//!
//! A [`HybridField`] concatenates two encodings of a query point, an
//! adaptive radial basis encoding ([`RbfSet`], optional) and a
//! multi-resolution grid encoding ([`HashGridEncoder`]), and decodes the
//! concatenation with a small MLP ([`Decoder`]):
//!
//! ```text
//! f(x) = decode(concat(rbf(x), grid(x)))
//! ```
//!
//! The trainable state lives in a flat [`ParamStore`] with a fixed segment
//! layout (see [`SEG_RBF_FEATURES`] and friends). Two task engines drive the
//! field: [`ImageEngine`] fits RGB images with an L2 loss over pixel batches
//! and caches the per-pixel basis geometry up front, [`SdfEngine`] fits
//! signed distance fields with a relative-error loss over freshly sampled
//! point batches. Both produce bitwise identical results in sequential and
//! parallel execution; see [`crate::exec`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::clustering::{image_weights, init_shapes, sdf_weights, weighted_kmeans, ReseedEvent};
use crate::decoder::{self, Decoder, DecoderGrads, DecoderParams, Squash};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::fastmath;
use crate::grid::HashGridEncoder;
use crate::imageio::{self, pixel_coords};
use crate::params::{adam_step, lr_schedule, AdamState, ParamStore};
use crate::rbf::{freq_ladder, Neighborhood, RbfSet};
use crate::rng::{stream, Rng};
use crate::sdf::{sample_training_points, SdfOracle, SdfSamples};
use crate::symmat::tri_len;

/// Per-center feature vectors, count x feat_dim.
pub const SEG_RBF_FEATURES: &str = "rbf.features";
/// Shared sinusoid phase vector, feat_dim.
pub const SEG_RBF_PHASE: &str = "rbf.phase";
/// Concatenated grid feature tables.
pub const SEG_GRID_TABLES: &str = "grid.tables";
/// Decoder segments in layer order, weights before biases.
pub const SEG_DECODER: [&str; 6] = [
    "dec.fc1.w",
    "dec.fc1.b",
    "dec.fc2.w",
    "dec.fc2.b",
    "dec.fc3.w",
    "dec.fc3.b",
];

/// Uniform init bound for feature vectors and grid tables.
pub const FEATURE_INIT_BOUND: f64 = 1e-4;
/// Denominator guard of the relative SDF loss.
pub const MAPE_EPS: f64 = 1e-2;
/// E-M iterations for center initialization.
pub const KMEANS_ITERS: usize = 10;
/// Default metric evaluation cadence during training, in steps.
pub const DEFAULT_EVAL_EVERY: usize = 500;

// ---------------------------------------------------------------------------
// Model specification.

/// Adaptive basis half of a model recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSpec {
    pub count: usize,
    pub feat_dim: usize,
    pub k: usize,
    /// Sinusoidal composition on the encoder. Off turns the encoding into a
    /// plain normalized-kernel feature mix.
    pub msc: bool,
    pub freq_lo: f64,
    pub freq_hi: f64,
}

/// Grid half of a model recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub levels: usize,
    pub r_min: u32,
    pub r_max: u32,
    pub channels: usize,
    pub table_size: usize,
}

/// Complete structural recipe for a [`HybridField`]. Everything needed to
/// rebuild the architecture, but not the fitted values; serialized into
/// checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub out_dim: usize,
    pub squash: Squash,
    pub rbf: Option<RbfSpec>,
    pub grid: GridSpec,
    /// Decoder hidden width.
    pub width: usize,
    /// Frequency bounds of the decoder's sinusoidal residual; `None` leaves
    /// the first layer a plain linear map.
    pub residual: Option<(f64, f64)>,
    /// Learning-rate multiplier of the decoder segments relative to the
    /// feature segments.
    pub mlp_lr_scale: f64,
}

/// Frozen geometry of the adaptive basis, produced by initialization and
/// stored in checkpoints.
#[derive(Debug, Clone)]
pub struct RbfParts {
    /// Row-major count x dim.
    pub centers: Vec<f64>,
    /// Packed upper triangles, count x dim(dim+1)/2.
    pub inv_shapes: Vec<f64>,
    /// Strictly increasing ladder, feat_dim entries.
    pub freqs: Vec<f64>,
}

// ---------------------------------------------------------------------------
// The field.

#[derive(Debug)]
pub struct HybridField {
    pub rbf: Option<RbfSet>,
    pub grid: HashGridEncoder,
    pub dec: Decoder,
}

impl HybridField {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn out_dim(&self) -> usize {
        self.dec.out_dim
    }

    /// Width of the adaptive encoding half; 0 without one.
    pub fn feat_dim(&self) -> usize {
        self.rbf.as_ref().map_or(0, |r| r.feat_dim)
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        let rbf = self
            .rbf
            .as_ref()
            .map_or(0, |r| r.count * r.feat_dim + r.feat_dim);
        rbf + self.grid.table_len() + self.dec.param_len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(rbf) = &self.rbf {
            if rbf.dim != self.grid.dim {
                return Err(Error::config(format!(
                    "basis dim {} disagrees with grid dim {}",
                    rbf.dim, self.grid.dim
                )));
            }
        }
        let want = self.feat_dim() + self.grid.out_dim();
        if self.dec.in_dim != want {
            return Err(Error::config(format!(
                "decoder expects {} inputs but the encodings produce {}",
                self.dec.in_dim, want
            )));
        }
        if self.dec.m0.len() != self.dec.width {
            return Err(Error::config("decoder residual frequency length mismatch"));
        }
        Ok(())
    }

    /// Builds a field from its recipe and (for the adaptive half) frozen
    /// geometry. `m0` overrides the decoder residual frequencies, used when
    /// rebuilding from a checkpoint; `None` derives them from the recipe.
    pub fn from_parts(
        spec: &ModelSpec,
        rbf_parts: Option<RbfParts>,
        m0: Option<Vec<f64>>,
    ) -> Result<HybridField> {
        if !(spec.mlp_lr_scale > 0.0) || !spec.mlp_lr_scale.is_finite() {
            return Err(Error::config(format!(
                "decoder lr scale must be positive and finite, got {}",
                spec.mlp_lr_scale
            )));
        }
        if spec.width == 0 || spec.out_dim == 0 {
            return Err(Error::config("decoder width and output dim must be positive"));
        }
        let rbf = match (&spec.rbf, rbf_parts) {
            (Some(rs), Some(parts)) => {
                if parts.centers.len() != rs.count * spec.dim {
                    return Err(Error::config(format!(
                        "expected {} center coordinates, got {}",
                        rs.count * spec.dim,
                        parts.centers.len()
                    )));
                }
                if parts.inv_shapes.len() != rs.count * tri_len(spec.dim) {
                    return Err(Error::config("inverse shape array length mismatch"));
                }
                if parts.freqs.len() != rs.feat_dim {
                    return Err(Error::config(format!(
                        "expected {} encoder frequencies, got {}",
                        rs.feat_dim,
                        parts.freqs.len()
                    )));
                }
                Some(RbfSet::new(
                    spec.dim,
                    parts.centers,
                    parts.inv_shapes,
                    parts.freqs,
                    rs.k,
                    rs.msc,
                )?)
            }
            (None, None) => None,
            (Some(_), None) => {
                return Err(Error::config("recipe has an adaptive basis but no geometry"))
            }
            (None, Some(_)) => {
                return Err(Error::config("geometry provided for a recipe without a basis"))
            }
        };
        let grid = HashGridEncoder::new(
            spec.dim,
            spec.grid.levels,
            spec.grid.r_min,
            spec.grid.r_max,
            spec.grid.channels,
            spec.grid.table_size,
        )?;
        let in_dim = rbf.as_ref().map_or(0, |r| r.feat_dim) + grid.out_dim();
        let m0 = match m0 {
            Some(v) => {
                if v.len() != spec.width {
                    return Err(Error::config(format!(
                        "residual frequency override has {} entries, decoder width is {}",
                        v.len(),
                        spec.width
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config("residual frequencies must be finite"));
                }
                v
            }
            None => match spec.residual {
                Some((lo, hi)) => freq_ladder(lo, hi, spec.width)?,
                None => vec![0.0; spec.width],
            },
        };
        let dec = Decoder {
            in_dim,
            width: spec.width,
            out_dim: spec.out_dim,
            m0,
            squash: spec.squash,
        };
        let field = HybridField { rbf, grid, dec };
        field.validate()?;
        Ok(field)
    }

    /// Creates the parameter store with the canonical segment layout, all
    /// values zero. Checkpoint loading fills one of these with saved values.
    pub fn empty_store(&self, mlp_lr_scale: f64) -> ParamStore {
        let mut store = ParamStore::new();
        if let Some(rbf) = &self.rbf {
            store.add_segment(SEG_RBF_FEATURES, rbf.count * rbf.feat_dim, 1.0);
            store.add_segment(SEG_RBF_PHASE, rbf.feat_dim, 1.0);
        }
        store.add_segment(SEG_GRID_TABLES, self.grid.table_len(), 1.0);
        let dec_lens = [
            self.dec.w1_len(),
            self.dec.width,
            self.dec.w2_len(),
            self.dec.width,
            self.dec.w3_len(),
            self.dec.out_dim,
        ];
        for (name, len) in SEG_DECODER.iter().zip(dec_lens) {
            store.add_segment(*name, len, mlp_lr_scale);
        }
        store
    }

    /// Creates the parameter store with the canonical segment layout and
    /// initial values: features and grid tables uniform in
    /// [-FEATURE_INIT_BOUND, FEATURE_INIT_BOUND] (features drawn first),
    /// phase zero, decoder He-uniform with zero biases. Init randomness is
    /// seed-addressed, so building twice gives identical stores.
    pub fn build_store(&self, mlp_lr_scale: f64, seed: u64) -> ParamStore {
        let mut store = self.empty_store(mlp_lr_scale);
        let lay = SegLayout::resolve(&store, self.rbf.is_some()).expect("fresh canonical layout");
        let mut feat_rng = Rng::from_stream(seed, stream::FEATURE_INIT);
        let mut dec_rng = Rng::from_stream(seed, stream::DECODER_INIT);
        {
            let mut parts = split_grads(store.all_values_mut(), &lay);
            for v in parts.rbf_w.iter_mut() {
                *v = feat_rng.uniform(-FEATURE_INIT_BOUND, FEATURE_INIT_BOUND);
            }
            for v in parts.grid.iter_mut() {
                *v = feat_rng.uniform(-FEATURE_INIT_BOUND, FEATURE_INIT_BOUND);
            }
            self.dec.init_params(&mut dec_rng, &mut parts.dec);
        }
        store
    }
}

// ---------------------------------------------------------------------------
// Segment layout and flat-buffer views.

/// Byte-for-byte positions of the canonical segments inside the flat store.
/// Absent segments get empty ranges. Resolution verifies the canonical order
/// so flat gradient buffers can be split positionally.
#[derive(Debug, Clone)]
struct SegLayout {
    rbf_w: Range<usize>,
    rbf_b: Range<usize>,
    grid: Range<usize>,
    dec: [Range<usize>; 6],
}

impl SegLayout {
    fn resolve(store: &ParamStore, has_rbf: bool) -> Result<SegLayout> {
        let mut expect = 0usize;
        let take = |name: &str, expect: &mut usize| -> Result<Range<usize>> {
            let id = store
                .segment_by_name(name)
                .ok_or_else(|| Error::config(format!("missing parameter segment `{name}`")))?;
            let r = store.segment_range(id);
            if r.start != *expect {
                return Err(Error::config(format!(
                    "segment `{name}` out of canonical order"
                )));
            }
            *expect = r.end;
            Ok(r)
        };
        let (rbf_w, rbf_b) = if has_rbf {
            (
                take(SEG_RBF_FEATURES, &mut expect)?,
                take(SEG_RBF_PHASE, &mut expect)?,
            )
        } else {
            if store.segment_by_name(SEG_RBF_FEATURES).is_some() {
                return Err(Error::config(
                    "store has basis segments but the field has no basis",
                ));
            }
            (0..0, 0..0)
        };
        let grid = take(SEG_GRID_TABLES, &mut expect)?;
        let mut dec = [const { 0..0 }; 6];
        for (slot, name) in dec.iter_mut().zip(SEG_DECODER) {
            *slot = take(name, &mut expect)?;
        }
        if expect != store.len() {
            return Err(Error::config("store has segments beyond the canonical set"));
        }
        Ok(SegLayout {
            rbf_w,
            rbf_b,
            grid,
            dec,
        })
    }

    fn total(&self) -> usize {
        self.dec[5].end
    }
}

/// Read-only parameter slices in layout order.
#[derive(Clone, Copy)]
struct ParamView<'a> {
    rbf_w: &'a [f64],
    rbf_b: &'a [f64],
    grid: &'a [f64],
    dec: DecoderParams<'a>,
}

fn make_view<'a>(vals: &'a [f64], lay: &SegLayout) -> ParamView<'a> {
    ParamView {
        rbf_w: &vals[lay.rbf_w.clone()],
        rbf_b: &vals[lay.rbf_b.clone()],
        grid: &vals[lay.grid.clone()],
        dec: DecoderParams {
            w1: &vals[lay.dec[0].clone()],
            b1: &vals[lay.dec[1].clone()],
            w2: &vals[lay.dec[2].clone()],
            b2: &vals[lay.dec[3].clone()],
            w3: &vals[lay.dec[4].clone()],
            b3: &vals[lay.dec[5].clone()],
        },
    }
}

/// Mutable gradient slices over one flat buffer, split in layout order.
struct GradParts<'a> {
    rbf_w: &'a mut [f64],
    rbf_b: &'a mut [f64],
    grid: &'a mut [f64],
    dec: DecoderGrads<'a>,
}

fn split_grads<'a>(buf: &'a mut [f64], lay: &SegLayout) -> GradParts<'a> {
    debug_assert_eq!(buf.len(), lay.total());
    let (rbf_w, rest) = buf.split_at_mut(lay.rbf_w.len());
    let (rbf_b, rest) = rest.split_at_mut(lay.rbf_b.len());
    let (grid, rest) = rest.split_at_mut(lay.grid.len());
    let (w1, rest) = rest.split_at_mut(lay.dec[0].len());
    let (b1, rest) = rest.split_at_mut(lay.dec[1].len());
    let (w2, rest) = rest.split_at_mut(lay.dec[2].len());
    let (b2, rest) = rest.split_at_mut(lay.dec[3].len());
    let (w3, rest) = rest.split_at_mut(lay.dec[4].len());
    let (b3, rest) = rest.split_at_mut(lay.dec[5].len());
    debug_assert!(rest.is_empty());
    GradParts {
        rbf_w,
        rbf_b,
        grid,
        dec: DecoderGrads {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        },
    }
}

// ---------------------------------------------------------------------------
// Per-sample execution.

/// Reusable per-worker buffers for one sample's forward/backward.
struct FieldScratch {
    knn: Vec<(f64, u32)>,
    nb: Neighborhood,
    /// Interleaved (sin, cos) of the composed angles, k x feat_dim pairs;
    /// written by the live forward, read by the live backward.
    trig: Vec<f64>,
    input: Vec<f64>,
    d_input: Vec<f64>,
    dec: decoder::Scratch,
}

impl FieldScratch {
    fn new(field: &HybridField) -> FieldScratch {
        let (k, nf, msc) = field
            .rbf
            .as_ref()
            .map_or((0, 0, false), |r| (r.k, r.feat_dim, r.msc));
        FieldScratch {
            knn: Vec::with_capacity(k),
            nb: Neighborhood::empty(),
            trig: vec![0.0; if msc { k * nf * 2 } else { 0 }],
            input: vec![0.0; field.dec.in_dim],
            d_input: vec![0.0; field.dec.in_dim],
            dec: field.dec.scratch(),
        }
    }
}

/// One sample forward through basis, grid and decoder. The result stays in
/// `s.dec.out`. Accumulation orders match the standalone module evaluators
/// bit for bit.
fn forward_live(field: &HybridField, view: &ParamView<'_>, x: &[f64], s: &mut FieldScratch) {
    let nf = field.feat_dim();
    if let Some(rbf) = &field.rbf {
        rbf.neighborhood_into(x, &mut s.knn, &mut s.nb);
        s.input[..nf].fill(0.0);
        for j in 0..rbf.k {
            let row = s.nb.idx[j] as usize * nf;
            let wrow = &view.rbf_w[row..row + nf];
            let phi = s.nb.phi[j];
            if rbf.msc {
                for f in 0..nf {
                    let (sn, cs) = fastmath::sincos(phi * rbf.freqs[f] + view.rbf_b[f]);
                    s.trig[(j * nf + f) * 2] = sn;
                    s.trig[(j * nf + f) * 2 + 1] = cs;
                    s.input[f] += sn * wrow[f];
                }
            } else {
                for f in 0..nf {
                    s.input[f] += phi * wrow[f];
                }
            }
        }
    }
    field.grid.interp(x, view.grid, &mut s.input[nf..]);
    field.dec.forward(&view.dec, &s.input, &mut s.dec);
}

/// Backward for the sample most recently run through [`forward_live`] with
/// the same scratch. Gradients accumulate into `g`.
fn backward_live(
    field: &HybridField,
    view: &ParamView<'_>,
    x: &[f64],
    d_out: &[f64],
    s: &mut FieldScratch,
    g: &mut GradParts<'_>,
) {
    let nf = field.feat_dim();
    s.d_input.fill(0.0);
    field
        .dec
        .backward(&view.dec, &s.input, d_out, &mut s.dec, &mut g.dec, &mut s.d_input);
    field.grid.backward(x, &s.d_input[nf..], g.grid);
    if let Some(rbf) = &field.rbf {
        for j in 0..rbf.k {
            let row = s.nb.idx[j] as usize * nf;
            let phi = s.nb.phi[j];
            if rbf.msc {
                for f in 0..nf {
                    let up = s.d_input[f];
                    let sn = s.trig[(j * nf + f) * 2];
                    let cs = s.trig[(j * nf + f) * 2 + 1];
                    g.rbf_w[row + f] += sn * up;
                    g.rbf_b[f] += cs * view.rbf_w[row + f] * up;
                }
            } else {
                for f in 0..nf {
                    g.rbf_w[row + f] += phi * s.d_input[f];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Loss functions.

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean squared error over all entries with its gradient,
/// `2 (pred - target) / count`.
pub fn loss_l2(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    assert!(!pred.is_empty());
    let count = pred.len() as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut sum = 0.0;
    for i in 0..pred.len() {
        let d = pred[i] - target[i];
        sum += d * d;
        grad[i] = 2.0 * d / count;
    }
    (sum / count, grad)
}

/// Mean relative error `|pred - target| / (|target| + MAPE_EPS)` with its
/// subgradient (0 exactly at pred = target).
pub fn loss_mape(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    assert!(!pred.is_empty());
    let count = pred.len() as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut sum = 0.0;
    for i in 0..pred.len() {
        let sc = target[i].abs() + MAPE_EPS;
        let d = pred[i] - target[i];
        sum += d.abs() / sc;
        grad[i] = sign0(d) / (sc * count);
    }
    (sum / count, grad)
}

// ---------------------------------------------------------------------------
// Image engine.

/// Frozen per-pixel basis geometry: neighbor indices, normalized kernel
/// values, and (with composition) the sinusoid of `phi * m` per neighbor and
/// frequency. Centers, shapes and frequencies never move during training, so
/// this is computed once; the per-step phase enters through the angle
/// addition `sin(a + b) = sin a cos b + cos a sin b`, making the hot loop
/// free of transcendentals while staying the exact forward the backward pass
/// differentiates.
struct ImageCache {
    k: usize,
    feat: usize,
    idx: Vec<u32>,
    phi: Vec<f64>,
    /// Per (pixel, neighbor): feat sines then feat cosines.
    trig: Vec<f64>,
}

impl ImageCache {
    fn build(rbf: &RbfSet, coords: &[f64], mode: ExecMode) -> ImageCache {
        let dim = rbf.dim;
        let pixels = coords.len() / dim;
        let k = rbf.k;
        let nf = rbf.feat_dim;
        let parts = exec::map_chunks(mode, pixels, exec::DEFAULT_CHUNK, |_, range| {
            let mut idx = Vec::with_capacity(range.len() * k);
            let mut phi = Vec::with_capacity(range.len() * k);
            let mut trig = Vec::with_capacity(if rbf.msc { range.len() * k * nf * 2 } else { 0 });
            let mut knn = Vec::with_capacity(k);
            let mut nb = Neighborhood::empty();
            for p in range {
                rbf.neighborhood_into(&coords[p * dim..(p + 1) * dim], &mut knn, &mut nb);
                for j in 0..k {
                    idx.push(nb.idx[j]);
                    phi.push(nb.phi[j]);
                    if rbf.msc {
                        let base = trig.len();
                        trig.resize(base + 2 * nf, 0.0);
                        for f in 0..nf {
                            let (sn, cs) = fastmath::sincos(nb.phi[j] * rbf.freqs[f]);
                            trig[base + f] = sn;
                            trig[base + nf + f] = cs;
                        }
                    }
                }
            }
            (idx, phi, trig)
        });
        let mut idx = Vec::with_capacity(pixels * k);
        let mut phi = Vec::with_capacity(pixels * k);
        let mut trig = Vec::with_capacity(if rbf.msc { pixels * k * nf * 2 } else { 0 });
        for (i, p, t) in parts {
            idx.extend_from_slice(&i);
            phi.extend_from_slice(&p);
            trig.extend_from_slice(&t);
        }
        ImageCache {
            k,
            feat: nf,
            idx,
            phi,
            trig,
        }
    }
}

/// Encodes pixel `p` from the cache into `out[..feat]`.
#[inline]
fn encode_cached(
    cache: &ImageCache,
    msc: bool,
    view: &ParamView<'_>,
    p: usize,
    sin_b: &[f64],
    cos_b: &[f64],
    out: &mut [f64],
) {
    let k = cache.k;
    let nf = cache.feat;
    out[..nf].fill(0.0);
    for j in 0..k {
        let slot = p * k + j;
        let ci = cache.idx[slot] as usize;
        let wrow = &view.rbf_w[ci * nf..ci * nf + nf];
        if msc {
            let base = slot * 2 * nf;
            let sa = &cache.trig[base..base + nf];
            let ca = &cache.trig[base + nf..base + 2 * nf];
            for f in 0..nf {
                out[f] += (sa[f] * cos_b[f] + ca[f] * sin_b[f]) * wrow[f];
            }
        } else {
            let phi = cache.phi[slot];
            for f in 0..nf {
                out[f] += phi * wrow[f];
            }
        }
    }
}

/// Gradient of [`encode_cached`] for pixel `p`: the cosine of the composed
/// angle is recovered by the same addition identity, so this is the exact
/// derivative of the cached forward.
#[inline]
fn encode_cached_backward(
    cache: &ImageCache,
    msc: bool,
    view: &ParamView<'_>,
    p: usize,
    sin_b: &[f64],
    cos_b: &[f64],
    upstream: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let k = cache.k;
    let nf = cache.feat;
    for j in 0..k {
        let slot = p * k + j;
        let ci = cache.idx[slot] as usize;
        if msc {
            let base = slot * 2 * nf;
            let sa = &cache.trig[base..base + nf];
            let ca = &cache.trig[base + nf..base + 2 * nf];
            for f in 0..nf {
                let up = upstream[f];
                let sn = sa[f] * cos_b[f] + ca[f] * sin_b[f];
                let cs = ca[f] * cos_b[f] - sa[f] * sin_b[f];
                grad_w[ci * nf + f] += sn * up;
                grad_b[f] += cs * view.rbf_w[ci * nf + f] * up;
            }
        } else {
            let phi = cache.phi[slot];
            for f in 0..nf {
                grad_w[ci * nf + f] += phi * upstream[f];
            }
        }
    }
}

fn phase_trig(rbf_b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sin_b = Vec::with_capacity(rbf_b.len());
    let mut cos_b = Vec::with_capacity(rbf_b.len());
    for &b in rbf_b {
        let (sn, cs) = fastmath::sincos(b);
        sin_b.push(sn);
        cos_b.push(cs);
    }
    (sin_b, cos_b)
}

/// Fits a field to an RGB image: L2 loss over pixel batches, PSNR metric,
/// rendering. All passes, training and evaluation alike, run through the
/// same cached encoder so reported metrics are exactly reproducible from a
/// checkpoint.
pub struct ImageEngine<'a> {
    field: &'a HybridField,
    lay: SegLayout,
    width: usize,
    height: usize,
    coords: Vec<f64>,
    targets: &'a [f64],
    cache: Option<ImageCache>,
    mode: ExecMode,
}

impl<'a> ImageEngine<'a> {
    pub fn new(
        field: &'a HybridField,
        store: &ParamStore,
        width: usize,
        height: usize,
        targets: &'a [f64],
        mode: ExecMode,
    ) -> Result<ImageEngine<'a>> {
        if field.dim() != 2 {
            return Err(Error::config("image fitting needs a 2-D field"));
        }
        field.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::config("image dimensions must be positive"));
        }
        if targets.len() != width * height * field.out_dim() {
            return Err(Error::config(format!(
                "target array has {} values, expected {}",
                targets.len(),
                width * height * field.out_dim()
            )));
        }
        let lay = SegLayout::resolve(store, field.rbf.is_some())?;
        let coords = pixel_coords(width, height);
        let cache = field.rbf.as_ref().map(|r| ImageCache::build(r, &coords, mode));
        Ok(ImageEngine {
            field,
            lay,
            width,
            height,
            coords,
            targets,
            cache,
            mode,
        })
    }

    pub fn field(&self) -> &'a HybridField {
        self.field
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn forward_pixel(
        &self,
        view: &ParamView<'_>,
        sin_b: &[f64],
        cos_b: &[f64],
        p: usize,
        s: &mut FieldScratch,
    ) {
        let nf = self.field.feat_dim();
        if let (Some(rbf), Some(cache)) = (&self.field.rbf, &self.cache) {
            encode_cached(cache, rbf.msc, view, p, sin_b, cos_b, &mut s.input);
        }
        let x = &self.coords[p * 2..p * 2 + 2];
        self.field.grid.interp(x, view.grid, &mut s.input[nf..]);
        self.field.dec.forward(&view.dec, &s.input, &mut s.dec);
    }

    fn backward_pixel(
        &self,
        view: &ParamView<'_>,
        sin_b: &[f64],
        cos_b: &[f64],
        p: usize,
        d_out: &[f64],
        s: &mut FieldScratch,
        g: &mut GradParts<'_>,
    ) {
        let nf = self.field.feat_dim();
        s.d_input.fill(0.0);
        self.field.dec.backward(
            &view.dec,
            &s.input,
            d_out,
            &mut s.dec,
            &mut g.dec,
            &mut s.d_input,
        );
        let x = &self.coords[p * 2..p * 2 + 2];
        self.field.grid.backward(x, &s.d_input[nf..], g.grid);
        if let (Some(rbf), Some(cache)) = (&self.field.rbf, &self.cache) {
            encode_cached_backward(
                cache,
                rbf.msc,
                view,
                p,
                sin_b,
                cos_b,
                &s.d_input[..nf],
                g.rbf_w,
                g.rbf_b,
            );
        }
    }

    /// Shared batch pass. The loss accumulation is identical with and
    /// without gradients, so `loss_only` reproduces `loss_and_grad`'s loss
    /// bit for bit.
    fn batch_pass(&self, store: &ParamStore, batch: &[u32], want_grads: bool) -> (f64, Vec<Vec<f64>>) {
        assert!(!batch.is_empty(), "empty batch");
        let lay = &self.lay;
        let store_len = store.len();
        let view = make_view(store.all_values(), lay);
        let msc = self.field.rbf.as_ref().is_some_and(|r| r.msc);
        let (sin_b, cos_b) = if msc {
            phase_trig(view.rbf_b)
        } else {
            (Vec::new(), Vec::new())
        };
        let od = self.field.out_dim();
        let denom = (batch.len() * od) as f64;
        let parts = exec::map_chunks(self.mode, batch.len(), exec::DEFAULT_CHUNK, |_, range| {
            let mut s = FieldScratch::new(self.field);
            let mut d_out = vec![0.0; od];
            let mut buf = vec![0.0; if want_grads { store_len } else { 0 }];
            let mut loss = 0.0;
            if want_grads {
                let mut g = split_grads(&mut buf, lay);
                for &pi in &batch[range] {
                    let p = pi as usize;
                    self.forward_pixel(&view, &sin_b, &cos_b, p, &mut s);
                    for c in 0..od {
                        let d = s.dec.out[c] - self.targets[p * od + c];
                        loss += d * d;
                        d_out[c] = 2.0 * d / denom;
                    }
                    self.backward_pixel(&view, &sin_b, &cos_b, p, &d_out, &mut s, &mut g);
                }
            } else {
                for &pi in &batch[range] {
                    let p = pi as usize;
                    self.forward_pixel(&view, &sin_b, &cos_b, p, &mut s);
                    for c in 0..od {
                        let d = s.dec.out[c] - self.targets[p * od + c];
                        loss += d * d;
                    }
                }
            }
            (loss, buf)
        });
        let mut bufs = Vec::with_capacity(parts.len());
        let mut total = 0.0;
        for (l, b) in parts {
            total += l;
            bufs.push(b);
        }
        (total / denom, bufs)
    }

    /// Mean squared error over the pixel batch; gradients land in the store
    /// (overwriting, not accumulating).
    pub fn loss_and_grad(&self, store: &mut ParamStore, batch: &[u32]) -> f64 {
        store.zero_grads();
        let (loss, bufs) = self.batch_pass(store, batch, true);
        for b in &bufs {
            store.accumulate_grads(b);
        }
        loss
    }

    /// The same loss without touching gradients.
    pub fn loss_only(&self, store: &ParamStore, batch: &[u32]) -> f64 {
        self.batch_pass(store, batch, false).0
    }

    /// Renders every pixel; row-major RGB in [0,1] after the squash.
    pub fn render(&self, store: &ParamStore) -> Vec<f64> {
        let view = make_view(store.all_values(), &self.lay);
        let msc = self.field.rbf.as_ref().is_some_and(|r| r.msc);
        let (sin_b, cos_b) = if msc {
            phase_trig(view.rbf_b)
        } else {
            (Vec::new(), Vec::new())
        };
        let od = self.field.out_dim();
        let mut out = vec![0.0; self.pixel_count() * od];
        exec::fill_chunks(self.mode, &mut out, od, exec::DEFAULT_CHUNK, |range, dst| {
            let mut s = FieldScratch::new(self.field);
            let start = range.start;
            for p in range {
                self.forward_pixel(&view, &sin_b, &cos_b, p, &mut s);
                dst[(p - start) * od..(p - start + 1) * od].copy_from_slice(&s.dec.out);
            }
        });
        out
    }

    /// PSNR of the current parameters against the target image.
    pub fn psnr(&self, store: &ParamStore) -> f64 {
        imageio::psnr(&self.render(store), self.targets)
    }

    /// Smallest |pre-activation| of the gated hidden layer over the batch.
    /// Finite differencing is only valid when no gate flips inside the probe
    /// interval; callers compare this margin against `h` times a slope bound
    /// and pick a different batch if it is too small.
    pub fn kink_margin(&self, store: &ParamStore, batch: &[u32]) -> f64 {
        let view = make_view(store.all_values(), &self.lay);
        let msc = self.field.rbf.as_ref().is_some_and(|r| r.msc);
        let (sin_b, cos_b) = if msc {
            phase_trig(view.rbf_b)
        } else {
            (Vec::new(), Vec::new())
        };
        let mut s = FieldScratch::new(self.field);
        let mut margin = f64::INFINITY;
        for &pi in batch {
            self.forward_pixel(&view, &sin_b, &cos_b, pi as usize, &mut s);
            for &a in s.dec.a1() {
                margin = margin.min(a.abs());
            }
        }
        margin
    }
}

// ---------------------------------------------------------------------------
// SDF engine.

/// Fits a field to a signed distance oracle: relative-error loss over point
/// batches, IoU metric on a voxel grid.
pub struct SdfEngine<'a> {
    field: &'a HybridField,
    lay: SegLayout,
    mode: ExecMode,
}

impl<'a> SdfEngine<'a> {
    pub fn new(field: &'a HybridField, store: &ParamStore, mode: ExecMode) -> Result<SdfEngine<'a>> {
        if field.dim() != 3 {
            return Err(Error::config("distance fitting needs a 3-D field"));
        }
        if field.out_dim() != 1 {
            return Err(Error::config("distance fitting needs a scalar output"));
        }
        field.validate()?;
        let lay = SegLayout::resolve(store, field.rbf.is_some())?;
        Ok(SdfEngine { field, lay, mode })
    }

    pub fn field(&self) -> &'a HybridField {
        self.field
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    fn batch_pass(&self, store: &ParamStore, samples: &SdfSamples, want_grads: bool) -> (f64, Vec<Vec<f64>>) {
        let n = samples.targets.len();
        assert!(n > 0, "empty batch");
        assert_eq!(samples.coords.len(), n * 3);
        let lay = &self.lay;
        let store_len = store.len();
        let view = make_view(store.all_values(), lay);
        let denom = n as f64;
        let parts = exec::map_chunks(self.mode, n, exec::DEFAULT_CHUNK, |_, range| {
            let mut s = FieldScratch::new(self.field);
            let mut d_out = [0.0];
            let mut buf = vec![0.0; if want_grads { store_len } else { 0 }];
            let mut loss = 0.0;
            if want_grads {
                let mut g = split_grads(&mut buf, lay);
                for i in range {
                    let x = &samples.coords[i * 3..i * 3 + 3];
                    forward_live(self.field, &view, x, &mut s);
                    let t = samples.targets[i];
                    let sc = t.abs() + MAPE_EPS;
                    let d = s.dec.out[0] - t;
                    loss += d.abs() / sc;
                    d_out[0] = sign0(d) / (sc * denom);
                    backward_live(self.field, &view, x, &d_out, &mut s, &mut g);
                }
            } else {
                for i in range {
                    let x = &samples.coords[i * 3..i * 3 + 3];
                    forward_live(self.field, &view, x, &mut s);
                    let t = samples.targets[i];
                    let sc = t.abs() + MAPE_EPS;
                    let d = s.dec.out[0] - t;
                    loss += d.abs() / sc;
                }
            }
            (loss, buf)
        });
        let mut bufs = Vec::with_capacity(parts.len());
        let mut total = 0.0;
        for (l, b) in parts {
            total += l;
            bufs.push(b);
        }
        (total / denom, bufs)
    }

    /// Mean relative error over the sample batch; gradients land in the
    /// store (overwriting).
    pub fn loss_and_grad(&self, store: &mut ParamStore, samples: &SdfSamples) -> f64 {
        store.zero_grads();
        let (loss, bufs) = self.batch_pass(store, samples, true);
        for b in &bufs {
            store.accumulate_grads(b);
        }
        loss
    }

    pub fn loss_only(&self, store: &ParamStore, samples: &SdfSamples) -> f64 {
        self.batch_pass(store, samples, false).0
    }

    /// Predicted signed distance at one point. Allocates scratch; meant for
    /// spot checks, not hot loops.
    pub fn predict(&self, store: &ParamStore, p: [f64; 3]) -> f64 {
        let view = make_view(store.all_values(), &self.lay);
        let mut s = FieldScratch::new(self.field);
        forward_live(self.field, &view, &p, &mut s);
        s.dec.out[0]
    }

    /// Intersection over union of `{predicted <= 0}` against
    /// `{oracle <= 0}` at the centers of a res^3 voxel grid over the unit
    /// cube. Counts are integers, so the result is independent of execution
    /// mode and chunking.
    pub fn iou(&self, store: &ParamStore, oracle: &SdfOracle, res: usize) -> f64 {
        let view = make_view(store.all_values(), &self.lay);
        let total = res * res * res;
        let parts = exec::map_chunks(self.mode, total, exec::DEFAULT_CHUNK, |_, range| {
            let mut s = FieldScratch::new(self.field);
            let mut inter = 0u64;
            let mut union = 0u64;
            for i in range {
                let z = i / (res * res);
                let y = (i / res) % res;
                let x = i % res;
                let p = [
                    (x as f64 + 0.5) / res as f64,
                    (y as f64 + 0.5) / res as f64,
                    (z as f64 + 0.5) / res as f64,
                ];
                forward_live(self.field, &view, &p, &mut s);
                let a = s.dec.out[0] <= 0.0;
                let b = oracle.signed_distance(p) <= 0.0;
                if a && b {
                    inter += 1;
                }
                if a || b {
                    union += 1;
                }
            }
            (inter, union)
        });
        let (inter, union) =
            exec::reduce_in_order(parts, (0u64, 0u64), |(ai, au), (bi, bu)| (ai + bi, au + bu));
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Smallest smoothness margin over the batch: min of the gated layer's
    /// |pre-activation| and the loss's |prediction - target|. See
    /// [`ImageEngine::kink_margin`].
    pub fn kink_margin(&self, store: &ParamStore, samples: &SdfSamples) -> f64 {
        let view = make_view(store.all_values(), &self.lay);
        let mut s = FieldScratch::new(self.field);
        let mut margin = f64::INFINITY;
        for i in 0..samples.targets.len() {
            let x = &samples.coords[i * 3..i * 3 + 3];
            forward_live(self.field, &view, x, &mut s);
            for &a in s.dec.a1() {
                margin = margin.min(a.abs());
            }
            margin = margin.min((s.dec.out[0] - samples.targets[i]).abs());
        }
        margin
    }
}

// ---------------------------------------------------------------------------
// Assembly: weights -> clustering -> shapes -> field -> store.

/// Everything the initialization pipeline produced besides the field itself.
#[derive(Debug, Clone, Default)]
pub struct AssemblyInfo {
    /// Weighted clustering objective after each E-M iteration.
    pub kmeans_objective: Vec<f64>,
    pub reseeds: Vec<ReseedEvent>,
    /// Mean nearest-neighbor spacing between final centers.
    pub mean_spacing: f64,
}

/// Builds a field from a recipe and a weighted point cloud: weighted K-Means
/// for centers, per-cluster weighted scatter for shapes, then the parameter
/// store. `init_rng` drives the center sampling and must sit on the
/// init-sampling stream; `seed` addresses the weight-init streams.
pub fn assemble_points(
    spec: &ModelSpec,
    pts: &[f64],
    weights: &[f64],
    init_rng: &mut Rng,
    seed: u64,
    mode: ExecMode,
) -> Result<(HybridField, ParamStore, AssemblyInfo)> {
    let mut info = AssemblyInfo::default();
    let rbf_parts = match &spec.rbf {
        Some(rs) => {
            let km = weighted_kmeans(spec.dim, pts, weights, rs.count, KMEANS_ITERS, init_rng, mode)?;
            let sh = init_shapes(spec.dim, pts, weights, &km.centers, &km.assignment)?;
            let tl = tri_len(spec.dim);
            let mut inv = vec![0.0; rs.count * tl];
            for (i, m) in sh.inv_shapes.iter().enumerate() {
                inv[i * tl..(i + 1) * tl].copy_from_slice(m.upper());
            }
            info.kmeans_objective = km.objective;
            info.reseeds = km.reseeds;
            info.mean_spacing = sh.mean_spacing;
            Some(RbfParts {
                centers: km.centers,
                inv_shapes: inv,
                freqs: freq_ladder(rs.freq_lo, rs.freq_hi, rs.feat_dim)?,
            })
        }
        None => None,
    };
    let field = HybridField::from_parts(spec, rbf_parts, None)?;
    let store = field.build_store(spec.mlp_lr_scale, seed);
    Ok((field, store, info))
}

/// Image assembly: points are pixel centers, weights the local gradient
/// magnitude (floored), so centers concentrate where the image has detail.
pub fn assemble_image(
    spec: &ModelSpec,
    width: usize,
    height: usize,
    rgb: &[f64],
    seed: u64,
    mode: ExecMode,
) -> Result<(HybridField, ParamStore, AssemblyInfo)> {
    if spec.dim != 2 {
        return Err(Error::config("image assembly needs a 2-D recipe"));
    }
    if rgb.len() != width * height * 3 {
        return Err(Error::config("image array does not match its dimensions"));
    }
    let pts = pixel_coords(width, height);
    let weights = image_weights(width, height, rgb);
    let mut init_rng = Rng::from_stream(seed, stream::INIT_SAMPLING);
    assemble_points(spec, &pts, &weights, &mut init_rng, seed, mode)
}

/// SDF assembly: points are a training-style sample batch, weighted by
/// inverse distance to the surface.
pub fn assemble_sdf(
    spec: &ModelSpec,
    oracle: &SdfOracle,
    init_samples: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<(HybridField, ParamStore, AssemblyInfo)> {
    if spec.dim != 3 {
        return Err(Error::config("distance assembly needs a 3-D recipe"));
    }
    if init_samples == 0 {
        return Err(Error::config("need at least one init sample"));
    }
    let mut init_rng = Rng::from_stream(seed, stream::INIT_SAMPLING);
    let samples = sample_training_points(oracle, init_samples, &mut init_rng, mode);
    let weights = sdf_weights(&samples.targets);
    assemble_points(spec, &samples.coords, &weights, &mut init_rng, seed, mode)
}

// ---------------------------------------------------------------------------
// Training loop.

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch: usize,
    /// Base learning rate (feature segments); decoder segments scale by
    /// their per-segment factor. Decays by 10x over the run.
    pub lr: f64,
    /// Metric cadence in steps; 0 evaluates only after the last step.
    pub eval_every: usize,
    pub seed: u64,
}

/// What to fit. Engines are borrowed so callers can keep using them for
/// rendering and evaluation after training.
pub enum TaskData<'a, 'f> {
    Image { engine: &'a ImageEngine<'f> },
    Sdf {
        engine: &'a SdfEngine<'f>,
        oracle: &'a SdfOracle,
        iou_res: usize,
    },
}

/// One metric sample: PSNR (image) or IoU (distance) after `step` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub step: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Loss after each step, `steps` entries.
    pub loss_curve: Vec<f64>,
    /// Periodic metric, always including the final step.
    pub metric_curve: Vec<MetricPoint>,
    pub final_metric: f64,
    /// Queries that landed outside the unit domain during this run.
    pub clamp_count: u64,
}

fn eval_metric(store: &ParamStore, task: &TaskData<'_, '_>) -> f64 {
    match task {
        TaskData::Image { engine } => engine.psnr(store),
        TaskData::Sdf {
            engine,
            oracle,
            iou_res,
        } => engine.iou(store, oracle, *iou_res),
    }
}

/// Runs the optimization loop: sample a batch, forward/backward, Adam step
/// with the decayed rate, metric every `eval_every` steps and after the
/// last. With `steps = 0` the initial metric is still evaluated and
/// reported at step 0.
///
/// A non-finite loss aborts with [`Error::NonFiniteLoss`] before the
/// optimizer touches the parameters, so the store still holds the exact
/// state that produced the bad loss and can be checkpointed for diagnosis.
pub fn train(
    store: &mut ParamStore,
    task: &TaskData<'_, '_>,
    opts: &TrainOptions,
) -> Result<TrainResult> {
    if opts.batch == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if !(opts.lr > 0.0) || !opts.lr.is_finite() {
        return Err(Error::config(format!(
            "learning rate must be positive and finite, got {}",
            opts.lr
        )));
    }
    let field = match task {
        TaskData::Image { engine } => engine.field(),
        TaskData::Sdf { engine, .. } => engine.field(),
    };
    field.grid.reset_clamp_count();
    let mut adam = AdamState::new(store);
    let mut rng = match task {
        TaskData::Image { .. } => Rng::from_stream(opts.seed, stream::BATCH),
        TaskData::Sdf { .. } => Rng::from_stream(opts.seed, stream::SDF_SAMPLES),
    };
    let mut loss_curve = Vec::with_capacity(opts.steps);
    let mut metric_curve = Vec::new();
    let mut batch = Vec::with_capacity(opts.batch);
    for step in 0..opts.steps {
        let lr = lr_schedule(step, opts.steps, opts.lr);
        let loss = match task {
            TaskData::Image { engine } => {
                batch.clear();
                let pixels = engine.pixel_count() as u32;
                for _ in 0..opts.batch {
                    batch.push(rng.range(0..pixels));
                }
                engine.loss_and_grad(store, &batch)
            }
            TaskData::Sdf { engine, oracle, .. } => {
                let samples = sample_training_points(oracle, opts.batch, &mut rng, engine.mode());
                engine.loss_and_grad(store, &samples)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        adam_step(store, &mut adam, lr)?;
        loss_curve.push(loss);
        let last = step + 1 == opts.steps;
        if last || (opts.eval_every > 0 && (step + 1) % opts.eval_every == 0) {
            let value = eval_metric(store, task);
            metric_curve.push(MetricPoint {
                step: step + 1,
                value,
            });
            log::info!(
                "step {}/{}: loss {:.6e}, metric {:.4}",
                step + 1,
                opts.steps,
                loss,
                value
            );
        } else {
            log::debug!("step {}/{}: loss {:.6e}", step + 1, opts.steps, loss);
        }
    }
    if opts.steps == 0 {
        let value = eval_metric(store, task);
        metric_curve.push(MetricPoint { step: 0, value });
    }
    let final_metric = metric_curve.last().map(|m| m.value).unwrap_or(f64::NAN);
    Ok(TrainResult {
        loss_curve,
        metric_curve,
        final_metric,
        clamp_count: field.grid.clamp_count(),
    })
}
