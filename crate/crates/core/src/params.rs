//! Flat parameter storage and optimisation.
//!
//! All trainable state of a model lives in one [`ParamStore`]: a flat f64
//! value array plus a same-shape gradient array, partitioned into named
//! segments. Segments carry a per-segment learning-rate scale so different
//! parts of the model (encoder features vs decoder weights) can train at
//! different rates under one schedule.

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-15;

/// Handle to a segment of a [`ParamStore`]. Only valid for the store that
/// created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentId(usize);

#[derive(Debug, Clone)]
pub struct SegmentDef {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// Multiplier on the base learning rate for this segment.
    pub lr_scale: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    values: Vec<f64>,
    grads: Vec<f64>,
    segments: Vec<SegmentDef>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-initialised segment and returns its handle.
    pub fn add_segment(&mut self, name: impl Into<String>, len: usize, lr_scale: f64) -> SegmentId {
        let name = name.into();
        assert!(len > 0, "segment `{name}` must not be empty");
        assert!(
            lr_scale.is_finite() && lr_scale >= 0.0,
            "segment `{name}`: bad lr scale {lr_scale}"
        );
        assert!(
            self.segments.iter().all(|s| s.name != name),
            "duplicate segment `{name}`"
        );
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        self.grads.resize(offset + len, 0.0);
        self.segments.push(SegmentDef {
            name,
            offset,
            len,
            lr_scale,
        });
        SegmentId(self.segments.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segments(&self) -> &[SegmentDef] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> &SegmentDef {
        &self.segments[id.0]
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = SegmentId> {
        (0..self.segments.len()).map(SegmentId)
    }

    pub fn segment_by_name(&self, name: &str) -> Option<SegmentId> {
        self.segments.iter().position(|s| s.name == name).map(SegmentId)
    }

    pub fn values(&self, id: SegmentId) -> &[f64] {
        let s = &self.segments[id.0];
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn values_mut(&mut self, id: SegmentId) -> &mut [f64] {
        let s = &self.segments[id.0];
        &mut self.values[s.offset..s.offset + s.len]
    }

    pub fn grads(&self, id: SegmentId) -> &[f64] {
        let s = &self.segments[id.0];
        &self.grads[s.offset..s.offset + s.len]
    }

    pub fn grads_mut(&mut self, id: SegmentId) -> &mut [f64] {
        let s = &self.segments[id.0];
        &mut self.grads[s.offset..s.offset + s.len]
    }

    pub fn all_values(&self) -> &[f64] {
        &self.values
    }

    pub fn all_values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn all_grads(&self) -> &[f64] {
        &self.grads
    }

    /// grads += buffer. This is the reduction step for per-chunk gradient
    /// buffers; callers must apply buffers in a fixed order.
    pub fn accumulate_grads(&mut self, buffer: &[f64]) {
        assert_eq!(buffer.len(), self.grads.len());
        for (g, b) in self.grads.iter_mut().zip(buffer) {
            *g += *b;
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill(0.0);
    }

    /// Flat view of a segment's range within the full arrays.
    pub fn segment_range(&self, id: SegmentId) -> std::ops::Range<usize> {
        let s = &self.segments[id.0];
        s.offset..s.offset + s.len
    }
}

/// Adam moment estimates. Sized to a specific store.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        AdamState {
            m: vec![0.0; store.len()],
            v: vec![0.0; store.len()],
            t: 0,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every segment, with bias correction and per-segment
/// learning-rate scaling. Gradients are validated before any state changes:
/// a NaN/inf gradient aborts with the owning segment and local index, leaving
/// parameters and moments untouched. On success gradients are zeroed and the
/// step counter advances by exactly one.
pub fn adam_step(store: &mut ParamStore, adam: &mut AdamState, base_lr: f64) -> Result<()> {
    assert_eq!(adam.m.len(), store.len(), "Adam state sized to store");
    for seg in &store.segments {
        for i in 0..seg.len {
            let g = store.grads[seg.offset + i];
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient {
                    segment: seg.name.clone(),
                    index: i,
                    value: g,
                });
            }
        }
    }
    adam.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(adam.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(adam.t as i32);
    for seg in &store.segments {
        let lr = base_lr * seg.lr_scale;
        for i in seg.offset..seg.offset + seg.len {
            let g = store.grads[i];
            let m = ADAM_BETA1 * adam.m[i] + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * adam.v[i] + (1.0 - ADAM_BETA2) * g * g;
            adam.m[i] = m;
            adam.v[i] = v;
            let mhat = m / bc1;
            let vhat = v / bc2;
            store.values[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    store.zero_grads();
    Ok(())
}

/// Exponentially decaying schedule: `lr0 * 0.1^(step/total)`. Reaches a
/// tenth of the initial rate at `step == total`.
pub fn lr_schedule(step: usize, total: usize, lr0: f64) -> f64 {
    assert!(total > 0, "schedule needs a positive horizon");
    assert!(step <= total, "step {step} beyond horizon {total}");
    lr0 * 0.1f64.powf(step as f64 / total as f64)
}

/// Outcome of a finite-difference gradient audit.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub probes: usize,
    pub worst_segment: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compares analytic gradients against central differences.
///
/// `loss_fn` must be a pure function of the store's values; it is evaluated
/// twice up front and any bitwise disagreement is reported as
/// [`Error::NonDeterministicEval`]. `grad_fn` must leave the loss gradient in
/// the store's gradient array. `probes_per_segment` random coordinates are
/// probed in every segment; the relative error of a probe is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<L, G>(
    store: &mut ParamStore,
    probes_per_segment: usize,
    h: f64,
    rng: &mut Rng,
    mut loss_fn: L,
    mut grad_fn: G,
) -> Result<FdReport>
where
    L: FnMut(&ParamStore) -> f64,
    G: FnMut(&mut ParamStore),
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::config(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }
    let l1 = loss_fn(store);
    let l2 = loss_fn(store);
    if l1.to_bits() != l2.to_bits() {
        return Err(Error::NonDeterministicEval(l1, l2));
    }

    store.zero_grads();
    grad_fn(store);
    let analytic = store.grads.clone();
    store.zero_grads();

    let mut report = FdReport {
        max_rel_err: 0.0,
        probes: 0,
        worst_segment: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for seg_idx in 0..store.segments.len() {
        let (offset, len, name) = {
            let s = &store.segments[seg_idx];
            (s.offset, s.len, s.name.clone())
        };
        for _ in 0..probes_per_segment {
            let local = rng.range(0..len);
            let idx = offset + local;
            let orig = store.values[idx];
            store.values[idx] = orig + h;
            let fp = loss_fn(store);
            store.values[idx] = orig - h;
            let fm = loss_fn(store);
            store.values[idx] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.probes += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_segment = name.clone();
                report.worst_index = local;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
