//! Anisotropic radial basis encoding.
//!
//! A query point gathers its `k` nearest centers, evaluates an inverse
//! quadratic kernel with a per-center anisotropic shape matrix, normalizes
//! the kernel values over the neighborhood, and composes each normalized
//! value with a ladder of sinusoid frequencies before mixing the centers'
//! feature vectors:
//!
//! ```text
//! phi_i    = 1 / (1 + (x - c_i)^T S_i (x - c_i))      S_i = inverse shape
//! phin_i   = phi_i / (sum_j phi_j + 1e-12)
//! out[f]   = sum_i sin(phin_i * m[f] + b[f]) * w_i[f]
//! ```
//!
//! Centers, shapes and the frequency ladder are fixed after construction;
//! the per-center features `w` and the shared phase `b` are the trainable
//! parts and live in a [`crate::params::ParamStore`]. With composition
//! disabled (`msc = false`) the sinusoid drops out: `out[f] = sum_i phin_i *
//! w_i[f]`.

use crate::error::{Error, Result};
use crate::fastmath;
use crate::kdtree::KdTree;
use crate::symmat::{tri_len, SymMat};

/// Normalization guard so an all-but-vanished neighborhood cannot divide by
/// zero.
pub const EPS_NORM: f64 = 1e-12;

/// Upper bound on neighborhood size (fixed storage in [`Neighborhood`]).
pub const MAX_K: usize = 16;

/// Inverse quadratic kernel with packed upper-triangle inverse shape.
/// Strictly positive, 1 exactly at the center, and strictly decreasing along
/// any ray away from it.
#[inline]
pub fn kernel_iq(dim: usize, x: &[f64], c: &[f64], inv_upper: &[f64]) -> f64 {
    let q = match dim {
        2 => {
            let dx = x[0] - c[0];
            let dy = x[1] - c[1];
            inv_upper[0] * dx * dx + 2.0 * inv_upper[1] * dx * dy + inv_upper[2] * dy * dy
        }
        _ => {
            let dx = x[0] - c[0];
            let dy = x[1] - c[1];
            let dz = x[2] - c[2];
            inv_upper[0] * dx * dx
                + inv_upper[3] * dy * dy
                + inv_upper[5] * dz * dz
                + 2.0 * (inv_upper[1] * dx * dy + inv_upper[2] * dx * dz + inv_upper[4] * dy * dz)
        }
    };
    1.0 / (1.0 + q)
}

/// In-place normalization to a near-partition-of-unity. All inputs must be
/// non-negative; an all-zero vector falls back to the uniform distribution.
pub fn normalize(vals: &mut [f64]) {
    debug_assert!(vals.iter().all(|v| *v >= 0.0 && v.is_finite()));
    let sum: f64 = vals.iter().sum();
    if sum == 0.0 {
        let u = 1.0 / vals.len() as f64;
        vals.fill(u);
    } else {
        let inv = 1.0 / (sum + EPS_NORM);
        for v in vals {
            *v *= inv;
        }
    }
}

/// Geometric frequency ladder from `lo` to `hi` inclusive, strictly
/// increasing, with exact endpoints. `n == 1` demands `lo == hi`.
pub fn freq_ladder(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("frequency ladder needs at least one rung"));
    }
    if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config(format!(
            "frequency bounds must be finite and positive, got [{lo}, {hi}]"
        )));
    }
    if lo > hi {
        return Err(Error::config(format!(
            "frequency bounds out of order: {lo} > {hi}"
        )));
    }
    if n == 1 {
        if lo != hi {
            return Err(Error::config(format!(
                "a single frequency needs equal bounds, got [{lo}, {hi}]"
            )));
        }
        return Ok(vec![lo]);
    }
    if lo == hi {
        return Err(Error::config(
            "a strictly increasing ladder needs lo < hi for n >= 2",
        ));
    }
    let ratio = hi / lo;
    let mut m: Vec<f64> = (0..n)
        .map(|i| lo * ratio.powf(i as f64 / (n - 1) as f64))
        .collect();
    m[0] = lo;
    m[n - 1] = hi;
    for w in m.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::config("frequency ladder is not strictly increasing"));
        }
    }
    Ok(m)
}

/// Sinusoidal composition of a single normalized kernel value against the
/// ladder: `out[f] = sin(phin * m[f] + b[f])`.
pub fn sin_compose(phin: f64, m: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), b.len());
    debug_assert_eq!(m.len(), out.len());
    for f in 0..m.len() {
        out[f] = fastmath::sin(phin * m[f] + b[f]);
    }
}

/// A query point's resolved neighborhood: center indices and normalized
/// kernel values, ordered by (distance, index).
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood {
    pub len: u32,
    pub idx: [u32; MAX_K],
    pub phi: [f64; MAX_K],
}

impl Neighborhood {
    pub fn empty() -> Self {
        Neighborhood {
            len: 0,
            idx: [0; MAX_K],
            phi: [0.0; MAX_K],
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.idx[..self.len as usize]
    }

    pub fn phis(&self) -> &[f64] {
        &self.phi[..self.len as usize]
    }
}

/// Record tying an `aggregate` forward pass to its backward pass.
#[derive(Debug, Clone, Copy)]
pub struct AggregateTrace {
    pub x: [f64; 3],
    pub nb: Neighborhood,
}

#[derive(Debug, Clone)]
pub struct RbfSet {
    pub dim: usize,
    pub count: usize,
    pub feat_dim: usize,
    pub k: usize,
    pub msc: bool,
    pub centers: Vec<f64>,    // count x dim
    pub inv_shapes: Vec<f64>, // count x tri_len(dim), packed upper triangles
    pub freqs: Vec<f64>,      // feat_dim, strictly increasing
    index: KdTree,
}

impl RbfSet {
    pub fn new(
        dim: usize,
        centers: Vec<f64>,
        inv_shapes: Vec<f64>,
        freqs: Vec<f64>,
        k: usize,
        msc: bool,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::config(format!("dim must be 2 or 3, got {dim}")));
        }
        if centers.is_empty() || centers.len() % dim != 0 {
            return Err(Error::config("centers must be a non-empty n x dim array"));
        }
        let count = centers.len() / dim;
        if k < 1 || k > MAX_K {
            return Err(Error::config(format!("k = {k} outside 1..={MAX_K}")));
        }
        if count < k {
            return Err(Error::config(format!(
                "need at least k = {k} centers, got {count}"
            )));
        }
        if inv_shapes.len() != count * tri_len(dim) {
            return Err(Error::config(format!(
                "inv_shapes must be n x {} packed entries",
                tri_len(dim)
            )));
        }
        if centers.iter().chain(&inv_shapes).any(|v| !v.is_finite()) {
            return Err(Error::config("centers/shapes must be finite"));
        }
        let tl = tri_len(dim);
        for i in 0..count {
            SymMat::from_upper(dim, &inv_shapes[i * tl..(i + 1) * tl])
                .cholesky()
                .map_err(|e| Error::config(format!("inverse shape {i} not SPD: {e}")))?;
        }
        if freqs.is_empty() {
            return Err(Error::config("empty frequency ladder"));
        }
        if freqs.windows(2).any(|w| !(w[0] < w[1])) && freqs.len() > 1 {
            return Err(Error::config("frequencies must be strictly increasing"));
        }
        let index = KdTree::new(dim, &centers)?;
        Ok(RbfSet {
            dim,
            count,
            feat_dim: freqs.len(),
            k,
            msc,
            centers,
            inv_shapes,
            freqs,
            index,
        })
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inv_shape(&self, i: usize) -> &[f64] {
        let tl = tri_len(self.dim);
        &self.inv_shapes[i * tl..(i + 1) * tl]
    }

    /// Resolves the k-nearest neighborhood with normalized kernel values.
    pub fn neighborhood(&self, x: &[f64]) -> Neighborhood {
        let mut scratch = Vec::with_capacity(self.k);
        let mut nb = Neighborhood::empty();
        self.neighborhood_into(x, &mut scratch, &mut nb);
        nb
    }

    /// Allocation-free neighborhood resolution for hot loops.
    pub fn neighborhood_into(
        &self,
        x: &[f64],
        knn_scratch: &mut Vec<(f64, u32)>,
        nb: &mut Neighborhood,
    ) {
        self.index.knn_into(x, self.k, knn_scratch);
        nb.len = self.k as u32;
        for (j, &(_, i)) in knn_scratch.iter().enumerate() {
            nb.idx[j] = i;
            nb.phi[j] = kernel_iq(self.dim, x, self.center(i as usize), self.inv_shape(i as usize));
        }
        normalize(&mut nb.phi[..self.k]);
    }

    /// Encodes one point: feature mixing over the neighborhood.
    /// `w` is the flat count x feat_dim feature array, `b` the phase vector.
    /// Returns the encoded features and the trace for the backward pass.
    pub fn aggregate(&self, x: &[f64], w: &[f64], b: &[f64]) -> (Vec<f64>, AggregateTrace) {
        debug_assert_eq!(w.len(), self.count * self.feat_dim);
        debug_assert_eq!(b.len(), self.feat_dim);
        let nb = self.neighborhood(x);
        let mut out = vec![0.0; self.feat_dim];
        for j in 0..self.k {
            let wrow = &w[nb.idx[j] as usize * self.feat_dim..][..self.feat_dim];
            if self.msc {
                for f in 0..self.feat_dim {
                    out[f] += fastmath::sin(nb.phi[j] * self.freqs[f] + b[f]) * wrow[f];
                }
            } else {
                for f in 0..self.feat_dim {
                    out[f] += nb.phi[j] * wrow[f];
                }
            }
        }
        let mut xa = [0.0; 3];
        xa[..self.dim].copy_from_slice(x);
        (out, AggregateTrace { x: xa, nb })
    }

    /// Accumulates gradients for the trainable inputs of [`Self::aggregate`].
    ///
    /// `grad_w` and `grad_b` are accumulated into (not overwritten). Centers,
    /// shapes and frequencies receive no gradient by design; they are fixed
    /// after initialisation.
    pub fn aggregate_backward(
        &self,
        trace: &AggregateTrace,
        w: &[f64],
        b: &[f64],
        upstream: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Result<()> {
        if trace.nb.len as usize != self.k {
            return Err(Error::NeighborhoodMismatch(format!(
                "trace has {} neighbors, encoder expects {}",
                trace.nb.len, self.k
            )));
        }
        if trace.nb.indices().iter().any(|&i| i as usize >= self.count) {
            return Err(Error::NeighborhoodMismatch(
                "trace references a center outside the set".into(),
            ));
        }
        debug_assert_eq!(upstream.len(), self.feat_dim);
        debug_assert_eq!(grad_w.len(), w.len());
        debug_assert_eq!(grad_b.len(), self.feat_dim);
        for j in 0..self.k {
            let row = trace.nb.idx[j] as usize * self.feat_dim;
            let wrow = &w[row..row + self.feat_dim];
            let grow = &mut grad_w[row..row + self.feat_dim];
            if self.msc {
                for f in 0..self.feat_dim {
                    let (s, c) = fastmath::sincos(trace.nb.phi[j] * self.freqs[f] + b[f]);
                    grow[f] += s * upstream[f];
                    grad_b[f] += c * wrow[f] * upstream[f];
                }
            } else {
                for f in 0..self.feat_dim {
                    grow[f] += trace.nb.phi[j] * upstream[f];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_is_one_at_center_and_decays() {
        let c = [0.3, 0.7];
        let iso = [1.0, 0.0, 1.0];
        assert_eq!(kernel_iq(2, &c, &c, &iso), 1.0);
        // Unit distance with identity shape: 1/(1+1). Distance 3: 1/(1+9).
        assert_abs_diff_eq!(kernel_iq(2, &[1.3, 0.7], &c, &iso), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_iq(2, &[0.3, 3.7], &c, &iso), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn kernel_anisotropic_hand_value() {
        // S = [[4, 1], [1, 9]], d = (0.5, -0.25):
        // q = 4*0.25 + 2*1*0.5*(-0.25) + 9*0.0625 = 1 - 0.25 + 0.5625 = 1.3125
        let val = kernel_iq(2, &[0.5, -0.25], &[0.0, 0.0], &[4.0, 1.0, 9.0]);
        assert_abs_diff_eq!(val, 1.0 / 2.3125, epsilon = 1e-15);
    }

    #[test]
    fn kernel_strictly_decreases_along_rays() {
        let mut rng = Rng::new(12);
        for _ in 0..200 {
            let dim = if rng.f64() < 0.5 { 2 } else { 3 };
            let c: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            // Random SPD: A^T A + eps I, packed.
            let upper = random_spd_upper(dim, &mut rng);
            let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            if v.iter().all(|a| a.abs() < 1e-3) {
                continue;
            }
            let mut prev = f64::INFINITY;
            for step in 1..=8 {
                let t = step as f64 * 0.2;
                let x: Vec<f64> = (0..dim).map(|d| c[d] + t * v[d]).collect();
                let val = kernel_iq(dim, &x, &c, &upper);
                assert!(val > 0.0 && val < prev);
                prev = val;
            }
        }
    }

    fn random_spd_upper(dim: usize, rng: &mut Rng) -> Vec<f64> {
        let mut a = vec![0.0; dim * dim];
        for v in a.iter_mut() {
            *v = rng.uniform(-1.5, 1.5);
        }
        let mut upper = Vec::new();
        for r in 0..dim {
            for c in r..dim {
                let mut s = 0.0;
                for k in 0..dim {
                    s += a[k * dim + r] * a[k * dim + c];
                }
                if r == c {
                    s += 0.2;
                }
                upper.push(s);
            }
        }
        upper
    }

    #[test]
    fn kernel_invariant_under_rotation() {
        // Rotating x, c and conjugating the shape leaves the kernel value
        // unchanged (it only sees the quadratic form).
        let mut rng = Rng::new(99);
        for _ in 0..300 {
            let theta = rng.uniform(0.0, std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            let rot = |p: &[f64]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let cen = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let upper = random_spd_upper(2, &mut rng);
            // R S R^T for packed symmetric S.
            let (a, b, d) = (upper[0], upper[1], upper[2]);
            let m = [[a, b], [b, d]];
            let r = [[c, -s], [s, c]];
            let mut rm = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        rm[i][j] += r[i][k] * m[k][j];
                    }
                }
            }
            let mut rmrt = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        rmrt[i][j] += rm[i][k] * r[j][k];
                    }
                }
            }
            let upper_rot = [rmrt[0][0], rmrt[0][1], rmrt[1][1]];
            let v0 = kernel_iq(2, &x, &cen, &upper);
            let v1 = kernel_iq(2, &rot(&x), &rot(&cen), &upper_rot);
            assert_abs_diff_eq!(v0, v1, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let mut v = [1.0, 3.0];
        normalize(&mut v);
        assert_abs_diff_eq!(v[0], 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(v[1], 0.75, epsilon = 1e-9);

        let mut single = [0.7];
        normalize(&mut single);
        assert_abs_diff_eq!(single[0], 1.0, epsilon = 1e-9);

        let mut zeros = [0.0, 0.0, 0.0, 0.0];
        normalize(&mut zeros);
        for z in zeros {
            assert_eq!(z, 0.25);
        }
    }

    #[test]
    fn normalize_sums_to_one() {
        let mut rng = Rng::new(4);
        for _ in 0..500 {
            let n = rng.range(1..9usize);
            let mut v: Vec<f64> = (0..n).map(|_| rng.uniform(0.001, 2.0)).collect();
            normalize(&mut v);
            let sum: f64 = v.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum = {sum}");
        }
    }

    #[test]
    fn freq_ladder_geometric() {
        assert_eq!(freq_ladder(1.0, 4.0, 3).unwrap(), vec![1.0, 2.0, 4.0]);
        let m = freq_ladder(0.125, 4096.0, 32).unwrap();
        assert_eq!(m[0], 0.125);
        assert_eq!(m[31], 4096.0);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
        // Constant ratio between rungs.
        let r0 = m[1] / m[0];
        for w in m.windows(2) {
            assert_abs_diff_eq!(w[1] / w[0], r0, epsilon = 1e-9);
        }
        assert_eq!(freq_ladder(2.0, 2.0, 1).unwrap(), vec![2.0]);
        assert!(freq_ladder(3.0, 2.0, 4).is_err());
        assert!(freq_ladder(2.0, 3.0, 1).is_err());
        assert!(freq_ladder(2.0, 2.0, 2).is_err());
        assert!(freq_ladder(0.0, 2.0, 2).is_err());
    }

    #[test]
    fn sin_compose_hand_value() {
        let mut out = [0.0];
        sin_compose(0.5, &[1.0], &[0.0], &mut out);
        assert_abs_diff_eq!(out[0], 0.5f64.sin(), epsilon = 1e-15);
    }

    fn tiny_set(k: usize, msc: bool) -> RbfSet {
        // Two centers on a horizontal line, isotropic unit shapes.
        RbfSet::new(
            2,
            vec![0.25, 0.5, 0.75, 0.5],
            vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            vec![1.0, 3.0],
            k,
            msc,
        )
        .unwrap()
    }

    #[test]
    fn equidistant_centers_share_weight_equally() {
        let set = tiny_set(2, true);
        let w = vec![0.3, -0.2, 0.1, 0.4]; // rows: w_0, w_1
        let b = vec![0.05, -0.3];
        let x = [0.5, 0.5]; // same distance to both centers
        let (out, _) = set.aggregate(&x, &w, &b);
        // Both normalized kernels are 0.5 (up to the epsilon guard), so the
        // output collapses to sin(0.5 m + b) * (w0 + w1).
        for f in 0..2 {
            let phin = 0.5 * (1.0 - EPS_NORM / (EPS_NORM + 2.0 / (1.0 + 0.0625)));
            let _ = phin; // exact value immaterial at 1e-9 tolerance
            let expect = (0.5 * set.freqs[f] + b[f]).sin() * (w[f] + w[2 + f]);
            assert_abs_diff_eq!(out[f], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_neighbor_gets_unit_weight() {
        let set = tiny_set(1, true);
        let w = vec![0.3, -0.2, 9.9, 9.9];
        let b = vec![0.0, 0.25];
        // Query close to center 0; with k = 1, normalization forces 1.
        let (out, trace) = set.aggregate(&[0.26, 0.5], &w, &b);
        assert_eq!(trace.nb.indices(), &[0]);
        for f in 0..2 {
            let expect = (1.0 * set.freqs[f] + b[f]).sin() * w[f];
            assert_abs_diff_eq!(out[f], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn msc_disabled_mixes_linearly() {
        let set = tiny_set(2, false);
        let w = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![0.0, 0.0];
        let (out, trace) = set.aggregate(&[0.5, 0.5], &w, &b);
        let p = trace.nb.phis();
        for f in 0..2 {
            let expect = p[0] * w[trace.nb.idx[0] as usize * 2 + f]
                + p[1] * w[trace.nb.idx[1] as usize * 2 + f];
            assert_abs_diff_eq!(out[f], expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(8);
        for &msc in &[true, false] {
            let set = RbfSet::new(
                2,
                (0..12).map(|_| rng.uniform(0.0, 1.0)).collect(),
                (0..6)
                    .flat_map(|_| {
                        let u = random_spd_upper(2, &mut rng);
                        u.into_iter()
                    })
                    .collect(),
                freq_ladder(1.0, 8.0, 4).unwrap(),
                3,
                msc,
            )
            .unwrap();
            let mut w: Vec<f64> = (0..24).map(|_| rng.uniform(-0.5, 0.5)).collect();
            let mut b: Vec<f64> = (0..4).map(|_| rng.uniform(-0.5, 0.5)).collect();
            let x = [rng.f64(), rng.f64()];
            let upstream: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();

            let loss = |set: &RbfSet, w: &[f64], b: &[f64]| -> f64 {
                let (out, _) = set.aggregate(&x, w, b);
                out.iter().zip(&upstream).map(|(o, u)| o * u).sum()
            };
            let (_, trace) = set.aggregate(&x, &w, &b);
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; b.len()];
            set.aggregate_backward(&trace, &w, &b, &upstream, &mut gw, &mut gb)
                .unwrap();

            let h = 1e-6;
            for i in 0..w.len() {
                let orig = w[i];
                w[i] = orig + h;
                let fp = loss(&set, &w, &b);
                w[i] = orig - h;
                let fm = loss(&set, &w, &b);
                w[i] = orig;
                let num = (fp - fm) / (2.0 * h);
                assert_abs_diff_eq!(gw[i], num, epsilon = 1e-6);
            }
            for i in 0..b.len() {
                let orig = b[i];
                b[i] = orig + h;
                let fp = loss(&set, &w, &b);
                b[i] = orig - h;
                let fm = loss(&set, &w, &b);
                b[i] = orig;
                let num = (fp - fm) / (2.0 * h);
                assert_abs_diff_eq!(gb[i], num, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let set = tiny_set(2, true);
        let w = vec![0.0; 4];
        let b = vec![0.0; 2];
        let (_, mut trace) = set.aggregate(&[0.5, 0.5], &w, &b);
        trace.nb.len = 1;
        let err = set
            .aggregate_backward(&trace, &w, &b, &[1.0, 1.0], &mut vec![0.0; 4], &mut vec![0.0; 2])
            .unwrap_err();
        assert!(matches!(err, Error::NeighborhoodMismatch(_)));

        let (_, mut trace) = set.aggregate(&[0.5, 0.5], &w, &b);
        trace.nb.idx[0] = 99;
        let err = set
            .aggregate_backward(&trace, &w, &b, &[1.0, 1.0], &mut vec![0.0; 4], &mut vec![0.0; 2])
            .unwrap_err();
        assert!(matches!(err, Error::NeighborhoodMismatch(_)));
    }

    #[test]
    fn construction_validates() {
        // Too few centers for k.
        assert!(RbfSet::new(
            2,
            vec![0.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0],
            2,
            true
        )
        .is_err());
        // Non-SPD shape.
        assert!(RbfSet::new(
            2,
            vec![0.0, 0.0],
            vec![1.0, 5.0, 1.0],
            vec![1.0],
            1,
            true
        )
        .is_err());
        // Bad dim.
        assert!(RbfSet::new(4, vec![0.0; 8], vec![1.0; 20], vec![1.0], 1, true).is_err());
    }

    #[test]
    fn partition_of_unity_over_random_sets() {
        let mut rng = Rng::new(21);
        for _ in 0..50 {
            let n = rng.range(8..40usize);
            let centers: Vec<f64> = (0..n * 2).map(|_| rng.f64()).collect();
            let shapes: Vec<f64> = (0..n)
                .flat_map(|_| {
                    let s = rng.uniform(1.0, 200.0);
                    vec![s, 0.0, s]
                })
                .collect();
            let set = RbfSet::new(2, centers, shapes, vec![1.0, 2.0], 4, true).unwrap();
            for _ in 0..20 {
                let nb = set.neighborhood(&[rng.f64(), rng.f64()]);
                let sum: f64 = nb.phis().iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "partition broke: {sum}");
            }
        }
    }
}
