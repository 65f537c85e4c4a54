//! Weighted k-means for placing basis centers, plus the per-task point
//! weights and the covariance-style shape initialization that follows it.
//!
//! The pipeline is: derive a weight per candidate point (image gradient
//! energy or inverse distance for SDFs), sample `k` initial centers without
//! replacement proportionally to weight, run Lloyd iterations with weighted
//! means, then fit one regularized scatter matrix per cluster.
//!
//! Determinism: assignments tie-break to the lowest center index, partial
//! sums are accumulated per fixed-size chunk and combined in chunk order, so
//! results are bitwise identical across thread counts and across the
//! parallel/sequential builds.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::kdtree::{dist2, KdTree};
use crate::rng::Rng;
use crate::symmat::SymMat;

/// Floor applied to image gradient-energy weights so flat regions keep a
/// nonzero chance of receiving centers.
pub const IMAGE_WEIGHT_FLOOR: f64 = 1e-6;
/// Softening for inverse-distance SDF weights.
pub const SDF_WEIGHT_EPS: f64 = 1e-9;

/// One empty-cluster repair: at iteration `iter`, cluster `cluster` had no
/// weighted members and was moved onto point `point`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReseedEvent {
    pub iter: usize,
    pub cluster: usize,
    pub point: usize,
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    /// Final centers, row-major `k * dim`.
    pub centers: Vec<f64>,
    /// Per-point cluster index against the final centers.
    pub assignment: Vec<u32>,
    /// Weighted objective after each iteration's center update.
    pub objective: Vec<f64>,
    pub reseeds: Vec<ReseedEvent>,
}

fn validate_points(dim: usize, pts: &[f64], weights: &[f64]) -> Result<usize> {
    if dim == 0 || pts.is_empty() || pts.len() % dim != 0 {
        return Err(Error::config("point array length must be a multiple of dim"));
    }
    let n = pts.len() / dim;
    if weights.len() != n {
        return Err(Error::config(format!(
            "{} weights for {n} points",
            weights.len()
        )));
    }
    if pts.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("non-finite point coordinate"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::config("weights must be finite and non-negative"));
    }
    Ok(n)
}

/// Samples `k` distinct point indices with probability proportional to
/// weight and returns their coordinates as initial centers.
///
/// Uses exponential race keys `-ln(u) / w`: the k smallest keys win, which
/// is the standard reservoir scheme for weighted sampling without
/// replacement. Zero-weight points get infinite keys and are only chosen
/// when fewer than `k` positive weights exist; ties fall to the lowest
/// index.
pub fn weighted_sample_init(
    dim: usize,
    pts: &[f64],
    weights: &[f64],
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = validate_points(dim, pts, weights)?;
    if k == 0 || k > n {
        return Err(Error::config(format!("cannot draw {k} centers from {n} points")));
    }
    let mut keyed: Vec<(f64, u32)> = Vec::with_capacity(n);
    for (j, &w) in weights.iter().enumerate() {
        let u = rng.f64().max(1e-300);
        let key = if w > 0.0 { -u.ln() / w } else { f64::INFINITY };
        keyed.push((key, j as u32));
    }
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut centers = Vec::with_capacity(k * dim);
    for &(_, j) in keyed.iter().take(k) {
        let j = j as usize;
        centers.extend_from_slice(&pts[j * dim..j * dim + dim]);
    }
    Ok(centers)
}

/// Nearest-center assignment with squared distances, lowest index on ties.
fn assign(
    dim: usize,
    pts: &[f64],
    centers: &[f64],
    mode: ExecMode,
) -> Result<(Vec<u32>, Vec<f64>)> {
    let tree = KdTree::new(dim, centers)?;
    let n = pts.len() / dim;
    let parts = exec::map_chunks(mode, n, exec::DEFAULT_CHUNK, |_, range| {
        let mut a = Vec::with_capacity(range.len());
        let mut d = Vec::with_capacity(range.len());
        for j in range {
            let (d2, idx) = tree.nearest(&pts[j * dim..j * dim + dim]);
            a.push(idx);
            d.push(d2);
        }
        (a, d)
    });
    let mut assignment = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for (a, d) in parts {
        assignment.extend_from_slice(&a);
        dists.extend_from_slice(&d);
    }
    Ok((assignment, dists))
}

/// Lloyd iterations from caller-provided initial centers.
///
/// Each iteration assigns every point to its nearest center, then replaces
/// each center with the weighted mean of its members. A cluster whose member
/// weight sums to zero is re-seeded onto the currently worst-fit point (the
/// one maximizing weight times squared distance to its assigned center,
/// lowest index on ties, never reusing a point within one iteration); the
/// repair is reported, not an error. The recorded objective is evaluated
/// after each update and is non-increasing across iterations.
pub fn weighted_kmeans_from(
    dim: usize,
    pts: &[f64],
    weights: &[f64],
    init_centers: &[f64],
    iters: usize,
    mode: ExecMode,
) -> Result<KMeansOutcome> {
    let n = validate_points(dim, pts, weights)?;
    if init_centers.is_empty() || init_centers.len() % dim != 0 {
        return Err(Error::config("initial centers must be a multiple of dim"));
    }
    let k = init_centers.len() / dim;
    if k > n {
        return Err(Error::config(format!("{k} clusters exceed {n} points")));
    }

    let mut centers = init_centers.to_vec();
    let mut objective = Vec::with_capacity(iters);
    let mut reseeds = Vec::new();

    for iter in 0..iters {
        let (assignment, d2s) = assign(dim, pts, &centers, mode)?;

        // Weighted per-cluster sums, combined in chunk order.
        let parts = exec::map_chunks(mode, n, exec::DEFAULT_CHUNK, |_, range| {
            let mut sums = vec![0.0f64; k * dim];
            let mut wsum = vec![0.0f64; k];
            for j in range {
                let c = assignment[j] as usize;
                let w = weights[j];
                wsum[c] += w;
                let acc = &mut sums[c * dim..c * dim + dim];
                let p = &pts[j * dim..j * dim + dim];
                for d in 0..dim {
                    acc[d] += w * p[d];
                }
            }
            (sums, wsum)
        });
        let (sums, wsum) = exec::reduce_in_order(
            parts,
            (vec![0.0f64; k * dim], vec![0.0f64; k]),
            |(mut s, mut w), (ps, pw)| {
                for (a, b) in s.iter_mut().zip(&ps) {
                    *a += b;
                }
                for (a, b) in w.iter_mut().zip(&pw) {
                    *a += b;
                }
                (s, w)
            },
        );

        let mut used: Vec<usize> = Vec::new();
        for c in 0..k {
            if wsum[c] > 0.0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / wsum[c];
                }
            } else {
                // Re-seed onto the worst-fit point under the pre-update
                // centers; distances for those are already in d2s.
                let mut best_j = usize::MAX;
                let mut best_fit = f64::NEG_INFINITY;
                for j in 0..n {
                    if used.contains(&j) {
                        continue;
                    }
                    let fit = weights[j] * d2s[j];
                    if fit > best_fit {
                        best_fit = fit;
                        best_j = j;
                    }
                }
                used.push(best_j);
                centers[c * dim..c * dim + dim]
                    .copy_from_slice(&pts[best_j * dim..best_j * dim + dim]);
                reseeds.push(ReseedEvent {
                    iter,
                    cluster: c,
                    point: best_j,
                });
            }
        }

        // Objective against the fresh centers but this iteration's
        // assignment; re-seeded clusters had zero weighted mass, so moving
        // them cannot raise it.
        let parts = exec::map_chunks(mode, n, exec::DEFAULT_CHUNK, |_, range| {
            let mut acc = 0.0f64;
            for j in range {
                let c = assignment[j] as usize;
                acc += weights[j] * dist2(dim, &pts[j * dim..j * dim + dim], &centers[c * dim..c * dim + dim]);
            }
            acc
        });
        objective.push(exec::reduce_in_order(parts, 0.0, |a, b| a + b));
    }

    let (assignment, _) = assign(dim, pts, &centers, mode)?;
    Ok(KMeansOutcome {
        centers,
        assignment,
        objective,
        reseeds,
    })
}

/// Weighted k-means with weight-proportional sampling init.
pub fn weighted_kmeans(
    dim: usize,
    pts: &[f64],
    weights: &[f64],
    k: usize,
    iters: usize,
    rng: &mut Rng,
    mode: ExecMode,
) -> Result<KMeansOutcome> {
    let init = weighted_sample_init(dim, pts, weights, k, rng)?;
    weighted_kmeans_from(dim, pts, weights, &init, iters, mode)
}

#[derive(Debug, Clone)]
pub struct ShapeInit {
    /// Per-cluster scatter matrices (weighted covariance plus isotropic
    /// regularizer).
    pub shapes: Vec<SymMat>,
    /// Inverses of `shapes`, the form the kernel consumes.
    pub inv_shapes: Vec<SymMat>,
    /// Mean nearest-neighbor spacing between centers.
    pub mean_spacing: f64,
}

/// Fits one scatter matrix per cluster from its weighted members.
///
/// Every shape gets an isotropic regularizer of (0.25 s)^2 added to the
/// diagonal, where `s` is the mean nearest-neighbor spacing between centers;
/// clusters with zero member weight fall back to s^2 I outright. The
/// regularizer keeps all shapes positive definite, so the inverses exist.
pub fn init_shapes(
    dim: usize,
    pts: &[f64],
    weights: &[f64],
    centers: &[f64],
    assignment: &[u32],
) -> Result<ShapeInit> {
    let n = validate_points(dim, pts, weights)?;
    let k = centers.len() / dim;
    if assignment.len() != n {
        return Err(Error::config("assignment length mismatch"));
    }
    if assignment.iter().any(|&a| a as usize >= k) {
        return Err(Error::config("assignment index out of range"));
    }

    let mean_spacing = if k >= 2 {
        let tree = KdTree::new(dim, centers)?;
        let mut total = 0.0;
        for c in 0..k {
            // Two nearest: self at distance 0, then the true neighbor.
            let nb = tree.knn(&centers[c * dim..c * dim + dim], 2);
            total += nb[1].0.sqrt();
        }
        total / k as f64
    } else {
        // Degenerate single-center layout; half the unit domain.
        0.5
    };
    let reg = (0.25 * mean_spacing).powi(2);

    let mut scatter = vec![SymMat::zeros(dim); k];
    let mut wsum = vec![0.0f64; k];
    for j in 0..n {
        let c = assignment[j] as usize;
        let w = weights[j];
        if w == 0.0 {
            continue;
        }
        wsum[c] += w;
        let p = &pts[j * dim..j * dim + dim];
        let ce = &centers[c * dim..c * dim + dim];
        for r in 0..dim {
            for cc in r..dim {
                *scatter[c].entry_mut(r, cc) += w * (p[r] - ce[r]) * (p[cc] - ce[cc]);
            }
        }
    }

    let mut shapes = Vec::with_capacity(k);
    let mut inv_shapes = Vec::with_capacity(k);
    for c in 0..k {
        let shape = if wsum[c] > 0.0 {
            let mut s = scatter[c].clone();
            for v in s.upper_mut() {
                *v /= wsum[c];
            }
            s.add_diag(reg);
            s
        } else {
            SymMat::scaled_identity(dim, mean_spacing * mean_spacing)
        };
        inv_shapes.push(shape.inverse()?);
        shapes.push(shape);
    }
    Ok(ShapeInit {
        shapes,
        inv_shapes,
        mean_spacing,
    })
}

/// Per-pixel gradient-energy weights for an RGB image in scanline order.
///
/// Gradients are central differences in pixel units with replicated borders;
/// the weight is the Frobenius norm over both axes and all three channels,
/// floored at [`IMAGE_WEIGHT_FLOOR`].
pub fn image_weights(width: usize, height: usize, rgb: &[f64]) -> Vec<f64> {
    assert_eq!(rgb.len(), width * height * 3);
    let px = |x: usize, y: usize, c: usize| rgb[(y * width + x) * 3 + c];
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let yl = y.saturating_sub(1);
        let yh = (y + 1).min(height - 1);
        for x in 0..width {
            let xl = x.saturating_sub(1);
            let xh = (x + 1).min(width - 1);
            let mut e = 0.0;
            for c in 0..3 {
                let dx = (px(xh, y, c) - px(xl, y, c)) / 2.0;
                let dy = (px(x, yh, c) - px(x, yl, c)) / 2.0;
                e += dx * dx + dy * dy;
            }
            out.push(e.sqrt().max(IMAGE_WEIGHT_FLOOR));
        }
    }
    out
}

/// Inverse-distance weights that concentrate centers near the zero set.
pub fn sdf_weights(distances: &[f64]) -> Vec<f64> {
    distances
        .iter()
        .map(|d| 1.0 / (d.abs() + SDF_WEIGHT_EPS))
        .collect()
}
