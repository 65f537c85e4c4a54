//! Straight-line reference implementations used by the integration tests.
//!
//! Everything here is written directly from the defining formulas with
//! plain loops, `std` math and no shared helpers from the library, so a
//! bug in the optimized code cannot hide in its own reference.

// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use neurbf_core::grid::{HashGridEncoder, HASH_PRIMES};

/// All (squared distance, index) pairs to `query`, sorted ascending with
/// the index breaking ties.
pub fn brute_knn(dim: usize, pts: &[f64], query: &[f64], k: usize) -> Vec<(f64, u32)> {
    let n = pts.len() / dim;
    let mut all: Vec<(f64, u32)> = (0..n)
        .map(|i| {
            let mut d2 = 0.0;
            for d in 0..dim {
                let diff = query[d] - pts[i * dim + d];
                d2 += diff * diff;
            }
            (d2, i as u32)
        })
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(k);
    all
}

/// Reference for the adaptive-basis encoding of one query point.
///
/// Enumerates every center to find the k nearest, evaluates the inverse
/// quadratic kernel through the full symmetric matrix product, normalizes
/// with the documented epsilon guard, then mixes features, optionally
/// through the sinusoidal composition.
#[allow(clippy::too_many_arguments)]
pub fn oracle_aggregate(
    dim: usize,
    k: usize,
    msc: bool,
    centers: &[f64],
    inv_shapes: &[f64],
    freqs: &[f64],
    w: &[f64],
    b: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let feat_dim = freqs.len();
    let tri = dim * (dim + 1) / 2;
    let nearest = brute_knn(dim, centers, x, k);

    // Unpack the upper triangle into a full matrix and take the quadratic
    // form with two explicit loops.
    let mut phi = Vec::with_capacity(k);
    for &(_, i) in &nearest {
        let i = i as usize;
        let packed = &inv_shapes[i * tri..(i + 1) * tri];
        let mut q = vec![0.0; dim * dim];
        let mut t = 0;
        for r in 0..dim {
            for c in r..dim {
                q[r * dim + c] = packed[t];
                q[c * dim + r] = packed[t];
                t += 1;
            }
        }
        let mut form = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                form += (x[r] - centers[i * dim + r]) * q[r * dim + c] * (x[c] - centers[i * dim + c]);
            }
        }
        phi.push(1.0 / (1.0 + form));
    }

    let sum: f64 = phi.iter().sum();
    if sum == 0.0 {
        phi.iter_mut().for_each(|p| *p = 1.0 / k as f64);
    } else {
        phi.iter_mut().for_each(|p| *p /= sum + 1e-12);
    }

    let mut out = vec![0.0; feat_dim];
    for (j, &(_, i)) in nearest.iter().enumerate() {
        let wrow = &w[i as usize * feat_dim..(i as usize + 1) * feat_dim];
        for f in 0..feat_dim {
            let basis = if msc {
                (phi[j] * freqs[f] + b[f]).sin()
            } else {
                phi[j]
            };
            out[f] += basis * wrow[f];
        }
    }
    out
}

/// Reference for the grid encoding of one query point.
///
/// Instead of walking the enclosing cell, enumerates every lattice node of
/// every level and accumulates its tent-weighted feature row; nodes outside
/// the cell contribute exactly zero weight. Level resolutions and row
/// offsets are read off the encoder, the row indexing itself is recomputed
/// from the documented dense/hashed rule.
pub fn oracle_grid(enc: &HashGridEncoder, tables: &[f64], x: &[f64]) -> Vec<f64> {
    let dim = enc.dim;
    let ch = enc.channels;
    let mut out = vec![0.0; enc.levels.len() * ch];
    let xc: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    for (li, lv) in enc.levels.iter().enumerate() {
        let r = lv.res as f64;
        // The cell index saturates at res - 1 so x = 1 lands in the last
        // cell with fractional part 1.
        let mut pos = vec![0.0; dim];
        for d in 0..dim {
            let cell = (xc[d] * r).floor().min(r - 1.0);
            pos[d] = cell + (xc[d] * r - cell);
        }
        let side = lv.res as usize + 1;
        let nodes = side.pow(dim as u32);
        for node in 0..nodes {
            let mut rem = node;
            let mut coord = [0u32; 3];
            for c in coord.iter_mut().take(dim) {
                *c = (rem % side) as u32;
                rem /= side;
            }
            let mut weight = 1.0;
            for d in 0..dim {
                weight *= (1.0 - (pos[d] - coord[d] as f64).abs()).max(0.0);
            }
            if weight == 0.0 {
                continue;
            }
            let row = if lv.dense {
                let mut idx = 0usize;
                for d in (0..dim).rev() {
                    idx = idx * side + coord[d] as usize;
                }
                idx
            } else {
                let mut h = 0u32;
                for d in 0..dim {
                    h ^= coord[d].wrapping_mul(HASH_PRIMES[d]);
                }
                (h as usize) & (lv.rows - 1)
            };
            let feat = &tables[(lv.offset + row) * ch..(lv.offset + row) * ch + ch];
            for c in 0..ch {
                out[li * ch + c] += weight * feat[c];
            }
        }
    }
    out
}

/// Straight-line weighted Lloyd iterations from explicit initial centers.
///
/// Assignment scans every center keeping the first minimum, the update is
/// the weighted member mean, an empty cluster re-seeds onto the worst-fit
/// point (maximum weight x squared distance, lowest index on ties, no
/// reuse within an iteration) and the objective is recorded against the
/// updated centers after each iteration.
pub fn oracle_kmeans(
    dim: usize,
    pts: &[f64],
    weights: &[f64],
    init_centers: &[f64],
    iters: usize,
) -> (Vec<f64>, Vec<u32>, Vec<f64>) {
    let n = pts.len() / dim;
    let k = init_centers.len() / dim;
    let mut centers = init_centers.to_vec();
    let mut objective = Vec::new();

    let dist2 = |p: &[f64], c: &[f64]| {
        let mut acc = 0.0;
        for d in 0..dim {
            let diff = p[d] - c[d];
            acc += diff * diff;
        }
        acc
    };
    let assign = |centers: &[f64]| -> (Vec<u32>, Vec<f64>) {
        let mut a = Vec::with_capacity(n);
        let mut d2s = Vec::with_capacity(n);
        for j in 0..n {
            let p = &pts[j * dim..(j + 1) * dim];
            let mut best = f64::INFINITY;
            let mut best_c = 0u32;
            for c in 0..k {
                let d2 = dist2(p, &centers[c * dim..(c + 1) * dim]);
                if d2 < best {
                    best = d2;
                    best_c = c as u32;
                }
            }
            a.push(best_c);
            d2s.push(best);
        }
        (a, d2s)
    };

    for _ in 0..iters {
        let (assignment, d2s) = assign(&centers);
        let mut sums = vec![0.0; k * dim];
        let mut wsum = vec![0.0; k];
        for j in 0..n {
            let c = assignment[j] as usize;
            wsum[c] += weights[j];
            for d in 0..dim {
                sums[c * dim + d] += weights[j] * pts[j * dim + d];
            }
        }
        let mut used = Vec::new();
        for c in 0..k {
            if wsum[c] > 0.0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / wsum[c];
                }
            } else {
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
                centers[c * dim..(c + 1) * dim]
                    .copy_from_slice(&pts[best_j * dim..(best_j + 1) * dim]);
            }
        }
        let mut obj = 0.0;
        for j in 0..n {
            let c = assignment[j] as usize;
            obj += weights[j] * dist2(&pts[j * dim..(j + 1) * dim], &centers[c * dim..(c + 1) * dim]);
        }
        objective.push(obj);
    }
    let (assignment, _) = assign(&centers);
    (centers, assignment, objective)
}

/// Random symmetric positive definite matrix packed as an upper triangle:
/// A'A plus a diagonal boost, scaled to a kernel-plausible magnitude.
pub fn random_spd_packed(dim: usize, rng: &mut neurbf_core::rng::Rng, scale: f64) -> Vec<f64> {
    let mut a = vec![0.0; dim * dim];
    for v in a.iter_mut() {
        *v = rng.uniform(-1.0, 1.0);
    }
    let mut full = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let mut acc = 0.0;
            for t in 0..dim {
                acc += a[t * dim + r] * a[t * dim + c];
            }
            full[r * dim + c] = acc * scale;
        }
    }
    for d in 0..dim {
        full[d * dim + d] += 0.5 * scale;
    }
    let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
    for r in 0..dim {
        for c in r..dim {
            packed.push(full[r * dim + c]);
        }
    }
    packed
}
