//! Multi-resolution feature grid with hashed high levels.
//!
//! Each level `l` carries a lattice of (R_l + 1)^D nodes over the unit
//! square/cube. Levels whose node count fits the table budget are stored
//! densely with an injective row-major index; finer levels share rows
//! through an XOR hash into a power-of-two table. A query point is encoded
//! per level by multilinear interpolation over the 2^D enclosing corner
//! nodes, and the level features are concatenated.
//!
//! Out-of-range coordinates are clamped to [0, 1]; every clamped query bumps
//! a counter that training reports surface, since silent clamping usually
//! points at a broken coordinate mapping upstream.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Per-axis hash multipliers for non-dense levels. The first axis multiplier
/// is 1 so a 1-D hash degenerates to the identity.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone)]
pub struct GridLevel {
    pub res: u32,
    /// Rows allocated for this level: (res+1)^D when dense, table_size when
    /// hashed.
    pub rows: usize,
    /// Row offset of this level within the concatenated tables.
    pub offset: usize,
    pub dense: bool,
}

#[derive(Debug)]
pub struct HashGridEncoder {
    pub dim: usize,
    pub channels: usize,
    /// Maximum rows per level; power of two.
    pub table_size: usize,
    pub levels: Vec<GridLevel>,
    clamp_count: AtomicU64,
}

impl HashGridEncoder {
    pub fn new(
        dim: usize,
        n_levels: usize,
        r_min: u32,
        r_max: u32,
        channels: usize,
        table_size: usize,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::config(format!("dim must be 2 or 3, got {dim}")));
        }
        if n_levels == 0 || channels == 0 {
            return Err(Error::config("levels and channels must be positive"));
        }
        if r_min < 1 {
            return Err(Error::config("base resolution must be at least 1"));
        }
        if !table_size.is_power_of_two() {
            return Err(Error::config(format!(
                "table size must be a power of two, got {table_size}"
            )));
        }
        if n_levels == 1 {
            if r_min != r_max {
                return Err(Error::config("a single level needs r_min == r_max"));
            }
        } else if r_min >= r_max {
            return Err(Error::config(format!(
                "resolution bounds out of order: {r_min} >= {r_max}"
            )));
        }

        let mut levels: Vec<GridLevel> = Vec::with_capacity(n_levels);
        let mut offset = 0usize;
        for l in 0..n_levels {
            let res = if n_levels == 1 {
                r_min
            } else if l == n_levels - 1 {
                r_max
            } else {
                let g = (r_max as f64 / r_min as f64).powf(l as f64 / (n_levels - 1) as f64);
                let raw = (r_min as f64 * g).round() as u32;
                // Geometric progression, forced strictly increasing after
                // rounding.
                match levels.last() {
                    Some(prev) => raw.max(prev.res + 1),
                    None => raw,
                }
            };
            if let Some(prev) = levels.last() {
                if res <= prev.res {
                    return Err(Error::config(
                        "resolution ladder cannot be made strictly increasing",
                    ));
                }
            }
            let nodes = ((res as usize) + 1).pow(dim as u32);
            let dense = nodes <= table_size;
            let rows = if dense { nodes } else { table_size };
            levels.push(GridLevel {
                res,
                rows,
                offset,
                dense,
            });
            offset += rows;
        }
        Ok(HashGridEncoder {
            dim,
            channels,
            table_size,
            levels,
            clamp_count: AtomicU64::new(0),
        })
    }

    /// Length of the flat feature table (rows across all levels x channels).
    pub fn table_len(&self) -> usize {
        self.levels.iter().map(|l| l.rows).sum::<usize>() * self.channels
    }

    /// Encoded feature width: levels x channels.
    pub fn out_dim(&self) -> usize {
        self.levels.len() * self.channels
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamp_count.load(Ordering::Relaxed)
    }

    pub fn reset_clamp_count(&self) {
        self.clamp_count.store(0, Ordering::Relaxed);
    }

    /// Row index of a corner node within its level.
    ///
    /// Dense levels use the injective row-major index with stride (res+1);
    /// hashed levels XOR the coordinates scaled by fixed primes and mask
    /// into the power-of-two table.
    pub fn hash_index(&self, level: usize, cell: &[u32]) -> usize {
        let lv = &self.levels[level];
        debug_assert_eq!(cell.len(), self.dim);
        debug_assert!(cell.iter().all(|&c| c <= lv.res));
        if lv.dense {
            let stride = lv.res as usize + 1;
            let mut idx = 0usize;
            for d in (0..self.dim).rev() {
                idx = idx * stride + cell[d] as usize;
            }
            idx
        } else {
            let mut h = 0u32;
            for d in 0..self.dim {
                h ^= cell[d].wrapping_mul(HASH_PRIMES[d]);
            }
            (h as usize) & (lv.rows - 1)
        }
    }

    #[inline]
    fn clamp_point(&self, x: &[f64], xc: &mut [f64; 3]) {
        let mut clamped = false;
        for d in 0..self.dim {
            let v = x[d];
            let c = v.clamp(0.0, 1.0);
            // NaN propagates into the clamp; treat it as a caller bug.
            debug_assert!(!v.is_nan(), "NaN query coordinate");
            if c != v {
                clamped = true;
            }
            xc[d] = c;
        }
        if clamped {
            self.clamp_count.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Encodes one point into `out` (length [`Self::out_dim`]).
    pub fn interp(&self, x: &[f64], tables: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(tables.len(), self.table_len());
        debug_assert_eq!(out.len(), self.out_dim());
        let mut xc = [0.0f64; 3];
        self.clamp_point(x, &mut xc);
        let ch = self.channels;
        for (li, lv) in self.levels.iter().enumerate() {
            let (i0, frac) = cell_of(&xc, self.dim, lv.res);
            let base_out = li * ch;
            out[base_out..base_out + ch].fill(0.0);
            let corners = 1usize << self.dim;
            for corner in 0..corners {
                let mut w = 1.0;
                let mut cell = [0u32; 3];
                for d in 0..self.dim {
                    if corner >> d & 1 == 1 {
                        w *= frac[d];
                        cell[d] = i0[d] + 1;
                    } else {
                        w *= 1.0 - frac[d];
                        cell[d] = i0[d];
                    }
                }
                let row = lv.offset + self.hash_index(li, &cell[..self.dim]);
                let feat = &tables[row * ch..row * ch + ch];
                for c in 0..ch {
                    out[base_out + c] += w * feat[c];
                }
            }
        }
    }

    /// Scatters `upstream` (length [`Self::out_dim`]) into `grad_tables`.
    /// Accumulates; the caller owns zeroing. Does not touch the clamp
    /// counter (the forward pass already counted this query).
    pub fn backward(&self, x: &[f64], upstream: &[f64], grad_tables: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.out_dim());
        debug_assert_eq!(grad_tables.len(), self.table_len());
        let mut xc = [0.0f64; 3];
        for d in 0..self.dim {
            xc[d] = x[d].clamp(0.0, 1.0);
        }
        let ch = self.channels;
        for (li, lv) in self.levels.iter().enumerate() {
            let (i0, frac) = cell_of(&xc, self.dim, lv.res);
            let up = &upstream[li * ch..li * ch + ch];
            let corners = 1usize << self.dim;
            for corner in 0..corners {
                let mut w = 1.0;
                let mut cell = [0u32; 3];
                for d in 0..self.dim {
                    if corner >> d & 1 == 1 {
                        w *= frac[d];
                        cell[d] = i0[d] + 1;
                    } else {
                        w *= 1.0 - frac[d];
                        cell[d] = i0[d];
                    }
                }
                let row = lv.offset + self.hash_index(li, &cell[..self.dim]);
                let g = &mut grad_tables[row * ch..row * ch + ch];
                for c in 0..ch {
                    g[c] += w * up[c];
                }
            }
        }
    }
}

/// Enclosing cell and fractional position for a clamped point at resolution
/// `res`. `x == 1.0` lands in the last cell with frac 1 so interpolation
/// stays continuous up to the boundary.
#[inline]
fn cell_of(xc: &[f64; 3], dim: usize, res: u32) -> ([u32; 3], [f64; 3]) {
    let mut i0 = [0u32; 3];
    let mut frac = [0.0f64; 3];
    let r = res as f64;
    for d in 0..dim {
        let pos = xc[d] * r;
        let cell = (pos.floor() as u32).min(res.saturating_sub(1));
        i0[d] = cell;
        frac[d] = pos - cell as f64;
    }
    (i0, frac)
}
