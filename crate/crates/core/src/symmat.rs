//! Packed symmetric 2x2 / 3x3 matrices.
//!
//! Anisotropic kernel shapes are stored as the upper triangle of a symmetric
//! matrix in row-major order: `[m00, m01, m11]` for 2-D and
//! `[m00, m01, m02, m11, m12, m22]` for 3-D. D(D+1)/2 values per matrix.

use crate::error::{Error, Result};

/// Number of packed entries for dimension `dim`.
pub const fn tri_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat {
    pub dim: usize,
    a: [f64; 6],
}

impl SymMat {
    pub fn from_upper(dim: usize, upper: &[f64]) -> Self {
        assert!(dim == 2 || dim == 3, "only 2-D and 3-D supported");
        assert_eq!(upper.len(), tri_len(dim));
        let mut a = [0.0; 6];
        a[..upper.len()].copy_from_slice(upper);
        SymMat { dim, a }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_upper(dim, &vec![0.0; tri_len(dim)])
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for d in 0..dim {
            *m.entry_mut(d, d) = s;
        }
        m
    }

    pub fn upper(&self) -> &[f64] {
        &self.a[..tri_len(self.dim)]
    }

    pub fn upper_mut(&mut self) -> &mut [f64] {
        let n = tri_len(self.dim);
        &mut self.a[..n]
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        match self.dim {
            2 => r * 2 + c - r * (r + 1) / 2, // (0,0)=0 (0,1)=1 (1,1)=2
            _ => r * 3 + c - r * (r + 1) / 2, // (0,0)=0 (0,1)=1 (0,2)=2 (1,1)=3 (1,2)=4 (2,2)=5
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.a[self.idx(r, c)]
    }

    pub fn entry_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let i = self.idx(r, c);
        &mut self.a[i]
    }

    pub fn add_diag(&mut self, s: f64) {
        for d in 0..self.dim {
            *self.entry_mut(d, d) += s;
        }
    }

    /// d^T M d for a difference vector `d`.
    pub fn quad_form(&self, d: &[f64]) -> f64 {
        debug_assert_eq!(d.len(), self.dim);
        match self.dim {
            2 => {
                let (x, y) = (d[0], d[1]);
                self.a[0] * x * x + 2.0 * self.a[1] * x * y + self.a[2] * y * y
            }
            _ => {
                let (x, y, z) = (d[0], d[1], d[2]);
                self.a[0] * x * x
                    + self.a[3] * y * y
                    + self.a[5] * z * z
                    + 2.0 * (self.a[1] * x * y + self.a[2] * x * z + self.a[4] * y * z)
            }
        }
    }

    /// Cholesky factorisation; fails unless the matrix is symmetric positive
    /// definite. Used to validate kernel shapes at construction time.
    pub fn cholesky(&self) -> Result<()> {
        let n = self.dim;
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.entry(i, j);
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::config(format!(
                            "matrix not positive definite (pivot {i} = {sum})"
                        )));
                    }
                    l[i][j] = sum.sqrt();
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        Ok(())
    }

    pub fn determinant(&self) -> f64 {
        match self.dim {
            2 => self.a[0] * self.a[2] - self.a[1] * self.a[1],
            _ => {
                let m = |r, c| self.entry(r, c);
                m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                    - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                    + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
            }
        }
    }

    /// Closed-form inverse via the adjugate. Errors when the determinant is
    /// not strictly positive (shapes must be SPD).
    pub fn inverse(&self) -> Result<SymMat> {
        let det = self.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::config(format!(
                "singular or indefinite matrix (det = {det})"
            )));
        }
        let inv_det = 1.0 / det;
        match self.dim {
            2 => Ok(SymMat::from_upper(
                2,
                &[
                    self.a[2] * inv_det,
                    -self.a[1] * inv_det,
                    self.a[0] * inv_det,
                ],
            )),
            _ => {
                let m = |r, c| self.entry(r, c);
                // Cofactors of a symmetric 3x3.
                let c00 = m(1, 1) * m(2, 2) - m(1, 2) * m(1, 2);
                let c01 = m(0, 2) * m(1, 2) - m(0, 1) * m(2, 2);
                let c02 = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
                let c11 = m(0, 0) * m(2, 2) - m(0, 2) * m(0, 2);
                let c12 = m(0, 1) * m(0, 2) - m(0, 0) * m(1, 2);
                let c22 = m(0, 0) * m(1, 1) - m(0, 1) * m(0, 1);
                Ok(SymMat::from_upper(
                    3,
                    &[
                        c00 * inv_det,
                        c01 * inv_det,
                        c02 * inv_det,
                        c11 * inv_det,
                        c12 * inv_det,
                        c22 * inv_det,
                    ],
                ))
            }
        }
    }

    pub fn mat_vec(&self, v: &[f64], out: &mut [f64]) {
        for r in 0..self.dim {
            out[r] = (0..self.dim).map(|c| self.entry(r, c) * v[c]).sum();
        }
    }

    /// Eigenvalues of a 2x2 symmetric matrix (ascending).
    pub fn eigen2(&self) -> (f64, f64) {
        assert_eq!(self.dim, 2);
        let (a, b, c) = (self.a[0], self.a[1], self.a[2]);
        let tr = a + c;
        let disc = ((a - c) * 0.5).hypot(b);
        (tr * 0.5 - disc, tr * 0.5 + disc)
    }

    /// Unit eigenvector for a given eigenvalue of a 2x2 symmetric matrix.
    pub fn eigenvector2(&self, lambda: f64) -> [f64; 2] {
        assert_eq!(self.dim, 2);
        let (a, b, c) = (self.a[0], self.a[1], self.a[2]);
        // Rows of (M - lambda I) are orthogonal to the eigenvector.
        let (vx, vy) = if b.abs() > 1e-300 {
            (lambda - c, b)
        } else if (a - lambda).abs() < (c - lambda).abs() {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n = (vx * vx + vy * vy).sqrt();
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [vx / n, vy / n]
        }
    }
}
