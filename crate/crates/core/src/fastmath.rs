//! Branch-light f64 sincos.
//!
//! Training spends most of its transcendental budget on `sin`/`cos` of
//! frequency-scaled arguments (|x| up to a few thousand). The platform libm
//! is correctly rounded but (a) differs bit-for-bit between libc
//! implementations, which would make checkpoints machine-dependent, and
//! (b) is slower than needed. This module implements the classic two-stage
//! Cody-Waite reduction by pi/2 followed by fdlibm kernel polynomials on
//! [-pi/4, pi/4]. Accuracy is within a couple of ulp of libm over the fast
//! range (verified in tests); outside |x| <= 2^20 it falls back to the
//! platform `sin_cos`.

const INV_PIO2: f64 = 6.36619772367581382433e-01; // 2/pi
const PIO2_1: f64 = 1.57079632673412561417e+00; // first 33 bits of pi/2
const PIO2_2: f64 = 6.07710050630396597660e-11; // next 33 bits
const PIO2_2T: f64 = 2.02226624879595063154e-21; // pi/2 - PIO2_1 - PIO2_2

/// Arguments with |x| above this take the libm fallback.
pub const FAST_RANGE: f64 = 1_048_576.0; // 2^20

const S1: f64 = -1.66666666666666324348e-01;
const S2: f64 = 8.33333333332248946124e-03;
const S3: f64 = -1.98412698298579493134e-04;
const S4: f64 = 2.75573137070700676789e-06;
const S5: f64 = -2.50507602534068634195e-08;
const S6: f64 = 1.58969099521155010221e-10;

const C1: f64 = 4.16666666666666019037e-02;
const C2: f64 = -1.38888888888741095749e-03;
const C3: f64 = 2.48015872894767294178e-05;
const C4: f64 = -2.75573143513906633035e-07;
const C5: f64 = 2.08757232129817482790e-09;
const C6: f64 = -1.13596475577881948265e-11;

#[inline(always)]
fn kernel_sin(r: f64) -> f64 {
    let z = r * r;
    let v = z * r;
    r + v * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))))
}

#[inline(always)]
fn kernel_cos(r: f64) -> f64 {
    let z = r * r;
    let p = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    // 1 - z/2 + z^2*poly, ordered to limit cancellation near |r| = pi/4.
    1.0 - (0.5 * z - (z * p))
}

/// Simultaneous sin and cos.
#[inline]
pub fn sincos(x: f64) -> (f64, f64) {
    if !(x.abs() <= FAST_RANGE) {
        // Huge or non-finite arguments: defer to libm (rare; training
        // arguments live well inside the fast range).
        return x.sin_cos();
    }
    // Round to nearest multiple of pi/2.
    let fnn = (x * INV_PIO2).round_ties_even();
    let n = fnn as i64;
    // Two-stage Cody-Waite. PIO2_1 and PIO2_2 carry 33 significant bits each,
    // so their products with the (at most 21-bit) integer fnn are exact; the
    // correction term recovers the rounding error of the second subtraction.
    let r0 = x - fnn * PIO2_1;
    let w1 = fnn * PIO2_2;
    let r1 = r0 - w1;
    let w = fnn * PIO2_2T - ((r0 - r1) - w1);
    let r = r1 - w;
    let s = kernel_sin(r);
    let c = kernel_cos(r);
    match n & 3 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// `sin` alone (same kernel; cos discarded by the optimizer).
#[inline]
pub fn sin(x: f64) -> f64 {
    sincos(x).0
}

/// `cos` alone.
#[inline]
pub fn cos(x: f64) -> f64 {
    sincos(x).1
}

/// Elementwise sincos over a slice.
pub fn sincos_slice(xs: &[f64], sin_out: &mut [f64], cos_out: &mut [f64]) {
    assert_eq!(xs.len(), sin_out.len());
    assert_eq!(xs.len(), cos_out.len());
    for ((x, s), c) in xs.iter().zip(sin_out.iter_mut()).zip(cos_out.iter_mut()) {
        let (sv, cv) = sincos(*x);
        *s = sv;
        *c = cv;
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
