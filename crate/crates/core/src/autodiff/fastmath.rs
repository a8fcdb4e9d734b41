//! Vectorizable sine/cosine for the batched activation kernels.
//!
//! Arguments are reduced by `n * pi/2` with a three-part Cody-Waite split
//! and evaluated with minimax polynomials on `[-pi/4, pi/4]`; the whole
//! kernel is branch-free and built on fused multiply-adds, so slice loops
//! compile to SIMD code. Arguments with `|x| > REDUCTION_LIMIT` (and
//! non-finite values) fall back to `std`.

#![allow(clippy::excessive_precision)]

const FRAC_2_PI: f64 = std::f64::consts::FRAC_2_PI;
// pi/2 split into 33 + 33 + rest bits; n * PIO2_HI and n * PIO2_MID are exact for |n| < 2^20.
const PIO2_HI: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_MID: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_LO: f64 = 2.022_266_248_795_950_631_54e-21;
/// 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;
pub const REDUCTION_LIMIT: f64 = 1.0e5;

const SIN: [f64; 6] = [
    1.589_623_015_765_465_680_60e-10,
    -2.505_074_776_285_780_728_66e-8,
    2.755_731_362_138_572_452_13e-6,
    -1.984_126_982_958_953_859_96e-4,
    8.333_333_333_322_118_588_78e-3,
    -1.666_666_666_666_663_072_95e-1,
];
const COS: [f64; 6] = [
    -1.135_853_652_138_768_173_00e-11,
    2.087_570_084_197_473_167_78e-9,
    -2.755_731_417_929_673_881_12e-7,
    2.480_158_728_885_170_453_48e-5,
    -1.388_888_888_887_305_641_16e-3,
    4.166_666_666_666_659_292_18e-2,
];

#[inline(always)]
fn horner(z: f64, c: &[f64; 6]) -> f64 {
    c[0].mul_add(z, c[1])
        .mul_add(z, c[2])
        .mul_add(z, c[3])
        .mul_add(z, c[4])
        .mul_add(z, c[5])
}

/// `(sin x, cos x)` for `|x| <= REDUCTION_LIMIT`; unspecified beyond.
#[inline(always)]
pub fn sin_cos_reduced(x: f64) -> (f64, f64) {
    let t = x.mul_add(FRAC_2_PI, SHIFTER);
    let q = t.to_bits();
    let n = t - SHIFTER;
    let r = (-n).mul_add(PIO2_LO, (-n).mul_add(PIO2_MID, (-n).mul_add(PIO2_HI, x)));
    let z = r * r;
    let s = (r * z).mul_add(horner(z, &SIN), r);
    let c = (z * z).mul_add(horner(z, &COS), (-0.5f64).mul_add(z, 1.0));
    let swap = (q & 1).wrapping_neg();
    let s0 = f64::from_bits((s.to_bits() & !swap) | (c.to_bits() & swap));
    let c0 = f64::from_bits((c.to_bits() & !swap) | (s.to_bits() & swap));
    let sin_sign = (q & 2) << 62;
    let cos_sign = (q.wrapping_add(1) & 2) << 62;
    (
        f64::from_bits(s0.to_bits() ^ sin_sign),
        f64::from_bits(c0.to_bits() ^ cos_sign),
    )
}

#[inline]
fn needs_fallback(x: f64) -> bool {
    !(x.abs() <= REDUCTION_LIMIT)
}

/// Fills `sin` and `cos` with the sine and cosine of every element of `x`.
pub fn sin_cos_slice(x: &[f64], sin: &mut [f64], cos: &mut [f64]) {
    assert!(x.len() == sin.len() && x.len() == cos.len());
    for ((&xi, si), ci) in x.iter().zip(sin.iter_mut()).zip(cos.iter_mut()) {
        let (s, c) = sin_cos_reduced(xi);
        *si = s;
        *ci = c;
    }
    fix_large(x, |i, s, c| {
        sin[i] = s;
        cos[i] = c;
    });
}

/// Applies `f(i, sin x_i, cos x_i)` with `std` precision to the elements the
/// polynomial kernel does not cover.
pub fn fix_large(x: &[f64], mut f: impl FnMut(usize, f64, f64)) {
    if x.iter().any(|&v| needs_fallback(v)) {
        for (i, &v) in x.iter().enumerate() {
            if needs_fallback(v) {
                let (s, c) = v.sin_cos();
                f(i, s, c);
            }
        }
    }
}

/// Scalar convenience wrapper with the same fallback rule.
pub fn sin_cos(x: f64) -> (f64, f64) {
    if needs_fallback(x) {
        x.sin_cos()
    } else {
        sin_cos_reduced(x)
    }
}
