//! Platform-independent transcendental functions.
//!
//! The range coder's static tables are derived from floating-point model
//! parameters on both the encoder and the decoder. `f64::exp` is provided
//! by the platform math library and may differ in the last ulp between
//! targets, which would desynchronise the two sides. These versions use
//! only IEEE-754 `+ - * /` and exact bit manipulation, so every conforming
//! target produces identical results.

const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Inputs above this overflow to infinity.
const EXP_MAX: f64 = 709.782_712_893_384;
/// Inputs below this underflow to zero.
const EXP_MIN: f64 = -745.133_219_101_941_1;

/// `e^x`, accurate to a few ulp, bit-identical on every IEEE-754 target.
pub fn exp(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x > EXP_MAX {
        return f64::INFINITY;
    }
    if x < EXP_MIN {
        return 0.0;
    }
    // x = k ln2 + r, |r| <= ln2 / 2
    let k = (x * LOG2_E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor series of e^r; |r| <= 0.347 so 14 terms reach 1e-17
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=14 {
        term = term * r / n as f64;
        sum += term;
    }
    scale_by_pow2(sum, k as i32)
}

/// `x · 2^k` built from exponent bits.
fn scale_by_pow2(x: f64, k: i32) -> f64 {
    // split large shifts so each factor stays a normal number
    let mut x = x;
    let mut k = k;
    while k > 1000 {
        x *= pow2(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= pow2(-1000);
        k += 1000;
    }
    x * pow2(k)
}

fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k) || (-1074..-1022).contains(&k));
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}

/// Logistic sigmoid `1 / (1 + e^-z)`, evaluated on the stable side.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}
