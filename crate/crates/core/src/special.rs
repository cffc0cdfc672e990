//! Log-gamma ratios for long products of the form `prod j / (j + a)`.
//!
//! `ln Γ(x + a) − ln Γ(x)` is evaluated without forming either log-gamma
//! value: small arguments are shifted upward with the recurrence
//! `Γ(y + 1) = y Γ(y)` and large ones use the Stirling difference series, in
//! which the leading terms are combined through `ln_1p` so nothing cancels.

use crate::scalar::Scalar;

/// Stirling coefficients `B_{2k} / (2k (2k − 1))`, k = 1..=7.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

const ASYMPTOTIC_FROM: f64 = 20.0;

/// `ln Γ(x + a) − ln Γ(x)` for `x > 0`, `a >= 0`.
pub fn ln_gamma_ratio<T: Scalar>(x: T, a: T) -> T {
    debug_assert!(x > T::zero() && a >= T::zero());
    if a == T::zero() {
        return T::zero();
    }
    let mut y = x;
    let mut shift = T::zero();
    let start = T::lit(ASYMPTOTIC_FROM);
    while y < start {
        shift = shift + (a / y).ln_1p();
        y = y + T::one();
    }
    let half = T::lit(0.5);
    let ya = y + a;
    let mut series = T::zero();
    let (mut py, mut pya) = (y.recip(), ya.recip());
    let (y2, ya2) = (py * py, pya * pya);
    for &c in STIRLING.iter() {
        series = series + T::lit(c) * (pya - py);
        py = py * y2;
        pya = pya * ya2;
    }
    (y - half) * (a / y).ln_1p() + a * ya.ln() - a + series - shift
}

/// `ln Γ(2^e + a) − ln Γ(2^e)`, valid for exponents far beyond the range of
/// the floating type.
pub fn ln_gamma_ratio_pow2<T: Scalar>(e: u64, a: T) -> T {
    let x = i32::try_from(e).ok().map(|e| T::lit(2.0).powi(e));
    match x {
        Some(x) if x.is_finite() => ln_gamma_ratio(x, a),
        // 2^e is beyond the type's range; the 1/x corrections vanish.
        _ => a * T::from_count(e) * T::LN_2(),
    }
}

/// `ln prod_{j=m}^{M-1} j / (j + a)` for `1 <= m <= M`.
pub fn ln_rising_product<T: Scalar>(m: T, big_m: T, a: T) -> T {
    ln_gamma_ratio(m, a) - ln_gamma_ratio(big_m, a)
}

/// Same product as [`ln_rising_product`] but with `m = 2^lo`, `M = 2^hi`.
pub fn ln_rising_product_pow2<T: Scalar>(lo: u64, hi: u64, a: T) -> T {
    ln_gamma_ratio_pow2(lo, a) - ln_gamma_ratio_pow2(hi, a)
}
