//! Closed-form quantities: resistance of the sparse tree, ruin and escape
//! probabilities of the reinforced half-line, the recurrence level sequence,
//! the transience block size `n0`, offspring moments and the survival bound
//! of the inhomogeneous branching process.

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::One;

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;
use crate::special::{ln_rising_product, ln_rising_product_pow2};
use crate::tree::TreeModel;

/// Largest integer reinforcement handled by the telescoped fast path.
const INTEGER_FAST_PATH_MAX: u32 = 1024;
/// Ranges at most this long are summed term by term.
const DIRECT_SUM_MAX: u64 = 64;

fn check_a<T: Scalar>(a: T) -> Result<()> {
    if !(a > T::zero()) || !a.is_finite() {
        return domain(format!("reinforcement a = {a} must be positive and finite"));
    }
    Ok(())
}

fn small_integer<T: Scalar>(a: T) -> Option<u32> {
    (a.fract() == T::zero())
        .then(|| a.to_u32())
        .flatten()
        .filter(|&n| (1..=INTEGER_FAST_PATH_MAX).contains(&n))
}

/// Threshold between recurrence (above) and transience (below).
pub fn critical_parameter<T: Scalar>(model: &TreeModel) -> Result<T> {
    match model {
        TreeModel::Sparse { d } if *d >= 2 => Ok(T::from_u32(*d).unwrap().log2()),
        TreeModel::WeightedKAry { arity: 3, decay } if *decay == Ratio::new(1, 2) => Ok(T::lit(2.0)),
        _ => domain(format!("no known critical parameter for {model}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResistanceClass<T> {
    Finite { limit: T },
    Divergent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resistance<T> {
    pub terms: u32,
    pub partial_sum: T,
    pub class: ResistanceClass<T>,
}

/// Root-to-infinity resistance `1 + sum_k 2^k / d^(k+1)` of the unit-weight
/// sparse tree, truncated after `terms` terms.
pub fn effective_resistance<T: Scalar>(model: &TreeModel, terms: u32) -> Result<Resistance<T>> {
    let d = match model.sparse_d() {
        Some(d) => d,
        None => return domain("effective resistance is implemented for sparse trees"),
    };
    if terms == 0 {
        return domain("need at least one term");
    }
    let dt = T::from_u32(d).unwrap();
    let ratio = T::lit(2.0) / dt;
    let mut term = dt.recip();
    let mut sum = T::one();
    for _ in 0..terms {
        sum = sum + term;
        term = term * ratio;
    }
    let class = if d >= 3 {
        ResistanceClass::Finite {
            limit: T::one() + (dt - T::lit(2.0)).recip(),
        }
    } else {
        ResistanceClass::Divergent
    };
    Ok(Resistance {
        terms,
        partial_sum: sum,
        class,
    })
}

/// Probability that the reinforced half-line walk at its frontier `j`
/// (all edges to its left crossed) steps to `j + 1` before hitting 0.
pub fn ruin_step_probability<T: Scalar>(j: u64, a: T) -> Result<T> {
    check_a(a)?;
    if j == 0 {
        return domain("j must be at least 1");
    }
    let j = T::from_count(j);
    Ok(j / (j + a))
}

fn check_range(m: u64, big_m: u64) -> Result<()> {
    if m == 0 || m >= big_m {
        return domain(format!("escape range needs 1 <= m < M, got m={m}, M={big_m}"));
    }
    Ok(())
}

/// `prod_{j=m}^{M-1} j / (j + a)`: the probability that the reinforced
/// half-line walk, sitting at its frontier `m`, reaches `M` before 0.
///
/// Integer `a` telescopes to `prod_{i<a} (m + i) / (M + i)`; everything else
/// goes through log space.
pub fn escape_product<T: Scalar>(m: u64, big_m: u64, a: T) -> Result<T> {
    check_range(m, big_m)?;
    check_a(a)?;
    if let Some(n) = small_integer(a) {
        let mut p = T::one();
        for i in 0..u64::from(n) {
            p = p * (T::from_count(m + i) / T::from_count(big_m + i));
        }
        return Ok(p);
    }
    Ok(ln_escape_product(m, big_m, a)?.exp())
}

/// Natural log of [`escape_product`], always evaluated in log space.
pub fn ln_escape_product<T: Scalar>(m: u64, big_m: u64, a: T) -> Result<T> {
    check_range(m, big_m)?;
    check_a(a)?;
    if big_m - m <= DIRECT_SUM_MAX {
        let mut s = T::zero();
        for j in m..big_m {
            s = s - (a / T::from_count(j)).ln_1p();
        }
        return Ok(s);
    }
    Ok(ln_rising_product(T::from_count(m), T::from_count(big_m), a))
}

/// Exact value of [`escape_product`] for integer reinforcement.
pub fn escape_product_exact(m: u64, big_m: u64, a: u32) -> Result<Ratio<BigUint>> {
    check_range(m, big_m)?;
    if a == 0 {
        return domain("a must be positive");
    }
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..u64::from(a) {
        num *= BigUint::from(m) + i;
        den *= BigUint::from(big_m) + i;
    }
    Ok(Ratio::new(num, den))
}

/// Index range used for the escape product across the block `T(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexConvention {
    /// `j` from `2^(k n0) − 2^(k n0 − 1)` to `2^((k+1) n0) − 1`, read straight off
    /// the level powers; a lower bound on the exact value.
    LevelPowers,
    /// `j` from `dist(x_-1, x)` to `dist(x_-1, x_i) − 1`: the exact hitting
    /// probability of one fixed target.
    GraphDistance,
}

impl IndexConvention {
    pub fn name(self) -> &'static str {
        match self {
            IndexConvention::LevelPowers => "level_powers",
            IndexConvention::GraphDistance => "graph_distance",
        }
    }
}

/// `(m, M)` for the escape product of block `k` with block size `n0`.
pub fn escape_range(k: u32, n0: u32, convention: IndexConvention) -> Result<(u64, u64)> {
    if k == 0 || n0 == 0 {
        return domain("k and n0 must be positive");
    }
    let top = (u64::from(k) + 1) * u64::from(n0);
    if top > 62 {
        return Err(Error::Overflow(format!("level 2^{top} does not fit in 64 bits")));
    }
    let lower = 1u64 << (u64::from(k) * u64::from(n0) - 1);
    let upper = 1u64 << top;
    Ok(match convention {
        IndexConvention::LevelPowers => (lower, upper),
        IndexConvention::GraphDistance => (lower, upper - lower),
    })
}

/// Upper bound `exp(k ln d − n (a ln 2 − ln d) − a ln(1 − a 2^-k))` on the
/// probability that the walk reaches level `2^(k+n)` before its first return
/// to the root after level `2^k`.
pub fn escape_bound<T: Scalar>(k: u32, n: u32, a: T, d: u32) -> Result<T> {
    check_a(a)?;
    if d < 2 {
        return domain("escape bound needs d >= 2");
    }
    if k == 0 || n == 0 {
        return domain("k and n must be positive");
    }
    let shrink = a * T::lit(2.0).powi(-(k.min(i32::MAX as u32) as i32));
    if shrink >= T::one() {
        return domain(format!("a 2^-k = {shrink} >= 1; the bound is vacuous"));
    }
    let ln_d = T::from_u32(d).unwrap().ln();
    let kt = T::from_u32(k).unwrap();
    let nt = T::from_u32(n).unwrap();
    Ok((kt * ln_d - nt * (a * T::LN_2() - ln_d) - a * (-shrink).ln_1p()).exp())
}

fn recurrence_multiplier<T: Scalar>(a: T, d: u32) -> Result<u64> {
    check_a(a)?;
    if d == 0 {
        return domain("d must be positive");
    }
    let dt = T::from_u32(d).unwrap();
    let gap = a * T::LN_2() - dt.ln();
    if !(gap > T::zero()) {
        return domain(format!("a = {a} is not above log2({d})"));
    }
    ((dt + T::one()).ln() / gap)
        .ceil()
        .to_u64()
        .ok_or_else(|| Error::Overflow("recurrence step multiplier".into()))
}

/// `k_0 = 1`, `k_i = k_{i-1} + 2 k_{i-1} ceil(ln(d+1) / (a ln 2 − ln d))`.
pub fn recurrence_level_sequence<T: Scalar>(a: T, d: u32, count: usize) -> Result<Vec<u64>> {
    let c = recurrence_multiplier(a, d)?;
    let factor = c
        .checked_mul(2)
        .and_then(|x| x.checked_add(1))
        .ok_or_else(|| Error::Overflow("sequence growth factor".into()))?;
    let mut out = Vec::with_capacity(count);
    let mut k = 1u64;
    for i in 0..count {
        if i > 0 {
            k = k
                .checked_mul(factor)
                .ok_or_else(|| Error::Overflow(format!("term {i} of the level sequence")))?;
        }
        out.push(k);
    }
    Ok(out)
}

/// Result of the block-size search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct N0Search<T> {
    pub n0: u32,
    /// Block index minimizing the offspring mean among `1..=k_max` and the
    /// `k → ∞` limit (`None`).
    pub worst_k: Option<u32>,
    /// `d^n0 × product` at `worst_k`.
    pub worst_mean: T,
}

const N0_SEARCH_LIMIT: u32 = 1 << 16;

/// `ln(d^n0 prod)` for the level-powers range of block `k`.
fn ln_literal_mean<T: Scalar>(n0: u32, k: Option<u32>, a: T, d: u32) -> T {
    let n0t = T::from_u32(n0).unwrap();
    let ln_d = T::from_u32(d).unwrap().ln();
    let ln_prod = match k {
        Some(k) => {
            let lo = u64::from(k) * u64::from(n0) - 1;
            let hi = (u64::from(k) + 1) * u64::from(n0);
            ln_rising_product_pow2(lo, hi, a)
        }
        None => -a * (n0t + T::one()) * T::LN_2(),
    };
    n0t * ln_d + ln_prod
}

/// Exact check `d^n0 prod_{i<a} (m+i) >= 2 prod_{i<a} (M+i)` for integer `a`.
fn literal_condition_exact(n0: u32, k: Option<u32>, a: u32, d: u32) -> bool {
    let lhs_pow = num_traits::pow(BigUint::from(d), n0 as usize);
    match k {
        Some(k) => {
            let lo = u64::from(k) * u64::from(n0) - 1;
            let hi = (u64::from(k) + 1) * u64::from(n0);
            let m = BigUint::one() << lo;
            let big_m = BigUint::one() << hi;
            let mut lhs = lhs_pow;
            let mut rhs = BigUint::from(2u32);
            for i in 0..a {
                lhs *= &m + i;
                rhs *= &big_m + i;
            }
            lhs >= rhs
        }
        // limit: d^n0 2^(-a(n0+1)) >= 2
        None => lhs_pow >= BigUint::one() << (u64::from(a) * (u64::from(n0) + 1) + 1),
    }
}

/// Smallest `n0` with `d^n0 prod_{j=2^(k n0)-2^(k n0-1)}^{2^((k+1) n0)-1} (1 - a/(j+a)) >= 2`
/// for every `k` in `1..=k_max` and in the `k → ∞` limit.
pub fn find_n0<T: Scalar>(a: T, d: u32, k_max: u32) -> Result<N0Search<T>> {
    check_a(a)?;
    if d < 2 {
        return domain("find_n0 needs d >= 2");
    }
    if k_max == 0 {
        return domain("k_max must be positive");
    }
    let log2_d = T::from_u32(d).unwrap().log2();
    if a >= log2_d {
        return domain(format!("a = {a} >= log2({d}) = {log2_d}: no finite n0"));
    }
    let exact = small_integer(a);
    let ln2 = T::LN_2();
    for n0 in 1..=N0_SEARCH_LIMIT {
        let ks = (1..=k_max).map(Some).chain(std::iter::once(None));
        let mut worst: Option<(Option<u32>, T)> = None;
        let mut ok = true;
        for k in ks {
            let ln_mean = ln_literal_mean(n0, k, a, d);
            let holds = match exact {
                Some(ai) => literal_condition_exact(n0, k, ai, d),
                None => ln_mean >= ln2,
            };
            if worst.is_none_or(|(_, w)| ln_mean < w) {
                worst = Some((k, ln_mean));
            }
            if !holds {
                ok = false;
                break;
            }
        }
        if ok {
            let (worst_k, ln_mean) = worst.expect("at least the limit is checked");
            return Ok(N0Search {
                n0,
                worst_k,
                worst_mean: ln_mean.exp(),
            });
        }
    }
    Err(Error::Overflow(format!("n0 exceeds {N0_SEARCH_LIMIT}")))
}

/// Whether the block condition holds for `n0` at block `k` (`None` = limit).
pub fn n0_condition_holds<T: Scalar>(n0: u32, k: Option<u32>, a: T, d: u32) -> bool {
    match small_integer(a) {
        Some(ai) => literal_condition_exact(n0, k, ai, d),
        None => ln_literal_mean(n0, k, a, d) >= T::LN_2(),
    }
}

/// `E[Z_k] = d^n0 × escape product` under the chosen index convention.
pub fn offspring_mean<T: Scalar>(k: u32, n0: u32, a: T, d: u32, convention: IndexConvention) -> Result<T> {
    let (m, big_m) = escape_range(k, n0, convention)?;
    let p = escape_product(m, big_m, a)?;
    Ok(T::from_u32(d).unwrap().powi(n0 as i32) * p)
}

/// `d^(2 n0)`, the trivial cap on `E[Z_k^2]` (since `Z_k <= d^n0`).
pub fn offspring_second_moment_cap<T: Scalar>(n0: u32, d: u32) -> T {
    T::from_u32(d).unwrap().powi(2 * n0 as i32)
}

/// `δ = d^(-2 n0)`, the generation-independent survival floor.
pub fn delta<T: Scalar>(d: u32, n0: u32) -> Result<T> {
    if n0 == 0 {
        return domain("n0 must be at least 1");
    }
    if d == 0 {
        return domain("d must be positive");
    }
    Ok(offspring_second_moment_cap::<T>(n0, d).recip())
}

/// Per-generation offspring moments `m_j = E[Z]`, `s_j = E[Z^2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSequence<T> {
    means: Vec<T>,
    second_moments: Vec<T>,
}

impl<T: Scalar> MomentSequence<T> {
    pub fn new(means: Vec<T>, second_moments: Vec<T>) -> Result<Self> {
        if means.len() != second_moments.len() {
            return domain("means and second moments differ in length");
        }
        for (j, (&m, &s)) in means.iter().zip(&second_moments).enumerate() {
            if !(m >= T::zero()) || !(s >= m) {
                return domain(format!("generation {j}: need s >= m >= 0, got m={m}, s={s}"));
            }
        }
        Ok(MomentSequence { means, second_moments })
    }

    /// Same law in every generation.
    pub fn constant(mean: T, second: T, generations: usize) -> Result<Self> {
        Self::new(vec![mean; generations], vec![second; generations])
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn second_moments(&self) -> &[T] {
        &self.second_moments
    }

    /// `P_0 = 1`, `P_{j+1} = P_j m_j`, for `j` up to `len()`.
    pub fn cumulative_products(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.means.len() + 1);
        p.push(T::one());
        for &m in &self.means {
            let last = *p.last().unwrap();
            p.push(last * m);
        }
        p
    }
}

/// `[1/P_i + sum_{j<i} ((s_j − m_j)/m_j) / P_{j+1}]^-1`, clamped to `[0, 1]`:
/// a lower bound on `P[B_i > 0]` for the inhomogeneous branching process.
pub fn survival_lower_bound<T: Scalar>(ms: &MomentSequence<T>, generations: usize) -> Result<T> {
    if generations == 0 || generations > ms.len() {
        return domain(format!("generations must be in 1..={}, got {generations}", ms.len()));
    }
    if ms.means[..generations].iter().any(|&m| !(m > T::zero())) {
        return domain("all offspring means must be positive");
    }
    let p = ms.cumulative_products();
    let mut denom = p[generations].recip();
    for j in 0..generations {
        let m = ms.means[j];
        denom = denom + (ms.second_moments[j] - m) / m / p[j + 1];
    }
    let v = denom.recip();
    Ok(v.max(T::zero()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    #[test]
    fn critical_values() {
        assert_eq!(critical_parameter::<f64>(&TreeModel::Sparse { d: 4 }).unwrap(), 2.0);
        assert_eq!(critical_parameter::<f64>(&TreeModel::Sparse { d: 2 }).unwrap(), 1.0);
        assert_eq!(critical_parameter::<f64>(&TreeModel::ternary_halving()).unwrap(), 2.0);
        assert!(critical_parameter::<f64>(&TreeModel::weighted(3, Ratio::new(1, 3)).unwrap()).is_err());
        assert!(critical_parameter::<f64>(&TreeModel::HalfLine).is_err());
    }

    #[test]
    fn resistance_series() {
        let r = effective_resistance::<f64>(&TreeModel::Sparse { d: 3 }, 70).unwrap();
        assert_eq!(r.class, ResistanceClass::Finite { limit: 2.0 });
        assert!((r.partial_sum - 2.0).abs() < 1e-9);
        let r = effective_resistance::<f64>(&TreeModel::Sparse { d: 4 }, 80).unwrap();
        assert_eq!(r.class, ResistanceClass::Finite { limit: 1.5 });
        for k in [1u32, 10, 1000] {
            let r = effective_resistance::<f64>(&TreeModel::Sparse { d: 2 }, k).unwrap();
            assert_eq!(r.class, ResistanceClass::Divergent);
            assert_eq!(r.partial_sum, 1.0 + f64::from(k) / 2.0);
        }
        assert!(effective_resistance::<f64>(&TreeModel::ternary_halving(), 3).is_err());
    }

    #[test]
    fn resistance_partial_sums_monotone_and_below_limit() {
        for d in 3..8 {
            let model = TreeModel::Sparse { d };
            let mut prev = 0.0;
            for k in 1..200 {
                let r = effective_resistance::<f64>(&model, k).unwrap();
                let ResistanceClass::Finite { limit } = r.class else {
                    panic!()
                };
                assert!(r.partial_sum >= prev);
                assert!(r.partial_sum <= limit + 1e-15);
                prev = r.partial_sum;
            }
        }
    }

    #[test]
    fn ruin_steps() {
        assert_eq!(ruin_step_probability(1, 1.0f64).unwrap(), 0.5);
        assert!((ruin_step_probability(4, 2.0f64).unwrap() - 2.0 / 3.0).abs() < 1e-16);
        let p = ruin_step_probability(1_000_000, 3.0f64).unwrap();
        assert!((p - 0.999_997_000_009).abs() < 1e-12);
        assert!(ruin_step_probability(0, 1.0f64).is_err());
        assert!(ruin_step_probability(3, 0.0f64).is_err());
    }

    #[test]
    fn escape_product_values() {
        assert!((escape_product(4, 8, 2.0f64).unwrap() - 5.0 / 18.0).abs() < 1e-15);
        assert_eq!(escape_product(2, 16, 1.0f64).unwrap(), 0.125);
        assert_eq!(
            escape_product_exact(4, 8, 2).unwrap(),
            Ratio::new(5u32.into(), 18u32.into())
        );
        assert!(escape_product(4, 4, 1.0f64).is_err());
        assert!(escape_product(0, 4, 1.0f64).is_err());
        assert!(escape_product(1, 4, -1.0f64).is_err());
    }

    #[test]
    fn log_path_matches_factorial_ratio() {
        for a in 1u32..=4 {
            for &(m, big_m) in &[
                (1u64, 2u64),
                (3, 70),
                (10, 1000),
                (1, 1_000_000),
                (999_999, 1_000_000),
                (17, 523_456),
            ] {
                let exact = escape_product_exact(m, big_m, a).unwrap();
                let exact = exact.numer().to_f64().unwrap() / exact.denom().to_f64().unwrap();
                let via_log = ln_escape_product(m, big_m, f64::from(a)).unwrap().exp();
                assert!(((via_log - exact) / exact).abs() < 1e-12, "a={a} m={m} M={big_m}");
                let fast = escape_product(m, big_m, f64::from(a)).unwrap();
                assert!(((fast - exact) / exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn escape_product_f32() {
        let p: f32 = escape_product(4, 8, 2.0f32).unwrap();
        assert!((p - 5.0 / 18.0).abs() < 1e-6);
        let q: f32 = escape_product(8, 16, 0.5f32).unwrap();
        let r: f64 = escape_product(8, 16, 0.5f64).unwrap();
        assert!((f64::from(q) - r).abs() < 1e-5);
    }

    #[test]
    fn escape_product_monotone_grid() {
        let grid_a = [0.1, 0.5, 0.9, 1.0, 1.5, 2.0, 3.0, 7.5];
        for m in [1u64, 2, 5, 40] {
            for big_m in [m + 1, m + 3, 2 * m + 7, 100 * m] {
                let vals: Vec<f64> = grid_a.iter().map(|&a| escape_product(m, big_m, a).unwrap()).collect();
                assert!(vals.windows(2).all(|w| w[1] < w[0]), "decreasing in a");
                for &a in &grid_a {
                    let p = escape_product(m, big_m, a).unwrap();
                    assert!(escape_product(m, big_m + 1, a).unwrap() < p, "decreasing in M");
                    assert!(escape_product(m + 1, big_m + 1, a).unwrap() > escape_product(m, big_m + 1, a).unwrap());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn telescoping_a1(m in 1u64..10_000, gap in 1u64..10_000) {
            let big_m = m + gap;
            let p = escape_product(m, big_m, 1.0f64).unwrap();
            let q = m as f64 / big_m as f64;
            prop_assert!(((p - q) / q).abs() < 1e-14);
        }

        #[test]
        fn products_compose(m in 1u64..5_000, g1 in 1u64..5_000, g2 in 1u64..5_000, a in 0.01f64..6.0) {
            let (mid, end) = (m + g1, m + g1 + g2);
            let lhs = escape_product(m, mid, a).unwrap() * escape_product(mid, end, a).unwrap();
            let rhs = escape_product(m, end, a).unwrap();
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }

        #[test]
        fn survival_bound_nonincreasing(ms in proptest::collection::vec((0.2f64..5.0, 0.0f64..20.0), 1..30)) {
            // s = m^2 + variance >= m^2 (and >= m for integer laws)
            let means: Vec<f64> = ms.iter().map(|p| p.0).collect();
            let seconds: Vec<f64> = ms.iter().map(|p| (p.0 * p.0 + p.1).max(p.0)).collect();
            let seq = MomentSequence::new(means, seconds).unwrap();
            let mut prev = 1.0;
            for i in 1..=seq.len() {
                let b = survival_lower_bound(&seq, i).unwrap();
                prop_assert!((0.0..=1.0).contains(&b));
                prop_assert!(b <= prev + 1e-12);
                prev = b;
            }
        }
    }

    #[test]
    fn escape_bound_values() {
        let d = 3;
        let a = 2.0f64;
        let b: Vec<f64> = (1..20).map(|n| escape_bound(3, n, a, d).unwrap()).collect();
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        // with n = n_k the bound drops below exp(-k ln 2 - a ln(1 - a 2^-k))
        let k = 10;
        let c = recurrence_multiplier(a, d).unwrap();
        let n_k = 2 * k * c as u32;
        let v = escape_bound(k, n_k, a, d).unwrap();
        let cap = (-(k as f64) * 2f64.ln() - a * (1.0 - a * 2f64.powi(-(k as i32))).ln()).exp();
        assert!(v <= cap);
        assert!(escape_bound(1, 1, 2.0f64, 3).is_err());
        assert!(escape_bound(3, 4, 2.0f64, 3).is_ok());
    }

    #[test]
    fn level_sequence() {
        // ceil(ln 4 / (2 ln 2 − ln 3)) = ceil(4.818...) = 5
        assert_eq!(recurrence_multiplier(2.0f64, 3).unwrap(), 5);
        assert_eq!(recurrence_level_sequence(2.0f64, 3, 4).unwrap(), vec![1, 11, 121, 1331]);
        assert_eq!(recurrence_level_sequence(2.0f64, 3, 1).unwrap(), vec![1]);
        assert!(recurrence_level_sequence(1.0f64, 3, 3).is_err());
        let s = recurrence_level_sequence(3.0f64, 4, 6).unwrap();
        let gaps: Vec<u64> = s.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.windows(2).all(|g| g[1] > g[0]));
        assert!(recurrence_level_sequence(2.0f64, 3, 100).is_err());
    }

    #[test]
    fn n0_for_d4_a1() {
        let s = find_n0(1.0f64, 4, 64).unwrap();
        assert_eq!(s.n0, 2);
        // the a = 1 product is k-independent: 2^-(n0+1)
        assert!((s.worst_mean - 2.0).abs() < 1e-12);
        assert!(!n0_condition_holds(1, Some(1), 1.0f64, 4));
        assert_eq!(
            offspring_mean(1, 1, 1.0f64, 4, IndexConvention::LevelPowers).unwrap(),
            1.0
        );
        assert_eq!(
            offspring_mean(1, 2, 1.0f64, 4, IndexConvention::LevelPowers).unwrap(),
            2.0
        );
        let g: f64 = offspring_mean(1, 2, 1.0, 4, IndexConvention::GraphDistance).unwrap();
        assert!((g - 16.0 / 7.0).abs() < 1e-15);
        assert!(find_n0(2.0f64, 4, 64).is_err());
        assert!(find_n0(2.5f64, 4, 64).is_err());
    }

    #[test]
    fn n0_minimal_and_valid() {
        for &d in &[2u32, 3, 4, 6] {
            let crit = f64::from(d).log2();
            for frac in [0.2, 0.5, 0.8, 0.9] {
                let a = crit * frac;
                let s = find_n0(a, d, 64).unwrap();
                for k in 1..=64 {
                    assert!(n0_condition_holds(s.n0, Some(k), a, d), "d={d} a={a} k={k}");
                    if 2 * s.n0 <= 60 && (k + 1) * s.n0 <= 60 {
                        let mean: f64 = offspring_mean(k, s.n0, a, d, IndexConvention::LevelPowers).unwrap();
                        assert!(mean >= 2.0 * (1.0 - 1e-12));
                    }
                }
                assert!(n0_condition_holds(s.n0, None, a, d));
                if s.n0 > 1 {
                    let prev = s.n0 - 1;
                    let violated = (1..=64)
                        .map(Some)
                        .chain([None])
                        .any(|k| !n0_condition_holds(prev, k, a, d));
                    assert!(violated, "d={d} a={a}: n0-1 also works");
                }
            }
        }
    }

    #[test]
    fn moments_and_delta() {
        assert_eq!(offspring_second_moment_cap::<f64>(2, 4), 256.0);
        assert_eq!(delta::<f64>(4, 2).unwrap(), 1.0 / 256.0);
        assert_eq!(delta::<f64>(2, 1).unwrap(), 0.25);
        assert!(delta::<f64>(4, 0).is_err());

        let det = MomentSequence::constant(2.0f64, 2.0, 40).unwrap();
        assert_eq!(survival_lower_bound(&det, 40).unwrap(), 1.0);

        // m = 2, s = d^(2 n0): limit 2/(C - 2) >= 1/C
        let cap = 256.0f64;
        let seq = MomentSequence::constant(2.0, cap, 60).unwrap();
        let b = survival_lower_bound(&seq, 60).unwrap();
        assert!(b >= 1.0 / cap);
        assert!((b - 2.0 / (cap - 2.0)).abs() < 1e-12);
        let p = seq.cumulative_products();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[3], 8.0);
        assert!(MomentSequence::new(vec![2.0f64], vec![1.0]).is_err());
        assert!(survival_lower_bound(&seq, 61).is_err());
    }
}
