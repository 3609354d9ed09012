//! Shared numeric policy: log-space binomial arithmetic, exact big-integer
//! checks for small sizes, and tolerant ceilings for index arithmetic.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use statrs::function::factorial::ln_binomial;

/// Slack used when comparing accumulated probabilities against a level.
pub const PROB_TOL: f64 = 1e-12;

/// `ceil(x)` that treats values within 1e-9 of an integer as that integer,
/// so `(1 - 0.05) * 20` yields 19 rather than 20.
pub fn ceil_index(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// `ln C(n, k)`; negative infinity when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_binomial(n, k)
    }
}

/// Exact binomial coefficient.
pub fn choose_exact(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Ratio of two big integers as `f64`, keeping precision for huge operands.
pub fn big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits().saturating_sub(60);
    let n = (num >> shift).to_f64().unwrap_or(f64::INFINITY);
    let d = (den >> shift).to_f64().unwrap_or(f64::INFINITY);
    n / d
}

/// Probability mass function of `Binom(n, p)` for every `k` in `0..=n`.
pub fn binom_pmf(n: u64, p: f64) -> Vec<f64> {
    let len = n as usize + 1;
    if p <= 0.0 {
        let mut v = vec![0.0; len];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; len];
        v[n as usize] = 1.0;
        return v;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|k| (ln_choose(n, k) + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}

/// Upper tails `P(W > k)` for `k` in `0..=n`, summed from the top.
pub fn upper_tails(pmf: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for k in (0..pmf.len()).rev() {
        tails[k] = acc;
        acc += pmf[k];
    }
    tails
}

/// Lower cumulative sums `P(W <= k)`.
pub fn cdf(pmf: &[f64]) -> Vec<f64> {
    pmf.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// SplitMix64 finaliser; used to derive independent seeds from counters.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a path of counters.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed), |acc, &c| {
        mix64(acc ^ mix64(c.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}
