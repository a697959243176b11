//! Small probability kernels shared across the crate: the standard normal
//! CDF and exact hypergeometric/binomial pmfs for the count ranges that the
//! enumeration oracle works with.

use crate::error::{Error, Result};

/// Standard normal CDF, accurate to well below 1e-9 over the whole line.
///
/// Built on the complementary error function so that deep tail values do not
/// lose precision to cancellation.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided tail probability of a standard normal, `2 * (1 - Phi(|x|))`,
/// computed without the cancellation that the literal expression suffers for
/// large `|x|`.
pub fn normal_two_sided_p(x: f64) -> f64 {
    libm::erfc(x.abs() / std::f64::consts::SQRT_2)
}

/// Binomial coefficient `C(n, k)` as an exact integer.
///
/// Each intermediate product `C(n, j) * (n - j)` is itself divisible by
/// `j + 1`, so the running value stays integral and exact. Supports the
/// small counts used by the enumeration checks (overflow panics in debug
/// builds long before the f64 conversion loses exactness at n <= 62).
pub fn binomial_coefficient(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n - j) as u128 / (j + 1) as u128;
    }
    c as f64
}

/// Hypergeometric pmf: probability of drawing `x` marked items in `draws`
/// draws without replacement from `total` items of which `marked` are
/// marked. Zero outside the support.
pub fn hypergeometric_pmf(total: u32, marked: u32, draws: u32, x: u32) -> Result<f64> {
    if marked > total || draws > total {
        return Err(Error::InvalidCounts {
            n: total,
            d: marked,
            n1: draws,
        });
    }
    if x > draws || x > marked || draws - x > total - marked {
        return Ok(0.0);
    }
    let ways = binomial_coefficient(marked as u64, x as u64)
        * binomial_coefficient((total - marked) as u64, (draws - x) as u64);
    Ok(ways / binomial_coefficient(total as u64, draws as u64))
}

/// Binomial pmf `C(m, j) p^j (1-p)^(m-j)`, with the conventions `0^0 = 1`.
pub fn binomial_pmf(m: u32, p: f64, j: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidDistribution(format!(
            "binomial probability {p} outside [0, 1]"
        )));
    }
    if j > m {
        return Ok(0.0);
    }
    Ok(
        binomial_coefficient(m as u64, j as u64)
            * p.powi(j as i32)
            * (1.0 - p).powi((m - j) as i32),
    )
}
