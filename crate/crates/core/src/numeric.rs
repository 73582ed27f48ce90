//! Log-factorials and truncated binomial sums.

use std::f64::consts::PI;

const TABLE_LEN: usize = 64;

/// `ln(k!)`. Exact summation below 64, Stirling series above (relative
/// error well under 1e-15 there).
pub fn ln_factorial(k: u64) -> f64 {
    if (k as usize) < TABLE_LEN {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `E[f(X)]` for `X ~ Binomial(n, q)`.
///
/// Starts at the mode (log-space pmf) and walks outward with the ratio
/// recurrence `pmf(j+1)/pmf(j) = (n-j)/(j+1) * q/(1-q)`, stopping once terms
/// fall below `1e-18` of the mode. Cost is `O(sqrt(n q (1-q)))`.
pub fn binomial_expectation(n: u64, q: f64, f: impl Fn(u64) -> f64) -> f64 {
    if q <= 0.0 {
        return f(0);
    }
    if q >= 1.0 {
        return f(n);
    }
    let mode = (((n + 1) as f64) * q).floor().min(n as f64) as u64;
    let ln_mode_pmf =
        ln_choose(n, mode) + mode as f64 * q.ln() + (n - mode) as f64 * (1.0 - q).ln();
    let mode_pmf = ln_mode_pmf.exp();
    let odds = q / (1.0 - q);
    const CUTOFF: f64 = 1e-18;

    let mut total = mode_pmf * f(mode);
    let mut pmf = mode_pmf;
    let mut j = mode;
    while j < n {
        pmf *= (n - j) as f64 / (j + 1) as f64 * odds;
        j += 1;
        total += pmf * f(j);
        if pmf < CUTOFF * mode_pmf {
            break;
        }
    }
    let mut pmf = mode_pmf;
    let mut j = mode;
    while j > 0 {
        pmf *= j as f64 / (n - j + 1) as f64 / odds;
        j -= 1;
        total += pmf * f(j);
        if pmf < CUTOFF * mode_pmf {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct_sum_across_the_switch() {
        for k in [0u64, 1, 2, 10, 63, 64, 65, 100, 1000] {
            let direct: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            let got = ln_factorial(k);
            assert!(
                (got - direct).abs() <= 1e-12 * direct.max(1.0),
                "k={k}: {got} vs {direct}"
            );
        }
    }

    #[test]
    fn small_binomial_moments_match_enumeration() {
        let (n, q) = (12u64, 0.3f64);
        let mut mean = 0.0;
        let mut capped = 0.0;
        for j in 0..=n {
            let c: f64 = (1..=j).map(|i| (n - j + i) as f64 / i as f64).product();
            let pmf = c * q.powi(j as i32) * (1.0 - q).powi((n - j) as i32);
            mean += pmf * j as f64;
            capped += pmf * j.min(4) as f64;
        }
        assert!((binomial_expectation(n, q, |j| j as f64) - mean).abs() < 1e-14);
        assert!((binomial_expectation(n, q, |j| j.min(4) as f64) - capped).abs() < 1e-14);
        assert!((mean - 3.6).abs() < 1e-12);
    }

    #[test]
    fn large_n_mean_is_stable() {
        let n = 1_000_000u64;
        let got = binomial_expectation(n, 0.37, |j| j as f64);
        assert!((got - 370_000.0).abs() < 1e-6 * 370_000.0);
        assert_eq!(binomial_expectation(n, 0.0, |j| j as f64), 0.0);
        assert_eq!(binomial_expectation(n, 1.0, |j| j as f64), n as f64);
    }
}
