use diffusion_mech::auctions::{
    expected_fp_revenue, optimal_fp_price, run_fp_auction, single_item_optimal_price,
    FixedPriceConfig, OptimalPriceCache,
};
use diffusion_mech::seed::{derive_seed, rng_from_seed};
use rand::Rng;
use statrs::distribution::{Binomial, Discrete};

fn binomial_oracle(n: usize, m: usize, p: f64) -> f64 {
    revenue_moments(n, m, p).0
}

/// Mean and variance of `p * min(X, m)`, `X ~ Binomial(n, 1 - p)`.
fn revenue_moments(n: usize, m: usize, p: f64) -> (f64, f64) {
    let dist = Binomial::new(1.0 - p, n as u64).unwrap();
    let revenue = |j: u64| p * j.min(m as u64) as f64;
    let mean: f64 = (0..=n as u64).map(|j| dist.pmf(j) * revenue(j)).sum();
    let var = (0..=n as u64)
        .map(|j| dist.pmf(j) * (revenue(j) - mean).powi(2))
        .sum();
    (mean, var)
}

#[test]
fn expected_revenue_matches_binomial_sum() {
    let mut rng = rng_from_seed(3);
    for _ in 0..400 {
        let n = rng.random_range(1..200);
        let m = rng.random_range(0..n + 3);
        let p: f64 = rng.random();
        let got = expected_fp_revenue(n, m, p).unwrap();
        assert!(
            (got - binomial_oracle(n, m, p)).abs() < 1e-10,
            "n={n} m={m} p={p}"
        );
    }
    assert!(expected_fp_revenue(3, 1, 1.5).is_err());
}

#[test]
fn expected_revenue_matches_monte_carlo() {
    // 50 comparisons at 3 SE fail together about one time in eight, so
    // allow two outliers as long as none is extreme.
    let draws = 20_000u64;
    let mut outliers = 0;
    for k in 0..50u64 {
        let mut rng = rng_from_seed(derive_seed(0xE7, &[k]));
        let n = rng.random_range(1..=30);
        let m = rng.random_range(1..=n);
        let p: f64 = rng.random_range(0.05..0.95);
        let config = FixedPriceConfig::new(n, m, p).unwrap();
        let mut values = vec![0.0; n];
        let revenues: Vec<f64> = (0..draws)
            .map(|_| {
                values.iter_mut().for_each(|v| *v = rng.random());
                run_fp_auction(&config, &values, &mut rng).unwrap().revenue
            })
            .collect();
        let mean = revenues.iter().sum::<f64>() / draws as f64;
        // Sampling error of the mean under the binomial law; the sample
        // variance is zero whenever every draw fills all items.
        let se = (revenue_moments(n, m, p).1 / draws as f64).sqrt();
        let expected = expected_fp_revenue(n, m, p).unwrap();
        let excess = ((mean - expected).abs() - 1e-9).max(0.0);
        let z = if excess == 0.0 { 0.0 } else { excess / se };
        assert!(
            z <= 4.5,
            "n={n} m={m} p={p}: {mean} vs {expected} (se {se})"
        );
        outliers += usize::from(z > 3.0);
    }
    assert!(outliers <= 2, "{outliers} triples beyond 3 SE");
}

#[test]
fn single_item_optimum_matches_closed_form() {
    for n in 1..=100usize {
        let closed = (1.0 / (1.0 + n as f64)).powf(1.0 / n as f64);
        let found = optimal_fp_price(n, 1).unwrap();
        assert!(
            (found.price - closed).abs() < 1e-6,
            "n={n}: {} vs {closed}",
            found.price
        );
        assert!((single_item_optimal_price(n).unwrap() - closed).abs() < 1e-12);
        // closed-form revenue p (1 - p^n)
        assert!((found.expected_revenue - closed * (1.0 - closed.powi(n as i32))).abs() < 1e-9);
    }
}

#[test]
fn optimal_revenue_grows_with_buyers_and_items() {
    let cache = OptimalPriceCache::new();
    for m in 1..6 {
        let mut last = 0.0;
        for n in 1..80 {
            let r = cache.get(n, m).unwrap().expected_revenue;
            assert!(r >= last - 1e-12, "n={n} m={m}");
            last = r;
        }
    }
    for n in [5, 30, 200] {
        let mut last = 0.0;
        for m in 1..=n {
            let r = cache.get(n, m).unwrap().expected_revenue;
            assert!(r >= last - 1e-12, "n={n} m={m}");
            last = r;
        }
    }
}

#[test]
fn optimum_beats_a_fine_grid() {
    for (n, m) in [(1, 1), (7, 2), (40, 3), (500, 25), (5000, 250)] {
        let best = optimal_fp_price(n, m).unwrap();
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            assert!(
                expected_fp_revenue(n, m, p).unwrap() <= best.expected_revenue + 1e-9,
                "n={n} m={m} p={p}"
            );
        }
    }
}
