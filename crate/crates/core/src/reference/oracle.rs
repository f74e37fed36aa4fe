//! Closed forms for Brownian functionals on `[0, 1]`, used as test oracles.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `P[sup_{s <= t} W(s) > level]` (reflection principle).
pub fn prob_sup_exceeds(level: f64, t: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(level / t.sqrt()))
}

/// Upper bound `4 (1 - N(level / sqrt(t)))` on `P[sup_{s <= t} |W(s)| > level]`.
pub fn abs_sup_exceeds_bound(level: f64, t: f64) -> f64 {
    (2.0 * prob_sup_exceeds(level, t)).min(1.0)
}

/// `P[sup_{s <= t} |W(s)| < a]` from the eigenfunction series.
pub fn prob_abs_sup_below(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let pi = std::f64::consts::PI;
    let mut sum = 0.0;
    for k in 0..200 {
        let j = (2 * k + 1) as f64;
        let term = (-(j * j) * pi * pi * t / (8.0 * a * a)).exp() / j;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    // the series converges slowly for small t / a^2, where the
    // complementary probability is tiny anyway
    (4.0 / pi * sum).clamp(0.0, 1.0)
}

/// `E[min(1, sup_{t <= 1} |W(t)|)] = int_0^1 P[sup |W| > a] da`, by Simpson's rule.
pub fn mean_capped_abs_sup() -> f64 {
    let n = 4000;
    let h = 1.0 / n as f64;
    let f = |a: f64| 1.0 - prob_abs_sup_below(a, 1.0);
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0
}

/// `E[cos W(1)] = exp(-1/2)`.
pub fn mean_cos_endpoint() -> f64 {
    (-0.5f64).exp()
}

/// `E[min(1, max(0, W(1)))] = phi(0) - phi(1) + 1 - N(1)`.
pub fn mean_clamped_endpoint() -> f64 {
    let n = std_normal();
    n.pdf(0.0) - n.pdf(1.0) + 1.0 - n.cdf(1.0)
}

/// `E[exp(-int_0^1 W^2)] = cosh(sqrt 2)^(-1/2)` (Cameron-Martin).
pub fn mean_exp_neg_energy() -> f64 {
    2f64.sqrt().cosh().powf(-0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_value() {
        assert!((prob_sup_exceeds(1.0, 1.0) - 0.317_310_507_862_914).abs() < 1e-9);
    }

    #[test]
    fn abs_sup_series_is_consistent() {
        // small levels are nearly impossible to stay under; large ones nearly certain
        assert!(prob_abs_sup_below(0.1, 1.0) < 1e-50);
        assert!(prob_abs_sup_below(5.0, 1.0) > 0.99999);
        // the two-sided tail sits between the one-sided tail and twice it
        for a in [0.5, 1.0, 1.5, 2.0] {
            let two = 1.0 - prob_abs_sup_below(a, 1.0);
            assert!(two >= prob_sup_exceeds(a, 1.0) - 1e-12);
            assert!(two <= abs_sup_exceeds_bound(a, 1.0) + 1e-12);
        }
        // Brownian scaling
        assert!((prob_abs_sup_below(1.0, 0.25) - prob_abs_sup_below(2.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn functional_means() {
        assert!((mean_cos_endpoint() - 0.606_530_659_712_633).abs() < 1e-12);
        assert!((mean_clamped_endpoint() - 0.315_626_809_813_746).abs() < 1e-9);
        assert!((mean_exp_neg_energy() - 0.677_567_805_526_078).abs() < 1e-12);
        let m = mean_capped_abs_sup();
        assert!((m - 0.920_561_751_284_917).abs() < 1e-8, "{m}");
        assert!((prob_abs_sup_below(1.0, 1.0) - 0.370_777_429_799_524).abs() < 1e-9);
    }
}
