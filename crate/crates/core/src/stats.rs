//! Goodness-of-fit helpers used by the Monte Carlo checks.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Half the L1 distance between an empirical histogram and a reference law.
/// Keys missing from `reference` count with probability zero.
pub fn total_variation<K: Ord>(counts: &BTreeMap<K, u64>, reference: &BTreeMap<K, f64>) -> f64 {
    let total: u64 = counts.values().sum();
    let total = total as f64;
    let mut l1 = 0.0;
    for (key, &p) in reference {
        let emp = counts.get(key).copied().unwrap_or(0) as f64 / total;
        l1 += (emp - p).abs();
    }
    for (key, &c) in counts {
        if !reference.contains_key(key) {
            l1 += c as f64 / total;
        }
    }
    0.5 * l1
}

/// Total variation between two laws on the same key space.
pub fn total_variation_laws<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut l1 = 0.0;
    for (key, &a) in p {
        l1 += (a - q.get(key).copied().unwrap_or(0.0)).abs();
    }
    for (key, &b) in q {
        if !p.contains_key(key) {
            l1 += b;
        }
    }
    0.5 * l1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected probabilities.
/// Cells with expected count below `min_expected` are pooled into one cell.
pub fn chi_square<K: Ord>(counts: &BTreeMap<K, u64>, reference: &BTreeMap<K, f64>, min_expected: f64) -> ChiSquareResult {
    let total: u64 = counts.values().sum();
    let total = total as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (key, &p) in reference {
        let obs = counts.get(key).copied().unwrap_or(0) as f64;
        let exp = p * total;
        if exp < min_expected {
            pooled_obs += obs;
            pooled_exp += exp;
        } else {
            statistic += (obs - exp).powi(2) / exp;
            cells += 1;
        }
    }
    // mass observed outside the reference support lands in the pooled cell
    pooled_obs += counts.iter().filter(|(k, _)| !reference.contains_key(*k)).map(|(_, &c)| c as f64).sum::<f64>();
    if pooled_exp > 0.0 {
        statistic += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    } else if pooled_obs > 0.0 {
        statistic = f64::INFINITY;
    }
    let dof = cells.saturating_sub(1).max(1);
    let p_value = if statistic.is_finite() {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic)
    } else {
        0.0
    };
    ChiSquareResult { statistic, dof, p_value }
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// the standard normal.
pub fn ks_standard_normal(samples: &mut [f64]) -> f64 {
    let normal = Normal::standard();
    samples.sort_unstable_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            let hi = (i as f64 + 1.0) / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Sample mean and the standard error of that mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_of_identical_laws_is_zero() {
        let reference: BTreeMap<u8, f64> = [(0, 0.25), (1, 0.75)].into();
        let counts: BTreeMap<u8, u64> = [(0, 25), (1, 75)].into();
        assert!(total_variation(&counts, &reference).abs() < 1e-15);
        let off: BTreeMap<u8, u64> = [(0, 50), (2, 50)].into();
        assert!((total_variation(&off, &reference) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let reference: BTreeMap<u8, f64> = [(0, 0.5), (1, 0.5)].into();
        let counts: BTreeMap<u8, u64> = [(0, 500), (1, 500)].into();
        let r = chi_square(&counts, &reference, 5.0);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_of_normal_quantiles_is_small() {
        let normal = Normal::standard();
        let mut xs: Vec<f64> = (0..1000).map(|i| normal.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        assert!(ks_standard_normal(&mut xs) <= 0.0005 + 1e-8);
    }
}
