//! Monte Carlo cross-checks between samplers and closed forms.

use esf_core::allele_stats::{expected_k, var_k};
use esf_core::measure::MutationParams;
use esf_core::rng::{seeded, stream};
use esf_core::samplers::{hoppe_urn_sample, pd_sample};
use esf_core::stats::mean_and_se;

/// Sample variance and its standard error, from the fourth central moment.
fn variance_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).sqrt())
}

#[test]
fn urn_allele_counts_match_moments() {
    let theta = MutationParams::from_f64(vec![0.7, 1.3]).unwrap();
    let (n, reps) = (50usize, 100_000usize);
    let mut rng = seeded(2024);
    let draws: Vec<Vec<usize>> = (0..reps).map(|_| hoppe_urn_sample(n, &theta, &mut rng).0.rows_per_class()).collect();
    for l in 0..2 {
        let xs: Vec<f64> = draws.iter().map(|d| d[l] as f64).collect();
        let (mean, se) = mean_and_se(&xs);
        let e = expected_k(n, &theta, l).unwrap();
        assert!((mean - e).abs() < 3.0 * se, "class {l}: mean {mean} vs {e} (se {se})");
        let (var, vse) = variance_and_se(&xs);
        let v = var_k(n, &theta, l).unwrap();
        assert!((var - v).abs() < 3.0 * vse, "class {l}: var {var} vs {v} (se {vse})");
    }
}

#[test]
fn class_weights_have_dirichlet_means() {
    let theta = MutationParams::from_f64(vec![0.5, 1.0, 2.5]).unwrap();
    let reps = 50_000;
    let weights: Vec<Vec<f64>> = (0..reps)
        .map(|i| pd_sample(&theta, 1e-6, &mut stream(77, i)).unwrap().classes.iter().map(|c| c.weight).collect())
        .collect();
    for (l, &t) in theta.as_f64().iter().enumerate() {
        let xs: Vec<f64> = weights.iter().map(|w| w[l]).collect();
        let (mean, se) = mean_and_se(&xs);
        assert!((mean - t / 4.0).abs() < 3.0 * se, "class {l}: {mean}");
    }
}

#[test]
fn largest_atom_of_single_class() {
    // E[largest PD(1) frequency] is the Golomb–Dickman constant
    let theta = MutationParams::from_f64(vec![1.0]).unwrap();
    let xs: Vec<f64> = (0..50_000).map(|i| pd_sample(&theta, 1e-8, &mut stream(5, i)).unwrap().classes[0].atoms[0]).collect();
    let (mean, se) = mean_and_se(&xs);
    assert!((mean - 0.624_329_988_5).abs() < 3.0 * se, "{mean}");
}
