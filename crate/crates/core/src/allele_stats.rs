//! Per-class allele counts `K_n^(l)`: exact moments, the joint law, the
//! `H` functions with their bounds, regime limits and a fast simulator.
//!
//! The urn draws are independent: draw `j` opens a new class-`l` allele with
//! probability `θ_l/(w+j−1)`, and at most one class per draw. Hence
//! `E K = θ_l H_n^(1)(w)` and `Var K = θ_l H_n^(1)(w) − θ_l² H_n^(2)(w)`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EsfError, Result};
use crate::measure::{factorial, pochhammer_exact, rational_pow, CheckReport, MutationParams};
use crate::rng::stream;

/// `H_n^(p)(x) = Σ_{j=0}^{n−1} (x+j)^{−p}`.
pub fn harmonic_h(n: usize, p: u32, x: f64) -> f64 {
    // smallest terms first
    (0..n).rev().map(|j| (x + j as f64).powi(-(p as i32))).sum()
}

pub fn harmonic_h_exact(n: usize, p: u32, x: &BigRational) -> BigRational {
    (0..n)
        .map(|j| {
            let y = x + BigRational::from_integer(BigInt::from(j));
            rational_pow(&y, p as usize).recip()
        })
        .sum()
}

fn check_class(theta: &MutationParams, l: usize) -> Result<()> {
    if l >= theta.k() {
        return Err(EsfError::LabelOutOfRange { label: l, k: theta.k() });
    }
    Ok(())
}

pub fn expected_k(n: usize, theta: &MutationParams, l: usize) -> Result<f64> {
    check_class(theta, l)?;
    Ok(theta.as_f64()[l] * harmonic_h(n, 1, theta.total()))
}

pub fn var_k(n: usize, theta: &MutationParams, l: usize) -> Result<f64> {
    check_class(theta, l)?;
    let (t, w) = (theta.as_f64()[l], theta.total());
    Ok(t * harmonic_h(n, 1, w) - t * t * harmonic_h(n, 2, w))
}

pub fn expected_k_exact(n: usize, theta: &MutationParams, l: usize) -> Result<BigRational> {
    check_class(theta, l)?;
    let t = theta.require_exact("exact moments")?;
    let w = theta.total_exact().expect("exact");
    Ok(&t[l] * harmonic_h_exact(n, 1, &w))
}

pub fn var_k_exact(n: usize, theta: &MutationParams, l: usize) -> Result<BigRational> {
    check_class(theta, l)?;
    let t = &theta.require_exact("exact moments")?[l];
    let w = theta.total_exact().expect("exact");
    Ok(t * harmonic_h_exact(n, 1, &w) - t * t * harmonic_h_exact(n, 2, &w))
}

/// Rows `0..=n` of unsigned Stirling numbers of the first kind.
pub fn stirling_first_table(n: usize) -> Vec<Vec<BigUint>> {
    let mut table = vec![vec![BigUint::one()]];
    for i in 0..n {
        let prev = &table[i];
        let row: Vec<BigUint> = (0..=i + 1)
            .map(|m| {
                let stay = if m <= i { prev[m].clone() * BigUint::from(i) } else { BigUint::zero() };
                let grow = if m >= 1 { prev[m - 1].clone() } else { BigUint::zero() };
                stay + grow
            })
            .collect();
        table.push(row);
    }
    table
}

/// `[n, m]`: permutations of `n` elements with `m` cycles.
pub fn stirling_first(n: usize, m: usize) -> BigUint {
    if m > n {
        return BigUint::zero();
    }
    stirling_first_table(n)[n][m].clone()
}

fn joint_k_pmf_with(n: usize, thetas: &[BigRational], p: &[usize], table: &[Vec<BigUint>]) -> BigRational {
    let ratio = |a: usize, m: usize| -> BigRational {
        if m > a {
            return BigRational::zero();
        }
        BigRational::new(BigInt::from(table[a][m].clone()), factorial(a))
    };
    // convolve Σ_{n_1+…+n_k=n} Π [n_l,p_l]/n_l!
    let mut acc = vec![BigRational::zero(); n + 1];
    acc[0] = BigRational::one();
    for &pl in p {
        let mut next = vec![BigRational::zero(); n + 1];
        for (used, a) in acc.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for size in pl..=n - used {
                let c = ratio(size, pl);
                if !c.is_zero() {
                    next[used + size] += a * c;
                }
            }
        }
        acc = next;
    }
    let w: BigRational = thetas.iter().sum();
    let mut value = BigRational::from_integer(factorial(n)) * &acc[n] / pochhammer_exact(&w, n);
    for (t, &pl) in thetas.iter().zip(p) {
        value *= rational_pow(t, pl);
    }
    value
}

/// `P(K_n^(1)=p_1, …, K_n^(k)=p_k)`, exactly.
pub fn joint_k_pmf(n: usize, theta: &MutationParams, p: &[usize]) -> Result<BigRational> {
    let thetas = theta.require_exact("the joint allele-count law")?;
    if p.len() != thetas.len() {
        return Err(EsfError::DimensionMismatch { expected: thetas.len(), got: p.len() });
    }
    Ok(joint_k_pmf_with(n, thetas, p, &stirling_first_table(n)))
}

/// The full joint law of `(K_n^(1), …, K_n^(k))` on its support.
pub fn joint_k_distribution(n: usize, theta: &MutationParams) -> Result<BTreeMap<Vec<usize>, BigRational>> {
    let thetas = theta.require_exact("the joint allele-count law")?;
    let table = stirling_first_table(n);
    let k = thetas.len();
    let mut out = BTreeMap::new();
    let mut p = vec![0usize; k];
    loop {
        let total: usize = p.iter().sum();
        if total <= n && (total >= 1 || n == 0) {
            let v = joint_k_pmf_with(n, thetas, &p, &table);
            if !v.is_zero() {
                out.insert(p.clone(), v);
            }
        }
        let Some(pos) = (0..k).rev().find(|&i| p[i] < n) else { break };
        p[pos] += 1;
        p[pos + 1..].iter_mut().for_each(|x| *x = 0);
    }
    Ok(out)
}

/// Mean and variance of `K_n^(l)` from the joint law.
pub fn marginal_moments(law: &BTreeMap<Vec<usize>, BigRational>, l: usize) -> (BigRational, BigRational) {
    let mut m1 = BigRational::zero();
    let mut m2 = BigRational::zero();
    for (p, v) in law {
        let x = BigRational::from_integer(BigInt::from(p[l]));
        m1 += &x * v;
        m2 += &x * &x * v;
    }
    let var = m2 - &m1 * &m1;
    (m1, var)
}

/// Both chains of inequalities bounding `H^(1)` and `H^(2)` on every
/// `(n, x)` with `n ≤ max_n`. All are strict except the upper `H^(2)` bound
/// at `n = 1`, where both sides equal `1/x²`.
pub fn harmonic_bounds_check(xs: &[f64], max_n: usize) -> CheckReport {
    let mut report = CheckReport::new(format!("H-function bounds (n <= {max_n})"));
    for &x in xs {
        // running sums: H^(1) − log(1+n/x) term by term avoids cancellation
        let (mut excess, mut h2) = (0.0f64, 0.0f64);
        for n in 1..=max_n {
            let y = x + (n - 1) as f64;
            excess += 1.0 / y - (1.0 / y).ln_1p();
            h2 += 1.0 / (y * y);
            let nf = n as f64;
            let lo1 = nf / (2.0 * x * (x + nf));
            let hi1 = nf / (x * (x + nf));
            let lo2 = nf / (x * (x + nf));
            let hi2 = 1.0 / (x * x) + (nf - 1.0) / (x * (x + nf - 1.0));
            let upper2 = if n == 1 { h2 <= hi2 * (1.0 + 1e-15) } else { h2 < hi2 };
            report.record(lo1 < excess && excess < hi1 && lo2 < h2 && upper2, || {
                format!("x={x}, n={n}: excess {excess} in ({lo1}, {hi1}), H2 {h2} in ({lo2}, {hi2})")
            });
        }
    }
    report
}

/// `θ_l(n) = α_l n^β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSpec {
    pub beta: f64,
    pub alphas: Vec<f64>,
}

impl RegimeSpec {
    pub fn new(beta: f64, alphas: Vec<f64>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(EsfError::InvalidParameter(format!("growth exponent {beta} must be finite and >= 0")));
        }
        if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(EsfError::InvalidParameter("scale factors must be positive".into()));
        }
        Ok(Self { beta, alphas })
    }

    pub fn total_alpha(&self) -> f64 {
        self.alphas.iter().sum()
    }

    pub fn thetas_at(&self, n: usize) -> MutationParams {
        let scale = (n as f64).powf(self.beta);
        MutationParams::from_f64(self.alphas.iter().map(|a| a * scale).collect()).expect("positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Normalization {
    /// `n^β log n`
    PowerLog(f64),
    /// `n`
    Linear,
}

impl Normalization {
    pub fn at(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            Normalization::PowerLog(beta) => nf.powf(beta) * nf.ln(),
            Normalization::Linear => nf,
        }
    }
}

/// Almost-sure limit of `K_n^(l) / normalization(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimePrediction {
    pub limit: f64,
    pub normalization: Normalization,
}

pub fn regime_prediction(spec: &RegimeSpec, l: usize) -> Result<RegimePrediction> {
    let alpha = *spec
        .alphas
        .get(l)
        .ok_or(EsfError::LabelOutOfRange { label: l, k: spec.alphas.len() })?;
    let a = spec.total_alpha();
    Ok(if spec.beta < 1.0 {
        RegimePrediction { limit: alpha * (1.0 - spec.beta), normalization: Normalization::PowerLog(spec.beta) }
    } else if spec.beta == 1.0 {
        RegimePrediction { limit: alpha * ((1.0 + a) / a).ln(), normalization: Normalization::Linear }
    } else {
        RegimePrediction { limit: alpha / a, normalization: Normalization::Linear }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CltRegime {
    /// θ fixed: centre and variance `θ_l log n`.
    ConstantTheta,
    /// `0 < β ≤ 3/2`: `Δ = θ_l log(1+n/w)`, `σ² = Δ − nθ_l²/(w(w+n))`.
    Moderate,
    /// `β > 3/2`: binomial centring `nθ_l/w`, variance `n(θ_l/w)(1−θ_l/w)`.
    Fast,
}

impl CltRegime {
    pub fn from_beta(beta: f64) -> Self {
        if beta == 0.0 {
            CltRegime::ConstantTheta
        } else if beta <= 1.5 {
            CltRegime::Moderate
        } else {
            CltRegime::Fast
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltScaling {
    pub regime: CltRegime,
    pub center: f64,
    pub variance: f64,
}

impl CltScaling {
    pub fn standardize(&self, k: f64) -> f64 {
        (k - self.center) / self.variance.sqrt()
    }
}

pub fn clt_scaling(n: usize, theta: &MutationParams, l: usize, regime: CltRegime) -> Result<CltScaling> {
    check_class(theta, l)?;
    let (t, w, nf) = (theta.as_f64()[l], theta.total(), n as f64);
    let (center, variance) = match regime {
        CltRegime::ConstantTheta => (t * nf.ln(), t * nf.ln()),
        CltRegime::Moderate => {
            let delta = t * (nf / w).ln_1p();
            (delta, delta - nf * t * t / (w * (w + nf)))
        }
        CltRegime::Fast => {
            if theta.k() == 1 {
                return Err(EsfError::UnsupportedRegime(
                    "a single class has K_n = n with high probability when β > 3/2; no normal limit".into(),
                ));
            }
            (nf * t / w, nf * (t / w) * (1.0 - t / w))
        }
    };
    Ok(CltScaling { regime, center, variance })
}

/// One draw of `(K_n^(1), …, K_n^(k))`: the total number of alleles is a sum of
/// independent Bernoulli(`w/(w+j−1)`), split multinomially by `θ_l/w`.
pub fn simulate_k<R: Rng + ?Sized>(n: usize, theta: &MutationParams, rng: &mut R) -> Vec<usize> {
    let w = theta.total();
    let mut total = 0u64;
    for j in 0..n {
        if rng.random::<f64>() * (w + j as f64) < w {
            total += 1;
        }
    }
    let thetas = theta.as_f64();
    let mut out = vec![0usize; thetas.len()];
    let mut left = total;
    let mut mass = w;
    for (l, &t) in thetas.iter().enumerate() {
        if l + 1 == thetas.len() || left == 0 {
            out[l] = left as usize;
            break;
        }
        let p = (t / mass).clamp(0.0, 1.0);
        let x = Binomial::new(left, p).expect("valid binomial").sample(rng);
        out[l] = x as usize;
        left -= x;
        mass -= t;
    }
    out
}

/// `reps` independent draws, replicate `i` using stream `(seed, i)`.
pub fn simulate_k_many(n: usize, theta: &MutationParams, reps: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..reps)
        .into_par_iter()
        .map(|i| simulate_k(n, theta, &mut stream(seed, i as u64)))
        .collect()
}

/// Standardizes integer counts by `mean` and `var` after spreading each
/// count uniformly over its unit cell, then returns the KS distance to the
/// standard normal. The spread adds 1/12 to the variance.
pub fn ks_continuity_corrected<R: Rng + ?Sized>(counts: &[usize], mean: f64, var: f64, rng: &mut R) -> f64 {
    let sd = (var + 1.0 / 12.0).sqrt();
    let mut z: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 + rng.random::<f64>() - 0.5 - mean) / sd)
        .collect();
    crate::stats::ks_standard_normal(&mut z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::refined_esf_pmf_exact;
    use crate::partitions::enumerate_multipartitions;
    use crate::rng::seeded;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn harmonic_examples() {
        assert!((harmonic_h(1, 2, 0.5) - 4.0).abs() < 1e-15);
        assert!((harmonic_h(4, 1, 1.0) - 25.0 / 12.0).abs() < 1e-15);
        assert_eq!(harmonic_h_exact(4, 1, &q(1, 1)), q(25, 12));
    }

    #[test]
    fn stirling_examples() {
        assert_eq!(stirling_first(3, 2), BigUint::from(3u8));
        assert_eq!(stirling_first(6, 1), BigUint::from(120u8));
        assert_eq!(stirling_first(7, 7), BigUint::one());
        assert_eq!(stirling_first(0, 0), BigUint::one());
        assert_eq!(stirling_first(2, 3), BigUint::zero());
    }

    #[test]
    fn moments_small_n() {
        let theta = MutationParams::from_integers(&[1, 3]).unwrap();
        assert!((expected_k(1, &theta, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((var_k(1, &theta, 1).unwrap() - 0.75 * 0.25).abs() < 1e-15);
        assert!(expected_k(3, &theta, 2).is_err());
        // k = 1: Ewens' Σ θ/(θ+j) and Σ θj/(θ+j)^2
        let one = MutationParams::from_integers(&[2]).unwrap();
        let mean: f64 = (0..10).map(|j| 2.0 / (2.0 + j as f64)).sum();
        let var: f64 = (0..10).map(|j| 2.0 * j as f64 / (2.0 + j as f64).powi(2)).sum();
        assert!((expected_k(10, &one, 0).unwrap() - mean).abs() < 1e-12);
        assert!((var_k(10, &one, 0).unwrap() - var).abs() < 1e-12);
    }

    #[test]
    fn joint_law_matches_enumeration() {
        let theta = MutationParams::from_rationals(vec![q(1, 2), q(3, 1), q(2, 3)]).unwrap();
        for n in 1..=6 {
            let law = joint_k_distribution(n, &theta).unwrap();
            let mut agg: BTreeMap<Vec<usize>, BigRational> = BTreeMap::new();
            for p in enumerate_multipartitions(n, 3) {
                *agg.entry(p.rows_per_class()).or_insert_with(BigRational::zero) +=
                    refined_esf_pmf_exact(&p, theta.exact().unwrap()).unwrap();
            }
            assert_eq!(law, agg, "n={n}");
        }
    }

    #[test]
    fn joint_law_k1_is_classical() {
        let theta = MutationParams::from_rationals(vec![q(3, 2)]).unwrap();
        let t = q(3, 2);
        for n in 1..=7 {
            for m in 1..=n {
                let expected = rational_pow(&t, m) * BigRational::from_integer(BigInt::from(stirling_first(n, m)))
                    / pochhammer_exact(&t, n);
                assert_eq!(joint_k_pmf(n, &theta, &[m]).unwrap(), expected);
            }
        }
    }

    #[test]
    fn regime_examples() {
        let spec = RegimeSpec::new(1.0, vec![1.0, 1.0]).unwrap();
        assert!((regime_prediction(&spec, 0).unwrap().limit - 1.5f64.ln()).abs() < 1e-15);
        let fixed = RegimeSpec::new(0.0, vec![0.7, 2.0]).unwrap();
        let p = regime_prediction(&fixed, 0).unwrap();
        assert_eq!(p.limit, 0.7);
        assert_eq!(p.normalization, Normalization::PowerLog(0.0));
        let fast = RegimeSpec::new(2.0, vec![1.0, 3.0]).unwrap();
        assert_eq!(regime_prediction(&fast, 1).unwrap().limit, 0.75);
        assert!(RegimeSpec::new(-1.0, vec![1.0]).is_err());
    }

    #[test]
    fn clt_scaling_cases() {
        let theta = MutationParams::from_f64(vec![1.0, 2.0]).unwrap();
        let c = clt_scaling(1000, &theta, 0, CltRegime::ConstantTheta).unwrap();
        assert!((c.center - 1000f64.ln()).abs() < 1e-12);
        let single = MutationParams::from_f64(vec![5.0]).unwrap();
        assert!(clt_scaling(10, &single, 0, CltRegime::Fast).is_err());
        for &n in &[2usize, 10, 1000, 100_000] {
            for beta in [0.5, 1.0, 1.5, 2.0] {
                let spec = RegimeSpec::new(beta, vec![1.0, 2.0]).unwrap();
                let th = spec.thetas_at(n);
                for l in 0..2 {
                    assert!(clt_scaling(n, &th, l, CltRegime::from_beta(beta)).unwrap().variance > 0.0);
                }
            }
        }
    }

    #[test]
    fn simulator_moments() {
        let theta = MutationParams::from_f64(vec![0.7, 1.3]).unwrap();
        let draws = simulate_k_many(50, &theta, 20_000, 3);
        for l in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|d| d[l] as f64).collect();
            let (mean, se) = crate::stats::mean_and_se(&xs);
            assert!((mean - expected_k(50, &theta, l).unwrap()).abs() < 4.0 * se);
        }
        let mut rng = seeded(1);
        assert_eq!(simulate_k(0, &theta, &mut rng), vec![0, 0]);
        assert_eq!(simulate_k(1, &theta, &mut rng).iter().sum::<usize>(), 1);
    }

    #[test]
    fn bounds_small_grid() {
        assert!(harmonic_bounds_check(&[0.1, 1.0, 100.0], 200).passed());
    }
}
