//! Independent-Poisson description of the allele-count matrix: conditioning
//! on `Σ j·η_j = n` recovers the refined law exactly, and the first few rows
//! are approximately independent Poisson for large `n`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::allele_stats::harmonic_h_exact;
use crate::error::{EsfError, Result};
use crate::measure::{factorial, pochhammer_exact, ratio_to_f64, rational_pow, refined_esf_pmf_exact, CheckReport, MutationParams};
use crate::partitions::{enumerate_multipartitions, multipartition_to_matrix};

/// Means `θ_l/j` of the independent Poisson grid, rows `j = 1..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonMatrixLaw {
    m: usize,
    k: usize,
    means: Vec<f64>,
}

impl PoissonMatrixLaw {
    pub fn new(m: usize, theta: &MutationParams) -> Result<Self> {
        if m == 0 {
            return Err(EsfError::InvalidInput("need at least one row".into()));
        }
        let k = theta.k();
        let means = (1..=m).flat_map(|j| theta.as_f64().iter().map(move |t| t / j as f64)).collect();
        Ok(Self { m, k, means })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Mean of entry (row `j` 1-based, class `l`).
    pub fn mean(&self, j: usize, l: usize) -> f64 {
        self.means[(j - 1) * self.k + l]
    }

    /// Probability of a grid (row-major, `m × k`).
    pub fn pmf(&self, grid: &[usize]) -> f64 {
        grid.iter()
            .zip(&self.means)
            .map(|(&a, &mu)| (a as f64 * mu.ln() - mu - crate::measure::ln_factorial(a)).exp())
            .product()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<u64>> {
        self.means
            .chunks(self.k)
            .map(|row| row.iter().map(|&mu| Poisson::new(mu).expect("positive mean").sample(rng) as u64).collect())
            .collect()
    }
}

/// Independent `η_j(θ_l) ~ Poisson(θ_l/j)` for `j = 1..m`.
pub fn poisson_matrix_sample<R: Rng + ?Sized>(m: usize, theta: &MutationParams, rng: &mut R) -> Result<Vec<Vec<u64>>> {
    Ok(PoissonMatrixLaw::new(m, theta)?.sample(rng))
}

/// `coeff · e^{−exponent}`, exact in both parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpRational {
    pub coeff: BigRational,
    pub exponent: BigRational,
}

impl ExpRational {
    pub fn new(coeff: BigRational, exponent: BigRational) -> Self {
        Self { coeff, exponent }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(&self.coeff * &other.coeff, &self.exponent + &other.exponent)
    }

    pub fn div(&self, other: &Self) -> Self {
        Self::new(&self.coeff / &other.coeff, &self.exponent - &other.exponent)
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.coeff) * (-ratio_to_f64(&self.exponent)).exp()
    }
}

fn poisson_weight(thetas: &[BigRational], p: &crate::partitions::MultiplePartition) -> BigRational {
    let mat = multipartition_to_matrix(p);
    let mut value = BigRational::one();
    for j in 1..=p.n() {
        for (l, t) in thetas.iter().enumerate() {
            let a = mat.get(j, l);
            if a > 0 {
                let mean = t / BigRational::from_integer(BigInt::from(j));
                value *= rational_pow(&mean, a) / BigRational::from_integer(factorial(a));
            }
        }
    }
    value
}

/// Σ over allele-count matrices of size `n` of `Π (θ_l/j)^a / a!` equals `(w)_n / n!`.
pub fn poisson_normalization_check(n: usize, theta: &MutationParams) -> Result<bool> {
    let thetas = theta.require_exact("the Poisson normalization identity")?;
    let total: BigRational = enumerate_multipartitions(n, thetas.len()).iter().map(|p| poisson_weight(thetas, p)).sum();
    let w = theta.total_exact().expect("exact");
    Ok(total == pochhammer_exact(&w, n) / BigRational::from_integer(factorial(n)))
}

/// For every matrix of size `n`, the refined law equals the independent
/// Poisson law on rows `1..n` conditioned on `Σ j·η_j = n`; the
/// conditioning probability is `(w)_n e^{−w H_n(1)} / n!`.
pub fn conditional_identity_check(n: usize, theta: &MutationParams) -> Result<CheckReport> {
    let thetas = theta.require_exact("the conditional Poisson identity")?;
    let w = theta.total_exact().expect("exact");
    // every cell (j, l), j ≤ n, contributes e^{−θ_l/j}
    let exponent = &w * harmonic_h_exact(n, 1, &BigRational::one());
    let conditioning = ExpRational::new(
        pochhammer_exact(&w, n) / BigRational::from_integer(factorial(n)),
        exponent.clone(),
    );
    let mut report = CheckReport::new(format!("conditional Poisson identity (n={n}, k={})", thetas.len()));
    for p in enumerate_multipartitions(n, thetas.len()) {
        let joint = ExpRational::new(poisson_weight(thetas, &p), exponent.clone());
        let conditioned = joint.div(&conditioning);
        let target = refined_esf_pmf_exact(&p, thetas)?;
        report.record(conditioned.exponent.is_zero() && conditioned.coeff == target, || {
            format!("{p}: conditioned {} vs {}", conditioned.coeff, target)
        });
    }
    Ok(report)
}

/// Rows `1..=m` of the matrix of `p`, row-major, as a window key.
fn window_key(p: &crate::partitions::MultiplePartition, m: usize) -> Vec<usize> {
    let mat = multipartition_to_matrix(p);
    (1..=m).flat_map(|j| (0..p.k()).map(move |l| (j, l))).map(|(j, l)| if j <= mat.n() { mat.get(j, l) } else { 0 }).collect()
}

/// Exact law of rows `1..=m` of the allele-count matrix.
pub fn top_rows_law(n: usize, m: usize, theta: &MutationParams) -> Result<BTreeMap<Vec<usize>, BigRational>> {
    let thetas = theta.require_exact("the top-rows law")?;
    let mut law: BTreeMap<Vec<usize>, BigRational> = BTreeMap::new();
    for p in enumerate_multipartitions(n, thetas.len()) {
        *law.entry(window_key(&p, m)).or_insert_with(BigRational::zero) += refined_esf_pmf_exact(&p, thetas)?;
    }
    Ok(law)
}

/// All `m × k` grids with `Σ_j j·Σ_l a_{j,l} ≤ n`.
fn window_grids(n: usize, m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(cell: usize, budget: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cell == m * k {
            out.push(cur.clone());
            return;
        }
        let j = cell / k + 1;
        for a in 0..=budget / j {
            cur.push(a);
            rec(cell + 1, budget - a * j, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, k, &mut Vec::new(), &mut out);
    out
}

/// Total variation between the law of rows `1..=m` under the refined law and
/// the independent Poisson grid. Every grid in the window
/// `Σ j·a_j ≤ n` is compared cell by cell; Poisson mass outside the window
/// (where the refined law has none) is added in full.
pub fn truncated_tv_distance(n: usize, m: usize, theta: &MutationParams) -> Result<f64> {
    if m == 0 || m > n {
        return Err(EsfError::InvalidInput(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    let exact = top_rows_law(n, m, theta)?;
    let poisson = PoissonMatrixLaw::new(m, theta)?;
    let (mut l1, mut covered) = (0.0, 0.0);
    for grid in window_grids(n, m, theta.k()) {
        let q = poisson.pmf(&grid);
        let p = exact.get(&grid).map(ratio_to_f64).unwrap_or(0.0);
        l1 += (p - q).abs();
        covered += q;
    }
    Ok((0.5 * (l1 + (1.0 - covered).max(0.0))).clamp(0.0, 1.0))
}
