//! Forward Wright-Fisher simulation of `2N` genes under infinite-alleles
//! mutation with `k` classes, and the exact ancestral transition
//! probabilities of the same model.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{EsfError, Result};
use crate::measure::{rational_pow, MutationParams};
use crate::partitions::{MultiplePartition, YoungDiagram};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gene {
    pub allele: u64,
    pub class: usize,
}

/// `2N` genes. Allele ids are never reused: each class draws fresh ids from
/// its own counter, so `(class, allele)` identifies an allele.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    genes: Vec<Gene>,
    generation: u64,
    next_allele: Vec<u64>,
    #[serde(skip)]
    scratch: Vec<Gene>,
}

impl Population {
    /// Every gene carries allele 0 of `class`.
    pub fn monomorphic(two_n: usize, class: usize, k: usize) -> Result<Self> {
        if two_n == 0 {
            return Err(EsfError::InvalidParameter("population size must be positive".into()));
        }
        if class >= k {
            return Err(EsfError::LabelOutOfRange { label: class, k });
        }
        let mut next_allele = vec![0; k];
        next_allele[class] = 1;
        Ok(Self { genes: vec![Gene { allele: 0, class }; two_n], generation: 0, next_allele, scratch: Vec::new() })
    }

    pub fn size(&self) -> usize {
        self.genes.len()
    }

    pub fn k(&self) -> usize {
        self.next_allele.len()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn genes(&self) -> &[Gene] {
        &self.genes
    }

    /// Number of distinct alleles currently present.
    pub fn allele_count(&self) -> usize {
        let mut seen: Vec<(usize, u64)> = self.genes.iter().map(|g| (g.class, g.allele)).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Ids ever issued per class.
    pub fn issued(&self) -> &[u64] {
        &self.next_allele
    }

    fn fresh(&mut self, class: usize) -> Gene {
        let allele = self.next_allele[class];
        self.next_allele[class] += 1;
        Gene { allele, class }
    }
}

/// Per-generation mutation probabilities `μ_l`, with `Σ μ_l < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationProbs {
    mus: Vec<f64>,
    total: f64,
    geometric: Option<Geometric>,
}

impl MutationProbs {
    pub fn new(mus: Vec<f64>) -> Result<Self> {
        if mus.is_empty() || mus.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(EsfError::InvalidParameter("mutation probabilities must be finite and >= 0".into()));
        }
        let total: f64 = mus.iter().sum();
        if total >= 1.0 {
            return Err(EsfError::InvalidParameter(format!("total mutation probability {total} must be < 1")));
        }
        let geometric = (total > 0.0).then(|| Geometric::new(total).expect("probability in (0,1)"));
        Ok(Self { mus, total, geometric })
    }

    /// `μ_l = θ_l / 4N` for a population of `two_n = 2N` genes.
    pub fn from_theta(theta: &MutationParams, two_n: usize) -> Result<Self> {
        Self::new(theta.as_f64().iter().map(|t| t / (2 * two_n) as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mus
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    fn pick_class<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>() * self.total;
        for (l, &m) in self.mus.iter().enumerate() {
            if u < m {
                return l;
            }
            u -= m;
        }
        self.mus.len() - 1
    }
}

/// One generation: every child copies a uniformly chosen parent and, with
/// probability `μ_l`, instead carries a fresh allele of class `l`.
pub fn wf_step<R: Rng + ?Sized>(pop: &mut Population, mu: &MutationProbs, rng: &mut R) -> Result<()> {
    if mu.mus.len() != pop.k() {
        return Err(EsfError::DimensionMismatch { expected: pop.k(), got: mu.mus.len() });
    }
    let two_n = pop.genes.len();
    let mut next = std::mem::take(&mut pop.scratch);
    next.clear();
    next.extend((0..two_n).map(|_| pop.genes[rng.random_range(0..two_n)]));
    if let Some(geo) = &mu.geometric {
        // jump straight to the next mutated child
        let mut i = geo.sample(rng);
        while (i as usize) < two_n {
            let class = mu.pick_class(rng);
            next[i as usize] = pop.fresh(class);
            i = i.saturating_add(1).saturating_add(geo.sample(rng));
        }
    }
    pop.scratch = std::mem::replace(&mut pop.genes, next);
    pop.generation += 1;
    Ok(())
}

/// Groups `n` genes drawn without replacement by allele.
pub fn sample_composition<R: Rng + ?Sized>(pop: &Population, n: usize, rng: &mut R) -> Result<MultiplePartition> {
    let two_n = pop.size();
    if n > two_n {
        return Err(EsfError::InvalidInput(format!("sample size {n} exceeds population size {two_n}")));
    }
    let picked = rand::seq::index::sample(rng, two_n, n);
    let mut counts: HashMap<Gene, usize> = HashMap::new();
    for i in picked {
        *counts.entry(pop.genes[i]).or_default() += 1;
    }
    let mut rows = vec![Vec::new(); pop.k()];
    for (g, c) in counts {
        rows[g.class].push(c);
    }
    let comps = rows.into_iter().map(|r| YoungDiagram::from_unsorted(r).expect("positive rows")).collect();
    MultiplePartition::new(comps)
}

/// Stirling numbers of the second kind `S(p, m)` for `p, m ≤ max`.
pub fn stirling_second_table(max: usize) -> Vec<Vec<BigInt>> {
    let mut table = vec![vec![BigInt::zero(); max + 1]; max + 1];
    table[0][0] = BigInt::one();
    for p in 1..=max {
        for m in 1..=p {
            table[p][m] = BigInt::from(m) * &table[p - 1][m] + &table[p - 1][m - 1];
        }
    }
    table
}

/// Probability that `p` sampled genes have `m` distinct parents and no mutation:
/// `S(p,m) (2N)(2N−1)⋯(2N−m+1) / (2N)^p`.
fn no_mutation_prob(p: usize, m: usize, two_n: usize, stirling: &[Vec<BigInt>]) -> BigRational {
    if m == 0 {
        return if p == 0 { BigRational::one() } else { BigRational::zero() };
    }
    if m > two_n {
        return BigRational::zero();
    }
    let falling: BigInt = (0..m).map(|i| BigInt::from(two_n - i)).product();
    BigRational::new(&stirling[p][m] * falling, BigInt::from(two_n).pow(p as u32))
}

/// Probability that `p` genes have exactly `m` distinct non-mutant parental
/// lineages one generation back: `j` of them mutate, the remaining `p − j`
/// pick `m` distinct parents, `Σ_j C(p,j) (1−Σμ)^{p−j} (Σμ)^j P⁰(p−j, m)`.
pub fn transition_prob(p: usize, m: usize, two_n: usize, mus: &[BigRational]) -> Result<BigRational> {
    if m > p || p > two_n {
        return Err(EsfError::InvalidInput(format!("need m <= p <= 2N, got m={m}, p={p}, 2N={two_n}")));
    }
    let total: BigRational = mus.iter().sum();
    if total >= BigRational::one() || mus.iter().any(|m| m < &BigRational::zero()) {
        return Err(EsfError::InvalidParameter("mutation probabilities must be >= 0 and sum below 1".into()));
    }
    let stirling = stirling_second_table(p);
    let keep = BigRational::one() - &total;
    let mut binom = BigInt::one();
    let mut value = BigRational::zero();
    for j in 0..=p - m {
        if j > 0 {
            binom = binom * BigInt::from(p - j + 1) / BigInt::from(j);
        }
        value += BigRational::from_integer(binom.clone())
            * rational_pow(&keep, p - j)
            * rational_pow(&total, j)
            * no_mutation_prob(p - j, m, two_n, &stirling);
    }
    Ok(value)
}

/// Generator of the ancestral pure-death process on `0..=n` lineages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AncestralGenerator {
    pub q: Vec<Vec<f64>>,
    pub total_theta: f64,
}

impl AncestralGenerator {
    pub fn rate(&self, j: usize) -> f64 {
        -self.q[j][j]
    }

    /// From `j` lineages: (coalescence, loss to mutation) jump probabilities.
    pub fn jump_split(&self, j: usize) -> (f64, f64) {
        let (jf, w) = (j as f64, self.total_theta);
        (jf * (jf - 1.0) / (jf * (jf - 1.0) + w * jf), w * jf / (jf * (jf - 1.0) + w * jf))
    }
}

/// `q_{jj} = −[j(j−1) + wj]/4`, `q_{j,j−1} = −q_{jj}`.
pub fn ancestral_generator(n: usize, theta: &MutationParams) -> AncestralGenerator {
    let w = theta.total();
    let mut q = vec![vec![0.0; n + 1]; n + 1];
    for j in 1..=n {
        let jf = j as f64;
        let rate = (jf * (jf - 1.0) + w * jf) / 4.0;
        q[j][j] = -rate;
        q[j][j - 1] = rate;
    }
    AncestralGenerator { q, total_theta: w }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryConfig {
    /// Number of genes, `2N`.
    pub two_n: usize,
    pub theta: Vec<f64>,
    pub burn_in: u64,
    pub thin: u64,
    pub sample_size: usize,
    pub samples: usize,
    pub chains: usize,
    pub seed: u64,
}

impl StationaryConfig {
    /// Burn-in `20N`, thinning `N`.
    pub fn standard(two_n: usize, theta: Vec<f64>, sample_size: usize, samples: usize, seed: u64) -> Self {
        let n = (two_n / 2).max(1) as u64;
        Self { two_n, theta, burn_in: 20 * n, thin: n, sample_size, samples, chains: 20, seed }
    }
}

/// Runs independent chains from a monomorphic start, each burned in and
/// then sampled every `thin` generations. Chain `c` uses stream `(seed, c)`
/// and yields samples `c, c + chains, …`; the output is in sample order.
pub fn run_stationary(config: &StationaryConfig) -> Result<Vec<MultiplePartition>> {
    Ok(run_stationary_with_states(config)?.0)
}

/// As [`run_stationary`], also returning each chain's final population.
pub fn run_stationary_with_states(config: &StationaryConfig) -> Result<(Vec<MultiplePartition>, Vec<Population>)> {
    let theta = MutationParams::from_f64(config.theta.clone())?;
    let mu = MutationProbs::from_theta(&theta, config.two_n)?;
    if config.sample_size > config.two_n {
        return Err(EsfError::InvalidInput("sample size exceeds population size".into()));
    }
    let chains = config.chains.clamp(1, config.samples.max(1));
    let per_chain: Vec<(Vec<MultiplePartition>, Population)> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<(Vec<MultiplePartition>, Population)> {
            let mut rng = stream(config.seed, c as u64);
            let mut pop = Population::monomorphic(config.two_n, 0, theta.k())?;
            for _ in 0..config.burn_in {
                wf_step(&mut pop, &mu, &mut rng)?;
            }
            let count = (config.samples + chains - 1 - c) / chains;
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                if i > 0 {
                    for _ in 0..config.thin {
                        wf_step(&mut pop, &mu, &mut rng)?;
                    }
                }
                out.push(sample_composition(&pop, config.sample_size, &mut rng)?);
            }
            Ok((out, pop))
        })
        .collect::<Result<_>>()?;
    let ordered = (0..config.samples).map(|i| per_chain[i % chains].0[i / chains].clone()).collect();
    Ok((ordered, per_chain.into_iter().map(|(_, pop)| pop).collect()))
}

/// `4N (1 − P_{2N}(p,p))` with `μ_l = θ_l/4N`; tends to `p(p−1) + wp`.
pub fn scaled_loss_rate(p: usize, two_n: usize, theta: &[BigRational]) -> Result<f64> {
    let four_n = BigRational::from_integer(BigInt::from(2 * two_n));
    let mus: Vec<BigRational> = theta.iter().map(|t| t / &four_n).collect();
    let stay = transition_prob(p, p, two_n, &mus)?;
    Ok(crate::measure::ratio_to_f64(&(four_n * (BigRational::one() - stay))))
}
