//! Monte Carlo generators of the refined Ewens law: the generalized Hoppe
//! urn, the multiple Poisson-Dirichlet frequencies and their paintbox.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::error::{EsfError, Result};
use crate::measure::{ln_factorial, MutationParams};
use crate::partitions::{LabeledBlock, LabeledSetPartition, MultiplePartition, YoungDiagram};

/// Picks an index with probability proportional to `weights[i]`, given `u` uniform on `[0, Σ weights)`.
fn pick_weighted(weights: &[f64], mut u: f64) -> usize {
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

#[derive(Debug, Clone)]
struct Color {
    class: usize,
    members: Vec<usize>,
}

/// Outcome of one urn draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrnDraw {
    /// A black object of this class was drawn: a new color appears.
    NewColor { class: usize },
    /// A colored object was drawn and duplicated.
    Existing { color: usize },
}

/// The urn with one black object of mass `θ_l` per class and unit-mass
/// colored objects. Drawing black `l` adds a new color of class `l`;
/// drawing a colored object adds one more of its color.
#[derive(Debug, Clone)]
pub struct HoppeUrn {
    thetas: Vec<f64>,
    total_theta: f64,
    colors: Vec<Color>,
    gene_color: Vec<usize>,
}

impl HoppeUrn {
    pub fn new(theta: &MutationParams) -> Self {
        Self {
            thetas: theta.as_f64().to_vec(),
            total_theta: theta.total(),
            colors: Vec::new(),
            gene_color: Vec::new(),
        }
    }

    /// Number of colored (non-black) objects.
    pub fn total_colored(&self) -> usize {
        self.gene_color.len()
    }

    /// Multiplicities of the colors of class `l`, in order of appearance.
    pub fn color_counts(&self, class: usize) -> Vec<usize> {
        self.colors.iter().filter(|c| c.class == class).map(|c| c.members.len()).collect()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> UrnDraw {
        let j = self.gene_color.len();
        let u = rng.random::<f64>() * (self.total_theta + j as f64);
        let draw = if u < self.total_theta || j == 0 {
            UrnDraw::NewColor { class: pick_weighted(&self.thetas, u.min(self.total_theta)) }
        } else {
            // every colored object has unit mass, so a uniform earlier object picks its color
            UrnDraw::Existing { color: self.gene_color[rng.random_range(0..j)] }
        };
        let color = match draw {
            UrnDraw::NewColor { class } => {
                self.colors.push(Color { class, members: Vec::new() });
                self.colors.len() - 1
            }
            UrnDraw::Existing { color } => color,
        };
        self.colors[color].members.push(j);
        self.gene_color.push(color);
        draw
    }

    pub fn multipartition(&self) -> MultiplePartition {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.thetas.len()];
        for c in &self.colors {
            rows[c.class].push(c.members.len());
        }
        let comps = rows.into_iter().map(|r| YoungDiagram::from_unsorted(r).expect("positive rows")).collect();
        MultiplePartition::new(comps).expect("k >= 1")
    }

    /// Element `j` (the `j`-th draw) belongs to the block of its color.
    pub fn set_partition(&self) -> LabeledSetPartition {
        let blocks = self.colors.iter().map(|c| LabeledBlock { class: c.class, elements: c.members.clone() }).collect();
        LabeledSetPartition::new(self.gene_color.len(), blocks).expect("urn blocks partition the draws")
    }
}

/// Runs the urn for `n` draws.
pub fn hoppe_urn_sample<R: Rng + ?Sized>(
    n: usize,
    theta: &MutationParams,
    rng: &mut R,
) -> (MultiplePartition, LabeledSetPartition) {
    let mut urn = HoppeUrn::new(theta);
    for _ in 0..n {
        urn.step(rng);
    }
    (urn.multipartition(), urn.set_partition())
}

/// Jump probabilities of the ancestral death process from `j` lineages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescentRates {
    pub coalesce: f64,
    pub mutation: Vec<f64>,
}

/// `((j-1)/(j-1+w), θ_l/(j-1+w))`.
pub fn coalescent_rates(j: usize, theta: &MutationParams) -> Result<CoalescentRates> {
    if j == 0 {
        return Err(EsfError::InvalidInput("need at least one lineage".into()));
    }
    let denom = (j - 1) as f64 + theta.total();
    Ok(CoalescentRates {
        coalesce: (j - 1) as f64 / denom,
        mutation: theta.as_f64().iter().map(|t| t / denom).collect(),
    })
}

pub fn coalescent_rates_exact(j: usize, thetas: &[BigRational]) -> Result<(BigRational, Vec<BigRational>)> {
    if j == 0 {
        return Err(EsfError::InvalidInput("need at least one lineage".into()));
    }
    let jm1 = BigRational::from_integer(BigInt::from(j - 1));
    let denom: BigRational = thetas.iter().sum::<BigRational>() + &jm1;
    Ok((&jm1 / &denom, thetas.iter().map(|t| t / &denom).collect()))
}

/// Ranked frequencies of one class: atoms sorted descending, summing to
/// `weight - remainder`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFrequencies {
    pub weight: f64,
    pub atoms: Vec<f64>,
    /// Mass left after truncating the stick-breaking sequence.
    pub remainder: f64,
}

/// A point of the multiple Poisson-Dirichlet state space, truncated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyRanked {
    pub classes: Vec<ClassFrequencies>,
    pub epsilon: f64,
}

impl FrequencyRanked {
    /// Builds frequencies by hand; weights must sum to 1 and atoms to at most their weight.
    pub fn new(classes: Vec<ClassFrequencies>, epsilon: f64) -> Result<Self> {
        let total: f64 = classes.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EsfError::InvalidInput(format!("class weights sum to {total}, expected 1")));
        }
        for c in &classes {
            if c.atoms.windows(2).any(|w| w[0] < w[1]) || c.atoms.iter().any(|&a| a < 0.0) {
                return Err(EsfError::InvalidInput("atoms must be nonnegative and weakly decreasing".into()));
            }
            let s: f64 = c.atoms.iter().sum::<f64>() + c.remainder;
            if (s - c.weight).abs() > 1e-9 {
                return Err(EsfError::InvalidInput(format!("atoms and remainder sum to {s}, weight is {}", c.weight)));
            }
        }
        Ok(Self { classes, epsilon })
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }
}

/// Draws class weights from Dirichlet(θ₁..θ_k) and, per class, a PD(θ_l)
/// sequence by stick-breaking until the unbroken stick is below `epsilon`;
/// atoms are sorted descending and scaled by the class weight.
pub fn pd_sample<R: Rng + ?Sized>(theta: &MutationParams, epsilon: f64, rng: &mut R) -> Result<FrequencyRanked> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EsfError::InvalidParameter(format!("truncation tolerance {epsilon} outside (0, 1)")));
    }
    let thetas = theta.as_f64();
    let weights: Vec<f64> = if thetas.len() == 1 {
        vec![1.0]
    } else {
        let gammas: Vec<f64> = thetas
            .iter()
            .map(|&t| Gamma::new(t, 1.0).expect("positive shape").sample(rng))
            .collect();
        let total: f64 = gammas.iter().sum();
        gammas.into_iter().map(|g| g / total).collect()
    };
    let classes = thetas
        .iter()
        .zip(weights)
        .map(|(&t, weight)| {
            let mut stick = 1.0f64;
            let mut atoms = Vec::new();
            while stick >= epsilon {
                // Beta(1, θ) by inversion
                let v = 1.0 - rng.random::<f64>().powf(1.0 / t);
                atoms.push(stick * v);
                stick *= 1.0 - v;
            }
            atoms.sort_unstable_by(|a, b| b.total_cmp(a));
            atoms.iter_mut().for_each(|a| *a *= weight);
            ClassFrequencies { weight, atoms, remainder: stick * weight }
        })
        .collect();
    Ok(FrequencyRanked { classes, epsilon })
}

/// Draws `n` i.i.d. types from `f` and returns the induced multiple partition.
/// Remainder mass acts as dust: each dust draw is a fresh singleton type of
/// its class.
pub fn paintbox_sample<R: Rng + ?Sized>(n: usize, f: &FrequencyRanked, rng: &mut R) -> MultiplePartition {
    // cumulative table: per class the atoms followed by the class remainder
    let mut cumulative = Vec::new();
    let mut owner = Vec::new();
    let mut acc = 0.0;
    for (l, c) in f.classes.iter().enumerate() {
        for (i, &a) in c.atoms.iter().enumerate() {
            acc += a;
            cumulative.push(acc);
            owner.push((l, Some(i)));
        }
        acc += c.remainder;
        cumulative.push(acc);
        owner.push((l, None));
    }
    let mut hits = vec![0usize; cumulative.len()];
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); f.k()];
    for _ in 0..n {
        let u = rng.random::<f64>() * acc;
        let idx = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        match owner[idx] {
            (l, None) => rows[l].push(1),
            _ => hits[idx] += 1,
        }
    }
    for (idx, &h) in hits.iter().enumerate() {
        if h > 0 {
            rows[owner[idx].0].push(h);
        }
    }
    let comps = rows.into_iter().map(|r| YoungDiagram::from_unsorted(r).expect("positive rows")).collect();
    MultiplePartition::new(comps).expect("k >= 1")
}

/// Monomial symmetric function `m_λ(x)` of the atoms, extended by dust of
/// total mass `dust`: singleton rows may be filled by dust, contributing
/// `dust^r / r!` for `r` such rows.
pub fn monomial_with_dust(lambda: &YoungDiagram, atoms: &[f64], dust: f64) -> f64 {
    let groups = lambda.row_groups();
    if groups.is_empty() {
        return 1.0;
    }
    // mixed-radix state: remaining multiplicity of each row-length group
    let radix: Vec<usize> = groups.iter().map(|&(_, m)| m + 1).collect();
    let mut stride = vec![1usize; groups.len()];
    for g in 1..groups.len() {
        stride[g] = stride[g - 1] * radix[g - 1];
    }
    let states = stride[groups.len() - 1] * radix[groups.len() - 1];
    let full: usize = groups.iter().zip(&stride).map(|(&(_, m), &s)| m * s).sum();
    let mut dp = vec![0.0f64; states];
    dp[full] = 1.0;
    let mut powers = vec![0.0f64; groups.len()];
    for &x in atoms {
        for (g, &(len, _)) in groups.iter().enumerate() {
            powers[g] = x.powi(len as i32);
        }
        // descending state order lets each atom fill at most one row
        for s in 0..states {
            let v = dp[s];
            if v == 0.0 {
                continue;
            }
            for g in 0..groups.len() {
                if !(s / stride[g]).is_multiple_of(radix[g]) {
                    dp[s - stride[g]] += v * powers[g];
                }
            }
        }
    }
    let mut total = dp[0];
    if let Some(g1) = groups.iter().position(|&(len, _)| len == 1) {
        if dust > 0.0 {
            let mut term_coeff = 1.0;
            for r in 1..=groups[g1].1 {
                term_coeff *= dust / r as f64;
                total += term_coeff * dp[r * stride[g1]];
            }
        }
    }
    total
}

/// Probability that `n = |Λ|` i.i.d. draws from `f` induce `Λ`:
/// `n!/Π_{l,j}(j!)^{m_j^(l)} · Π_l m_{λ^(l)}(x^(l))` (dust-extended).
pub fn paintbox_kernel(p: &MultiplePartition, f: &FrequencyRanked) -> Result<f64> {
    if p.k() != f.k() {
        return Err(EsfError::DimensionMismatch { expected: f.k(), got: p.k() });
    }
    let mut ln_coeff = ln_factorial(p.n());
    for comp in p.components() {
        for &r in comp.rows() {
            ln_coeff -= ln_factorial(r);
        }
    }
    let product: f64 = p
        .components()
        .iter()
        .zip(&f.classes)
        .map(|(comp, c)| monomial_with_dust(comp, &c.atoms, c.remainder))
        .product();
    Ok(ln_coeff.exp() * product)
}
