//! The refined Ewens measure on multiple partitions.
//!
//! Every quantity has two backends: exact rationals (available when the
//! mutation parameters were given as rationals) and log-space `f64`. The
//! exact backend is the oracle; the float backend scales to large `n`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{EsfError, Result};
use crate::partitions::{
    enumerate_multipartitions, enumerate_partitions, union, LabeledSetPartition, MultiplePartition, YoungDiagram,
};

/// Class-wise scaled mutation rates `θ₁, …, θ_k`, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationParams {
    floats: Vec<f64>,
    exact: Option<Vec<BigRational>>,
}

impl MutationParams {
    pub fn from_rationals(thetas: Vec<BigRational>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(EsfError::InvalidParameter("at least one mutation parameter is required".into()));
        }
        if let Some(bad) = thetas.iter().find(|t| !t.is_positive()) {
            return Err(EsfError::InvalidParameter(format!("mutation parameter {bad} is not positive")));
        }
        let floats = thetas.iter().map(ratio_to_f64).collect();
        Ok(Self { floats, exact: Some(thetas) })
    }

    pub fn from_integers(thetas: &[i64]) -> Result<Self> {
        Self::from_rationals(thetas.iter().map(|&t| BigRational::from_integer(t.into())).collect())
    }

    /// Float-only parameters; exact backends are unavailable.
    pub fn from_f64(thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(EsfError::InvalidParameter("at least one mutation parameter is required".into()));
        }
        if let Some(bad) = thetas.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(EsfError::InvalidParameter(format!("mutation parameter {bad} is not positive and finite")));
        }
        Ok(Self { floats: thetas, exact: None })
    }

    pub fn k(&self) -> usize {
        self.floats.len()
    }

    pub fn as_f64(&self) -> &[f64] {
        &self.floats
    }

    pub fn exact(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub fn require_exact(&self, what: &'static str) -> Result<&[BigRational]> {
        self.exact().ok_or(EsfError::ExactRequired(what))
    }

    /// `w = θ₁ + … + θ_k`.
    pub fn total(&self) -> f64 {
        self.floats.iter().sum()
    }

    pub fn total_exact(&self) -> Option<BigRational> {
        self.exact.as_ref().map(|t| t.iter().sum())
    }

    /// The single-class parameter vector `(w)`.
    pub fn merged(&self) -> Self {
        Self { floats: vec![self.total()], exact: self.total_exact().map(|w| vec![w]) }
    }

    /// The first `k` classes (used for the `θ = (1,2,3)` prefix sweeps).
    pub fn prefix(&self, k: usize) -> Self {
        Self { floats: self.floats[..k].to_vec(), exact: self.exact.as_ref().map(|t| t[..k].to_vec()) }
    }

    pub(crate) fn check_k(&self, k: usize) -> Result<()> {
        if k != self.k() {
            return Err(EsfError::DimensionMismatch { expected: self.k(), got: k });
        }
        Ok(())
    }
}

impl FromStr for MutationParams {
    type Err = EsfError;

    /// Comma-separated list. Integers and `p/q` tokens are exact; any decimal
    /// token (containing `.`, `e` or `E`) makes the whole vector float-only.
    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split(',').map(str::trim).collect();
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(EsfError::InvalidParameter(format!("empty entry in {s:?}")));
        }
        if tokens.iter().any(|t| t.contains(['.', 'e', 'E'])) {
            let floats = tokens
                .iter()
                .map(|t| t.parse::<f64>().map_err(|e| EsfError::InvalidParameter(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            return Self::from_f64(floats);
        }
        let exact = tokens.iter().map(|t| parse_rational(t)).collect::<Result<Vec<_>>>()?;
        Self::from_rationals(exact)
    }
}

impl fmt::Display for MutationParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = match &self.exact {
            Some(ex) => ex.iter().map(ToString::to_string).collect(),
            None => self.floats.iter().map(ToString::to_string).collect(),
        };
        f.write_str(&parts.join(","))
    }
}

/// Parses `p/q` or an integer.
pub fn parse_rational(token: &str) -> Result<BigRational> {
    let bad = |e: &dyn fmt::Display| EsfError::InvalidParameter(format!("{token:?}: {e}"));
    match token.split_once('/') {
        Some((num, den)) => {
            let num: BigInt = num.trim().parse().map_err(|e| bad(&e))?;
            let den: BigInt = den.trim().parse().map_err(|e| bad(&e))?;
            if den.is_zero() {
                return Err(bad(&"zero denominator"));
            }
            Ok(BigRational::new(num, den))
        }
        None => Ok(BigRational::from_integer(token.parse().map_err(|e| bad(&e))?)),
    }
}

/// Converts a rational to the nearest representable `f64` without
/// overflowing on large numerators or denominators.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    ratio_ln(r).exp() * if r.is_negative() { -1.0 } else { 1.0 }
}

/// `ln |r|` computed from the bit lengths, accurate for huge operands.
pub fn ratio_ln(r: &BigRational) -> f64 {
    fn big_ln(x: &BigInt) -> f64 {
        let bits = x.bits();
        if bits < 1000 {
            return x.abs().to_f64().unwrap_or(f64::INFINITY).ln();
        }
        let shift = bits - 64;
        let top = (x.abs() >> shift).to_f64().unwrap_or(f64::INFINITY);
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
    big_ln(r.numer()) - big_ln(r.denom())
}

/// A probability carried both in log space and, when available, exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probability {
    pub log_prob: f64,
    #[serde(serialize_with = "serialize_opt_ratio")]
    pub rational: Option<BigRational>,
}

impl Probability {
    pub fn value(&self) -> f64 {
        match &self.rational {
            Some(r) => ratio_to_f64(r),
            None => self.log_prob.exp(),
        }
    }
}

fn serialize_opt_ratio<S: serde::Serializer>(r: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&format_ratio(r)),
        None => s.serialize_none(),
    }
}

/// `num/den`, always with an explicit denominator.
pub fn format_ratio(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * i)
}

pub fn ln_factorial(n: usize) -> f64 {
    if n < 64 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Rising factorial `x(x+1)…(x+n-1)`, `1` for `n = 0`.
pub fn pochhammer_exact(x: &BigRational, n: usize) -> BigRational {
    let mut acc = BigRational::one();
    let mut term = x.clone();
    for _ in 0..n {
        acc *= &term;
        term += BigRational::one();
    }
    acc
}

pub fn pochhammer_f64(x: f64, n: usize) -> f64 {
    (0..n).map(|i| x + i as f64).product()
}

/// `ln (x)_n`; direct summation for moderate `n`, log-gamma beyond.
pub fn ln_pochhammer(x: f64, n: usize) -> f64 {
    if n <= 512 {
        (0..n).map(|i| (x + i as f64).ln()).sum()
    } else {
        ln_gamma(x + n as f64) - ln_gamma(x)
    }
}

pub(crate) fn rational_pow(x: &BigRational, e: usize) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc *= x;
    }
    acc
}

/// `n!/(w)_n · Π_{l,j} (θ_l/j)^{a_j^(l)} / a_j^(l)!` in exact arithmetic.
pub fn refined_esf_pmf_exact(p: &MultiplePartition, thetas: &[BigRational]) -> Result<BigRational> {
    if p.k() != thetas.len() {
        return Err(EsfError::DimensionMismatch { expected: thetas.len(), got: p.k() });
    }
    let n = p.n();
    let w: BigRational = thetas.iter().sum();
    let mut value = BigRational::from_integer(factorial(n)) / pochhammer_exact(&w, n);
    for (comp, theta) in p.components().iter().zip(thetas) {
        for (j, m) in comp.row_groups() {
            let ratio = theta / BigRational::from_integer(BigInt::from(j));
            value *= rational_pow(&ratio, m);
            value /= BigRational::from_integer(factorial(m));
        }
    }
    Ok(value)
}

pub fn refined_esf_ln_pmf(p: &MultiplePartition, thetas: &[f64]) -> Result<f64> {
    if p.k() != thetas.len() {
        return Err(EsfError::DimensionMismatch { expected: thetas.len(), got: p.k() });
    }
    let n = p.n();
    let w: f64 = thetas.iter().sum();
    let mut ln = ln_factorial(n) - ln_pochhammer(w, n);
    for (comp, &theta) in p.components().iter().zip(thetas) {
        for (j, m) in comp.row_groups() {
            ln += m as f64 * (theta.ln() - (j as f64).ln()) - ln_factorial(m);
        }
    }
    Ok(ln)
}

/// The refined Ewens sampling formula at `p`.
pub fn refined_esf_pmf(p: &MultiplePartition, theta: &MutationParams) -> Result<Probability> {
    theta.check_k(p.k())?;
    let log_prob = refined_esf_ln_pmf(p, theta.as_f64())?;
    let rational = theta.exact().map(|t| refined_esf_pmf_exact(p, t)).transpose()?;
    Ok(Probability { log_prob, rational })
}

/// Classical Ewens measure `n!/Π j^{m_j} m_j! · θ^{l(λ)}/(θ)_n`.
pub fn classical_ewens_pmf_exact(lambda: &YoungDiagram, theta: &BigRational) -> BigRational {
    let n = lambda.size();
    let mut value = BigRational::from_integer(factorial(n)) * rational_pow(theta, lambda.num_rows())
        / pochhammer_exact(theta, n);
    for (j, m) in lambda.row_groups() {
        let denom = BigInt::from(j).pow(m as u32) * factorial(m);
        value /= BigRational::from_integer(denom);
    }
    value
}

pub fn classical_ewens_ln_pmf(lambda: &YoungDiagram, theta: f64) -> f64 {
    let n = lambda.size();
    let mut ln = ln_factorial(n) + lambda.num_rows() as f64 * theta.ln() - ln_pochhammer(theta, n);
    for (j, m) in lambda.row_groups() {
        ln -= m as f64 * (j as f64).ln() + ln_factorial(m);
    }
    ln
}

/// Classical Ewens pmf; `theta` must have exactly one class.
pub fn classical_ewens_pmf(lambda: &YoungDiagram, theta: &MutationParams) -> Result<Probability> {
    theta.check_k(1)?;
    Ok(Probability {
        log_prob: classical_ewens_ln_pmf(lambda, theta.as_f64()[0]),
        rational: theta.exact().map(|t| classical_ewens_pmf_exact(lambda, &t[0])),
    })
}

/// Same value as [`refined_esf_pmf_exact`], computed through the product of
/// per-class classical Ewens measures:
/// `Π (θ_l)_{|λ^(l)|}/(w)_n · n!/Π|λ^(l)|! · Π M^Ewens_{θ_l}(λ^(l))`.
pub fn refined_esf_pmf_factorized_exact(p: &MultiplePartition, thetas: &[BigRational]) -> Result<BigRational> {
    if p.k() != thetas.len() {
        return Err(EsfError::DimensionMismatch { expected: thetas.len(), got: p.k() });
    }
    let n = p.n();
    let w: BigRational = thetas.iter().sum();
    let mut value = BigRational::from_integer(factorial(n)) / pochhammer_exact(&w, n);
    for (comp, theta) in p.components().iter().zip(thetas) {
        let size = comp.size();
        value *= pochhammer_exact(theta, size);
        value /= BigRational::from_integer(factorial(size));
        value *= classical_ewens_pmf_exact(comp, theta);
    }
    Ok(value)
}

pub fn refined_esf_ln_pmf_factorized(p: &MultiplePartition, thetas: &[f64]) -> Result<f64> {
    if p.k() != thetas.len() {
        return Err(EsfError::DimensionMismatch { expected: thetas.len(), got: p.k() });
    }
    let n = p.n();
    let w: f64 = thetas.iter().sum();
    let mut ln = ln_factorial(n) - ln_pochhammer(w, n);
    for (comp, &theta) in p.components().iter().zip(thetas) {
        let size = comp.size();
        ln += ln_pochhammer(theta, size) - ln_factorial(size) + classical_ewens_ln_pmf(comp, theta);
    }
    Ok(ln)
}

pub fn refined_esf_pmf_factorized(p: &MultiplePartition, theta: &MutationParams) -> Result<Probability> {
    theta.check_k(p.k())?;
    Ok(Probability {
        log_prob: refined_esf_ln_pmf_factorized(p, theta.as_f64())?,
        rational: theta.exact().map(|t| refined_esf_pmf_factorized_exact(p, t)).transpose()?,
    })
}

/// Law of the composition after deleting one uniformly chosen sample member:
/// removing a box from a row of length `L` in component `l` has probability
/// `m_L(λ^(l)) · L / n`. Children are aggregated and returned in first-seen order.
pub fn downward_transition(p: &MultiplePartition) -> Result<Vec<(MultiplePartition, BigRational)>> {
    let n = p.n();
    if n == 0 {
        return Err(EsfError::NoTransition);
    }
    let mut out: Vec<(MultiplePartition, BigRational)> = Vec::new();
    for (l, comp) in p.components().iter().enumerate() {
        for (len, mult) in comp.row_groups() {
            let child = p.with_component(l, comp.remove_box(len).expect("row length present"));
            let prob = BigRational::new(BigInt::from(mult * len), BigInt::from(n));
            match out.iter_mut().find(|(c, _)| *c == child) {
                Some((_, acc)) => *acc += prob,
                None => out.push((child, prob)),
            }
        }
    }
    Ok(out)
}

/// Outcome of an exhaustive exact check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub checked: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), checked: 0, failures: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({} checked", self.name, self.checked)?;
        if !self.passed() {
            write!(f, ", {} failed; first: {}", self.failures.len(), self.failures[0])?;
        }
        f.write_str(")")
    }
}

/// `Σ_{Λ ∈ 𝕐_n^(k)} M(Λ) == 1` exactly.
pub fn normalization_check(n: usize, theta: &MutationParams) -> Result<CheckReport> {
    let thetas = theta.require_exact("normalization check")?;
    let mut total = BigRational::zero();
    let mut count = 0;
    for p in enumerate_multipartitions(n, theta.k()) {
        total += refined_esf_pmf_exact(&p, thetas)?;
        count += 1;
    }
    let mut report = CheckReport::new(format!("normalization n={n} k={}", theta.k()));
    report.record(total.is_one(), || format!("sum over {count} multiple partitions is {total}"));
    Ok(report)
}

/// Direct and factorized evaluators agree exactly on every element of 𝕐_n^(k).
pub fn factorization_check(n: usize, theta: &MutationParams) -> Result<CheckReport> {
    let thetas = theta.require_exact("factorization check")?;
    let mut report = CheckReport::new(format!("factorization n={n} k={}", theta.k()));
    for p in enumerate_multipartitions(n, theta.k()) {
        let direct = refined_esf_pmf_exact(&p, thetas)?;
        let factored = refined_esf_pmf_factorized_exact(&p, thetas)?;
        report.record(direct == factored, || format!("{p}: direct {direct} vs factorized {factored}"));
    }
    Ok(report)
}

/// For `k = 1` the refined formula coincides with the classical one.
pub fn classical_reduction_check(n: usize, theta: &BigRational) -> CheckReport {
    let thetas = [theta.clone()];
    let mut report = CheckReport::new(format!("k=1 reduction n={n}"));
    for lambda in enumerate_partitions(n) {
        let p = MultiplePartition::new(vec![lambda.clone()]).expect("one component");
        let refined = refined_esf_pmf_exact(&p, &thetas).expect("k matches");
        let classical = classical_ewens_pmf_exact(&lambda, theta);
        report.record(refined == classical, || format!("{lambda}: refined {refined} vs classical {classical}"));
    }
    report
}

/// Consistency under deletion of one sample member:
/// `M_{n-1}(μ) == Σ_Λ T(Λ → μ) M_n(Λ)` for every `μ ∈ 𝕐_{n-1}^(k)`.
pub fn check_consistency(n: usize, theta: &MutationParams) -> Result<CheckReport> {
    let thetas = theta.require_exact("consistency check")?;
    let mut report = CheckReport::new(format!("consistency n={n} k={}", theta.k()));
    if n == 0 {
        return Ok(report);
    }
    let mut pushed: HashMap<MultiplePartition, BigRational> = HashMap::new();
    for p in enumerate_multipartitions(n, theta.k()) {
        let mass = refined_esf_pmf_exact(&p, thetas)?;
        for (child, t) in downward_transition(&p)? {
            *pushed.entry(child).or_insert_with(BigRational::zero) += &mass * t;
        }
    }
    for mu in enumerate_multipartitions(n - 1, theta.k()) {
        let expected = refined_esf_pmf_exact(&mu, thetas)?;
        let got = pushed.remove(&mu).unwrap_or_else(BigRational::zero);
        report.record(expected == got, || format!("{mu}: M_(n-1) = {expected}, pushed forward = {got}"));
    }
    report.record(pushed.is_empty(), || format!("{} children outside 𝕐_(n-1)", pushed.len()));
    Ok(report)
}

/// Merging all classes yields the classical Ewens measure at parameter `w`.
pub fn union_marginal_check(n: usize, theta: &MutationParams) -> Result<CheckReport> {
    let thetas = theta.require_exact("union marginal check")?;
    let w: BigRational = thetas.iter().sum();
    let mut marginal: HashMap<YoungDiagram, BigRational> = HashMap::new();
    for p in enumerate_multipartitions(n, theta.k()) {
        *marginal.entry(union(&p)).or_insert_with(BigRational::zero) += refined_esf_pmf_exact(&p, thetas)?;
    }
    let mut report = CheckReport::new(format!("union marginal n={n} k={}", theta.k()));
    for lambda in enumerate_partitions(n) {
        let expected = classical_ewens_pmf_exact(&lambda, &w);
        let got = marginal.get(&lambda).cloned().unwrap_or_else(BigRational::zero);
        report.record(expected == got, || format!("{lambda}: classical {expected} vs marginal {got}"));
    }
    Ok(report)
}

/// `n! Σ_{m₁+…+m_k=n} Π (θ_l)_{m_l}/m_l! == (w)_n`.
pub fn vandermonde_check(n: usize, theta: &MutationParams) -> Result<bool> {
    let thetas = theta.require_exact("Vandermonde check")?;
    let w: BigRational = thetas.iter().sum();
    // convolution over classes of the sequences (θ_l)_m / m!
    let mut acc = vec![BigRational::zero(); n + 1];
    acc[0] = BigRational::one();
    for t in thetas {
        let series: Vec<BigRational> = (0..=n)
            .map(|m| pochhammer_exact(t, m) / BigRational::from_integer(factorial(m)))
            .collect();
        let mut next = vec![BigRational::zero(); n + 1];
        for (i, a) in acc.iter().enumerate() {
            for (j, s) in series.iter().enumerate().take(n + 1 - i) {
                next[i + j] += a * s;
            }
        }
        acc = next;
    }
    let lhs = BigRational::from_integer(factorial(n)) * &acc[n];
    Ok(lhs == pochhammer_exact(&w, n))
}

/// Law of the labeled set partition generated by the urn:
/// `Π_l θ_l^{#blocks of class l} / (w)_n · Π_B (|B| - 1)!`.
pub fn labeled_set_partition_pmf_exact(s: &LabeledSetPartition, thetas: &[BigRational]) -> Result<BigRational> {
    let w: BigRational = thetas.iter().sum();
    let mut value = BigRational::one() / pochhammer_exact(&w, s.n());
    for b in s.blocks() {
        let theta = thetas.get(b.class).ok_or(EsfError::LabelOutOfRange { label: b.class, k: thetas.len() })?;
        value *= theta * BigRational::from_integer(factorial(b.elements.len() - 1));
    }
    Ok(value)
}

pub fn labeled_set_partition_ln_pmf(s: &LabeledSetPartition, thetas: &[f64]) -> Result<f64> {
    let w: f64 = thetas.iter().sum();
    let mut ln = -ln_pochhammer(w, s.n());
    for b in s.blocks() {
        let theta = thetas.get(b.class).ok_or(EsfError::LabelOutOfRange { label: b.class, k: thetas.len() })?;
        ln += theta.ln() + ln_factorial(b.elements.len() - 1);
    }
    Ok(ln)
}

pub fn labeled_set_partition_pmf(s: &LabeledSetPartition, theta: &MutationParams) -> Result<Probability> {
    Ok(Probability {
        log_prob: labeled_set_partition_ln_pmf(s, theta.as_f64())?,
        rational: theta.exact().map(|t| labeled_set_partition_pmf_exact(s, t)).transpose()?,
    })
}

/// Number of labeled set partitions of `{1..n}` mapping onto `p`:
/// `n! / Π_{l,j} m_j^(l)! (j!)^{m_j^(l)}`.
pub fn labeled_set_partition_count(p: &MultiplePartition) -> BigInt {
    let mut denom = BigInt::one();
    for comp in p.components() {
        for (j, m) in comp.row_groups() {
            denom *= factorial(m) * factorial(j).pow(m as u32);
        }
    }
    factorial(p.n()) / denom
}
