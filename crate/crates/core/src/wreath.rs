//! Wreath products `G≀S(n)` over a finite group given by its multiplication
//! table, the central measure indexed by conjugacy classes, and the
//! Chinese restaurant process that samples it.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EsfError, Result};
use crate::measure::{ln_pochhammer, pochhammer_exact, rational_pow, MutationParams, Probability};
use crate::partitions::{MultiplePartition, YoungDiagram};

/// A finite group as an explicit table: `mul(a, b) = table[a][b]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    order: usize,
    table: Vec<usize>,
    identity: usize,
    inverse: Vec<usize>,
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TableJson {
    Bare(Vec<Vec<usize>>),
    Wrapped { table: Vec<Vec<usize>> },
}

impl GroupTable {
    /// Verifies closure, associativity, identity and inverses, then computes
    /// conjugacy classes. The identity's class comes first; the rest are
    /// ordered by their smallest element.
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self> {
        let order = rows.len();
        if order == 0 {
            return Err(EsfError::InvalidGroup("empty table".into()));
        }
        if rows.iter().any(|r| r.len() != order) {
            return Err(EsfError::InvalidGroup("table is not square".into()));
        }
        if rows.iter().flatten().any(|&x| x >= order) {
            return Err(EsfError::InvalidGroup("entry outside the element range".into()));
        }
        let table: Vec<usize> = rows.into_iter().flatten().collect();
        let mul = |a: usize, b: usize| table[a * order + b];
        let identity = (0..order)
            .find(|&e| (0..order).all(|x| mul(e, x) == x && mul(x, e) == x))
            .ok_or_else(|| EsfError::InvalidGroup("no identity element".into()))?;
        let mut inverse = vec![0; order];
        for (a, inv) in inverse.iter_mut().enumerate() {
            *inv = (0..order)
                .find(|&b| mul(a, b) == identity && mul(b, a) == identity)
                .ok_or_else(|| EsfError::InvalidGroup(format!("element {a} has no inverse")))?;
        }
        for a in 0..order {
            for b in 0..order {
                for c in 0..order {
                    if mul(mul(a, b), c) != mul(a, mul(b, c)) {
                        return Err(EsfError::InvalidGroup(format!("not associative at ({a}, {b}, {c})")));
                    }
                }
            }
        }
        let mut class_of = vec![usize::MAX; order];
        let mut classes = Vec::new();
        for start in std::iter::once(identity).chain(0..order) {
            if class_of[start] != usize::MAX {
                continue;
            }
            let mut class: Vec<usize> = (0..order).map(|y| mul(mul(y, start), inverse[y])).collect();
            class.sort_unstable();
            class.dedup();
            for &c in &class {
                class_of[c] = classes.len();
            }
            classes.push(class);
        }
        Ok(Self { order, table, identity, inverse, classes, class_of })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: TableJson =
            serde_json::from_str(text).map_err(|e| EsfError::InvalidGroup(format!("bad group JSON: {e}")))?;
        match parsed {
            TableJson::Bare(rows) | TableJson::Wrapped { table: rows } => Self::new(rows),
        }
    }

    pub fn trivial() -> Self {
        Self::cyclic(1)
    }

    /// `Z/m` with element `i` standing for `i mod m`.
    pub fn cyclic(m: usize) -> Self {
        let m = m.max(1);
        Self::new((0..m).map(|a| (0..m).map(|b| (a + b) % m).collect()).collect()).expect("cyclic group")
    }

    /// `S(3)` with elements the permutations of {0,1,2} in lexicographic
    /// one-line order; `a·b` is `a ∘ b`.
    pub fn symmetric3() -> Self {
        let perms: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let index = |p: [usize; 3]| perms.iter().position(|&q| q == p).unwrap();
        let rows = perms
            .iter()
            .map(|a| perms.iter().map(|b| index([a[b[0]], a[b[1]], a[b[2]]])).collect())
            .collect();
        Self::new(rows).expect("S(3)")
    }

    /// Parses `trivial`, `Z<m>` / `cyclic:<m>`, `S3`, or a path to a JSON table.
    pub fn builtin(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        match lower.as_str() {
            "trivial" | "1" => Some(Self::trivial()),
            "s3" | "symmetric3" => Some(Self::symmetric3()),
            _ => lower
                .strip_prefix("cyclic:")
                .or_else(|| lower.strip_prefix('z'))
                .and_then(|m| m.parse::<usize>().ok())
                .filter(|&m| m >= 1)
                .map(Self::cyclic),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a * self.order + b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, a: usize) -> usize {
        self.class_of[a]
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }
}

/// `((g_1..g_n), s)` with `s` in one-line notation, both 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WreathElement {
    pub g: Vec<usize>,
    pub s: Vec<usize>,
}

impl WreathElement {
    pub fn new(g: Vec<usize>, s: Vec<usize>, group: &GroupTable) -> Result<Self> {
        let x = Self { g, s };
        x.validate(group)?;
        Ok(x)
    }

    pub fn identity(n: usize, group: &GroupTable) -> Self {
        Self { g: vec![group.identity(); n], s: (0..n).collect() }
    }

    pub fn validate(&self, group: &GroupTable) -> Result<()> {
        let n = self.s.len();
        if self.g.len() != n {
            return Err(EsfError::DimensionMismatch { expected: n, got: self.g.len() });
        }
        let mut seen = vec![false; n];
        for &i in &self.s {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(EsfError::InvalidInput("s is not a permutation".into()));
            }
        }
        if let Some(&bad) = self.g.iter().find(|&&a| a >= group.order()) {
            return Err(EsfError::InvalidInput(format!("group element {bad} outside 0..{}", group.order())));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// `((g_i h_{s⁻¹(i)}), s∘t)`.
    pub fn multiply(&self, other: &Self, group: &GroupTable) -> Self {
        let n = self.n();
        let mut s_inv = vec![0; n];
        for (i, &si) in self.s.iter().enumerate() {
            s_inv[si] = i;
        }
        Self {
            g: (0..n).map(|i| group.mul(self.g[i], other.g[s_inv[i]])).collect(),
            s: other.s.iter().map(|&ti| self.s[ti]).collect(),
        }
    }

    pub fn inverse(&self, group: &GroupTable) -> Self {
        let n = self.n();
        let mut s_inv = vec![0; n];
        for (i, &si) in self.s.iter().enumerate() {
            s_inv[si] = i;
        }
        Self { g: (0..n).map(|i| group.inv(self.g[self.s[i]])).collect(), s: s_inv }
    }

    /// `y x y⁻¹`.
    pub fn conjugate_by(&self, y: &Self, group: &GroupTable) -> Self {
        y.multiply(self, group).multiply(&y.inverse(group), group)
    }

    /// Cycles of `s`, each listed from its smallest element along `i → s(i)`.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n()];
        let mut out = Vec::new();
        for start in 0..self.n() {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i);
                i = self.s[i];
            }
            out.push(cycle);
        }
        out
    }

    /// `g_{i_r} ⋯ g_{i_1}` along a cycle `i_1 → … → i_r`.
    pub fn cycle_product(&self, cycle: &[usize], group: &GroupTable) -> usize {
        cycle.iter().fold(group.identity(), |acc, &i| group.mul(self.g[i], acc))
    }

    /// `[x]_c`: number of cycles whose product lies in each conjugacy class.
    pub fn class_counts(&self, group: &GroupTable) -> Vec<usize> {
        let mut counts = vec![0; group.num_classes()];
        for c in self.cycles() {
            counts[group.class_of(self.cycle_product(&c, group))] += 1;
        }
        counts
    }
}

/// The multiple partition of a wreath element: a row of length `r` in
/// component `l` per `r`-cycle whose cycle-product lies in class `l`.
pub fn cycle_type(x: &WreathElement, group: &GroupTable) -> MultiplePartition {
    let mut rows = vec![Vec::new(); group.num_classes()];
    for c in x.cycles() {
        rows[group.class_of(x.cycle_product(&c, group))].push(c.len());
    }
    let comps = rows.into_iter().map(|r| YoungDiagram::from_unsorted(r).expect("positive rows")).collect();
    MultiplePartition::new(comps).expect("k >= 1")
}

/// Class weights `t_l > 0`, one per conjugacy class.
#[derive(Debug, Clone, PartialEq)]
pub struct WreathParams {
    t: MutationParams,
}

impl WreathParams {
    pub fn new(t: MutationParams, group: &GroupTable) -> Result<Self> {
        if t.k() != group.num_classes() {
            return Err(EsfError::DimensionMismatch { expected: group.num_classes(), got: t.k() });
        }
        Ok(Self { t })
    }

    pub fn t(&self) -> &MutationParams {
        &self.t
    }

    /// `θ_l = t_l |c_l| / |G|`.
    pub fn to_theta(&self, group: &GroupTable) -> MutationParams {
        let sizes = group.class_sizes();
        let order = group.order();
        match self.t.exact() {
            Some(t) => MutationParams::from_rationals(
                t.iter()
                    .zip(&sizes)
                    .map(|(tl, &c)| tl * BigRational::new(BigInt::from(c), BigInt::from(order)))
                    .collect(),
            ),
            None => MutationParams::from_f64(
                self.t.as_f64().iter().zip(&sizes).map(|(tl, &c)| tl * c as f64 / order as f64).collect(),
            ),
        }
        .expect("positive weights")
    }
}

pub fn pewens_pmf_exact(x: &WreathElement, group: &GroupTable, t: &[BigRational]) -> BigRational {
    let counts = x.class_counts(group);
    let order = BigInt::from(group.order());
    let theta: BigRational = t
        .iter()
        .zip(group.class_sizes())
        .map(|(tl, c)| tl * BigRational::new(BigInt::from(c), order.clone()))
        .sum();
    let num: BigRational = t.iter().zip(&counts).map(|(tl, &m)| rational_pow(tl, m)).fold(BigRational::one(), |a, b| a * b);
    num / (rational_pow(&BigRational::from_integer(order), x.n()) * pochhammer_exact(&theta, x.n()))
}

pub fn pewens_ln_pmf(x: &WreathElement, group: &GroupTable, t: &[f64]) -> f64 {
    let counts = x.class_counts(group);
    let order = group.order() as f64;
    let theta: f64 = t.iter().zip(group.class_sizes()).map(|(tl, c)| tl * c as f64 / order).sum();
    let num: f64 = t.iter().zip(&counts).map(|(tl, &m)| m as f64 * tl.ln()).sum();
    num - x.n() as f64 * order.ln() - ln_pochhammer(theta, x.n())
}

/// `Π t_l^{[x]_{c_l}} / (|G|^n (Σ t_l|c_l|/|G|)_n)`.
pub fn pewens_pmf(x: &WreathElement, group: &GroupTable, t: &WreathParams) -> Result<Probability> {
    x.validate(group)?;
    Ok(Probability {
        log_prob: pewens_ln_pmf(x, group, t.t().as_f64()),
        rational: t.t().exact().map(|t| pewens_pmf_exact(x, group, t)),
    })
}

/// Incremental state of the restaurant process.
#[derive(Debug, Clone)]
pub struct WreathCrp<'a> {
    group: &'a GroupTable,
    /// `|c_l| t_l` per class.
    new_cycle_weights: Vec<f64>,
    new_cycle_total: f64,
    x: WreathElement,
}

impl<'a> WreathCrp<'a> {
    pub fn new(group: &'a GroupTable, t: &WreathParams) -> Self {
        let new_cycle_weights: Vec<f64> =
            t.t().as_f64().iter().zip(group.class_sizes()).map(|(tl, c)| tl * c as f64).collect();
        let new_cycle_total = new_cycle_weights.iter().sum();
        Self { group, new_cycle_weights, new_cycle_total, x: WreathElement { g: Vec::new(), s: Vec::new() } }
    }

    pub fn current(&self) -> &WreathElement {
        &self.x
    }

    /// Adds element `j` (0-based). Returns the class of the opened cycle, or
    /// `None` when it joined an existing cycle.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        let j = self.x.n();
        let order = self.group.order();
        let u = rng.random::<f64>() * (self.new_cycle_total + (j * order) as f64);
        if u < self.new_cycle_total || j == 0 {
            let mut v = u.min(self.new_cycle_total);
            let mut class = self.new_cycle_weights.len() - 1;
            for (l, &w) in self.new_cycle_weights.iter().enumerate() {
                if v < w {
                    class = l;
                    break;
                }
                v -= w;
            }
            let members = &self.group.classes()[class];
            self.x.g.push(members[rng.random_range(0..members.len())]);
            self.x.s.push(j);
            Some(class)
        } else {
            // insert j right after a uniformly chosen predecessor, splitting its
            // entry so the cycle-product is unchanged
            let pred = rng.random_range(0..j);
            let h = rng.random_range(0..order);
            let next = self.x.s[pred];
            self.x.s[pred] = j;
            self.x.s.push(next);
            self.x.g[pred] = self.group.mul(self.group.inv(h), self.x.g[pred]);
            self.x.g.push(h);
            None
        }
    }
}

pub fn crp_wreath_sample<R: Rng + ?Sized>(n: usize, group: &GroupTable, t: &WreathParams, rng: &mut R) -> WreathElement {
    let mut crp = WreathCrp::new(group, t);
    for _ in 0..n {
        crp.step(rng);
    }
    crp.x
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else { return out };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// Every element of `G≀S(n)`: `|G|^n n!` of them.
pub fn enumerate_wreath(n: usize, group: &GroupTable) -> Vec<WreathElement> {
    let perms = permutations(n);
    let order = group.order();
    let mut out = Vec::with_capacity(perms.len() * order.pow(n as u32));
    for s in &perms {
        let mut g = vec![0usize; n];
        loop {
            out.push(WreathElement { g: g.clone(), s: s.clone() });
            let Some(pos) = (0..n).rev().find(|&i| g[i] + 1 < order) else { break };
            g[pos] += 1;
            g[pos + 1..].iter_mut().for_each(|x| *x = 0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::refined_esf_pmf_exact;
    use crate::rng::seeded;
    use num_traits::Zero;
    use std::collections::BTreeMap;

    fn params(t: &[i64], group: &GroupTable) -> WreathParams {
        WreathParams::new(MutationParams::from_integers(t).unwrap(), group).unwrap()
    }

    #[test]
    fn builtin_groups() {
        assert_eq!(GroupTable::trivial().num_classes(), 1);
        let z4 = GroupTable::cyclic(4);
        assert_eq!(z4.class_sizes(), vec![1, 1, 1, 1]);
        assert_eq!(z4.inv(1), 3);
        let s3 = GroupTable::symmetric3();
        assert_eq!(s3.class_sizes(), vec![1, 3, 2]);
        assert_eq!(GroupTable::builtin("Z3"), Some(GroupTable::cyclic(3)));
        assert_eq!(GroupTable::builtin("S3"), Some(s3));
        assert!(GroupTable::builtin("Z0").is_none());
    }

    #[test]
    fn rejects_non_groups() {
        assert!(GroupTable::new(vec![vec![0, 0], vec![0, 0]]).is_err());
        assert!(GroupTable::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(GroupTable::from_json("[[0,1],[1,0]]").is_ok());
        assert!(GroupTable::from_json(r#"{"table":[[0]]}"#).is_ok());
        assert!(GroupTable::from_json("[[0,1],[1,2]]").is_err());
    }

    #[test]
    fn cycle_type_examples() {
        let z2 = GroupTable::cyclic(2);
        let x = WreathElement::new(vec![0, 1], vec![1, 0], &z2).unwrap();
        assert_eq!(cycle_type(&x, &z2), "[[],[2]]".parse().unwrap());
        let one = WreathElement::new(vec![1], vec![0], &z2).unwrap();
        assert_eq!(cycle_type(&one, &z2), "[[],[1]]".parse().unwrap());
        let triv = GroupTable::trivial();
        let y = WreathElement::new(vec![0; 4], vec![1, 0, 3, 2], &triv).unwrap();
        assert_eq!(cycle_type(&y, &triv), "[[2,2]]".parse().unwrap());
        assert!(WreathElement::new(vec![0, 0], vec![0, 0], &z2).is_err());
    }

    #[test]
    fn group_laws_on_small_wreath() {
        let s3 = GroupTable::symmetric3();
        let all = enumerate_wreath(2, &s3);
        assert_eq!(all.len(), 36 * 2);
        let e = WreathElement::identity(2, &s3);
        for x in all.iter().step_by(5) {
            assert_eq!(x.multiply(&x.inverse(&s3), &s3), e);
            for y in all.iter().step_by(7) {
                for z in all.iter().step_by(11) {
                    assert_eq!(x.multiply(y, &s3).multiply(z, &s3), x.multiply(&y.multiply(z, &s3), &s3));
                }
            }
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        let z2 = GroupTable::cyclic(2);
        let t = MutationParams::from_rationals(vec![
            BigRational::new(1.into(), 3.into()),
            BigRational::new(5.into(), 2.into()),
        ])
        .unwrap();
        for n in 1..=4 {
            let total: BigRational =
                enumerate_wreath(n, &z2).iter().map(|x| pewens_pmf_exact(x, &z2, t.exact().unwrap())).sum();
            assert!(total.is_one(), "n={n}");
        }
    }

    #[test]
    fn pmf_is_central() {
        let s3 = GroupTable::symmetric3();
        let t = params(&[1, 2, 3], &s3);
        let all = enumerate_wreath(2, &s3);
        for x in all.iter().step_by(3) {
            let p = pewens_pmf_exact(x, &s3, t.t().exact().unwrap());
            let ct = cycle_type(x, &s3);
            for y in all.iter().step_by(5) {
                let c = x.conjugate_by(y, &s3);
                assert_eq!(cycle_type(&c, &s3), ct);
                assert_eq!(pewens_pmf_exact(&c, &s3, t.t().exact().unwrap()), p);
            }
        }
    }

    #[test]
    fn pushforward_is_refined_esf() {
        let s3 = GroupTable::symmetric3();
        let t = params(&[2, 1, 3], &s3);
        let theta = t.to_theta(&s3);
        for n in 1..=3 {
            let mut law: BTreeMap<MultiplePartition, BigRational> = BTreeMap::new();
            for x in enumerate_wreath(n, &s3) {
                *law.entry(cycle_type(&x, &s3)).or_insert_with(BigRational::zero) +=
                    pewens_pmf_exact(&x, &s3, t.t().exact().unwrap());
            }
            for (p, v) in law {
                assert_eq!(v, refined_esf_pmf_exact(&p, theta.exact().unwrap()).unwrap(), "{p}");
            }
        }
    }

    #[test]
    fn crp_steps_preserve_classes() {
        let s3 = GroupTable::symmetric3();
        let t = params(&[1, 1, 2], &s3);
        let mut crp = WreathCrp::new(&s3, &t);
        let mut rng = seeded(17);
        for _ in 0..60 {
            let before = crp.current().class_counts(&s3);
            let opened = crp.step(&mut rng);
            let mut after = crp.current().class_counts(&s3);
            if let Some(l) = opened {
                after[l] -= 1;
            }
            assert_eq!(before, after);
            crp.current().validate(&s3).unwrap();
        }
    }

    #[test]
    fn crp_matches_pmf_on_s3() {
        let s3 = GroupTable::symmetric3();
        let t = params(&[1, 2, 1], &s3);
        let mut rng = seeded(23);
        let reps = 200_000;
        let mut counts: BTreeMap<WreathElement, u64> = BTreeMap::new();
        for _ in 0..reps {
            *counts.entry(crp_wreath_sample(2, &s3, &t, &mut rng)).or_default() += 1;
        }
        let reference: BTreeMap<WreathElement, f64> = enumerate_wreath(2, &s3)
            .into_iter()
            .map(|x| {
                let p = pewens_pmf(&x, &s3, &t).unwrap().value();
                (x, p)
            })
            .collect();
        let chi = crate::stats::chi_square(&counts, &reference, 5.0);
        assert!(chi.p_value > 1e-4, "{chi:?}");
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(0).len(), 1);
        assert_eq!(enumerate_wreath(3, &GroupTable::cyclic(2)).len(), 48);
    }
}
