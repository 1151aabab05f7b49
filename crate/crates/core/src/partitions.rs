//! Young diagrams, multiple partitions, allele-count matrices and
//! class-labeled set partitions, plus exhaustive enumeration.
//!
//! Class indices are 0-based (`0..k`) and set-partition elements are
//! 0-based (`0..n`). Row lengths `j` are the natural 1-based sizes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EsfError, Result};

/// A weakly decreasing sequence of positive row lengths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct YoungDiagram {
    rows: Vec<usize>,
}

impl YoungDiagram {
    pub fn new(rows: Vec<usize>) -> Result<Self> {
        if let Some(pos) = rows.iter().position(|&r| r == 0) {
            return Err(EsfError::InvalidDiagram(format!("row {pos} has length 0")));
        }
        if let Some(pos) = rows.windows(2).position(|w| w[0] < w[1]) {
            return Err(EsfError::InvalidDiagram(format!(
                "rows not weakly decreasing at index {}: {} < {}",
                pos + 1,
                rows[pos],
                rows[pos + 1]
            )));
        }
        Ok(Self { rows })
    }

    /// Builds a diagram from arbitrary positive row lengths, sorting them.
    pub fn from_unsorted(mut rows: Vec<usize>) -> Result<Self> {
        rows.sort_unstable_by(|a, b| b.cmp(a));
        Self::new(rows)
    }

    /// `mult[j - 1]` rows of length `j`.
    pub fn from_multiplicities(mult: &[usize]) -> Self {
        let mut rows = Vec::with_capacity(mult.iter().sum());
        for (idx, &m) in mult.iter().enumerate().rev() {
            rows.extend(std::iter::repeat_n(idx + 1, m));
        }
        Self { rows }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Number of boxes.
    pub fn size(&self) -> usize {
        self.rows.iter().sum()
    }

    /// Number of rows, `l(λ)`.
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `m_j(λ)`: number of rows of length exactly `j`.
    pub fn multiplicity(&self, j: usize) -> usize {
        self.rows.iter().filter(|&&r| r == j).count()
    }

    /// Dense multiplicity vector: entry `j - 1` is `m_j(λ)`, length = largest row.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut mult = vec![0; self.rows.first().copied().unwrap_or(0)];
        for &r in &self.rows {
            mult[r - 1] += 1;
        }
        mult
    }

    /// Distinct row lengths paired with their multiplicities, longest first.
    pub fn row_groups(&self) -> Vec<(usize, usize)> {
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for &r in &self.rows {
            match groups.last_mut() {
                Some((len, count)) if *len == r => *count += 1,
                _ => groups.push((r, 1)),
            }
        }
        groups
    }

    /// Removes one box from a row of length `len`; the shortened row is
    /// re-sorted into place (or dropped if it becomes empty).
    pub fn remove_box(&self, len: usize) -> Option<Self> {
        // the last row of a given length stays weakly decreasing after shortening
        let pos = self.rows.iter().rposition(|&r| r == len)?;
        let mut rows = self.rows.clone();
        if len == 1 {
            rows.remove(pos);
        } else {
            rows[pos] -= 1;
        }
        Some(Self { rows })
    }
}

impl TryFrom<Vec<usize>> for YoungDiagram {
    type Error = EsfError;

    fn try_from(rows: Vec<usize>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<YoungDiagram> for Vec<usize> {
    fn from(d: YoungDiagram) -> Self {
        d.rows
    }
}

impl fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, r) in self.rows.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("]")
    }
}

/// An ordered k-tuple of Young diagrams; the allelic composition of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiplePartition {
    components: Vec<YoungDiagram>,
}

impl MultiplePartition {
    pub fn new(components: Vec<YoungDiagram>) -> Result<Self> {
        if components.is_empty() {
            return Err(EsfError::InvalidInput(
                "a multiple partition needs at least one component".into(),
            ));
        }
        Ok(Self { components })
    }

    /// `k` empty components.
    pub fn empty(k: usize) -> Self {
        assert!(k >= 1, "k must be positive");
        Self { components: vec![YoungDiagram::empty(); k] }
    }

    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let comps = rows.into_iter().map(YoungDiagram::new).collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn components(&self) -> &[YoungDiagram] {
        &self.components
    }

    pub fn component(&self, l: usize) -> &YoungDiagram {
        &self.components[l]
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.components.iter().map(YoungDiagram::size).sum()
    }

    /// Returns a copy with component `l` replaced.
    pub fn with_component(&self, l: usize, diagram: YoungDiagram) -> Self {
        let mut components = self.components.clone();
        components[l] = diagram;
        Self { components }
    }

    /// Per-class row counts `(l(λ^(1)), …, l(λ^(k)))`, i.e. the numbers of alleles per class.
    pub fn rows_per_class(&self) -> Vec<usize> {
        self.components.iter().map(YoungDiagram::num_rows).collect()
    }
}

impl fmt::Display for MultiplePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for MultiplePartition {
    type Err = EsfError;

    /// Parses the nested-list form `[[2,1],[1]]`.
    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<Vec<usize>> = serde_json::from_str(s).map_err(|e| EsfError::Parse {
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_rows(rows)
    }
}

impl Serialize for MultiplePartition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.components.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MultiplePartition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let comps = Vec::<YoungDiagram>::deserialize(deserializer)?;
        Self::new(comps).map_err(serde::de::Error::custom)
    }
}

/// The `n × k` matrix `a_j^(l)`: number of class-`l` alleles seen `j` times.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlleleCountMatrix {
    n: usize,
    k: usize,
    entries: Vec<usize>,
}

impl AlleleCountMatrix {
    /// `entries` is row-major: `entries[(j - 1) * k + l]`.
    pub fn new(n: usize, k: usize, entries: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(EsfError::InvalidInput("k must be positive".into()));
        }
        if entries.len() != n * k {
            return Err(EsfError::InvalidInput(format!(
                "expected {} entries for a {n}x{k} matrix, got {}",
                n * k,
                entries.len()
            )));
        }
        let weighted: usize = entries.chunks(k).enumerate().map(|(j, row)| (j + 1) * row.iter().sum::<usize>()).sum();
        if weighted != n {
            return Err(EsfError::InvalidInput(format!(
                "sum of j * a_j^(l) is {weighted}, expected {n}"
            )));
        }
        Ok(Self { n, k, entries })
    }

    pub fn zeros(n: usize, k: usize) -> Vec<usize> {
        vec![0; n * k]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `a_j^(l)` for row length `j ≥ 1` and class `l`.
    pub fn get(&self, j: usize, l: usize) -> usize {
        self.entries[(j - 1) * self.k + l]
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }
}

/// Reads `a_j^(l)` rows of length `j` into component `l`.
pub fn matrix_to_multipartition(m: &AlleleCountMatrix) -> MultiplePartition {
    let components = (0..m.k)
        .map(|l| {
            let mult: Vec<usize> = (1..=m.n).map(|j| m.get(j, l)).collect();
            YoungDiagram::from_multiplicities(&mult)
        })
        .collect();
    MultiplePartition { components }
}

pub fn multipartition_to_matrix(p: &MultiplePartition) -> AlleleCountMatrix {
    let (n, k) = (p.n(), p.k());
    let mut entries = vec![0; n * k];
    for (l, c) in p.components.iter().enumerate() {
        for &r in c.rows() {
            entries[(r - 1) * k + l] += 1;
        }
    }
    AlleleCountMatrix { n, k, entries }
}

/// All partitions of `n` in descending lexicographic order (`(n)` first, `(1^n)` last).
pub fn enumerate_partitions(n: usize) -> Vec<YoungDiagram> {
    fn rec(remaining: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<YoungDiagram>) {
        if remaining == 0 {
            out.push(YoungDiagram { rows: cur.clone() });
            return;
        }
        for part in (1..=remaining.min(max)).rev() {
            cur.push(part);
            rec(remaining - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// Weak compositions of `n` into `k` parts, in descending lexicographic order.
pub fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(remaining: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(remaining);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in (0..=remaining).rev() {
            cur.push(first);
            rec(remaining - first, slots - 1, cur, out);
            cur.pop();
        }
    }
    assert!(k >= 1, "k must be positive");
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Every element of the set of multiple partitions of `n` into `k` components,
/// exactly once. Order: size compositions in descending lexicographic order,
/// then rows of each component in descending lexicographic order.
pub fn enumerate_multipartitions(n: usize, k: usize) -> Vec<MultiplePartition> {
    let partitions: Vec<Vec<YoungDiagram>> = (0..=n).map(enumerate_partitions).collect();
    let mut out = Vec::new();
    for sizes in compositions(n, k) {
        let mut idx = vec![0usize; k];
        'odometer: loop {
            out.push(MultiplePartition {
                components: sizes.iter().zip(&idx).map(|(&s, &i)| partitions[s][i].clone()).collect(),
            });
            for slot in (0..k).rev() {
                idx[slot] += 1;
                if idx[slot] < partitions[sizes[slot]].len() {
                    continue 'odometer;
                }
                idx[slot] = 0;
            }
            break;
        }
    }
    out
}

/// Number of integer partitions `p(m)` for `m = 0..=n` (Euler's pentagonal recurrence).
pub fn partition_counts(n: usize) -> Vec<u128> {
    let mut p = vec![0u128; n + 1];
    p[0] = 1;
    for m in 1..=n {
        let mut total: i128 = 0;
        for i in 1.. {
            let i = i as i128;
            let g1 = (i * (3 * i - 1) / 2) as usize;
            if g1 > m {
                break;
            }
            let sign = if i % 2 == 1 { 1 } else { -1 };
            total += sign * p[m - g1] as i128;
            let g2 = (i * (3 * i + 1) / 2) as usize;
            if g2 <= m {
                total += sign * p[m - g2] as i128;
            }
        }
        p[m] = total as u128;
    }
    p
}

/// `|𝕐_n^(k)| = Σ_{n₁+…+n_k=n} Π p(n_l)`, computed by convolution.
pub fn multipartition_count(n: usize, k: usize) -> u128 {
    let p = partition_counts(n);
    let mut acc = vec![0u128; n + 1];
    acc[0] = 1;
    for _ in 0..k {
        let mut next = vec![0u128; n + 1];
        for (i, &a) in acc.iter().enumerate() {
            for (j, &pj) in p.iter().enumerate().take(n + 1 - i) {
                next[i + j] += a * pj;
            }
        }
        acc = next;
    }
    acc[n]
}

/// Combines all rows of all components into one diagram.
pub fn union(p: &MultiplePartition) -> YoungDiagram {
    let mut rows: Vec<usize> = p.components.iter().flat_map(|c| c.rows().iter().copied()).collect();
    rows.sort_unstable_by(|a, b| b.cmp(a));
    YoungDiagram { rows }
}

/// One block of a labeled set partition: a class label and a set of elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledBlock {
    pub class: usize,
    pub elements: Vec<usize>,
}

/// A set partition of `{0, …, n-1}` whose blocks carry class labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledSetPartition {
    n: usize,
    blocks: Vec<LabeledBlock>,
}

impl LabeledSetPartition {
    /// Validates disjointness and coverage, then stores blocks sorted by
    /// their smallest element (elements within a block sorted ascending).
    pub fn new(n: usize, blocks: Vec<LabeledBlock>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut blocks = blocks;
        for b in &mut blocks {
            if b.elements.is_empty() {
                return Err(EsfError::InvalidInput("empty block".into()));
            }
            b.elements.sort_unstable();
            for &e in &b.elements {
                if e >= n {
                    return Err(EsfError::InvalidInput(format!("element {e} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[e], true) {
                    return Err(EsfError::InvalidInput(format!("element {e} appears in two blocks")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(EsfError::InvalidInput(format!("element {missing} is not covered")));
        }
        blocks.sort_by_key(|b| b.elements[0]);
        Ok(Self { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[LabeledBlock] {
        &self.blocks
    }

    /// Relabels elements by `sigma` (element `i` becomes `sigma[i]`).
    pub fn relabel(&self, sigma: &[usize]) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| LabeledBlock { class: b.class, elements: b.elements.iter().map(|&e| sigma[e]).collect() })
            .collect();
        Self::new(self.n, blocks)
    }
}

/// `m_j^(l)` = number of blocks with label `l` and cardinality `j`.
pub fn set_partition_to_multipartition(s: &LabeledSetPartition, k: usize) -> Result<MultiplePartition> {
    if k == 0 {
        return Err(EsfError::InvalidInput("k must be positive".into()));
    }
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for b in &s.blocks {
        if b.class >= k {
            return Err(EsfError::LabelOutOfRange { label: b.class, k });
        }
        rows[b.class].push(b.elements.len());
    }
    let components = rows.into_iter().map(YoungDiagram::from_unsorted).collect::<Result<Vec<_>>>()?;
    MultiplePartition::new(components)
}

/// All set partitions of `{0..n}` as restricted growth strings.
pub fn enumerate_set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Every labeled set partition of `{0..n}` with labels in `0..k`.
pub fn enumerate_labeled_set_partitions(n: usize, k: usize) -> Vec<LabeledSetPartition> {
    let mut out = Vec::new();
    for blocks in enumerate_set_partitions(n) {
        let b = blocks.len();
        let total = k.pow(b as u32);
        for code in 0..total {
            let mut c = code;
            let labeled = blocks
                .iter()
                .map(|elems| {
                    let class = c % k;
                    c /= k;
                    LabeledBlock { class, elements: elems.clone() }
                })
                .collect();
            out.push(LabeledSetPartition { n, blocks: labeled });
        }
    }
    out
}

/// Histogram keyed by multiple partition; shared by samplers and tests.
pub fn tally<I: IntoIterator<Item = MultiplePartition>>(items: I) -> BTreeMap<MultiplePartition, u64> {
    let mut counts = BTreeMap::new();
    for p in items {
        *counts.entry(p).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(s: &str) -> MultiplePartition {
        s.parse().unwrap()
    }

    #[test]
    fn diagram_validation() {
        assert!(YoungDiagram::new(vec![2, 1, 1]).is_ok());
        assert!(YoungDiagram::new(vec![]).is_ok());
        assert!(YoungDiagram::new(vec![1, 2]).is_err());
        assert!(YoungDiagram::new(vec![2, 0]).is_err());
        let d = YoungDiagram::new(vec![3, 1, 1]).unwrap();
        assert_eq!(d.size(), 5);
        assert_eq!(d.multiplicities(), vec![2, 0, 1]);
        assert_eq!(YoungDiagram::from_multiplicities(&[2, 0, 1]), d);
    }

    #[test]
    fn remove_box_keeps_order() {
        let d = YoungDiagram::new(vec![2, 2, 1]).unwrap();
        assert_eq!(d.remove_box(2).unwrap().rows(), &[2, 1, 1]);
        assert_eq!(d.remove_box(1).unwrap().rows(), &[2, 2]);
        assert!(d.remove_box(3).is_none());
    }

    #[test]
    fn matrix_examples() {
        let m = AlleleCountMatrix::new(3, 2, vec![1, 0, 0, 1, 0, 0]).unwrap();
        assert_eq!(matrix_to_multipartition(&m), mp("[[1],[2]]"));
        let empty = AlleleCountMatrix::new(0, 3, vec![]).unwrap();
        assert_eq!(matrix_to_multipartition(&empty), MultiplePartition::empty(3));
        let m = AlleleCountMatrix::new(3, 1, vec![3, 0, 0]).unwrap();
        assert_eq!(matrix_to_multipartition(&m), mp("[[1,1,1]]"));
        assert!(AlleleCountMatrix::new(3, 1, vec![1, 0, 0]).is_err());
        assert!(AlleleCountMatrix::new(3, 1, vec![1, 0]).is_err());
    }

    #[test]
    fn to_matrix_examples() {
        let m = multipartition_to_matrix(&mp("[[2,1],[]]"));
        assert_eq!((m.get(1, 0), m.get(2, 0), m.get(1, 1), m.get(2, 1), m.get(3, 0)), (1, 1, 0, 0, 0));
        let m = multipartition_to_matrix(&mp("[[1],[1]]"));
        assert_eq!((m.get(1, 0), m.get(1, 1), m.get(2, 0)), (1, 1, 0));
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_multipartitions(1, 2), vec![mp("[[1],[]]"), mp("[[],[1]]")]);
        assert_eq!(enumerate_multipartitions(2, 1), vec![mp("[[2]]"), mp("[[1,1]]")]);
        assert_eq!(enumerate_multipartitions(3, 2).len(), 10);
        assert_eq!(enumerate_multipartitions(0, 2), vec![MultiplePartition::empty(2)]);
    }

    #[test]
    fn partition_count_table() {
        assert_eq!(partition_counts(10), vec![1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42]);
        assert_eq!(multipartition_count(3, 2), 10);
    }

    #[test]
    fn union_examples() {
        assert_eq!(union(&mp("[[2,1],[1]]")).rows(), &[2, 1, 1]);
        assert_eq!(union(&mp("[[3,1],[],[]]")).rows(), &[3, 1]);
    }

    #[test]
    fn set_partition_examples() {
        let s = LabeledSetPartition::new(
            3,
            vec![
                LabeledBlock { class: 0, elements: vec![0, 1] },
                LabeledBlock { class: 1, elements: vec![2] },
            ],
        )
        .unwrap();
        assert_eq!(set_partition_to_multipartition(&s, 2).unwrap(), mp("[[2],[1]]"));
        let whole = LabeledSetPartition::new(4, vec![LabeledBlock { class: 2, elements: vec![0, 1, 2, 3] }]).unwrap();
        assert_eq!(set_partition_to_multipartition(&whole, 3).unwrap(), mp("[[],[],[4]]"));
        assert_eq!(
            set_partition_to_multipartition(&whole, 2),
            Err(EsfError::LabelOutOfRange { label: 2, k: 2 })
        );
    }

    #[test]
    fn set_partition_validation() {
        let dup = vec![
            LabeledBlock { class: 0, elements: vec![0, 1] },
            LabeledBlock { class: 0, elements: vec![1] },
        ];
        assert!(LabeledSetPartition::new(2, dup).is_err());
        let gap = vec![LabeledBlock { class: 0, elements: vec![0] }];
        assert!(LabeledSetPartition::new(2, gap).is_err());
        assert!(LabeledSetPartition::new(1, vec![LabeledBlock { class: 0, elements: vec![] }]).is_err());
    }

    #[test]
    fn bell_numbers() {
        let bell: Vec<usize> = (0..=6).map(|n| enumerate_set_partitions(n).len()).collect();
        assert_eq!(bell, vec![1, 1, 2, 5, 15, 52, 203]);
    }

    #[test]
    fn parse_and_display() {
        let p = mp("[[2,1], [1]]");
        assert_eq!(p.to_string(), "[[2,1],[1]]");
        assert!("[[1,2]]".parse::<MultiplePartition>().is_err());
        match "[[1],".parse::<MultiplePartition>() {
            Err(EsfError::Parse { column, .. }) => assert!(column > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!("[]".parse::<MultiplePartition>().is_err());
    }
}
