//! Side words, the induced χ-order, bi-non-crossing partitions and their
//! Möbius function.
//!
//! Indices exposed through the public API are 1-based. Internally a
//! partition is stored as a restricted growth string (block label per
//! element, labels numbered in order of first appearance), which makes the
//! canonical form free: blocks are automatically sorted by minimum.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest n accepted by [`enumerate_bnc`] unless a caller raises it.
pub const DEFAULT_ENUMERATION_BOUND: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BncError {
    #[error("side word must be nonempty")]
    EmptyWord,
    #[error("invalid side label {0:?}; expected 'l' or 'r'")]
    BadLabel(char),
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("blocks do not partition 1..={n}: {reason}")]
    NotAPartition { n: usize, reason: String },
    #[error("partition over {got} points does not match side word of length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("partition is not bi-non-crossing for side word {0}")]
    NotBiNonCrossing(String),
    #[error("partitions live over different side words ({0} vs {1})")]
    ChiMismatch(String, String),
    #[error("n = {n} exceeds the enumeration bound {bound}")]
    TooLarge { n: usize, bound: usize },
    #[error("internal consistency: {0}")]
    Internal(String),
}

/// Which face an operator sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "l")]
    Left,
    #[serde(rename = "r")]
    Right,
}

impl Side {
    pub fn as_char(self) -> char {
        match self {
            Side::Left => 'l',
            Side::Right => 'r',
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// A word χ in {ℓ, r}ⁿ.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChiWord {
    sides: Vec<Side>,
}

impl ChiWord {
    pub fn new(sides: Vec<Side>) -> Result<Self, BncError> {
        if sides.is_empty() {
            return Err(BncError::EmptyWord);
        }
        Ok(ChiWord { sides })
    }

    pub fn all_left(n: usize) -> Result<Self, BncError> {
        Self::new(vec![Side::Left; n])
    }

    pub fn len(&self) -> usize {
        self.sides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    /// Side of the 1-based index `k`.
    pub fn side(&self, k: usize) -> Side {
        self.sides[k - 1]
    }

    /// The permutation s_χ as a vector: entry `k-1` holds s_χ(k).
    /// Left indices come first in increasing order, then right indices in
    /// decreasing order.
    pub fn s_chi(&self) -> Vec<usize> {
        let n = self.len();
        let mut out = Vec::with_capacity(n);
        out.extend((1..=n).filter(|&k| self.sides[k - 1] == Side::Left));
        out.extend((1..=n).rev().filter(|&k| self.sides[k - 1] == Side::Right));
        out
    }

    /// Inverse of s_χ: entry `i-1` holds the χ-position of index `i`.
    pub fn s_chi_inv(&self) -> Vec<usize> {
        let s = self.s_chi();
        let mut inv = vec![0; s.len()];
        for (pos, &i) in s.iter().enumerate() {
            inv[i - 1] = pos + 1;
        }
        inv
    }

    /// True iff `i` precedes `j` in the χ-order.
    pub fn chi_less(&self, i: usize, j: usize) -> Result<bool, BncError> {
        let n = self.len();
        for idx in [i, j] {
            if idx == 0 || idx > n {
                return Err(BncError::IndexOutOfRange { index: idx, n });
            }
        }
        let inv = self.s_chi_inv();
        Ok(inv[i - 1] < inv[j - 1])
    }

    /// Restriction of χ to the sorted 1-based index set `subset`.
    pub fn restrict(&self, subset: &[usize]) -> Result<ChiWord, BncError> {
        ChiWord::new(subset.iter().map(|&k| self.sides[k - 1]).collect())
    }
}

impl fmt::Display for ChiWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sides {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for ChiWord {
    type Err = BncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sides = s
            .trim()
            .chars()
            .map(|c| match c {
                'l' | 'L' => Ok(Side::Left),
                'r' | 'R' => Ok(Side::Right),
                other => Err(BncError::BadLabel(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        ChiWord::new(sides)
    }
}

/// A set partition of {1..n} in restricted-growth form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<u8>,
}

impl Partition {
    /// Builds from block labels of arbitrary values; relabels canonically.
    pub fn from_labels<T: Copy + Eq + std::hash::Hash>(raw: &[T]) -> Self {
        let mut map: HashMap<T, u8> = HashMap::new();
        let labels = raw
            .iter()
            .map(|x| {
                let next = map.len() as u8;
                *map.entry(*x).or_insert(next)
            })
            .collect();
        Partition { labels }
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self, BncError> {
        let mut raw = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(BncError::NotAPartition {
                    n,
                    reason: "empty block".into(),
                });
            }
            for &i in block {
                if i == 0 || i > n {
                    return Err(BncError::NotAPartition {
                        n,
                        reason: format!("index {i} out of range"),
                    });
                }
                if raw[i - 1] != usize::MAX {
                    return Err(BncError::NotAPartition {
                        n,
                        reason: format!("index {i} appears twice"),
                    });
                }
                raw[i - 1] = b;
            }
        }
        if let Some(missing) = raw.iter().position(|&x| x == usize::MAX) {
            return Err(BncError::NotAPartition {
                n,
                reason: format!("index {} not covered", missing + 1),
            });
        }
        Ok(Self::from_labels(&raw))
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n as u8).collect(),
        }
    }

    pub fn one_block(n: usize) -> Self {
        Partition { labels: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.labels
            .iter()
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// Blocks as sorted 1-based index lists, sorted by minimum.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i + 1);
        }
        out
    }

    /// Refinement order: every block of `self` lies inside a block of `other`.
    pub fn leq(&self, other: &Partition) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut image = vec![u8::MAX; self.num_blocks()];
        for (a, b) in self.labels.iter().zip(&other.labels) {
            let slot = &mut image[*a as usize];
            if *slot == u8::MAX {
                *slot = *b;
            } else if *slot != *b {
                return false;
            }
        }
        true
    }

    /// Join in the lattice of all set partitions.
    pub fn join_all(&self, other: &Partition) -> Partition {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for labels in [&self.labels, &other.labels] {
            let mut first: HashMap<u8, usize> = HashMap::new();
            for (i, &l) in labels.iter().enumerate() {
                if let Some(&j) = first.get(&l) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                } else {
                    first.insert(l, i);
                }
            }
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        Partition::from_labels(&roots)
    }

    /// Common refinement.
    pub fn meet(&self, other: &Partition) -> Partition {
        let pairs: Vec<(u8, u8)> = self
            .labels
            .iter()
            .copied()
            .zip(other.labels.iter().copied())
            .collect();
        Partition::from_labels(&pairs)
    }

    /// Linear-time non-crossing test.
    pub fn is_noncrossing(&self) -> bool {
        let n = self.len();
        let mut last = vec![0usize; self.num_blocks()];
        for (i, &l) in self.labels.iter().enumerate() {
            last[l as usize] = i;
        }
        let mut seen = vec![false; self.num_blocks()];
        let mut stack: Vec<u8> = Vec::new();
        for i in 0..n {
            let l = self.labels[i];
            if seen[l as usize] {
                if stack.last() != Some(&l) {
                    return false;
                }
            } else {
                seen[l as usize] = true;
                stack.push(l);
            }
            if last[l as usize] == i {
                stack.pop();
            }
        }
        true
    }

    /// Smallest non-crossing partition above `self`: merge crossing blocks
    /// until none remain.
    pub fn noncrossing_closure(&self) -> Partition {
        let mut current = self.clone();
        'outer: loop {
            let n = current.len();
            let lab = &current.labels;
            for a in 0..n {
                for b in a + 1..n {
                    if lab[b] == lab[a] {
                        continue;
                    }
                    for c in b + 1..n {
                        if lab[c] != lab[a] {
                            continue;
                        }
                        for d in c + 1..n {
                            if lab[d] == lab[b] {
                                let (x, y) = (lab[a], lab[b]);
                                let merged: Vec<u8> =
                                    lab.iter().map(|&l| if l == y { x } else { l }).collect();
                                current = Partition::from_labels(&merged);
                                continue 'outer;
                            }
                        }
                    }
                }
            }
            return current;
        }
    }

    /// Relabels points: point `i` of the result carries the block of point
    /// `f(i)` of `self` (both 1-based). Used to pass between a partition and
    /// its picture in χ-order.
    pub fn pull_back(&self, f: impl Fn(usize) -> usize) -> Partition {
        let raw: Vec<u8> = (1..=self.len()).map(|i| self.labels[f(i) - 1]).collect();
        Partition::from_labels(&raw)
    }

    /// Restriction to the sorted 1-based subset, renumbered 1..|subset|.
    pub fn restrict(&self, subset: &[usize]) -> Partition {
        let raw: Vec<u8> = subset.iter().map(|&i| self.labels[i - 1]).collect();
        Partition::from_labels(&raw)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks = self.blocks();
        write!(f, "{{")?;
        for (k, b) in blocks.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, i) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{i}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

/// All non-crossing partitions of {1..n}, in lexicographic order of their
/// restricted growth strings. Cached per n.
pub fn noncrossing_partitions(n: usize) -> Arc<Vec<Partition>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Vec<Partition>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.read().expect("nc cache poisoned").get(&n) {
        return v.clone();
    }
    let mut out = Vec::new();
    let mut labels = Vec::with_capacity(n);
    let mut last_of: Vec<usize> = Vec::new();
    let mut min_of: Vec<usize> = Vec::new();
    grow_nc(n, &mut labels, &mut last_of, &mut min_of, &mut out);
    let arc = Arc::new(out);
    cache
        .write()
        .expect("nc cache poisoned")
        .insert(n, arc.clone());
    arc
}

fn grow_nc(
    n: usize,
    labels: &mut Vec<u8>,
    last_of: &mut Vec<usize>,
    min_of: &mut Vec<usize>,
    out: &mut Vec<Partition>,
) {
    let k = labels.len();
    if k == n {
        out.push(Partition {
            labels: labels.clone(),
        });
        return;
    }
    for c in 0..=last_of.len() {
        if c < last_of.len() {
            // Joining block c: everything strictly between its last element
            // and k must belong to blocks opened after that element.
            let prev = last_of[c];
            let ok = (prev + 1..k).all(|j| min_of[labels[j] as usize] > prev);
            if !ok {
                continue;
            }
            labels.push(c as u8);
            last_of[c] = k;
            grow_nc(n, labels, last_of, min_of, out);
            last_of[c] = prev;
            labels.pop();
        } else {
            labels.push(c as u8);
            last_of.push(k);
            min_of.push(k);
            grow_nc(n, labels, last_of, min_of, out);
            min_of.pop();
            last_of.pop();
            labels.pop();
        }
    }
}

/// Catalan number C_n.
pub fn catalan(n: usize) -> u64 {
    let mut c: u64 = 1;
    for k in 0..n as u64 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    c
}

/// A partition together with the side word it is bi-non-crossing for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BncPartition {
    chi: ChiWord,
    part: Partition,
}

impl BncPartition {
    pub fn new(chi: ChiWord, part: Partition) -> Result<Self, BncError> {
        if chi.len() != part.len() {
            return Err(BncError::LengthMismatch {
                expected: chi.len(),
                got: part.len(),
            });
        }
        if !is_bnc(&part, &chi)? {
            return Err(BncError::NotBiNonCrossing(chi.to_string()));
        }
        Ok(BncPartition { chi, part })
    }

    pub fn from_blocks(chi: ChiWord, blocks: &[Vec<usize>]) -> Result<Self, BncError> {
        let part = Partition::from_blocks(chi.len(), blocks)?;
        Self::new(chi, part)
    }

    /// 0_χ: all singletons.
    pub fn zero(chi: ChiWord) -> Self {
        let n = chi.len();
        BncPartition {
            chi,
            part: Partition::singletons(n),
        }
    }

    /// 1_χ: a single block.
    pub fn one(chi: ChiWord) -> Self {
        let n = chi.len();
        BncPartition {
            chi,
            part: Partition::one_block(n),
        }
    }

    pub fn chi(&self) -> &ChiWord {
        &self.chi
    }

    pub fn partition(&self) -> &Partition {
        &self.part
    }

    pub fn len(&self) -> usize {
        self.part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.part.is_empty()
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        self.part.blocks()
    }

    pub fn is_one(&self) -> bool {
        self.part.num_blocks() == 1
    }

    /// The picture s_χ⁻¹ ∘ π in χ-order; a non-crossing partition.
    pub fn to_nc(&self) -> Partition {
        let s = self.chi.s_chi();
        self.part.pull_back(|pos| s[pos - 1])
    }

    fn check_same_chi(&self, other: &BncPartition) -> Result<(), BncError> {
        if self.chi != other.chi {
            return Err(BncError::ChiMismatch(
                self.chi.to_string(),
                other.chi.to_string(),
            ));
        }
        Ok(())
    }

    pub fn leq(&self, other: &BncPartition) -> Result<bool, BncError> {
        self.check_same_chi(other)?;
        Ok(self.part.leq(&other.part))
    }

    /// Least upper bound inside BNC(χ).
    ///
    /// The join in the lattice of all partitions is computed first; when it
    /// is already bi-non-crossing it is the answer, otherwise crossing blocks
    /// of its χ-order picture are merged until none remain.
    pub fn join(&self, other: &BncPartition) -> Result<BncPartition, BncError> {
        self.check_same_chi(other)?;
        let raw = self.part.join_all(&other.part);
        let inv = self.chi.s_chi_inv();
        let s = self.chi.s_chi();
        let closed_nc = raw.pull_back(|pos| s[pos - 1]).noncrossing_closure();
        let part = closed_nc.pull_back(|i| inv[i - 1]);
        if !(self.part.leq(&part) && other.part.leq(&part)) {
            return Err(BncError::Internal("join is not an upper bound".into()));
        }
        Ok(BncPartition {
            chi: self.chi.clone(),
            part,
        })
    }

    pub fn meet(&self, other: &BncPartition) -> Result<BncPartition, BncError> {
        self.check_same_chi(other)?;
        let part = self.part.meet(&other.part);
        if !is_bnc(&part, &self.chi)? {
            return Err(BncError::Internal("meet left BNC(χ)".into()));
        }
        Ok(BncPartition {
            chi: self.chi.clone(),
            part,
        })
    }

    /// Restriction to a sorted subset, over the restricted side word.
    pub fn restrict(&self, subset: &[usize]) -> Result<BncPartition, BncError> {
        Ok(BncPartition {
            chi: self.chi.restrict(subset)?,
            part: self.part.restrict(subset),
        })
    }
}

impl fmt::Display for BncPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} over {}", self.part, self.chi)
    }
}

/// Wire format shared by the CLI and reports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PartitionJson {
    pub n: usize,
    pub chi: String,
    pub blocks: Vec<Vec<usize>>,
}

impl From<&BncPartition> for PartitionJson {
    fn from(p: &BncPartition) -> Self {
        PartitionJson {
            n: p.len(),
            chi: p.chi.to_string(),
            blocks: p.blocks(),
        }
    }
}

impl TryFrom<&PartitionJson> for BncPartition {
    type Error = BncError;

    fn try_from(j: &PartitionJson) -> Result<Self, Self::Error> {
        let chi: ChiWord = j.chi.parse()?;
        if chi.len() != j.n {
            return Err(BncError::LengthMismatch {
                expected: j.n,
                got: chi.len(),
            });
        }
        BncPartition::from_blocks(chi, &j.blocks)
    }
}

/// s_χ as a standalone operation.
pub fn s_chi(chi: &ChiWord) -> Vec<usize> {
    chi.s_chi()
}

/// Whether `pi` is bi-non-crossing with respect to `chi`.
pub fn is_bnc(pi: &Partition, chi: &ChiWord) -> Result<bool, BncError> {
    if pi.len() != chi.len() {
        return Err(BncError::LengthMismatch {
            expected: chi.len(),
            got: pi.len(),
        });
    }
    let s = chi.s_chi();
    Ok(pi.pull_back(|pos| s[pos - 1]).is_noncrossing())
}

/// Every element of BNC(χ), in the canonical order of NC(n).
pub fn enumerate_bnc(chi: &ChiWord) -> Result<Vec<BncPartition>, BncError> {
    enumerate_bnc_bounded(chi, DEFAULT_ENUMERATION_BOUND)
}

pub fn enumerate_bnc_bounded(chi: &ChiWord, bound: usize) -> Result<Vec<BncPartition>, BncError> {
    let n = chi.len();
    if n > bound {
        return Err(BncError::TooLarge { n, bound });
    }
    let inv = chi.s_chi_inv();
    Ok(noncrossing_partitions(n)
        .iter()
        .map(|sigma| BncPartition {
            chi: chi.clone(),
            part: sigma.pull_back(|i| inv[i - 1]),
        })
        .collect())
}

type MobiusColumn = HashMap<Partition, i64>;

fn mobius_column(top: &Partition) -> Arc<MobiusColumn> {
    static CACHE: OnceLock<RwLock<HashMap<Partition, Arc<MobiusColumn>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(col) = cache.read().expect("mobius cache poisoned").get(top) {
        return col.clone();
    }
    let mut guard = cache.write().expect("mobius cache poisoned");
    if let Some(col) = guard.get(top) {
        return col.clone();
    }
    let all = noncrossing_partitions(top.len());
    let mut below: Vec<&Partition> = all.iter().filter(|t| t.leq(top)).collect();
    // Coarser partitions first so every strict upper neighbour is known.
    below.sort_by_key(|t| t.num_blocks());
    let mut col: MobiusColumn = HashMap::with_capacity(below.len());
    for (idx, tau) in below.iter().enumerate() {
        if *tau == top {
            col.insert((*tau).clone(), 1);
            continue;
        }
        let mut acc = 0i64;
        for rho in &below[..idx] {
            if rho.num_blocks() < tau.num_blocks() && tau.leq(rho) {
                acc += col[*rho];
            }
        }
        col.insert((*tau).clone(), -acc);
    }
    let arc = Arc::new(col);
    guard.insert(top.clone(), arc.clone());
    arc
}

/// Möbius function of NC(n): 0 unless σ ≤ π.
pub fn mobius_nc(sigma: &Partition, pi: &Partition) -> i64 {
    if !sigma.leq(pi) {
        return 0;
    }
    mobius_column(pi).get(sigma).copied().unwrap_or(0)
}

/// μ_BNC(σ, π), evaluated through the χ-order pictures.
pub fn mobius_bnc(sigma: &BncPartition, pi: &BncPartition) -> Result<i64, BncError> {
    sigma.check_same_chi(pi)?;
    Ok(mobius_nc(&sigma.to_nc(), &pi.to_nc()))
}

/// All (σ, μ(σ, π)) with σ ≤ π and nonzero Möbius value.
pub fn mobius_interval(pi: &BncPartition) -> Vec<(BncPartition, i64)> {
    let inv = pi.chi.s_chi_inv();
    let col = mobius_column(&pi.to_nc());
    // sorted so that sums over the interval are reproducible
    let mut entries: Vec<(&Partition, &i64)> = col.iter().collect();
    entries.sort_by(|a, b| a.0.labels().cmp(b.0.labels()));
    entries
        .into_iter()
        .filter(|(_, &m)| m != 0)
        .map(|(nc, &m)| {
            (
                BncPartition {
                    chi: pi.chi.clone(),
                    part: nc.pull_back(|i| inv[i - 1]),
                },
                m,
            )
        })
        .collect()
}

/// Every σ ∈ BNC(χ) with σ ≤ π.
pub fn lower_interval(pi: &BncPartition) -> Vec<BncPartition> {
    let inv = pi.chi.s_chi_inv();
    let top = pi.to_nc();
    noncrossing_partitions(pi.len())
        .iter()
        .filter(|t| t.leq(&top))
        .map(|t| BncPartition {
            chi: pi.chi.clone(),
            part: t.pull_back(|i| inv[i - 1]),
        })
        .collect()
}
