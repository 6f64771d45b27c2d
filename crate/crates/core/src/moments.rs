//! Words in tagged generators, B-valued moment oracles, the bi-multiplicative
//! extension E_π, cumulants by Möbius convolution, the grouped-entry
//! cumulant expansion and the vanishing-mixed-cumulant test.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnc::{
    enumerate_bnc, mobius_interval, BncError, BncPartition, ChiWord, Partition, PartitionJson, Side,
};
use crate::opalgebra::{AlgebraError, BElement, BElementJson, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("operand {position} has a factor on the wrong side (expected {expected:?})")]
    SideMismatch { position: usize, expected: Side },
    #[error("expected {expected} operands, got {got}")]
    OperandCount { expected: usize, got: usize },
    #[error("cumulant table is missing partition {0}")]
    IncompleteTable(String),
    #[error("group sizes must be positive and sum to {expected}, got {got}")]
    BadGrouping { expected: usize, got: usize },
    #[error("group {group} mixes left and right operators but is not the final group")]
    MixedGroup { group: usize },
    #[error("symbol {0:?} has no family")]
    Unassigned(String),
    #[error("max order {0} exceeds the supported bound 8")]
    OrderTooLarge(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Bnc(#[from] BncError),
}

/// A generator name together with its face, adjointness and family tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSymbol {
    pub name: String,
    pub side: Side,
    /// True for the starred member of a non-self-adjoint pair.
    pub adjoint: bool,
    pub self_adjoint: bool,
    pub family: String,
}

impl GeneratorSymbol {
    pub fn self_adjoint(name: &str, side: Side, family: &str) -> Self {
        GeneratorSymbol {
            name: name.to_string(),
            side,
            adjoint: false,
            self_adjoint: true,
            family: family.to_string(),
        }
    }

    /// `name` and `name*`, same side and family.
    pub fn pair(name: &str, side: Side, family: &str) -> [Self; 2] {
        let base = GeneratorSymbol {
            name: name.to_string(),
            side,
            adjoint: false,
            self_adjoint: false,
            family: family.to_string(),
        };
        let star = GeneratorSymbol {
            name: format!("{name}*"),
            adjoint: true,
            ..base.clone()
        };
        [base, star]
    }

    pub fn adjoint_name(&self) -> String {
        if self.self_adjoint {
            self.name.clone()
        } else if self.adjoint {
            self.name.trim_end_matches('*').to_string()
        } else {
            format!("{}*", self.name)
        }
    }
}

/// One letter of a word.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Gen(String),
    /// b acting on the left face.
    Lb(BElement),
    /// b acting on the right face.
    Rb(BElement),
}

/// A word Z₁Z₂⋯ in generators and B-coefficients. The empty word is 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Monomial {
    factors: Vec<Factor>,
}

impl Monomial {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(factors: Vec<Factor>) -> Self {
        Monomial { factors }
    }

    pub fn gen(name: &str) -> Self {
        Monomial {
            factors: vec![Factor::Gen(name.to_string())],
        }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        Monomial {
            factors: names
                .iter()
                .map(|s| Factor::Gen(s.as_ref().to_string()))
                .collect(),
        }
    }

    /// Whitespace-separated generator names, e.g. `"S1 S1 D1"`.
    pub fn parse(text: &str) -> Self {
        let names: Vec<&str> = text.split_whitespace().collect();
        Self::from_names(&names)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn push(&mut self, f: Factor) {
        self.factors.push(f);
    }

    pub fn prepend(&mut self, f: Factor) {
        self.factors.insert(0, f);
    }

    pub fn with(mut self, f: Factor) -> Self {
        self.factors.push(f);
        self
    }

    pub fn concat(&self, other: &Monomial) -> Monomial {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Monomial { factors }
    }

    pub fn product<'a>(parts: impl IntoIterator<Item = &'a Monomial>) -> Monomial {
        let mut out = Monomial::empty();
        for p in parts {
            out.factors.extend(p.factors.iter().cloned());
        }
        out
    }

    /// Reversed word with every letter replaced by its adjoint.
    pub fn adjoint<F: MomentFunctional + ?Sized>(&self, f: &F) -> Result<Monomial, MomentError> {
        let factors = self
            .factors
            .iter()
            .rev()
            .map(|fac| {
                Ok(match fac {
                    Factor::Gen(name) => Factor::Gen(f.lookup(name)?.adjoint_name()),
                    Factor::Lb(b) => Factor::Lb(b.adjoint()),
                    Factor::Rb(b) => Factor::Rb(b.adjoint()),
                })
            })
            .collect::<Result<Vec<_>, MomentError>>()?;
        Ok(Monomial { factors })
    }

    /// Which faces the letters of the word sit on.
    pub fn side_profile<F: MomentFunctional + ?Sized>(
        &self,
        f: &F,
    ) -> Result<SideProfile, MomentError> {
        let mut profile = SideProfile::Empty;
        for fac in &self.factors {
            let s = match fac {
                Factor::Gen(name) => f.lookup(name)?.side,
                Factor::Lb(_) => Side::Left,
                Factor::Rb(_) => Side::Right,
            };
            profile = match profile {
                SideProfile::Empty => SideProfile::Pure(s),
                SideProfile::Pure(t) if t == s => SideProfile::Pure(s),
                _ => SideProfile::Mixed,
            };
        }
        Ok(profile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideProfile {
    Empty,
    Pure(Side),
    Mixed,
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (k, fac) in self.factors.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            match fac {
                Factor::Gen(n) => write!(f, "{n}")?,
                Factor::Lb(b) => write!(f, "L{b:?}")?,
                Factor::Rb(b) => write!(f, "R{b:?}")?,
            }
        }
        Ok(())
    }
}

/// A finite linear combination of words.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: Vec<(Complex64, Monomial)>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: Vec<(Complex64, Monomial)>) -> Self {
        Polynomial { terms }
    }

    pub fn monomial(m: Monomial) -> Self {
        Polynomial {
            terms: vec![(Complex64::new(1.0, 0.0), m)],
        }
    }

    pub fn gen(name: &str) -> Self {
        Self::monomial(Monomial::gen(name))
    }

    pub fn terms(&self) -> &[(Complex64, Monomial)] {
        &self.terms
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Polynomial {
            terms: self.terms.iter().map(|(a, m)| (a * c, m.clone())).collect(),
        }
    }

    pub fn plus(&self, other: &Polynomial) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Polynomial { terms }
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, m) in &self.terms {
            for (b, w) in &other.terms {
                terms.push((a * b, m.concat(w)));
            }
        }
        Polynomial { terms }
    }

    pub fn adjoint<F: MomentFunctional + ?Sized>(&self, f: &F) -> Result<Self, MomentError> {
        let terms = self
            .terms
            .iter()
            .map(|(a, m)| Ok((a.conj(), m.adjoint(f)?)))
            .collect::<Result<Vec<_>, MomentError>>()?;
        Ok(Polynomial { terms })
    }
}

/// How a functional is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backing {
    FockModel,
    MatrixLift,
    ExplicitTable,
}

/// An oracle for the B-valued expectation E of words.
pub trait MomentFunctional: Send + Sync {
    fn dim(&self) -> usize;
    fn symbols(&self) -> &[GeneratorSymbol];
    fn backing(&self) -> Backing;
    /// E of the product of the word's letters. The empty word maps to 1.
    fn moment(&self, word: &Monomial) -> Result<BElement, MomentError>;

    fn lookup(&self, name: &str) -> Result<&GeneratorSymbol, MomentError> {
        self.symbols()
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| MomentError::UnknownSymbol(name.to_string()))
    }

    /// τ = tr_d ∘ E.
    fn tau(&self, word: &Monomial) -> Result<Complex64, MomentError> {
        Ok(self.moment(word)?.trace_d())
    }

    /// E of `prefix · p` extended linearly.
    fn moment_poly(&self, prefix: &Monomial, p: &Polynomial) -> Result<BElement, MomentError> {
        let mut acc = BElement::zero(self.dim());
        for (c, m) in p.terms() {
            acc += &self.moment(&prefix.concat(m))?.scale(*c);
        }
        Ok(acc)
    }
}

impl<T: MomentFunctional + ?Sized> MomentFunctional for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn symbols(&self) -> &[GeneratorSymbol] {
        (**self).symbols()
    }
    fn backing(&self) -> Backing {
        (**self).backing()
    }
    fn moment(&self, word: &Monomial) -> Result<BElement, MomentError> {
        (**self).moment(word)
    }
}

type Rule = Box<dyn Fn(&[String]) -> Option<Complex64> + Send + Sync>;

/// Scalar-valued functional given by an explicit rule on generator words.
/// Coefficient letters are scalars here and factor straight out.
pub struct TableMoments {
    symbols: Vec<GeneratorSymbol>,
    rule: Rule,
}

impl TableMoments {
    /// Words missing from `entries` evaluate to 0; the empty word to 1.
    pub fn from_entries(
        symbols: Vec<GeneratorSymbol>,
        entries: HashMap<Vec<String>, Complex64>,
    ) -> Self {
        TableMoments {
            symbols,
            rule: Box::new(move |w| {
                if w.is_empty() {
                    Some(Complex64::new(1.0, 0.0))
                } else {
                    Some(entries.get(w).copied().unwrap_or_default())
                }
            }),
        }
    }

    /// `rule` returns `None` for words it cannot evaluate.
    pub fn from_rule(
        symbols: Vec<GeneratorSymbol>,
        rule: impl Fn(&[String]) -> Option<Complex64> + Send + Sync + 'static,
    ) -> Self {
        TableMoments {
            symbols,
            rule: Box::new(rule),
        }
    }
}

impl MomentFunctional for TableMoments {
    fn dim(&self) -> usize {
        1
    }
    fn symbols(&self) -> &[GeneratorSymbol] {
        &self.symbols
    }
    fn backing(&self) -> Backing {
        Backing::ExplicitTable
    }
    fn moment(&self, word: &Monomial) -> Result<BElement, MomentError> {
        let mut scalar = Complex64::new(1.0, 0.0);
        let mut names = Vec::new();
        for f in word.factors() {
            match f {
                Factor::Gen(n) => {
                    self.lookup(n)?;
                    names.push(n.clone());
                }
                Factor::Lb(b) | Factor::Rb(b) => {
                    scalar *= b.as_scalar().ok_or(AlgebraError::DimensionMismatch {
                        expected: 1,
                        got: b.dim(),
                    })?;
                }
            }
        }
        let v = (self.rule)(&names)
            .ok_or_else(|| MomentError::Unsupported(format!("no table entry for {names:?}")))?;
        Ok(BElement::scalar(1, v * scalar))
    }
}

pub fn eval_moment_full<F: MomentFunctional + ?Sized>(
    f: &F,
    word: &Monomial,
) -> Result<BElement, MomentError> {
    f.moment(word)
}

// ---------------------------------------------------------------------------
// Bi-multiplicative reduction

/// Where a computed coefficient is attached to an operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attach {
    /// Z·L_b
    AppendLeft,
    /// R_b·Z
    PrependRight,
    /// L_b·Z
    PrependLeft,
    /// Z·R_b
    AppendRight,
}

/// Value and operand types the reduction runs over: numeric B-values or a
/// symbolic trace.
trait ReductionAlgebra {
    type Val: Clone;
    type Op: Clone;
    fn full(&self, ops: Vec<Self::Op>) -> Result<Self::Val, MomentError>;
    fn attach(&self, op: Self::Op, v: &Self::Val, how: Attach) -> Self::Op;
    fn product(&self, a: Self::Val, b: Self::Val) -> Self::Val;
}

#[derive(Clone)]
struct Item<Op> {
    op: Op,
    side: Side,
    block: u8,
    /// Whether coefficients may be attached to this operand when it is the
    /// last entry; false for operands mixing both faces.
    pure: bool,
}

/// How the next reducible χ-interval is picked.
pub enum Strategy<'a> {
    /// Deterministic: peel the block of the χ-first element, or its first gap.
    Canonical,
    /// Uniformly random admissible interval and insertion side.
    Random(&'a mut ChaCha8Rng),
}

fn reduce<A: ReductionAlgebra>(
    alg: &A,
    items: Vec<Item<A::Op>>,
    strategy: &mut Strategy<'_>,
) -> Result<A::Val, MomentError> {
    let m = items.len();
    if items.iter().all(|it| it.block == items[0].block) {
        return alg.full(items.into_iter().map(|it| it.op).collect());
    }
    let last = m - 1;
    // χ-order over the current items; the last item sits at the junction of
    // the two faces whatever its side.
    let mut order: Vec<usize> = (0..m)
        .filter(|&k| k == last || items[k].side == Side::Left)
        .collect();
    order.extend((0..last).rev().filter(|&k| items[k].side == Side::Right));

    let nblocks = items
        .iter()
        .map(|it| it.block as usize + 1)
        .max()
        .unwrap_or(0);
    let mut lo_of = vec![usize::MAX; nblocks];
    let mut hi_of = vec![0usize; nblocks];
    for (pos, &k) in order.iter().enumerate() {
        let b = items[k].block as usize;
        lo_of[b] = lo_of[b].min(pos);
        hi_of[b] = hi_of[b].max(pos);
    }
    let closure = |b: usize| -> (usize, usize) {
        let (mut lo, mut hi) = (lo_of[b], hi_of[b]);
        loop {
            let (mut nlo, mut nhi) = (lo, hi);
            for &k in &order[lo..=hi] {
                let c = items[k].block as usize;
                nlo = nlo.min(lo_of[c]);
                nhi = nhi.max(hi_of[c]);
            }
            if (nlo, nhi) == (lo, hi) {
                return (lo, hi);
            }
            lo = nlo;
            hi = nhi;
        }
    };

    let (lo, hi) = match strategy {
        Strategy::Canonical => {
            let b0 = items[order[0]].block as usize;
            let (l, h) = closure(b0);
            if h < m - 1 {
                (l, h)
            } else {
                let positions: Vec<usize> = (0..m)
                    .filter(|&p| items[order[p]].block as usize == b0)
                    .collect();
                let gap = positions
                    .windows(2)
                    .find(|w| w[1] > w[0] + 1)
                    .ok_or_else(|| MomentError::Backend("no reducible interval".into()))?;
                (gap[0] + 1, gap[1] - 1)
            }
        }
        Strategy::Random(rng) => {
            let mut cands: Vec<(usize, usize)> = (0..nblocks)
                .filter(|&b| lo_of[b] != usize::MAX)
                .map(closure)
                .filter(|&(l, h)| !(l == 0 && h == m - 1))
                .collect();
            cands.sort_unstable();
            cands.dedup();
            *cands
                .choose(*rng)
                .ok_or_else(|| MomentError::Backend("no reducible interval".into()))?
        }
    };

    let mut in_v = vec![false; m];
    for &k in &order[lo..=hi] {
        in_v[k] = true;
    }
    let mut v_items = Vec::new();
    let mut w_items = Vec::new();
    let mut w_index = vec![usize::MAX; m];
    for (k, it) in items.into_iter().enumerate() {
        if in_v[k] {
            v_items.push(it);
        } else {
            w_index[k] = w_items.len();
            w_items.push(it);
        }
    }

    if lo == 0 {
        let a = reduce(alg, v_items, strategy)?;
        let b = reduce(alg, w_items, strategy)?;
        return Ok(alg.product(a, b));
    }
    if hi == m - 1 {
        let a = reduce(alg, w_items, strategy)?;
        let b = reduce(alg, v_items, strategy)?;
        return Ok(alg.product(a, b));
    }

    let coeff = reduce(alg, v_items, strategy)?;
    let p = order[lo - 1];
    let q = order[hi + 1];
    let v_has_last = in_v[last];

    #[derive(Clone, Copy)]
    enum Route {
        Pred,
        Succ,
        Vector,
    }
    let p_ok = p != last || w_items[w_index[p]].pure;
    let q_ok = q != last || w_items[w_index[q]].pure;
    let route = match strategy {
        Strategy::Canonical => {
            if v_has_last {
                Route::Vector
            } else if p != last {
                Route::Pred
            } else {
                Route::Succ
            }
        }
        Strategy::Random(rng) => {
            let mut opts = Vec::new();
            if p_ok {
                opts.push(Route::Pred);
            }
            if q_ok {
                opts.push(Route::Succ);
            }
            if v_has_last {
                opts.push(Route::Vector);
            }
            opts[rng.gen_range(0..opts.len())]
        }
    };
    let (target, how) = match route {
        Route::Pred => {
            let how = match w_items[w_index[p]].side {
                Side::Left => Attach::AppendLeft,
                Side::Right => Attach::PrependRight,
            };
            (w_index[p], how)
        }
        Route::Succ => {
            let how = match w_items[w_index[q]].side {
                Side::Left => Attach::PrependLeft,
                Side::Right => Attach::AppendRight,
            };
            (w_index[q], how)
        }
        Route::Vector => {
            // The new last entry is the largest remaining operand applied to
            // the coefficient vector; appending on the operand's own face
            // keeps it an algebra element with the same vector value.
            let k = w_items.len() - 1;
            let how = match w_items[k].side {
                Side::Left => Attach::AppendLeft,
                Side::Right if w_items[k].pure => Attach::AppendRight,
                Side::Right => Attach::AppendLeft,
            };
            (k, how)
        }
    };
    let slot = &mut w_items[target];
    slot.op = alg.attach(slot.op.clone(), &coeff, how);
    reduce(alg, w_items, strategy)
}

struct NumericAlgebra<'a, F: MomentFunctional + ?Sized>(&'a F);

impl<F: MomentFunctional + ?Sized> ReductionAlgebra for NumericAlgebra<'_, F> {
    type Val = BElement;
    type Op = Monomial;

    fn full(&self, ops: Vec<Monomial>) -> Result<BElement, MomentError> {
        self.0.moment(&Monomial::product(ops.iter()))
    }

    fn attach(&self, mut op: Monomial, v: &BElement, how: Attach) -> Monomial {
        match how {
            Attach::AppendLeft => op.push(Factor::Lb(v.clone())),
            Attach::PrependRight => op.prepend(Factor::Rb(v.clone())),
            Attach::PrependLeft => op.prepend(Factor::Lb(v.clone())),
            Attach::AppendRight => op.push(Factor::Rb(v.clone())),
        }
        op
    }

    fn product(&self, a: BElement, b: BElement) -> BElement {
        a * b
    }
}

struct SymbolicAlgebra;

impl ReductionAlgebra for SymbolicAlgebra {
    type Val = String;
    type Op = String;

    fn full(&self, ops: Vec<String>) -> Result<String, MomentError> {
        Ok(format!("E({})", ops.join(" ")))
    }

    fn attach(&self, op: String, v: &String, how: Attach) -> String {
        match how {
            Attach::AppendLeft => format!("{op} L[{v}]"),
            Attach::PrependRight => format!("R[{v}] {op}"),
            Attach::PrependLeft => format!("L[{v}] {op}"),
            Attach::AppendRight => format!("{op} R[{v}]"),
        }
    }

    fn product(&self, a: String, b: String) -> String {
        format!("{a} {b}")
    }
}

fn check_operands<F: MomentFunctional + ?Sized>(
    f: &F,
    chi: &ChiWord,
    operands: &[Monomial],
) -> Result<Vec<bool>, MomentError> {
    if operands.len() != chi.len() {
        return Err(MomentError::OperandCount {
            expected: chi.len(),
            got: operands.len(),
        });
    }
    let n = operands.len();
    let mut pure = Vec::with_capacity(n);
    for (k, op) in operands.iter().enumerate() {
        let expected = chi.side(k + 1);
        match op.side_profile(f)? {
            SideProfile::Empty => pure.push(true),
            SideProfile::Pure(s) if s == expected => pure.push(true),
            SideProfile::Mixed | SideProfile::Pure(_) if k == n - 1 => pure.push(false),
            _ => {
                return Err(MomentError::SideMismatch {
                    position: k + 1,
                    expected,
                })
            }
        }
    }
    Ok(pure)
}

/// E_π(Z₁,…,Zₙ) using the canonical stripping order.
pub fn eval_moment_pi<F: MomentFunctional + ?Sized>(
    f: &F,
    pi: &BncPartition,
    operands: &[Monomial],
) -> Result<BElement, MomentError> {
    eval_moment_pi_with(f, pi, operands, &mut Strategy::Canonical)
}

/// E_π with an explicit choice of stripping strategy.
pub fn eval_moment_pi_with<F: MomentFunctional + ?Sized>(
    f: &F,
    pi: &BncPartition,
    operands: &[Monomial],
    strategy: &mut Strategy<'_>,
) -> Result<BElement, MomentError> {
    let pure = check_operands(f, pi.chi(), operands)?;
    let items = operands
        .iter()
        .enumerate()
        .map(|(k, op)| Item {
            op: op.clone(),
            side: pi.chi().side(k + 1),
            block: pi.partition().labels()[k],
            pure: pure[k],
        })
        .collect();
    reduce(&NumericAlgebra(f), items, strategy)
}

/// The nested expression the canonical reduction produces, with operands
/// named Z1..Zn, coefficients written L[..]/R[..] and E for expectations.
pub fn symbolic_reduction(pi: &BncPartition) -> String {
    let items = (0..pi.len())
        .map(|k| Item {
            op: format!("Z{}", k + 1),
            side: pi.chi().side(k + 1),
            block: pi.partition().labels()[k],
            pure: true,
        })
        .collect();
    reduce(&SymbolicAlgebra, items, &mut Strategy::Canonical)
        .expect("symbolic reduction cannot fail")
}

/// κ_π = Σ_{σ ≤ π} E_σ μ(σ, π).
pub fn cumulant_pi<F: MomentFunctional + ?Sized>(
    f: &F,
    pi: &BncPartition,
    operands: &[Monomial],
) -> Result<BElement, MomentError> {
    check_operands(f, pi.chi(), operands)?;
    let terms: Vec<(BncPartition, i64)> = mobius_interval(pi);
    let parts = terms
        .par_iter()
        .map(|(sigma, mu)| {
            Ok(eval_moment_pi(f, sigma, operands)?.scale(Complex64::new(*mu as f64, 0.0)))
        })
        .collect::<Result<Vec<BElement>, MomentError>>()?;
    let mut acc = BElement::zero(f.dim());
    for p in &parts {
        acc += p;
    }
    Ok(acc)
}

/// A table of B-values indexed by the partitions of one side word.
#[derive(Debug, Clone)]
pub struct PartitionTable {
    chi: ChiWord,
    values: HashMap<Partition, BElement>,
}

impl PartitionTable {
    pub fn new(chi: ChiWord) -> Self {
        PartitionTable {
            chi,
            values: HashMap::new(),
        }
    }

    pub fn chi(&self) -> &ChiWord {
        &self.chi
    }

    pub fn insert(&mut self, pi: &BncPartition, v: BElement) -> Result<(), MomentError> {
        if pi.chi() != &self.chi {
            return Err(BncError::ChiMismatch(pi.chi().to_string(), self.chi.to_string()).into());
        }
        self.values.insert(pi.partition().clone(), v);
        Ok(())
    }

    pub fn get(&self, pi: &BncPartition) -> Option<&BElement> {
        self.values.get(pi.partition())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entries in canonical enumeration order.
    pub fn entries(&self) -> Result<Vec<(BncPartition, BElement)>, MomentError> {
        Ok(enumerate_bnc(&self.chi)?
            .into_iter()
            .filter_map(|p| self.get(&p).cloned().map(|v| (p, v)))
            .collect())
    }

    pub fn to_json(&self) -> Result<Vec<TableEntryJson>, MomentError> {
        Ok(self
            .entries()?
            .iter()
            .map(|(p, v)| TableEntryJson {
                chi: self.chi.to_string(),
                partition: PartitionJson::from(p).blocks,
                value: BElementJson::from(v),
            })
            .collect())
    }

    pub fn from_json(entries: &[TableEntryJson]) -> Result<Self, MomentError> {
        let first = entries
            .first()
            .ok_or_else(|| MomentError::IncompleteTable("empty table".into()))?;
        let chi: ChiWord = first.chi.parse()?;
        let mut table = PartitionTable::new(chi.clone());
        for e in entries {
            let c: ChiWord = e.chi.parse()?;
            let p = BncPartition::from_blocks(c, &e.partition)?;
            table.insert(&p, BElement::try_from(&e.value)?)?;
        }
        Ok(table)
    }
}

/// JSON row `{"chi": "...", "partition": [[..]], "value": BElement}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TableEntryJson {
    pub chi: String,
    pub partition: Vec<Vec<usize>>,
    pub value: BElementJson,
}

/// E_σ for every σ ∈ BNC(χ).
pub fn moment_table<F: MomentFunctional + ?Sized>(
    f: &F,
    chi: &ChiWord,
    operands: &[Monomial],
) -> Result<PartitionTable, MomentError> {
    check_operands(f, chi, operands)?;
    let all = enumerate_bnc(chi)?;
    let vals = all
        .par_iter()
        .map(|s| eval_moment_pi(f, s, operands))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = PartitionTable::new(chi.clone());
    for (s, v) in all.iter().zip(vals) {
        table.insert(s, v)?;
    }
    Ok(table)
}

fn table_dim(table: &PartitionTable) -> Result<usize, MomentError> {
    table
        .values
        .values()
        .next()
        .map(|b| b.dim())
        .ok_or_else(|| MomentError::IncompleteTable("empty table".into()))
}

/// Möbius transform of a full moment table.
pub fn cumulants_from_moments(moments: &PartitionTable) -> Result<PartitionTable, MomentError> {
    let d = table_dim(moments)?;
    let mut out = PartitionTable::new(moments.chi.clone());
    for pi in enumerate_bnc(&moments.chi)? {
        let mut acc = BElement::zero(d);
        for (sigma, mu) in mobius_interval(&pi) {
            let e = moments
                .get(&sigma)
                .ok_or_else(|| MomentError::IncompleteTable(sigma.to_string()))?;
            acc += &e.scale(Complex64::new(mu as f64, 0.0));
        }
        out.insert(&pi, acc)?;
    }
    Ok(out)
}

/// E_π = Σ_{σ ≤ π} κ_σ.
pub fn moments_from_cumulants(
    kappa: &PartitionTable,
    pi: &BncPartition,
) -> Result<BElement, MomentError> {
    let d = table_dim(kappa)?;
    let mut acc = BElement::zero(d);
    for sigma in crate::bnc::lower_interval(pi) {
        let k = kappa
            .get(&sigma)
            .ok_or_else(|| MomentError::IncompleteTable(sigma.to_string()))?;
        acc += k;
    }
    Ok(acc)
}

/// Scalar multiplicative table: the value of σ is Π over blocks of
/// `block_value(|V|)`.
pub fn multiplicative_table(
    chi: &ChiWord,
    block_value: impl Fn(usize) -> Complex64,
) -> Result<PartitionTable, MomentError> {
    let mut t = PartitionTable::new(chi.clone());
    for p in enumerate_bnc(chi)? {
        let v: Complex64 = p.blocks().iter().map(|b| block_value(b.len())).product();
        t.insert(&p, BElement::scalar(1, v))?;
    }
    Ok(t)
}

fn validate_grouping(chi_hat: &ChiWord, sizes: &[usize]) -> Result<ChiWord, MomentError> {
    let n: usize = sizes.iter().sum();
    if n != chi_hat.len() || sizes.contains(&0) {
        return Err(MomentError::BadGrouping {
            expected: chi_hat.len(),
            got: n,
        });
    }
    let mut sides = Vec::with_capacity(sizes.len());
    let mut start = 1;
    for (g, &s) in sizes.iter().enumerate() {
        let end = start + s - 1;
        let final_group = g + 1 == sizes.len();
        let first = chi_hat.side(start);
        if !final_group && (start..=end).any(|k| chi_hat.side(k) != first) {
            return Err(MomentError::MixedGroup { group: g + 1 });
        }
        sides.push(if final_group {
            chi_hat.side(end)
        } else {
            first
        });
        start = end + 1;
    }
    Ok(ChiWord::new(sides)?)
}

/// The side word of the grouped entries.
pub fn grouped_chi(chi_hat: &ChiWord, sizes: &[usize]) -> Result<ChiWord, MomentError> {
    validate_grouping(chi_hat, sizes)
}

/// π ↦ π̂: each block V maps to the union of the groups it indexes.
pub fn hat_embed(
    pi: &BncPartition,
    sizes: &[usize],
    chi_hat: &ChiWord,
) -> Result<BncPartition, MomentError> {
    if pi.len() != sizes.len() {
        return Err(MomentError::OperandCount {
            expected: pi.len(),
            got: sizes.len(),
        });
    }
    validate_grouping(chi_hat, sizes)?;
    let mut raw = Vec::with_capacity(chi_hat.len());
    for (g, &s) in sizes.iter().enumerate() {
        raw.extend(std::iter::repeat_n(pi.partition().labels()[g], s));
    }
    Ok(BncPartition::new(
        chi_hat.clone(),
        Partition::from_labels(&raw),
    )?)
}

/// Both sides of the grouped-entry cumulant expansion.
#[derive(Debug, Clone)]
pub struct ProductExpansion {
    pub grouped: BElement,
    pub expanded: BElement,
    pub residual: f64,
    pub terms: usize,
}

/// Grouped cumulant κ_χ(Z₁⋯Z_{k(1)}, …) against Σ_{σ∨0̂=1̂} κ_σ(Z₁,…,Zₙ).
pub fn product_cumulant_expand<F: MomentFunctional + ?Sized>(
    f: &F,
    chi_hat: &ChiWord,
    sizes: &[usize],
    operands: &[Monomial],
) -> Result<ProductExpansion, MomentError> {
    let chi = validate_grouping(chi_hat, sizes)?;
    check_operands(f, chi_hat, operands)?;
    let mut grouped_ops = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        grouped_ops.push(Monomial::product(operands[start..start + s].iter()));
        start += s;
    }
    let grouped = cumulant_pi(f, &BncPartition::one(chi.clone()), &grouped_ops)?;

    let zero_hat = hat_embed(&BncPartition::zero(chi.clone()), sizes, chi_hat)?;
    let one_hat = BncPartition::one(chi_hat.clone());
    let kappa = cumulants_from_moments(&moment_table(f, chi_hat, operands)?)?;
    let mut expanded = BElement::zero(f.dim());
    let mut terms = 0;
    for sigma in enumerate_bnc(chi_hat)? {
        if sigma.join(&zero_hat)? == one_hat {
            expanded += kappa
                .get(&sigma)
                .ok_or_else(|| MomentError::IncompleteTable(sigma.to_string()))?;
            terms += 1;
        }
    }
    let residual = grouped.dist(&expanded);
    Ok(ProductExpansion {
        grouped,
        expanded,
        residual,
        terms,
    })
}

// ---------------------------------------------------------------------------
// Bi-freeness

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedCumulant {
    pub word: Vec<String>,
    pub chi: String,
    pub order: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifreeReport {
    pub families: Vec<String>,
    pub max_order: usize,
    pub tested: usize,
    pub max_residual: f64,
    pub pass: bool,
    /// The largest mixed cumulant found, if any word was tested.
    pub worst: Option<MixedCumulant>,
    pub entries: Vec<MixedCumulant>,
}

/// Options for [`bifree_test`].
#[derive(Debug, Clone, Default)]
pub struct BifreeOptions {
    pub tolerance: Tolerance,
    /// Multiply every operand by a random coefficient on its own face, which
    /// probes the amalgamated structure rather than plain words.
    pub decorate: bool,
    pub seed: u64,
}

/// Checks that every mixed cumulant up to `max_order` vanishes.
pub fn bifree_test<F: MomentFunctional + ?Sized>(
    f: &F,
    max_order: usize,
    opts: &BifreeOptions,
) -> Result<BifreeReport, MomentError> {
    if max_order > 8 {
        return Err(MomentError::OrderTooLarge(max_order));
    }
    let syms = f.symbols();
    if let Some(s) = syms.iter().find(|s| s.family.is_empty()) {
        return Err(MomentError::Unassigned(s.name.clone()));
    }
    let mut families: Vec<String> = syms.iter().map(|s| s.family.clone()).collect();
    families.sort();
    families.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let decorations: Vec<BElement> = (0..max_order)
        .map(|_| BElement::random(f.dim(), &mut rng))
        .collect();

    let mut words: Vec<Vec<usize>> = Vec::new();
    if families.len() > 1 {
        for n in 2..=max_order {
            let total = syms.len().pow(n as u32);
            for code in 0..total {
                let mut w = Vec::with_capacity(n);
                let mut c = code;
                for _ in 0..n {
                    w.push(c % syms.len());
                    c /= syms.len();
                }
                w.reverse();
                if w.iter().any(|&i| syms[i].family != syms[w[0]].family) {
                    words.push(w);
                }
            }
        }
    }

    let entries = words
        .par_iter()
        .map(|w| {
            let chi = ChiWord::new(w.iter().map(|&i| syms[i].side).collect())?;
            let ops: Vec<Monomial> = w
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let mut m = Monomial::gen(&syms[i].name);
                    if opts.decorate {
                        let b = decorations[k].clone();
                        m.push(match syms[i].side {
                            Side::Left => Factor::Lb(b),
                            Side::Right => Factor::Rb(b),
                        });
                    }
                    m
                })
                .collect();
            let kappa = cumulant_pi(f, &BncPartition::one(chi.clone()), &ops)?;
            Ok(MixedCumulant {
                word: w.iter().map(|&i| syms[i].name.clone()).collect(),
                chi: chi.to_string(),
                order: w.len(),
                norm: kappa.max_abs(),
            })
        })
        .collect::<Result<Vec<_>, MomentError>>()?;

    let worst = entries
        .iter()
        .max_by(|a, b| a.norm.total_cmp(&b.norm))
        .cloned();
    let max_residual = worst.as_ref().map_or(0.0, |w| w.norm);
    Ok(BifreeReport {
        families,
        max_order,
        tested: entries.len(),
        max_residual,
        pass: opts.tolerance.accepts(max_residual),
        worst,
        entries,
    })
}
