//! Conjugate variables, Fisher information and entropy for bi-free pairs,
//! together with the two-by-two matrix lift of a pair (x, y).
//!
//! Conjugate candidates are polynomials ξ in the model's generators; the
//! vector they stand for is ξ·1. Relations are checked through the model's
//! moment functional, so any [`MomentFunctional`] can host a candidate.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{E, PI};
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnc::{ChiWord, Side};
use crate::fock::{
    add_circular, make_scaled_circular_pair, standard_bisemicircular, FockError, FockModel,
};
use crate::moments::{
    Backing, Factor, GeneratorSymbol, MomentError, MomentFunctional, Monomial, Polynomial,
};
use crate::opalgebra::{AlgebraError, BElement, CPMap, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConjError {
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Fisher information evaluated to a non-finite value at t = {0}")]
    NonFinite(f64),
    #[error("candidate for {target} fails its relations (residual {residual:e})")]
    Residual { target: String, residual: f64 },
}

impl From<FockError> for ConjError {
    fn from(e: FockError) -> Self {
        ConjError::Moment(e.into())
    }
}

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// A proposed conjugate variable ξ·1 for `target` on `side`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateCandidate {
    pub target: String,
    pub side: Side,
    pub vector: Polynomial,
}

impl ConjugateCandidate {
    pub fn new(target: &str, side: Side, vector: Polynomial) -> Self {
        ConjugateCandidate {
            target: target.to_string(),
            side,
            vector,
        }
    }

    /// `c · name` as a candidate.
    pub fn scaled_generator(target: &str, side: Side, name: &str, c: f64) -> Self {
        Self::new(target, side, Polynomial::gen(name).scale(real(c)))
    }
}

/// Extra generators present on each face besides the target and B.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PresenceContext {
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl PresenceContext {
    pub fn new(left: &[&str], right: &[&str]) -> Self {
        PresenceContext {
            left: left.iter().map(|s| s.to_string()).collect(),
            right: right.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn factor_side<F: MomentFunctional + ?Sized>(f: &F, fac: &Factor) -> Result<Side, MomentError> {
    Ok(match fac {
        Factor::Gen(n) => f.lookup(n)?.side,
        Factor::Lb(_) => Side::Left,
        Factor::Rb(_) => Side::Right,
    })
}

/// Letters of the test words: the target, the context generators and, when
/// B is not scalar, L_b and R_b for every matrix unit b.
fn test_alphabet<F: MomentFunctional + ?Sized>(
    f: &F,
    target: &str,
    ctx: &PresenceContext,
) -> Result<Vec<Factor>, MomentError> {
    let mut names: Vec<&str> = vec![target];
    for (list, side) in [(&ctx.left, Side::Left), (&ctx.right, Side::Right)] {
        for n in list {
            let sym = f.lookup(n)?;
            if sym.side != side {
                return Err(MomentError::SideMismatch {
                    position: 0,
                    expected: side,
                });
            }
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    f.lookup(target)?;
    let mut out: Vec<Factor> = names.iter().map(|n| Factor::Gen(n.to_string())).collect();
    if f.dim() > 1 {
        for u in BElement::units(f.dim()) {
            out.push(Factor::Lb(u.clone()));
            out.push(Factor::Rb(u));
        }
    }
    Ok(out)
}

/// All words over `alphabet` of length at most `max_n`, the empty word
/// included.
fn words_up_to(alphabet: &[Factor], max_n: usize) -> Vec<Vec<Factor>> {
    let mut all = vec![Vec::new()];
    let mut layer: Vec<Vec<Factor>> = vec![Vec::new()];
    for _ in 0..max_n {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for w in &layer {
            for a in alphabet {
                let mut v = w.clone();
                v.push(a.clone());
                next.push(v);
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    all
}

/// Right-hand side of the conjugate relations for the word Z₁⋯Zₙ.
fn relation_rhs<F: MomentFunctional + ?Sized>(
    f: &F,
    word: &[Factor],
    target: &str,
    side: Side,
    eta: &CPMap,
) -> Result<Complex64, ConjError> {
    let sides = word
        .iter()
        .map(|fac| factor_side(f, fac))
        .collect::<Result<Vec<_>, _>>()?;
    let mut acc = Complex64::default();
    for (k, fac) in word.iter().enumerate() {
        if !matches!(fac, Factor::Gen(n) if n == target) {
            continue;
        }
        let mut inner = Monomial::empty();
        let mut outer = Monomial::empty();
        for (m, z) in word.iter().enumerate() {
            if m == k {
                continue;
            }
            if m > k && sides[m] == side {
                inner.push(z.clone());
            } else {
                outer.push(z.clone());
            }
        }
        let b = eta.apply(&f.moment(&inner)?)?;
        outer.push(match side {
            Side::Left => Factor::Lb(b),
            Side::Right => Factor::Rb(b),
        });
        acc += f.tau(&outer)?;
    }
    Ok(acc)
}

/// Largest violation of the conjugate relations of `xi` over all test words
/// of length at most `max_n`.
pub fn conj_residual<F: MomentFunctional + ?Sized>(
    f: &F,
    xi: &ConjugateCandidate,
    eta: &CPMap,
    ctx: &PresenceContext,
    max_n: usize,
) -> Result<f64, ConjError> {
    if max_n > 8 {
        return Err(MomentError::OrderTooLarge(max_n).into());
    }
    eta.apply(&BElement::identity(f.dim()))?;
    if f.lookup(&xi.target)?.side != xi.side {
        return Err(MomentError::SideMismatch {
            position: 0,
            expected: xi.side,
        }
        .into());
    }
    let alphabet = test_alphabet(f, &xi.target, ctx)?;
    let words = words_up_to(&alphabet, max_n);
    let errs = words
        .par_iter()
        .map(|w| {
            let lhs = f
                .moment_poly(&Monomial::new(w.clone()), &xi.vector)?
                .trace_d();
            let rhs = relation_rhs(f, w, &xi.target, xi.side, eta)?;
            Ok((lhs - rhs).norm())
        })
        .collect::<Result<Vec<f64>, ConjError>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// ‖ξ‖² = τ(ξ*ξ).
pub fn norm_sq<F: MomentFunctional + ?Sized>(f: &F, xi: &Polynomial) -> Result<f64, ConjError> {
    let p = xi.adjoint(f)?.mul(xi);
    Ok(f.moment_poly(&Monomial::empty(), &p)?.trace_d().re)
}

/// Σ ‖ξ_i‖² over the supplied candidates.
pub fn fisher_info<F: MomentFunctional + ?Sized>(
    f: &F,
    xis: &[ConjugateCandidate],
) -> Result<f64, ConjError> {
    xis.iter().map(|x| norm_sq(f, &x.vector)).sum()
}

/// Like [`fisher_info`], with a missing conjugate variable making the
/// information infinite.
pub fn fisher_info_or_infinite<F: MomentFunctional + ?Sized>(
    f: &F,
    xis: &[Option<ConjugateCandidate>],
) -> Result<f64, ConjError> {
    let mut acc = 0.0;
    for x in xis {
        match x {
            Some(x) => acc += norm_sq(f, &x.vector)?,
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(acc)
}

/// τ(Σ Z*Z) over the listed generators.
pub fn second_moment_sum<F: MomentFunctional + ?Sized>(
    f: &F,
    names: &[&str],
) -> Result<f64, ConjError> {
    let mut acc = 0.0;
    for n in names {
        let adj = f.lookup(n)?.adjoint_name();
        acc += f.tau(&Monomial::from_names(&[adj.as_str(), n]))?.re;
    }
    Ok(acc)
}

/// Least-squares conjugate candidate in the span of generator words of
/// length at most `basis_len`, fitted to the relations over test words of
/// length at most `max_n`. Returns the candidate and its residual.
pub fn solve_conjugate<F: MomentFunctional + ?Sized>(
    f: &F,
    target: &str,
    side: Side,
    eta: &CPMap,
    ctx: &PresenceContext,
    basis_len: usize,
    max_n: usize,
) -> Result<(ConjugateCandidate, f64), ConjError> {
    let alphabet = test_alphabet(f, target, ctx)?;
    let gens: Vec<Factor> = alphabet
        .iter()
        .filter(|a| matches!(a, Factor::Gen(_)))
        .cloned()
        .collect();
    let basis = words_up_to(&gens, basis_len);
    let tests = words_up_to(&alphabet, max_n);
    let rows = tests
        .par_iter()
        .map(|w| {
            let prefix = Monomial::new(w.clone());
            let row = basis
                .iter()
                .map(|m| Ok(f.tau(&prefix.concat(&Monomial::new(m.clone())))?))
                .collect::<Result<Vec<Complex64>, ConjError>>()?;
            Ok((row, relation_rhs(f, w, target, side, eta)?))
        })
        .collect::<Result<Vec<_>, ConjError>>()?;
    let a = DMatrix::from_fn(rows.len(), basis.len(), |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-10)
        .map_err(|e| ConjError::InvalidParameter(e.to_string()))?;
    let terms = basis
        .into_iter()
        .zip(c.iter())
        .filter(|(_, c)| c.norm() > 1e-12)
        .map(|(m, c)| (*c, Monomial::new(m)))
        .collect();
    let xi = ConjugateCandidate::new(target, side, Polynomial::from_terms(terms));
    let residual = conj_residual(f, &xi, eta, ctx, max_n)?;
    Ok((xi, residual))
}

// ---------------------------------------------------------------------------
// Matrix lift

/// The flip map diag(a₂₂, a₁₁) on M₂.
pub fn eta_flip() -> CPMap {
    CPMap::flip()
}

type LiftParts = Vec<(String, BElement)>;

/// Operators Σ aᵢ ⊗ Mᵢ built from a scalar model, with the matrix placed on
/// the operator's own face of M_d ⊗ M_d^op.
pub struct LiftedModel<F: MomentFunctional> {
    base: F,
    d: usize,
    symbols: Vec<GeneratorSymbol>,
    parts: HashMap<String, LiftParts>,
    cache: RwLock<HashMap<Vec<String>, Complex64>>,
}

impl<F: MomentFunctional> LiftedModel<F> {
    pub fn new(base: F, d: usize) -> Result<Self, ConjError> {
        if base.dim() != 1 {
            return Err(AlgebraError::DimensionMismatch {
                expected: 1,
                got: base.dim(),
            }
            .into());
        }
        if d == 0 {
            return Err(ConjError::InvalidParameter("d must be at least 1".into()));
        }
        Ok(LiftedModel {
            base,
            d,
            symbols: Vec::new(),
            parts: HashMap::new(),
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// X = x ⊗ E₁₂ + x* ⊗ E₂₁ on the left and Y likewise from y on the
    /// right, both self-adjoint.
    pub fn lift_pair(base: F, x: &str, y: &str) -> Result<Self, ConjError> {
        let x_adj = base.lookup(x)?.adjoint_name();
        let y_adj = base.lookup(y)?.adjoint_name();
        let e12 = BElement::unit(2, 1, 2);
        let e21 = BElement::unit(2, 2, 1);
        let mut m = LiftedModel::new(base, 2)?;
        m.add_symbol(
            GeneratorSymbol::self_adjoint("X", Side::Left, "X"),
            vec![(x.to_string(), e12.clone()), (x_adj, e21.clone())],
        )?;
        m.add_symbol(
            GeneratorSymbol::self_adjoint("Y", Side::Right, "Y"),
            vec![(y.to_string(), e12), (y_adj, e21)],
        )?;
        Ok(m)
    }

    pub fn add_symbol(&mut self, sym: GeneratorSymbol, parts: LiftParts) -> Result<(), ConjError> {
        if self.parts.contains_key(&sym.name) {
            return Err(ConjError::InvalidParameter(format!(
                "symbol {} is already defined",
                sym.name
            )));
        }
        for (name, m) in &parts {
            let b = self.base.lookup(name)?;
            if b.side != sym.side {
                return Err(MomentError::SideMismatch {
                    position: 0,
                    expected: sym.side,
                }
                .into());
            }
            m.check_dim(self.d)?;
        }
        self.parts.insert(sym.name.clone(), parts);
        self.symbols.push(sym);
        Ok(())
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    fn parts_of(&self, name: &str) -> Result<&LiftParts, MomentError> {
        self.parts
            .get(name)
            .ok_or_else(|| MomentError::UnknownSymbol(name.to_string()))
    }

    fn base_moment(&self, names: &[String]) -> Result<Complex64, MomentError> {
        if let Some(v) = self.cache.read().expect("cache lock").get(names) {
            return Ok(*v);
        }
        let v = self
            .base
            .moment(&Monomial::from_names(names))?
            .as_scalar()
            .ok_or(AlgebraError::DimensionMismatch {
                expected: 1,
                got: self.base.dim(),
            })?;
        self.cache
            .write()
            .expect("cache lock")
            .insert(names.to_vec(), v);
        Ok(v)
    }

    /// E of a word of lifted generators by expanding every matrix into
    /// matrix units and multiplying the units in χ-order.
    pub fn moment_by_units(&self, word: &Monomial) -> Result<BElement, MomentError> {
        let d = self.d;
        let mut entries: Vec<Vec<(String, usize, usize, Complex64)>> = Vec::new();
        let mut sides = Vec::new();
        for fac in word.factors() {
            let Factor::Gen(name) = fac else {
                return Err(MomentError::Unsupported(
                    "coefficient letters are not expanded into units".into(),
                ));
            };
            sides.push(self.lookup(name)?.side);
            let mut list = Vec::new();
            for (base, m) in self.parts_of(name)? {
                for i in 0..d {
                    for j in 0..d {
                        let c = m.entry(i, j);
                        if c != Complex64::default() {
                            list.push((base.clone(), i, j, c));
                        }
                    }
                }
            }
            entries.push(list);
        }
        if entries.is_empty() {
            return Ok(BElement::identity(d));
        }
        let order = ChiWord::new(sides)?.s_chi();
        let n = entries.len();
        let mut acc = DMatrix::<Complex64>::zeros(d, d);
        let mut choice = vec![0usize; n];
        loop {
            let picked: Vec<&(String, usize, usize, Complex64)> =
                (0..n).map(|k| &entries[k][choice[k]]).collect();
            let chained = order
                .windows(2)
                .all(|w| picked[w[0] - 1].2 == picked[w[1] - 1].1);
            if chained {
                let names: Vec<String> = picked.iter().map(|p| p.0.clone()).collect();
                let coef: Complex64 = picked.iter().map(|p| p.3).product();
                let i = picked[order[0] - 1].1;
                let j = picked[order[n - 1] - 1].2;
                acc[(i, j)] += coef * self.base_moment(&names)?;
            }
            // advance the mixed-radix counter
            let mut k = 0;
            loop {
                if k == n {
                    return Ok(BElement::from_matrix(acc)?);
                }
                choice[k] += 1;
                if choice[k] < entries[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }
}

struct LiftState {
    names: Vec<String>,
    left: BElement,
    right: BElement,
}

impl<F: MomentFunctional> MomentFunctional for LiftedModel<F> {
    fn dim(&self) -> usize {
        self.d
    }

    fn symbols(&self) -> &[GeneratorSymbol] {
        &self.symbols
    }

    fn backing(&self) -> Backing {
        Backing::MatrixLift
    }

    fn moment(&self, word: &Monomial) -> Result<BElement, MomentError> {
        let d = self.d;
        let mut states = vec![LiftState {
            names: Vec::new(),
            left: BElement::identity(d),
            right: BElement::identity(d),
        }];
        for fac in word.factors() {
            match fac {
                Factor::Lb(b) => {
                    b.check_dim(d)?;
                    for s in &mut states {
                        s.left = &s.left * b;
                    }
                }
                Factor::Rb(b) => {
                    b.check_dim(d)?;
                    for s in &mut states {
                        s.right = b * &s.right;
                    }
                }
                Factor::Gen(name) => {
                    let side = self.lookup(name)?.side;
                    let parts = self.parts_of(name)?;
                    let mut next = Vec::with_capacity(states.len() * parts.len());
                    for s in &states {
                        for (base, m) in parts {
                            let (left, right) = match side {
                                Side::Left => (&s.left * m, s.right.clone()),
                                Side::Right => (s.left.clone(), m * &s.right),
                            };
                            if left.max_abs() == 0.0 || right.max_abs() == 0.0 {
                                continue;
                            }
                            let mut names = s.names.clone();
                            names.push(base.clone());
                            next.push(LiftState { names, left, right });
                        }
                    }
                    states = next;
                }
            }
            states.retain(|s| s.left.max_abs() != 0.0 && s.right.max_abs() != 0.0);
        }
        let mut acc = BElement::zero(d);
        for s in &states {
            let phi = self.base_moment(&s.names)?;
            acc += &(&s.left * &s.right).scale(phi);
        }
        Ok(acc)
    }
}

/// Power pattern alternating 1 and * along the χ-order; `start_plain`
/// selects which of the two patterns.
fn alternating_word<F: MomentFunctional + ?Sized>(
    base: &F,
    x: &str,
    y: &str,
    chi: &ChiWord,
    start_plain: bool,
) -> Result<Vec<String>, MomentError> {
    let x_adj = base.lookup(x)?.adjoint_name();
    let y_adj = base.lookup(y)?.adjoint_name();
    let inv = chi.s_chi_inv();
    Ok((1..=chi.len())
        .map(|k| {
            let plain = (inv[k - 1] % 2 == 1) == start_plain;
            match (chi.side(k), plain) {
                (Side::Left, true) => x.to_string(),
                (Side::Left, false) => x_adj.clone(),
                (Side::Right, true) => y.to_string(),
                (Side::Right, false) => y_adj.clone(),
            }
        })
        .collect())
}

/// τ₂ of the lifted word with faces `chi` (X on the left, Y on the right)
/// by the parity law: zero for odd length, otherwise the mean of the two
/// alternating-power moments of the base.
pub fn parity_tau<F: MomentFunctional + ?Sized>(
    base: &F,
    x: &str,
    y: &str,
    chi: &ChiWord,
) -> Result<Complex64, MomentError> {
    if chi.len() % 2 == 1 {
        return Ok(Complex64::default());
    }
    let p = alternating_word(base, x, y, chi, true)?;
    let q = alternating_word(base, x, y, chi, false)?;
    let phi_p = base.tau(&Monomial::from_names(&p))?;
    let phi_q = base.tau(&Monomial::from_names(&q))?;
    Ok((phi_p + phi_q) * 0.5)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AafReport {
    pub max_n: usize,
    pub tested: usize,
    pub max_discrepancy: f64,
    pub pass: bool,
    /// χ-word of the largest discrepancy.
    pub worst: Option<String>,
}

/// Compares the two alternating-power moments for every even length up to
/// `max_n` and every χ.
pub fn aaf_check<F: MomentFunctional + ?Sized>(
    base: &F,
    x: &str,
    y: &str,
    max_n: usize,
    tol: Tolerance,
) -> Result<AafReport, MomentError> {
    if max_n > 8 {
        return Err(MomentError::OrderTooLarge(max_n));
    }
    let mut tested = 0;
    let mut worst: Option<(f64, String)> = None;
    for n in (2..=max_n).step_by(2) {
        for code in 0..(1usize << n) {
            let chi = ChiWord::new(
                (0..n)
                    .map(|k| {
                        if code >> (n - 1 - k) & 1 == 0 {
                            Side::Left
                        } else {
                            Side::Right
                        }
                    })
                    .collect(),
            )?;
            let p = alternating_word(base, x, y, &chi, true)?;
            let q = alternating_word(base, x, y, &chi, false)?;
            let gap = (base.tau(&Monomial::from_names(&p))?
                - base.tau(&Monomial::from_names(&q))?)
            .norm();
            tested += 1;
            if worst.as_ref().is_none_or(|w| gap > w.0) {
                worst = Some((gap, chi.to_string()));
            }
        }
    }
    let max_discrepancy = worst.as_ref().map_or(0.0, |w| w.0);
    Ok(AafReport {
        max_n,
        tested,
        max_discrepancy,
        pass: tol.accepts(max_discrepancy),
        worst: worst.map(|w| w.1),
    })
}

// ---------------------------------------------------------------------------
// Perturbation law and entropy

/// The lower bound K₂²/(K₁ + K₂t) on the Fisher information of the
/// semicircular perturbation at time t, attained by bi-semicircular families.
pub fn h_closed_form(t: f64, k1: f64, k2: f64) -> Result<f64, ConjError> {
    if t < 0.0 || k1 < 0.0 || k2 <= 0.0 {
        return Err(ConjError::InvalidParameter(format!(
            "need t >= 0, K1 >= 0, K2 > 0 (got t={t}, K1={k1}, K2={k2})"
        )));
    }
    let denom = k1 + k2 * t;
    if denom == 0.0 {
        return Err(ConjError::InvalidParameter("K1 + K2 t vanishes".into()));
    }
    Ok(k2 * k2 / denom)
}

/// Constants of the two-sided bound on h(t), plus the K of the entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBounds {
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl TailBounds {
    /// The constants of a family whose covariances all have τ(η(1)) = 1.
    pub fn unit_covariances(count: usize, second_moment: f64) -> Self {
        let c = count as f64;
        TailBounds {
            k: c,
            k1: second_moment,
            k2: c,
            k3: c,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// ∫₀^{t_max} of the integrand.
    pub integral: f64,
    pub tail_lower: f64,
    pub tail_upper: f64,
    pub max_abs_integrand: f64,
    pub t_max: f64,
    pub steps: usize,
}

impl EntropyEstimate {
    pub fn bracket_width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// ∫_{T}^∞ (K/(1+t) − h(t)) dt with h replaced by each of its bounds.
fn tail_bracket(b: &TailBounds, t_max: f64) -> (f64, f64) {
    let same = |a: f64, c: f64| (a - c).abs() <= 1e-12 * a.abs().max(1.0);
    // h at its lower bound K₂/(K₁/K₂ + t)
    let upper = if same(b.k, b.k2) {
        b.k * ((t_max + b.k1 / b.k2) / (t_max + 1.0)).ln()
    } else if b.k > b.k2 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    // h at its upper bound K₃/t
    let lower = if same(b.k, b.k3) {
        b.k * (t_max / (t_max + 1.0)).ln()
    } else if b.k > b.k3 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    (lower.min(upper), lower.max(upper))
}

/// (K/2)ln(2πe) + ½∫₀^∞ (K/(1+t) − Φ*(t)) dt, with composite Simpson over
/// u = ln(1+t) on [0, t_max] and the tail bracketed by the bounds on h.
pub fn entropy_chi_star(
    fisher_of_t: impl Fn(f64) -> Result<f64, ConjError> + Sync,
    bounds: &TailBounds,
    t_max: f64,
    steps: usize,
) -> Result<EntropyEstimate, ConjError> {
    if t_max <= 0.0 || steps < 2 {
        return Err(ConjError::InvalidParameter(
            "need t_max > 0 and at least 2 steps".into(),
        ));
    }
    let steps = steps + steps % 2;
    let u_max = t_max.ln_1p();
    let h = u_max / steps as f64;
    let samples = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let u = i as f64 * h;
            let t = u.exp_m1();
            let phi = fisher_of_t(t)?;
            if !phi.is_finite() {
                return Err(ConjError::NonFinite(t));
            }
            let integrand = bounds.k / (1.0 + t) - phi;
            Ok((integrand, integrand * (1.0 + t)))
        })
        .collect::<Result<Vec<(f64, f64)>, ConjError>>()?;
    let mut integral = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += w * s.1;
    }
    integral *= h / 3.0;
    let max_abs_integrand = samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max);
    let (tail_lower, tail_upper) = tail_bracket(bounds, t_max);
    let base = 0.5 * bounds.k * (2.0 * PI * E).ln();
    let lower = base + 0.5 * (integral + tail_lower);
    let upper = base + 0.5 * (integral + tail_upper);
    Ok(EntropyEstimate {
        value: 0.5 * (lower + upper),
        lower,
        upper,
        integral,
        tail_lower,
        tail_upper,
        max_abs_integrand,
        t_max,
        steps,
    })
}

/// (K/2)ln(2πe K₁/K), the largest entropy a family with these constants
/// can have.
pub fn max_entropy_bound(k: f64, k1: f64) -> f64 {
    0.5 * k * (2.0 * PI * E * k1 / k).ln()
}

// ---------------------------------------------------------------------------
// Experiments

/// Summary of one experiment. `details` carries experiment-specific numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
    pub max_residual: f64,
    #[serde(flatten)]
    pub details: BTreeMap<String, f64>,
}

/// √v·S1 + √t·S2 as the symbol "z", with its conjugate variable
/// z/(v + t).
pub fn perturbed_semicircular(
    v: f64,
    t: f64,
) -> Result<(FockModel, ConjugateCandidate), ConjError> {
    if v <= 0.0 || t < 0.0 {
        return Err(ConjError::InvalidParameter(format!(
            "need v > 0 and t >= 0 (got v={v}, t={t})"
        )));
    }
    let mut m = standard_bisemicircular(2, 0);
    m.add_combination(
        GeneratorSymbol::self_adjoint("z", Side::Left, "z"),
        &[(real(v.sqrt()), "S1"), (real(t.sqrt()), "S2")],
    )?;
    m.retain_symbols(&["z"]);
    let xi = ConjugateCandidate::scaled_generator("z", Side::Left, "z", 1.0 / (v + t));
    Ok((m, xi))
}

/// Φ* of √(1+t)-scaled standard semicirculars through a verified conjugate
/// variable, against the closed form, at each t.
pub fn perturbation_check(
    ts: &[f64],
    max_n: usize,
) -> Result<Vec<(f64, f64, f64, f64)>, ConjError> {
    ts.iter()
        .map(|&t| {
            let (m, xi) = perturbed_semicircular(1.0, t)?;
            let res = conj_residual(
                &m,
                &xi,
                &CPMap::identity(1),
                &PresenceContext::default(),
                max_n,
            )?;
            let phi = fisher_info(&m, std::slice::from_ref(&xi))?;
            Ok((t, phi, h_closed_form(t, 1.0, 1.0)?, res))
        })
        .collect()
}

/// Candidates for a circular pair named cl, cl*, cr, cr* whose operators
/// have variance `var`: each conjugate variable is the adjoint over `var`.
fn circular_candidates(var: f64) -> Vec<(ConjugateCandidate, PresenceContext)> {
    let c = 1.0 / var;
    vec![
        (
            ConjugateCandidate::scaled_generator("cl", Side::Left, "cl*", c),
            PresenceContext::new(&["cl*"], &["cr", "cr*"]),
        ),
        (
            ConjugateCandidate::scaled_generator("cl*", Side::Left, "cl", c),
            PresenceContext::new(&["cl"], &["cr", "cr*"]),
        ),
        (
            ConjugateCandidate::scaled_generator("cr", Side::Right, "cr*", c),
            PresenceContext::new(&["cl", "cl*"], &["cr*"]),
        ),
        (
            ConjugateCandidate::scaled_generator("cr*", Side::Right, "cr", c),
            PresenceContext::new(&["cl", "cl*"], &["cr"]),
        ),
    ]
}

fn lifted_candidates(var: f64) -> Vec<(ConjugateCandidate, PresenceContext)> {
    let c = 1.0 / var;
    vec![
        (
            ConjugateCandidate::scaled_generator("X", Side::Left, "X", c),
            PresenceContext::new(&[], &["Y"]),
        ),
        (
            ConjugateCandidate::scaled_generator("Y", Side::Right, "Y", c),
            PresenceContext::new(&["X"], &[]),
        ),
    ]
}

/// Verifies every candidate and returns (Φ*, largest residual).
fn verified_fisher<F: MomentFunctional + ?Sized>(
    f: &F,
    cands: &[(ConjugateCandidate, PresenceContext)],
    eta: &CPMap,
    max_n: usize,
) -> Result<(f64, f64), ConjError> {
    let mut worst: f64 = 0.0;
    let mut phi = 0.0;
    for (xi, ctx) in cands {
        worst = worst.max(conj_residual(f, xi, eta, ctx, max_n)?);
        phi += norm_sq(f, &xi.vector)?;
    }
    Ok((phi, worst))
}

/// Settings for the Fisher minimization experiment.
#[derive(Debug, Clone, Copy)]
pub struct FisherExperiment {
    /// Multiplies both operators of the circular pair.
    pub scale: f64,
    /// Longest test word for the scalar candidates.
    pub scalar_max_n: usize,
    /// Longest test word for the lifted candidates, where B = M₂ enlarges
    /// the alphabet.
    pub lifted_max_n: usize,
    pub tolerance: Tolerance,
}

impl Default for FisherExperiment {
    fn default() -> Self {
        FisherExperiment {
            scale: 1.0,
            scalar_max_n: 6,
            lifted_max_n: 4,
            tolerance: Tolerance::default(),
        }
    }
}

/// Fisher information of the circular pair against twice that of its
/// matrix lift under the flip map.
pub fn fisher_minimization_experiment(
    cfg: &FisherExperiment,
) -> Result<ExperimentReport, ConjError> {
    let var = cfg.scale * cfg.scale;
    let base = make_scaled_circular_pair(cfg.scale);
    let (lhs, res_l) = verified_fisher(
        &base,
        &circular_candidates(var),
        &CPMap::identity(1),
        cfg.scalar_max_n,
    )?;
    let lifted = LiftedModel::lift_pair(&base, "cl", "cr")?;
    let (rhs, res_r) = verified_fisher(
        &lifted,
        &lifted_candidates(var),
        &eta_flip(),
        cfg.lifted_max_n,
    )?;
    let second = second_moment_sum(&lifted, &["X", "Y"])?;
    let k2: f64 = 2.0 * eta_flip().apply(&BElement::identity(2))?.trace_d().re;
    let ratio = lhs / rhs;
    let max_residual = res_l.max(res_r);
    let cramer_rao = rhs * second;
    let mut details = BTreeMap::new();
    details.insert("scale".into(), cfg.scale);
    details.insert("cramer_rao_product".into(), cramer_rao);
    details.insert("k2_squared".into(), k2 * k2);
    Ok(ExperimentReport {
        experiment: "circular-min".into(),
        lhs,
        rhs,
        ratio,
        pass: (ratio - 2.0).abs() <= 1e-6
            && cfg.tolerance.accepts(max_residual)
            && (cramer_rao - k2 * k2).abs() <= 1e-6,
        max_residual,
        details,
    })
}

/// Circular pair perturbed by an independent circular pair scaled by √t,
/// exposed under the names cl, cl*, cr, cr*.
pub fn perturbed_circular_pair(t: f64) -> Result<FockModel, ConjError> {
    if t < 0.0 {
        return Err(ConjError::InvalidParameter(format!(
            "need t >= 0 (got {t})"
        )));
    }
    let mut m = standard_bisemicircular(4, 4);
    add_circular(&mut m, "a", Side::Left, ("S1", "S2"), 1.0, "c_l")?;
    add_circular(&mut m, "a2", Side::Left, ("S3", "S4"), 1.0, "c_l")?;
    add_circular(&mut m, "b", Side::Right, ("D1", "D2"), 1.0, "c_r")?;
    add_circular(&mut m, "b2", Side::Right, ("D3", "D4"), 1.0, "c_r")?;
    let s = real(t.sqrt());
    for (name, side, fam, (p, q)) in [
        ("cl", Side::Left, "c_l", ("a", "a2")),
        ("cr", Side::Right, "c_r", ("b", "b2")),
    ] {
        let [sym, star] = GeneratorSymbol::pair(name, side, fam);
        m.add_combination(sym, &[(ONE, p), (s, q)])?;
        let (ps, qs) = (format!("{p}*"), format!("{q}*"));
        m.add_combination(star, &[(ONE, ps.as_str()), (s, qs.as_str())])?;
    }
    m.retain_symbols(&["cl", "cl*", "cr", "cr*"]);
    Ok(m)
}

/// Settings for the entropy experiments.
#[derive(Debug, Clone, Copy)]
pub struct EntropyExperiment {
    pub t_max: f64,
    pub steps: usize,
    /// Times at which the perturbed conjugate variables are re-verified.
    pub check_times: [f64; 2],
    pub scalar_max_n: usize,
    pub lifted_max_n: usize,
    pub tolerance: Tolerance,
    /// Variance used by the maximum-entropy experiment.
    pub variance: f64,
}

impl Default for EntropyExperiment {
    fn default() -> Self {
        EntropyExperiment {
            t_max: 1e5,
            steps: 200,
            check_times: [0.0, 1.0],
            scalar_max_n: 4,
            lifted_max_n: 3,
            tolerance: Tolerance::default(),
            variance: 2.0,
        }
    }
}

fn entropy_details(e: &EntropyEstimate, prefix: &str, details: &mut BTreeMap<String, f64>) {
    details.insert(format!("{prefix}lower"), e.lower);
    details.insert(format!("{prefix}upper"), e.upper);
    details.insert(format!("{prefix}bracket"), e.bracket_width());
    details.insert(format!("{prefix}max_abs_integrand"), e.max_abs_integrand);
}

/// Entropy of a semicircular of the configured variance against the
/// maximum-entropy bound, which it attains. Variance 1 gives ½ln(2πe).
pub fn semicircular_entropy_experiment(
    cfg: &EntropyExperiment,
) -> Result<ExperimentReport, ConjError> {
    let v = cfg.variance;
    let mut max_residual: f64 = 0.0;
    for &t in &cfg.check_times {
        let (m, xi) = perturbed_semicircular(v, t)?;
        max_residual = max_residual.max(conj_residual(
            &m,
            &xi,
            &CPMap::identity(1),
            &PresenceContext::default(),
            cfg.scalar_max_n,
        )?);
    }
    let bounds = TailBounds::unit_covariances(1, v);
    let est = entropy_chi_star(
        |t| {
            let (m, xi) = perturbed_semicircular(v, t)?;
            norm_sq(&m, &xi.vector)
        },
        &bounds,
        cfg.t_max,
        cfg.steps,
    )?;
    let bound = max_entropy_bound(bounds.k, bounds.k1);
    let mut details = BTreeMap::new();
    details.insert("variance".into(), v);
    entropy_details(&est, "", &mut details);
    Ok(ExperimentReport {
        experiment: "semicircular-max".into(),
        lhs: est.value,
        rhs: bound,
        ratio: est.value / bound,
        pass: (est.value - bound).abs() <= 1e-4
            && est.bracket_width() <= 1e-4
            && cfg.tolerance.accepts(max_residual),
        max_residual,
        details,
    })
}

/// Entropy of the circular pair against twice that of its matrix lift.
pub fn circular_entropy_experiment(cfg: &EntropyExperiment) -> Result<ExperimentReport, ConjError> {
    let mut max_residual: f64 = 0.0;
    for &t in &cfg.check_times {
        let base = perturbed_circular_pair(t)?;
        let var = 1.0 + t;
        let (_, r) = verified_fisher(
            &base,
            &circular_candidates(var),
            &CPMap::identity(1),
            cfg.scalar_max_n,
        )?;
        let lifted = LiftedModel::lift_pair(&base, "cl", "cr")?;
        let (_, rl) = verified_fisher(
            &lifted,
            &lifted_candidates(var),
            &eta_flip(),
            cfg.lifted_max_n,
        )?;
        max_residual = max_residual.max(r).max(rl);
    }
    let scalar = entropy_chi_star(
        |t| {
            let base = perturbed_circular_pair(t)?;
            let c: Vec<ConjugateCandidate> = circular_candidates(1.0 + t)
                .into_iter()
                .map(|c| c.0)
                .collect();
            fisher_info(&base, &c)
        },
        &TailBounds::unit_covariances(4, 4.0),
        cfg.t_max,
        cfg.steps,
    )?;
    let lifted = entropy_chi_star(
        |t| {
            let lifted = LiftedModel::lift_pair(perturbed_circular_pair(t)?, "cl", "cr")?;
            let c: Vec<ConjugateCandidate> = lifted_candidates(1.0 + t)
                .into_iter()
                .map(|c| c.0)
                .collect();
            fisher_info(&lifted, &c)
        },
        &TailBounds::unit_covariances(2, 2.0),
        cfg.t_max,
        cfg.steps,
    )?;
    let expected = 2.0 * (2.0 * PI * E).ln();
    let mut details = BTreeMap::new();
    details.insert("expected".into(), expected);
    entropy_details(&scalar, "lhs_", &mut details);
    entropy_details(&lifted, "rhs_", &mut details);
    let ok_brackets = scalar.bracket_width() <= 1e-4 && lifted.bracket_width() <= 1e-4;
    Ok(ExperimentReport {
        experiment: "circular-pair".into(),
        lhs: scalar.value,
        rhs: lifted.value,
        ratio: scalar.value / lifted.value,
        pass: ok_brackets
            && (scalar.value - 2.0 * lifted.value).abs() <= 1e-4
            && (scalar.value - expected).abs() <= 1e-4
            && cfg.tolerance.accepts(max_residual),
        max_residual,
        details,
    })
}
