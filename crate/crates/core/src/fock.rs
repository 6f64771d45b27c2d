//! Exact finite-depth full Fock space F(B, K) over B = M_d(ℂ) with left and
//! right creation and annihilation operators.
//!
//! A vector is a finite sum of basis words b₀ Z_{k₁} b₁ ⋯ Z_{k_m} b_m. Every
//! elementary operator sends a basis word to at most one basis word, so the
//! sum is kept as a list of words and never expanded into tensors.

use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::bnc::Side;
use crate::moments::{Backing, Factor, GeneratorSymbol, MomentError, MomentFunctional, Monomial};
use crate::opalgebra::{AlgebraError, BElement, CPMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("index {0} is not in the index set")]
    UnknownIndex(usize),
    #[error("creation would exceed the truncation depth {0}")]
    TruncationOverflow(usize),
    #[error("symbol {0:?} is already defined")]
    DuplicateSymbol(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

impl From<FockError> for MomentError {
    fn from(e: FockError) -> Self {
        match e {
            FockError::Algebra(a) => MomentError::Algebra(a),
            other => MomentError::Backend(other.to_string()),
        }
    }
}

/// Elementary operators on F(B, K).
#[derive(Debug, Clone, PartialEq)]
pub enum FockFactor {
    /// l_k
    Create(usize),
    /// l*_k
    Annihilate(usize),
    /// r_k
    RightCreate(usize),
    /// r*_k
    RightAnnihilate(usize),
    /// L_b
    LeftMul(BElement),
    /// R_b
    RightMul(BElement),
}

impl FockFactor {
    pub fn side(&self) -> Side {
        match self {
            FockFactor::Create(_) | FockFactor::Annihilate(_) | FockFactor::LeftMul(_) => {
                Side::Left
            }
            _ => Side::Right,
        }
    }
}

/// b₀ Z_{k₁} b₁ ⋯ Z_{k_m} b_m.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisWord {
    coeffs: Vec<BElement>,
    indices: Vec<usize>,
}

impl BasisWord {
    pub fn new(coeffs: Vec<BElement>, indices: Vec<usize>) -> Result<Self, FockError> {
        if coeffs.len() != indices.len() + 1 {
            return Err(FockError::Algebra(AlgebraError::DimensionMismatch {
                expected: indices.len() + 1,
                got: coeffs.len(),
            }));
        }
        let d = coeffs[0].dim();
        for c in &coeffs {
            c.check_dim(d)?;
        }
        Ok(BasisWord { coeffs, indices })
    }

    pub fn depth(&self) -> usize {
        self.indices.len()
    }

    pub fn coeffs(&self) -> &[BElement] {
        &self.coeffs
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// A finite sum of basis words.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    d: usize,
    terms: Vec<BasisWord>,
}

impl FockVector {
    pub fn zero(d: usize) -> Self {
        FockVector { d, terms: vec![] }
    }

    /// The vacuum 1_B.
    pub fn vacuum(d: usize) -> Self {
        Self::from_b(BElement::identity(d))
    }

    /// A depth-0 vector b.
    pub fn from_b(b: BElement) -> Self {
        FockVector {
            d: b.dim(),
            terms: vec![BasisWord {
                coeffs: vec![b],
                indices: vec![],
            }],
        }
    }

    pub fn from_words(d: usize, terms: Vec<BasisWord>) -> Result<Self, FockError> {
        for t in &terms {
            t.coeffs[0].check_dim(d)?;
        }
        Ok(FockVector { d, terms })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &[BasisWord] {
        &self.terms
    }

    pub fn max_depth(&self) -> usize {
        self.terms.iter().map(|t| t.depth()).max().unwrap_or(0)
    }

    /// The projection p onto depth 0.
    pub fn project(&self) -> BElement {
        let mut acc = BElement::zero(self.d);
        for t in self.terms.iter().filter(|t| t.depth() == 0) {
            acc += &t.coeffs[0];
        }
        acc
    }

    pub fn add(&mut self, other: FockVector) {
        self.terms.extend(other.terms);
    }

    pub fn scale(&mut self, c: Complex64) {
        for t in &mut self.terms {
            t.coeffs[0].scale_in_place(c);
        }
    }

    /// Combines words that differ only in b₀. Over scalars every coefficient
    /// is first moved into b₀.
    pub fn compress(&mut self) {
        let d = self.d;
        let mut index: HashMap<(Vec<usize>, Vec<u64>), usize> = HashMap::new();
        let mut out: Vec<BasisWord> = Vec::with_capacity(self.terms.len());
        for mut t in self.terms.drain(..) {
            if d == 1 && t.coeffs.len() > 1 {
                let mut c = Complex64::new(1.0, 0.0);
                for b in &t.coeffs {
                    c *= b.entry(0, 0);
                }
                let one = BElement::identity(1);
                t.coeffs = std::iter::once(BElement::scalar(1, c))
                    .chain(std::iter::repeat_n(one, t.indices.len()))
                    .collect();
            }
            let tail: Vec<u64> = t.coeffs[1..].iter().flat_map(|b| b.bit_key()).collect();
            let key = (t.indices.clone(), tail);
            match index.get(&key) {
                Some(&slot) => {
                    let head = t.coeffs.swap_remove(0);
                    out[slot].coeffs[0] += &head;
                }
                None => {
                    index.insert(key, out.len());
                    out.push(t);
                }
            }
        }
        out.retain(|t| t.coeffs[0].max_abs() != 0.0);
        self.terms = out;
    }
}

/// The covariance table η_{i,j}; missing entries are the zero map.
#[derive(Debug, Clone)]
pub struct Covariance {
    d: usize,
    num_indices: usize,
    table: BTreeMap<(usize, usize), CPMap>,
}

impl Covariance {
    pub fn new(d: usize, num_indices: usize) -> Self {
        Covariance {
            d,
            num_indices,
            table: BTreeMap::new(),
        }
    }

    /// η_{k,k} = maps[k], zero off the diagonal.
    pub fn diagonal(d: usize, maps: Vec<CPMap>) -> Result<Self, FockError> {
        let mut c = Covariance::new(d, maps.len());
        for (k, m) in maps.into_iter().enumerate() {
            c.set(k, k, m)?;
        }
        Ok(c)
    }

    pub fn set(&mut self, i: usize, j: usize, eta: CPMap) -> Result<(), FockError> {
        if eta.dim() != self.d {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.d,
                got: eta.dim(),
            }
            .into());
        }
        if i >= self.num_indices || j >= self.num_indices {
            return Err(FockError::UnknownIndex(i.max(j)));
        }
        self.table.insert((i, j), eta);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&CPMap> {
        self.table.get(&(i, j))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_indices(&self) -> usize {
        self.num_indices
    }
}

/// F(B, K) with a covariance table and an optional depth cap.
#[derive(Debug, Clone)]
pub struct FockSpace {
    cov: Covariance,
    /// `None` grows depth as needed.
    truncation: Option<usize>,
}

impl FockSpace {
    pub fn new(cov: Covariance) -> Self {
        FockSpace {
            cov,
            truncation: None,
        }
    }

    pub fn with_truncation(mut self, depth: Option<usize>) -> Self {
        self.truncation = depth;
        self
    }

    pub fn dim(&self) -> usize {
        self.cov.d
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    fn check_index(&self, k: usize) -> Result<(), FockError> {
        if k >= self.cov.num_indices {
            return Err(FockError::UnknownIndex(k));
        }
        Ok(())
    }

    fn check_depth(&self, depth: usize) -> Result<(), FockError> {
        match self.truncation {
            Some(n) if depth > n => Err(FockError::TruncationOverflow(n)),
            _ => Ok(()),
        }
    }

    /// Applies one elementary operator.
    pub fn apply_factor(&self, f: &FockFactor, v: &FockVector) -> Result<FockVector, FockError> {
        let d = self.dim();
        let mut out = Vec::with_capacity(v.terms.len());
        match f {
            FockFactor::Create(k) | FockFactor::RightCreate(k) => self.check_index(*k)?,
            FockFactor::Annihilate(k) | FockFactor::RightAnnihilate(k) => self.check_index(*k)?,
            FockFactor::LeftMul(b) | FockFactor::RightMul(b) => b.check_dim(d)?,
        }
        for t in &v.terms {
            match f {
                FockFactor::Create(k) => {
                    self.check_depth(t.depth() + 1)?;
                    let mut coeffs = Vec::with_capacity(t.coeffs.len() + 1);
                    coeffs.push(BElement::identity(d));
                    coeffs.extend(t.coeffs.iter().cloned());
                    let mut indices = Vec::with_capacity(t.indices.len() + 1);
                    indices.push(*k);
                    indices.extend(&t.indices);
                    out.push(BasisWord { coeffs, indices });
                }
                FockFactor::RightCreate(k) => {
                    self.check_depth(t.depth() + 1)?;
                    let mut w = t.clone();
                    w.coeffs.push(BElement::identity(d));
                    w.indices.push(*k);
                    out.push(w);
                }
                FockFactor::Annihilate(k) => {
                    if t.depth() == 0 {
                        continue;
                    }
                    let Some(eta) = self.cov.get(*k, t.indices[0]) else {
                        continue;
                    };
                    let head = &eta.apply_unchecked(&t.coeffs[0]) * &t.coeffs[1];
                    let mut coeffs = Vec::with_capacity(t.coeffs.len() - 1);
                    coeffs.push(head);
                    coeffs.extend(t.coeffs[2..].iter().cloned());
                    out.push(BasisWord {
                        coeffs,
                        indices: t.indices[1..].to_vec(),
                    });
                }
                FockFactor::RightAnnihilate(k) => {
                    let m = t.depth();
                    if m == 0 {
                        continue;
                    }
                    let Some(eta) = self.cov.get(t.indices[m - 1], *k) else {
                        continue;
                    };
                    let tail = &t.coeffs[m - 1] * &eta.apply_unchecked(&t.coeffs[m]);
                    let mut coeffs = t.coeffs[..m - 1].to_vec();
                    coeffs.push(tail);
                    out.push(BasisWord {
                        coeffs,
                        indices: t.indices[..m - 1].to_vec(),
                    });
                }
                FockFactor::LeftMul(b) => {
                    let mut w = t.clone();
                    w.coeffs[0] = b * &w.coeffs[0];
                    out.push(w);
                }
                FockFactor::RightMul(b) => {
                    let mut w = t.clone();
                    let m = w.depth();
                    w.coeffs[m] = &w.coeffs[m] * b;
                    out.push(w);
                }
            }
        }
        Ok(FockVector { d, terms: out })
    }

    /// Applies f₁f₂⋯f_k (rightmost first).
    pub fn apply_word(&self, word: &[FockFactor], v: &FockVector) -> Result<FockVector, FockError> {
        let mut cur = v.clone();
        for f in word.iter().rev() {
            cur = self.apply_factor(f, &cur)?;
        }
        Ok(cur)
    }

    /// E(T) = p(T 1_B).
    pub fn expectation(&self, word: &[FockFactor]) -> Result<BElement, FockError> {
        Ok(self
            .apply_word(word, &FockVector::vacuum(self.dim()))?
            .project())
    }

    /// B-valued pairing ⟨v, w⟩ = Σ b_m* η(⋯ b₁* η(b₀* c₀) c₁ ⋯) c_m over
    /// words with matching indices, the inner product under which l_k and
    /// l*_k are adjoint.
    pub fn inner(&self, v: &FockVector, w: &FockVector) -> BElement {
        let mut acc = BElement::zero(self.dim());
        for a in &v.terms {
            for b in &w.terms {
                if a.depth() != b.depth() {
                    continue;
                }
                let mut t = &a.coeffs[0].adjoint() * &b.coeffs[0];
                let mut alive = true;
                for j in 0..a.depth() {
                    let Some(eta) = self.cov.get(a.indices[j], b.indices[j]) else {
                        alive = false;
                        break;
                    };
                    t = &(&a.coeffs[j + 1].adjoint() * &eta.apply_unchecked(&t)) * &b.coeffs[j + 1];
                }
                if alive {
                    acc += &t;
                }
            }
        }
        acc
    }
}

/// A linear combination of elementary operator words.
pub type OperatorDef = Vec<(Complex64, Vec<FockFactor>)>;

/// Named operators on a Fock space, exposed as a moment functional.
#[derive(Debug, Clone)]
pub struct FockModel {
    space: FockSpace,
    symbols: Vec<GeneratorSymbol>,
    defs: HashMap<String, OperatorDef>,
    cache: MomentCache,
}

/// Moments of plain generator words. Cloning yields an empty cache.
#[derive(Debug, Default)]
struct MomentCache(RwLock<HashMap<Vec<String>, BElement>>);

impl Clone for MomentCache {
    fn clone(&self) -> Self {
        MomentCache::default()
    }
}

impl MomentCache {
    fn get(&self, key: &[String]) -> Option<BElement> {
        self.0.read().expect("cache lock").get(key).cloned()
    }

    fn insert(&self, key: Vec<String>, v: BElement) {
        self.0.write().expect("cache lock").insert(key, v);
    }

    fn clear(&mut self) {
        self.0.get_mut().expect("cache lock").clear();
    }
}

impl FockModel {
    pub fn new(space: FockSpace) -> Self {
        FockModel {
            space,
            symbols: Vec::new(),
            defs: HashMap::new(),
            cache: MomentCache::default(),
        }
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn set_truncation(&mut self, depth: Option<usize>) {
        self.space.truncation = depth;
        self.cache.clear();
    }

    pub fn add_symbol(&mut self, sym: GeneratorSymbol, def: OperatorDef) -> Result<(), FockError> {
        if self.defs.contains_key(&sym.name) {
            return Err(FockError::DuplicateSymbol(sym.name));
        }
        self.defs.insert(sym.name.clone(), def);
        self.symbols.push(sym);
        Ok(())
    }

    /// Defines `sym` as Σ cᵢ·(existing symbol)ᵢ.
    pub fn add_combination(
        &mut self,
        sym: GeneratorSymbol,
        parts: &[(Complex64, &str)],
    ) -> Result<(), MomentError> {
        let mut def = OperatorDef::new();
        for (c, name) in parts {
            let inner = self
                .defs
                .get(*name)
                .ok_or_else(|| MomentError::UnknownSymbol(name.to_string()))?;
            def.extend(inner.iter().map(|(a, w)| (a * c, w.clone())));
        }
        Ok(self.add_symbol(sym, def)?)
    }

    pub fn definition(&self, name: &str) -> Option<&OperatorDef> {
        self.defs.get(name)
    }

    /// Keeps only the listed symbols visible, in the given order.
    pub fn retain_symbols(&mut self, names: &[&str]) {
        let mut kept = Vec::new();
        for n in names {
            if let Some(s) = self.symbols.iter().find(|s| s.name == *n) {
                kept.push(s.clone());
            }
        }
        self.defs.retain(|k, _| names.contains(&k.as_str()));
        self.symbols = kept;
        self.cache.clear();
    }

    /// Changes the family tag of a symbol.
    pub fn set_family(&mut self, name: &str, family: &str) -> Result<(), MomentError> {
        let s = self
            .symbols
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| MomentError::UnknownSymbol(name.to_string()))?;
        s.family = family.to_string();
        Ok(())
    }

    /// E of a generator word over B = ℂ. Vectors are kept as maps from index
    /// words to their coefficient, which avoids matrix arithmetic entirely.
    fn scalar_moment(&self, names: &[String]) -> Result<Complex64, MomentError> {
        let k = self.space.cov.num_indices;
        let mut eta = vec![None; k * k];
        for (&(i, j), m) in &self.space.cov.table {
            eta[i * k + j] = Some(m.apply_unchecked(&BElement::identity(1)).entry(0, 0));
        }
        let mut cur: HashMap<Vec<usize>, Complex64> =
            HashMap::from([(Vec::new(), Complex64::new(1.0, 0.0))]);
        for name in names.iter().rev() {
            let def = self
                .defs
                .get(name)
                .ok_or_else(|| MomentError::UnknownSymbol(name.clone()))?;
            let mut next: HashMap<Vec<usize>, Complex64> = HashMap::with_capacity(cur.len() * 2);
            for (c, word) in def {
                let mut part: Vec<(Vec<usize>, Complex64)> =
                    cur.iter().map(|(idx, v)| (idx.clone(), v * c)).collect();
                for f in word.iter().rev() {
                    let mut stepped = Vec::with_capacity(part.len());
                    for (mut idx, v) in part {
                        match f {
                            FockFactor::Create(i) => {
                                self.space.check_index(*i)?;
                                self.space.check_depth(idx.len() + 1)?;
                                idx.insert(0, *i);
                            }
                            FockFactor::RightCreate(i) => {
                                self.space.check_index(*i)?;
                                self.space.check_depth(idx.len() + 1)?;
                                idx.push(*i);
                            }
                            FockFactor::Annihilate(i) => {
                                self.space.check_index(*i)?;
                                let Some(&first) = idx.first() else { continue };
                                let Some(e) = eta[i * k + first] else {
                                    continue;
                                };
                                idx.remove(0);
                                stepped.push((idx, v * e));
                                continue;
                            }
                            FockFactor::RightAnnihilate(i) => {
                                self.space.check_index(*i)?;
                                let Some(&last) = idx.last() else { continue };
                                let Some(e) = eta[last * k + i] else { continue };
                                idx.pop();
                                stepped.push((idx, v * e));
                                continue;
                            }
                            FockFactor::LeftMul(b) | FockFactor::RightMul(b) => {
                                b.check_dim(1)?;
                                stepped.push((idx, v * b.entry(0, 0)));
                                continue;
                            }
                        }
                        stepped.push((idx, v));
                    }
                    part = stepped;
                }
                for (idx, v) in part {
                    *next.entry(idx).or_default() += v;
                }
            }
            next.retain(|_, v| *v != Complex64::default());
            cur = next;
        }
        Ok(cur.get(&Vec::new()).copied().unwrap_or_default())
    }

    /// The vector w·ξ for a word acting on a vector.
    pub fn apply_monomial(
        &self,
        word: &Monomial,
        v: &FockVector,
    ) -> Result<FockVector, MomentError> {
        let d = self.space.dim();
        let mut cur = v.clone();
        for f in word.factors().iter().rev() {
            cur = match f {
                Factor::Lb(b) => self
                    .space
                    .apply_factor(&FockFactor::LeftMul(b.clone()), &cur)?,
                Factor::Rb(b) => self
                    .space
                    .apply_factor(&FockFactor::RightMul(b.clone()), &cur)?,
                Factor::Gen(name) => {
                    let def = self
                        .defs
                        .get(name)
                        .ok_or_else(|| MomentError::UnknownSymbol(name.clone()))?;
                    let mut acc = FockVector::zero(d);
                    for (c, w) in def {
                        let mut part = self.space.apply_word(w, &cur)?;
                        part.scale(*c);
                        acc.add(part);
                    }
                    acc.compress();
                    acc
                }
            };
        }
        Ok(cur)
    }
}

impl MomentFunctional for FockModel {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn symbols(&self) -> &[GeneratorSymbol] {
        &self.symbols
    }

    fn backing(&self) -> Backing {
        Backing::FockModel
    }

    fn moment(&self, word: &Monomial) -> Result<BElement, MomentError> {
        let d = self.dim();
        // Over scalars the coefficient letters factor out of the word.
        let mut scalar = Complex64::new(1.0, 0.0);
        let mut names = Vec::with_capacity(word.len());
        for f in word.factors() {
            match f {
                Factor::Gen(n) => names.push(n.clone()),
                Factor::Lb(b) | Factor::Rb(b) if d == 1 => {
                    b.check_dim(1)?;
                    scalar *= b.entry(0, 0);
                }
                _ => {
                    return Ok(self.apply_monomial(word, &FockVector::vacuum(d))?.project());
                }
            }
        }
        if let Some(v) = self.cache.get(&names) {
            return Ok(v.scale(scalar));
        }
        let v = if d == 1 {
            BElement::scalar(1, self.scalar_moment(&names)?)
        } else {
            self.apply_monomial(&Monomial::from_names(&names), &FockVector::vacuum(d))?
                .project()
        };
        self.cache.insert(names, v.clone());
        Ok(v.scale(scalar))
    }
}

/// Bi-semicircular operators S_i = l_i + l*_i (η_left[i]) and
/// D_j = r_j + r*_j (η_right[j]) with diagonal covariance. Each operator is
/// its own family.
pub fn make_bisemicircular(
    eta_left: Vec<CPMap>,
    eta_right: Vec<CPMap>,
) -> Result<FockModel, FockError> {
    let d = eta_left
        .first()
        .or(eta_right.first())
        .map(|m| m.dim())
        .unwrap_or(1);
    let nl = eta_left.len();
    let mut maps = eta_left;
    maps.extend(eta_right.iter().cloned());
    let cov = Covariance::diagonal(d, maps)?;
    let mut model = FockModel::new(FockSpace::new(cov));
    let one = Complex64::new(1.0, 0.0);
    for i in 0..nl {
        let name = format!("S{}", i + 1);
        model.add_symbol(
            GeneratorSymbol::self_adjoint(&name, Side::Left, &name),
            vec![
                (one, vec![FockFactor::Create(i)]),
                (one, vec![FockFactor::Annihilate(i)]),
            ],
        )?;
    }
    for j in 0..eta_right.len() {
        let name = format!("D{}", j + 1);
        let k = nl + j;
        model.add_symbol(
            GeneratorSymbol::self_adjoint(&name, Side::Right, &name),
            vec![
                (one, vec![FockFactor::RightCreate(k)]),
                (one, vec![FockFactor::RightAnnihilate(k)]),
            ],
        )?;
    }
    Ok(model)
}

/// Scalar bi-semicircular family with `left` and `right` standard operators.
pub fn standard_bisemicircular(left: usize, right: usize) -> FockModel {
    make_bisemicircular(
        vec![CPMap::identity(1); left],
        vec![CPMap::identity(1); right],
    )
    .expect("identity maps share dimension 1")
}

/// The bi-free circular pair: cl = (S1 + iS2)/√2 on the left and
/// cr = (D1 + iD2)/√2 on the right, with their adjoints cl*, cr*.
pub fn make_circular_pair() -> FockModel {
    make_scaled_circular_pair(1.0)
}

/// The circular pair with both operators multiplied by `scale`.
pub fn make_scaled_circular_pair(scale: f64) -> FockModel {
    let mut m = standard_bisemicircular(2, 2);
    add_circular(&mut m, "cl", Side::Left, ("S1", "S2"), scale, "c_l").expect("components exist");
    add_circular(&mut m, "cr", Side::Right, ("D1", "D2"), scale, "c_r").expect("components exist");
    m.retain_symbols(&["cl", "cl*", "cr", "cr*"]);
    m
}

/// Defines `name = λ(a + i b)/√2` and `name* = λ(a − i b)/√2` from two
/// existing symbols.
pub fn add_circular(
    m: &mut FockModel,
    name: &str,
    side: Side,
    (a, b): (&str, &str),
    scale: f64,
    family: &str,
) -> Result<(), MomentError> {
    let h = scale * std::f64::consts::FRAC_1_SQRT_2;
    let [sym, star] = GeneratorSymbol::pair(name, side, family);
    m.add_combination(
        sym,
        &[(Complex64::new(h, 0.0), a), (Complex64::new(0.0, h), b)],
    )?;
    m.add_combination(
        star,
        &[(Complex64::new(h, 0.0), a), (Complex64::new(0.0, -h), b)],
    )
}
