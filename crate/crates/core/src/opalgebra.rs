//! The base algebra B = M_d(ℂ), its normalized trace, and completely
//! positive maps stored as Kraus lists.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix data is not square {d}x{d}")]
    NotSquare { d: usize },
    #[error("a CP map needs at least one Kraus operator")]
    EmptyKraus,
    #[error("Choi matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotCompletelyPositive(f64),
    #[error("tolerance must be nonnegative, got {0}")]
    NegativeTolerance(f64),
}

/// Absolute entrywise tolerance used for numeric equality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    abs_eps: f64,
}

impl Tolerance {
    pub fn new(abs_eps: f64) -> Result<Self, AlgebraError> {
        if abs_eps < 0.0 || abs_eps.is_nan() {
            return Err(AlgebraError::NegativeTolerance(abs_eps));
        }
        Ok(Tolerance { abs_eps })
    }

    pub fn eps(self) -> f64 {
        self.abs_eps
    }

    pub fn accepts(self, err: f64) -> bool {
        err <= self.abs_eps
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs_eps: 1e-9 }
    }
}

/// An element of M_d(ℂ).
#[derive(Clone, PartialEq)]
pub struct BElement(DMatrix<Complex64>);

impl BElement {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self, AlgebraError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(AlgebraError::NotSquare { d: m.nrows() });
        }
        Ok(BElement(m))
    }

    /// Row-major entries.
    pub fn from_rows(d: usize, entries: &[Complex64]) -> Result<Self, AlgebraError> {
        if entries.len() != d * d || d == 0 {
            return Err(AlgebraError::NotSquare { d });
        }
        Ok(BElement(DMatrix::from_row_slice(d, d, entries)))
    }

    pub fn from_real_rows(d: usize, entries: &[f64]) -> Result<Self, AlgebraError> {
        let c: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_rows(d, &c)
    }

    pub fn identity(d: usize) -> Self {
        BElement(DMatrix::identity(d, d))
    }

    pub fn zero(d: usize) -> Self {
        BElement(DMatrix::zeros(d, d))
    }

    pub fn scalar(d: usize, c: Complex64) -> Self {
        BElement(DMatrix::from_diagonal_element(d, d, c))
    }

    /// Matrix unit E_{ij} with 1-based indices.
    pub fn unit(d: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(d, d);
        m[(i - 1, j - 1)] = Complex64::new(1.0, 0.0);
        BElement(m)
    }

    /// Every matrix unit of M_d in row-major order.
    pub fn units(d: usize) -> Vec<BElement> {
        let mut out = Vec::with_capacity(d * d);
        for i in 1..=d {
            for j in 1..=d {
                out.push(Self::unit(d, i, j));
            }
        }
        out
    }

    /// Entries with real and imaginary parts uniform in [-1, 1].
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        BElement(DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }))
    }

    /// Random positive semidefinite element a·a*.
    pub fn random_psd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let a = Self::random(d, rng);
        &a * &a.adjoint()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    /// 0-based entry access.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        BElement(self.0.adjoint())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        BElement(&self.0 * c)
    }

    pub fn scale_in_place(&mut self, c: Complex64) {
        self.0 *= c;
    }

    /// Normalized trace tr_d.
    pub fn trace_d(&self) -> Complex64 {
        self.0.trace() / self.dim() as f64
    }

    /// Largest absolute entry; the size we report for matrix cumulants.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn dist(&self, other: &BElement) -> f64 {
        (self - other).max_abs()
    }

    pub fn approx_eq(&self, other: &BElement, tol: Tolerance) -> bool {
        self.dim() == other.dim() && tol.accepts(self.dist(other))
    }

    /// The only entry of a 1×1 element.
    pub fn as_scalar(&self) -> Option<Complex64> {
        (self.dim() == 1).then(|| self.0[(0, 0)])
    }

    pub fn is_identity(&self) -> bool {
        self.0 == DMatrix::identity(self.dim(), self.dim())
    }

    pub fn check_dim(&self, d: usize) -> Result<(), AlgebraError> {
        if self.dim() != d {
            return Err(AlgebraError::DimensionMismatch {
                expected: d,
                got: self.dim(),
            });
        }
        Ok(())
    }

    /// Bit pattern of the entries, for hashing exact equality.
    pub fn bit_key(&self) -> Vec<u64> {
        self.0
            .iter()
            .flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
            .collect()
    }
}

impl fmt::Debug for BElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                let z = self.0[(i, j)];
                write!(f, "{:.6}{:+.6}i", z.re, z.im)?;
            }
        }
        write!(f, "]")
    }
}

impl Mul for &BElement {
    type Output = BElement;
    fn mul(self, rhs: &BElement) -> BElement {
        BElement(&self.0 * &rhs.0)
    }
}

impl Mul for BElement {
    type Output = BElement;
    fn mul(self, rhs: BElement) -> BElement {
        BElement(self.0 * rhs.0)
    }
}

impl Add for &BElement {
    type Output = BElement;
    fn add(self, rhs: &BElement) -> BElement {
        BElement(&self.0 + &rhs.0)
    }
}

impl Add for BElement {
    type Output = BElement;
    fn add(self, rhs: BElement) -> BElement {
        BElement(self.0 + rhs.0)
    }
}

impl AddAssign<&BElement> for BElement {
    fn add_assign(&mut self, rhs: &BElement) {
        self.0 += &rhs.0;
    }
}

impl Sub for &BElement {
    type Output = BElement;
    fn sub(self, rhs: &BElement) -> BElement {
        BElement(&self.0 - &rhs.0)
    }
}

impl Neg for &BElement {
    type Output = BElement;
    fn neg(self) -> BElement {
        BElement(-&self.0)
    }
}

/// JSON shape `{"d": 2, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BElementJson {
    pub d: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl From<&BElement> for BElementJson {
    fn from(b: &BElement) -> Self {
        let d = b.dim();
        let grab = |f: fn(&Complex64) -> f64| {
            (0..d)
                .map(|i| (0..d).map(|j| f(&b.0[(i, j)])).collect())
                .collect()
        };
        BElementJson {
            d,
            re: grab(|z| z.re),
            im: grab(|z| z.im),
        }
    }
}

impl TryFrom<&BElementJson> for BElement {
    type Error = AlgebraError;

    fn try_from(j: &BElementJson) -> Result<Self, Self::Error> {
        let d = j.d;
        let rows_ok = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
        if !rows_ok(&j.re) || !(j.im.is_empty() || rows_ok(&j.im)) {
            return Err(AlgebraError::NotSquare { d });
        }
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for k in 0..d {
                let im = if j.im.is_empty() { 0.0 } else { j.im[i][k] };
                entries.push(Complex64::new(j.re[i][k], im));
            }
        }
        BElement::from_rows(d, &entries)
    }
}

/// A completely positive map b ↦ Σ Vᵢ b Vᵢ*.
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    d: usize,
    kraus: Vec<BElement>,
}

impl CPMap {
    pub fn from_kraus(kraus: Vec<BElement>) -> Result<Self, AlgebraError> {
        let first = kraus.first().ok_or(AlgebraError::EmptyKraus)?;
        let d = first.dim();
        for k in &kraus {
            k.check_dim(d)?;
        }
        Ok(CPMap { d, kraus })
    }

    pub fn identity(d: usize) -> Self {
        CPMap {
            d,
            kraus: vec![BElement::identity(d)],
        }
    }

    /// c·id for c ≥ 0.
    pub fn scaled_identity(d: usize, c: f64) -> Self {
        CPMap {
            d,
            kraus: vec![BElement::scalar(d, Complex64::new(c.max(0.0).sqrt(), 0.0))],
        }
    }

    /// Conditional expectation onto the diagonal, Kraus list {E_ii}.
    pub fn diagonal_projection(d: usize) -> Self {
        CPMap {
            d,
            kraus: (1..=d).map(|i| BElement::unit(d, i, i)).collect(),
        }
    }

    /// The map [a11 a12; a21 a22] ↦ diag(a22, a11), Kraus list {E12, E21}.
    pub fn flip() -> Self {
        CPMap {
            d: 2,
            kraus: vec![BElement::unit(2, 1, 2), BElement::unit(2, 2, 1)],
        }
    }

    /// Builds a Kraus list from a Choi matrix Σ E_ij ⊗ η(E_ij) (dimension
    /// d²), discarding eigenvalues below `tol`.
    pub fn from_choi(
        d: usize,
        choi: &DMatrix<Complex64>,
        tol: Tolerance,
    ) -> Result<Self, AlgebraError> {
        if choi.nrows() != d * d || choi.ncols() != d * d {
            return Err(AlgebraError::DimensionMismatch {
                expected: d * d,
                got: choi.nrows(),
            });
        }
        let herm = (choi + choi.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -tol.eps() {
            return Err(AlgebraError::NotCompletelyPositive(min));
        }
        let mut kraus = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= tol.eps() {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let s = lambda.sqrt();
            // Choi index (i, a) ↔ i·d + a; the Kraus operator is V[a][i] = √λ v[i·d + a].
            let m = DMatrix::from_fn(d, d, |a, i| v[i * d + a] * s);
            kraus.push(BElement(m));
        }
        if kraus.is_empty() {
            kraus.push(BElement::zero(d));
        }
        Ok(CPMap { d, kraus })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kraus(&self) -> &[BElement] {
        &self.kraus
    }

    pub fn apply(&self, b: &BElement) -> Result<BElement, AlgebraError> {
        b.check_dim(self.d)?;
        Ok(self.apply_unchecked(b))
    }

    pub(crate) fn apply_unchecked(&self, b: &BElement) -> BElement {
        let mut acc = BElement::zero(self.d);
        for v in &self.kraus {
            acc += &(&(v * b) * &v.adjoint());
        }
        acc
    }

    /// Choi matrix Σ_{ij} E_ij ⊗ η(E_ij).
    pub fn choi(&self) -> DMatrix<Complex64> {
        let d = self.d;
        let mut c = DMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let img = self.apply_unchecked(&BElement::unit(d, i + 1, j + 1));
                for a in 0..d {
                    for b in 0..d {
                        c[(i * d + a, j * d + b)] = img.0[(a, b)];
                    }
                }
            }
        }
        c
    }

    /// Smallest eigenvalue of the Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> f64 {
        let c = self.choi();
        let herm = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_completely_positive(&self, tol: Tolerance) -> bool {
        self.choi_min_eigenvalue() >= -tol.eps()
    }
}

/// JSON shape `{"d": 2, "kraus": [BElement, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CPMapJson {
    pub d: usize,
    pub kraus: Vec<BElementJson>,
}

impl From<&CPMap> for CPMapJson {
    fn from(m: &CPMap) -> Self {
        CPMapJson {
            d: m.d,
            kraus: m.kraus.iter().map(BElementJson::from).collect(),
        }
    }
}

impl TryFrom<&CPMapJson> for CPMap {
    type Error = AlgebraError;

    fn try_from(j: &CPMapJson) -> Result<Self, Self::Error> {
        let kraus = j
            .kraus
            .iter()
            .map(BElement::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        let map = CPMap::from_kraus(kraus)?;
        if map.d != j.d {
            return Err(AlgebraError::DimensionMismatch {
                expected: j.d,
                got: map.d,
            });
        }
        Ok(map)
    }
}

pub fn apply_cp(eta: &CPMap, b: &BElement) -> Result<BElement, AlgebraError> {
    eta.apply(b)
}

pub fn trace_d(b: &BElement) -> Complex64 {
    b.trace_d()
}

/// Zeroes the off-diagonal entries.
pub fn diag_expectation(b: &BElement) -> BElement {
    let d = b.dim();
    BElement(DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            b.0[(i, i)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn real(d: usize, v: &[f64]) -> BElement {
        BElement::from_real_rows(d, v).unwrap()
    }

    #[test]
    fn identity_map_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = BElement::random(3, &mut rng);
        assert!(CPMap::identity(3)
            .apply(&b)
            .unwrap()
            .approx_eq(&b, Tolerance::default()));
    }

    #[test]
    fn flip_map_action() {
        let b = real(2, &[1.0, 2.0, 3.0, 4.0]);
        let out = CPMap::flip().apply(&b).unwrap();
        assert_eq!(out, real(2, &[4.0, 0.0, 0.0, 1.0]));
        assert_eq!(
            CPMap::flip().apply(&BElement::unit(2, 1, 1)).unwrap(),
            BElement::unit(2, 2, 2)
        );
        assert_eq!(
            CPMap::flip().apply(&BElement::identity(2)).unwrap(),
            BElement::identity(2)
        );
    }

    #[test]
    fn single_unit_kraus() {
        let m = CPMap::from_kraus(vec![BElement::unit(2, 1, 1)]).unwrap();
        let out = m.apply(&real(2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(out, real(2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(CPMap::flip().apply(&BElement::identity(3)).is_err());
        assert!(CPMap::from_kraus(vec![]).is_err());
    }

    #[test]
    fn trace_examples() {
        assert!((BElement::identity(4).trace_d() - 1.0).norm() < 1e-15);
        assert!((BElement::unit(2, 1, 1).trace_d() - 0.5).norm() < 1e-15);
        assert!(real(2, &[0.0, 1.0, 1.0, 0.0]).trace_d().norm() < 1e-15);
    }

    #[test]
    fn diag_expectation_examples() {
        let b = real(2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(diag_expectation(&b), real(2, &[1.0, 0.0, 0.0, 4.0]));
        let d = real(2, &[5.0, 0.0, 0.0, 6.0]);
        assert_eq!(diag_expectation(&d), d);
    }

    #[test]
    fn choi_round_trip_reproduces_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = vec![BElement::random(2, &mut rng), BElement::random(2, &mut rng)];
        let m = CPMap::from_kraus(k).unwrap();
        let rebuilt = CPMap::from_choi(2, &m.choi(), Tolerance::default()).unwrap();
        for _ in 0..5 {
            let b = BElement::random(2, &mut rng);
            let x = m.apply(&b).unwrap();
            let y = rebuilt.apply(&b).unwrap();
            assert!(x.dist(&y) < 1e-10, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn transpose_is_not_completely_positive() {
        // Choi matrix of the transpose is the swap, which has eigenvalue −1.
        let d = 2;
        let mut swap = DMatrix::zeros(4, 4);
        for i in 0..d {
            for j in 0..d {
                swap[(i * d + j, j * d + i)] = Complex64::new(1.0, 0.0);
            }
        }
        assert!(matches!(
            CPMap::from_choi(2, &swap, Tolerance::default()),
            Err(AlgebraError::NotCompletelyPositive(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = CPMap::flip();
        let j = CPMapJson::from(&m);
        let back = CPMap::try_from(&j).unwrap();
        assert_eq!(back, m);
    }
}
