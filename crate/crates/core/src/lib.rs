//! Bi-free probability with amalgamation over B = M_d(ℂ).
//!
//! The crate is organised bottom-up:
//!
//! * [`bnc`] side words, bi-non-crossing partitions and their Möbius function;
//! * [`opalgebra`] the base algebra, its trace and completely positive maps;
//! * [`moments`] words, moment oracles, E_π, cumulants and the bi-freeness test;
//! * [`fock`] exact full Fock space models, the source of ground-truth moments;
//! * [`conjvar`] conjugate variables, Fisher information, entropy and the
//!   two-by-two matrix lift;
//! * [`verify`] the acceptance suite shared by the CLI and the test target.

pub mod bnc;
pub mod conjvar;
pub mod fock;
pub mod moments;
pub mod opalgebra;
pub mod verify;

pub use bnc::{BncError, BncPartition, ChiWord, Partition, PartitionJson, Side};
pub use moments::{
    Backing, Factor, GeneratorSymbol, MomentError, MomentFunctional, Monomial, Polynomial,
};
pub use num_complex::Complex64;
pub use opalgebra::{AlgebraError, BElement, BElementJson, CPMap, CPMapJson, Tolerance};
