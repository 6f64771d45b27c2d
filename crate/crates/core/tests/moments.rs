//! Properties of E_π, cumulant tables and the product-entry expansion.

use bifree_core::bnc::enumerate_bnc;
use bifree_core::fock::{make_bisemicircular, FockModel};
use bifree_core::moments::{
    cumulant_pi, cumulants_from_moments, eval_moment_pi, eval_moment_pi_with,
    moments_from_cumulants, product_cumulant_expand, PartitionTable, Strategy as Reduction,
};
use bifree_core::{BElement, BncPartition, CPMap, ChiWord, Factor, Monomial, Side};
use proptest::prelude::*;
use proptest::sample::Index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sides_from(bits: &[bool]) -> ChiWord {
    ChiWord::new(
        bits.iter()
            .map(|&r| if r { Side::Right } else { Side::Left })
            .collect(),
    )
    .unwrap()
}

/// S1, S2 on the left and D1, D2 on the right over M₂, mixing the flip
/// map with the identity.
fn matrix_model() -> FockModel {
    make_bisemicircular(
        vec![CPMap::flip(), CPMap::identity(2)],
        vec![CPMap::identity(2), CPMap::flip()],
    )
    .unwrap()
}

/// One operand on the given face: a generator, sometimes wrapped with a
/// coefficient on the same face.
fn random_operand(side: Side, rng: &mut ChaCha8Rng) -> Monomial {
    let name = match (side, rng.gen_bool(0.5)) {
        (Side::Left, true) => "S1",
        (Side::Left, false) => "S2",
        (Side::Right, true) => "D1",
        (Side::Right, false) => "D2",
    };
    let mut m = Monomial::gen(name);
    if rng.gen_bool(0.3) {
        let b = BElement::random(2, rng);
        m = match side {
            Side::Left => Monomial::new(vec![Factor::Lb(b)]).concat(&m),
            Side::Right => m.with(Factor::Rb(b)),
        };
    }
    m
}

fn operands_for(chi: &ChiWord, rng: &mut ChaCha8Rng) -> Vec<Monomial> {
    chi.sides()
        .iter()
        .map(|&s| random_operand(s, rng))
        .collect()
}

/// Operands shaped to π so that E_π is typically nonzero: each block uses
/// one generator per face, and a face holding an odd number of the block's
/// entries squares the first of them.
fn operands_along(pi: &BncPartition, rng: &mut ChaCha8Rng) -> Vec<Monomial> {
    let chi = pi.chi();
    let mut ops: Vec<Monomial> = vec![Monomial::empty(); pi.len()];
    for block in pi.blocks() {
        let left = if rng.gen_bool(0.5) { "S1" } else { "S2" };
        let right = if rng.gen_bool(0.5) { "D1" } else { "D2" };
        let on = |side: Side| block.iter().filter(|&&k| chi.side(k) == side).count();
        let (mut first_left, mut first_right) = (true, true);
        for &k in &block {
            let side = chi.side(k);
            let name = if side == Side::Left { left } else { right };
            let first = match side {
                Side::Left => std::mem::replace(&mut first_left, false),
                Side::Right => std::mem::replace(&mut first_right, false),
            };
            let mut m = Monomial::gen(name);
            if first && on(side) % 2 == 1 {
                m = m.with(Factor::Gen(name.into()));
            }
            if rng.gen_bool(0.3) {
                let b = BElement::random(2, rng);
                m = match side {
                    Side::Left => Monomial::new(vec![Factor::Lb(b)]).concat(&m),
                    Side::Right => m.with(Factor::Rb(b)),
                };
            }
            ops[k - 1] = m;
        }
    }
    ops
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn moment_cumulant_round_trip(bits in prop::collection::vec(any::<bool>(), 1..=6), d in 1usize..=2, seed in any::<u64>()) {
        let chi = sides_from(&bits);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = PartitionTable::new(chi.clone());
        for pi in enumerate_bnc(&chi).unwrap() {
            table.insert(&pi, BElement::random(d, &mut rng)).unwrap();
        }
        let kappa = cumulants_from_moments(&table).unwrap();
        for (pi, v) in table.entries().unwrap() {
            prop_assert!(moments_from_cumulants(&kappa, &pi).unwrap().dist(&v) <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reduction_order_does_not_matter(bits in prop::collection::vec(any::<bool>(), 1..=8), pick in any::<Index>(), seed in any::<u64>()) {
        let model = matrix_model();
        let chi = sides_from(&bits);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = enumerate_bnc(&chi).unwrap();
        let pi = pick.get(&all);
        let ops = operands_along(pi, &mut rng);
        let canonical = eval_moment_pi(&model, pi, &ops).unwrap();
        for _ in 0..3 {
            let other = eval_moment_pi_with(&model, pi, &ops, &mut Reduction::Random(&mut rng)).unwrap();
            prop_assert!(other.dist(&canonical) <= 1e-10, "{} {}", pi, other.dist(&canonical));
        }
    }

    #[test]
    fn coefficient_letters_have_no_higher_cumulants(bits in prop::collection::vec(any::<bool>(), 2..=5), slot in any::<Index>(), seed in any::<u64>()) {
        let model = matrix_model();
        let chi = sides_from(&bits);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // squares, whose higher cumulants do not vanish on their own
        let mut ops: Vec<Monomial> = operands_for(&chi, &mut rng)
            .iter()
            .map(|m| m.concat(m))
            .collect();
        let k = slot.index(bits.len() - 1);
        let b = BElement::random(2, &mut rng);
        ops[k] = Monomial::new(vec![match chi.side(k + 1) {
            Side::Left => Factor::Lb(b),
            Side::Right => Factor::Rb(b),
        }]);
        let kappa = cumulant_pi(&model, &BncPartition::one(chi.clone()), &ops).unwrap();
        prop_assert!(kappa.max_abs() <= 1e-9, "{}", kappa.max_abs());
    }

    #[test]
    fn product_expansion_matches_grouped_cumulant(sizes in prop::collection::vec(1usize..=2, 1..=4), faces in prop::collection::vec(any::<bool>(), 8), seed in any::<u64>()) {
        let n: usize = sizes.iter().sum();
        prop_assume!(n <= 6);
        // every group but the last sits on a single face
        let mut bits = Vec::with_capacity(n);
        for (g, &s) in sizes.iter().enumerate() {
            for j in 0..s {
                bits.push(if g + 1 == sizes.len() { faces[g + j] } else { faces[g] });
            }
        }
        let chi = sides_from(&bits);
        let model = matrix_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = operands_for(&chi, &mut rng);
        let exp = product_cumulant_expand(&model, &chi, &sizes, &ops).unwrap();
        prop_assert!(exp.residual <= 1e-9, "{}", exp.residual);
    }
}

/// Guards the order-independence property against passing on zeros only.
#[test]
fn random_reductions_are_mostly_nonzero() {
    let model = matrix_model();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonzero = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=8);
        let bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let chi = sides_from(&bits);
        let all = enumerate_bnc(&chi).unwrap();
        let pi = &all[rng.gen_range(0..all.len())];
        let ops = operands_along(pi, &mut rng);
        if eval_moment_pi(&model, pi, &ops).unwrap().max_abs() > 1e-6 {
            nonzero += 1;
        }
    }
    assert!(nonzero >= 40, "only {nonzero} of 50 nonzero");
}

#[test]
fn squares_have_nonzero_higher_cumulants() {
    let model = matrix_model();
    let chi = sides_from(&[false, false, false]);
    let ops: Vec<Monomial> = ["S1 S1", "S1 S1", "S1 S1"]
        .iter()
        .map(|w| Monomial::parse(w))
        .collect();
    let kappa = cumulant_pi(&model, &BncPartition::one(chi), &ops).unwrap();
    assert!(kappa.max_abs() > 0.1);
}
