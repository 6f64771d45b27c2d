//! Conjugate variables, Fisher information and the matrix lift.

use bifree_core::conjvar::{
    conj_residual, fisher_info, h_closed_form, norm_sq, parity_tau, perturbation_check,
    perturbed_semicircular, second_moment_sum, solve_conjugate, ConjugateCandidate, LiftedModel,
    PresenceContext,
};
use bifree_core::fock::{
    make_bisemicircular, make_scaled_circular_pair, standard_bisemicircular, FockModel,
};
use bifree_core::{
    CPMap, ChiWord, Complex64, Factor, GeneratorSymbol, MomentFunctional, Monomial, Polynomial,
    Side,
};
use proptest::prelude::*;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn scalar_pair(v_left: f64, v_right: f64) -> FockModel {
    make_bisemicircular(
        vec![CPMap::scaled_identity(1, v_left)],
        vec![CPMap::scaled_identity(1, v_right)],
    )
    .unwrap()
}

/// z = √a·S1 + S2 together with w = S2.
fn correlated_pair(a: f64) -> FockModel {
    let mut m = standard_bisemicircular(2, 0);
    m.add_combination(
        GeneratorSymbol::self_adjoint("z", Side::Left, "z"),
        &[(real(a.sqrt()), "S1"), (real(1.0), "S2")],
    )
    .unwrap();
    m.add_combination(
        GeneratorSymbol::self_adjoint("w", Side::Left, "w"),
        &[(real(1.0), "S2")],
    )
    .unwrap();
    m.retain_symbols(&["z", "w"]);
    m
}

fn all_words(letters: &[&str], max_len: usize) -> Vec<Monomial> {
    let mut out = vec![Monomial::empty()];
    let mut layer = vec![Monomial::empty()];
    for _ in 0..max_len {
        let next: Vec<Monomial> = layer
            .iter()
            .flat_map(|w| {
                letters
                    .iter()
                    .map(move |l| w.clone().with(Factor::Gen(l.to_string())))
            })
            .collect();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn verified_candidates_agree_on_test_words(v in 0.25f64..4.0) {
        let m = scalar_pair(v, 1.0);
        let id = CPMap::identity(1);
        let ctx = PresenceContext::new(&["S1"], &["D1"]);
        let closed = ConjugateCandidate::scaled_generator("S1", Side::Left, "S1", 1.0 / v);
        prop_assert!(conj_residual(&m, &closed, &id, &ctx, 4).unwrap() <= 1e-9);
        let (solved, res) = solve_conjugate(&m, "S1", Side::Left, &id, &ctx, 2, 4).unwrap();
        prop_assert!(res <= 1e-9);
        let diff = closed.vector.plus(&solved.vector.scale(real(-1.0)));
        for w in all_words(&["S1", "D1"], 4) {
            prop_assert!(m.moment_poly(&w, &diff).unwrap().max_abs() <= 1e-8, "{}", w);
        }
        // a wrong multiple is rejected
        let wrong = ConjugateCandidate::scaled_generator("S1", Side::Left, "S1", 1.1 / v);
        prop_assert!(conj_residual(&m, &wrong, &id, &ctx, 4).unwrap() > 1e-3);
    }

    #[test]
    fn fisher_information_grows_with_the_context(a in 0.25f64..4.0) {
        let m = correlated_pair(a);
        let id = CPMap::identity(1);
        // alone, z is semicircular of variance a + 1
        let reduced = ConjugateCandidate::scaled_generator("z", Side::Left, "z", 1.0 / (a + 1.0));
        let reduced_ctx = PresenceContext::new(&["z"], &[]);
        prop_assert!(conj_residual(&m, &reduced, &id, &reduced_ctx, 5).unwrap() <= 1e-9);
        // next to w the conjugate variable is (z − w)/a = S1/√a
        let full = ConjugateCandidate::new(
            "z",
            Side::Left,
            Polynomial::from_terms(vec![(real(1.0 / a), Monomial::gen("z")), (real(-1.0 / a), Monomial::gen("w"))]),
        );
        let full_ctx = PresenceContext::new(&["z", "w"], &[]);
        prop_assert!(conj_residual(&m, &full, &id, &full_ctx, 4).unwrap() <= 1e-9);
        let (phi_reduced, phi_full) = (fisher_info(&m, &[reduced]).unwrap(), fisher_info(&m, &[full]).unwrap());
        prop_assert!(phi_reduced <= phi_full + 1e-12);
        prop_assert!((phi_full - 1.0 / a).abs() <= 1e-9);
    }

    #[test]
    fn cramer_rao_on_scalar_pairs(v1 in 0.25f64..4.0, v2 in 0.25f64..4.0) {
        let m = scalar_pair(v1, v2);
        let id = CPMap::identity(1);
        let ctx = PresenceContext::new(&["S1"], &["D1"]);
        let xs = [
            ConjugateCandidate::scaled_generator("S1", Side::Left, "S1", 1.0 / v1),
            ConjugateCandidate::scaled_generator("D1", Side::Right, "D1", 1.0 / v2),
        ];
        for x in &xs {
            prop_assert!(conj_residual(&m, x, &id, &ctx, 4).unwrap() <= 1e-9);
        }
        let phi = fisher_info(&m, &xs).unwrap();
        let product = phi * second_moment_sum(&m, &["S1", "D1"]).unwrap();
        prop_assert!(product >= 4.0 - 1e-9);
        if (v1 - v2).abs() < 1e-12 {
            prop_assert!((product - 4.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn cramer_rao_is_tight_for_scaled_circular_pairs(scale in 0.5f64..2.0) {
        let m = make_scaled_circular_pair(scale);
        let var = scale * scale;
        let xs: Vec<ConjugateCandidate> = [("cl", Side::Left), ("cl*", Side::Left), ("cr", Side::Right), ("cr*", Side::Right)]
            .iter()
            .map(|&(n, s)| {
                let adj = m.lookup(n).unwrap().adjoint_name();
                ConjugateCandidate::scaled_generator(n, s, &adj, 1.0 / var)
            })
            .collect();
        let ctx = PresenceContext::new(&["cl", "cl*"], &["cr", "cr*"]);
        for x in &xs {
            prop_assert!(conj_residual(&m, x, &CPMap::identity(1), &ctx, 3).unwrap() <= 1e-9);
        }
        let phi = fisher_info(&m, &xs).unwrap();
        let second = second_moment_sum(&m, &["cl", "cl*", "cr", "cr*"]).unwrap();
        prop_assert!((phi * second - 16.0).abs() <= 1e-9, "{}", phi * second);
    }

    #[test]
    fn fisher_information_decreases_along_the_perturbation(v in 0.25f64..4.0, t1 in 0.0f64..5.0, dt in 0.01f64..5.0) {
        let mut last = f64::INFINITY;
        for t in [t1, t1 + dt, t1 + 2.0 * dt] {
            let (m, xi) = perturbed_semicircular(v, t).unwrap();
            let ctx = PresenceContext::new(&["z"], &[]);
            prop_assert!(conj_residual(&m, &xi, &CPMap::identity(1), &ctx, 4).unwrap() <= 1e-9);
            let phi = norm_sq(&m, &xi.vector).unwrap();
            prop_assert!((phi - h_closed_form(t, v, 1.0).unwrap()).abs() <= 1e-9);
            prop_assert!(phi < last);
            last = phi;
        }
    }

    #[test]
    fn lifted_moments_obey_the_parity_law(bits in prop::collection::vec(any::<bool>(), 1..=6), scale in 0.5f64..2.0) {
        let base = make_scaled_circular_pair(scale);
        let lift = LiftedModel::lift_pair(&base, "cl", "cr").unwrap();
        let names: Vec<&str> = bits.iter().map(|&r| if r { "Y" } else { "X" }).collect();
        let word = Monomial::from_names(&names);
        let chi = ChiWord::new(bits.iter().map(|&r| if r { Side::Right } else { Side::Left }).collect()).unwrap();
        let direct = lift.moment(&word).unwrap();
        let units = lift.moment_by_units(&word).unwrap();
        prop_assert!(direct.dist(&units) <= 1e-12);
        let tau = direct.trace_d();
        if bits.len() % 2 == 1 {
            prop_assert_eq!(tau, Complex64::new(0.0, 0.0));
        }
        prop_assert!((tau - parity_tau(&base, "cl", "cr", &chi).unwrap()).norm() <= 1e-12);
    }
}

#[test]
fn perturbation_grid_is_decreasing() {
    let ts = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
    let rows = perturbation_check(&ts, 4).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[1].1 < pair[0].1);
    }
    for (_, phi, closed, residual) in rows {
        assert!((phi - closed).abs() <= 1e-9);
        assert!(residual <= 1e-9);
    }
}
