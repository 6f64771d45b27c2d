//! Properties of the base algebra and its completely positive maps.

use bifree_core::opalgebra::{apply_cp, diag_expectation, trace_d};
use bifree_core::{BElement, CPMap, Complex64, Tolerance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_map(d: usize, count: usize, rng: &mut ChaCha8Rng) -> CPMap {
    CPMap::from_kraus((0..count).map(|_| BElement::random(d, rng)).collect()).unwrap()
}

fn min_eigenvalue(b: &BElement) -> f64 {
    let h = (b.matrix() + b.matrix().adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cp_maps_preserve_positivity(d in 1usize..=4, count in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = random_map(d, count, &mut rng);
        let b = BElement::random_psd(d, &mut rng);
        let scale = b.max_abs().max(1.0) * eta.kraus().iter().map(|v| v.max_abs()).fold(1.0, f64::max).powi(2);
        prop_assert!(min_eigenvalue(&apply_cp(&eta, &b).unwrap()) >= -1e-10 * scale);
    }

    #[test]
    fn trace_through_kraus_matches_direct_sum(d in 1usize..=4, count in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = random_map(d, count, &mut rng);
        let b = BElement::random(d, &mut rng);
        // (1/d) Σ_v Σ_{i,j,k} v_ij b_jk conj(v_ik)
        let mut direct = Complex64::new(0.0, 0.0);
        for v in eta.kraus() {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        direct += v.entry(i, j) * b.entry(j, k) * v.entry(i, k).conj();
                    }
                }
            }
        }
        direct /= d as f64;
        let via_map = trace_d(&apply_cp(&eta, &b).unwrap());
        prop_assert!((via_map - direct).norm() <= 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn diagonal_expectation_is_a_trace_preserving_projection(d in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = BElement::random(d, &mut rng);
        let once = diag_expectation(&b);
        prop_assert!(diag_expectation(&once).dist(&once) == 0.0);
        prop_assert!((trace_d(&once) - trace_d(&b)).norm() <= 1e-12);
        let as_map = CPMap::diagonal_projection(d);
        prop_assert!(as_map.apply(&b).unwrap().dist(&once) <= 1e-12);
        prop_assert!(as_map.is_completely_positive(Tolerance::default()));
    }
}
