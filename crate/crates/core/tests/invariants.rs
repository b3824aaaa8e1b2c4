mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(n in 1usize..7, dim in 1usize..4, x in prop::array::uniform3(-5.0f64..5.0), sigma in 0.01f64..1.0) {
        prop_assert!(check_partition_of_unity(n, dim, sigma, &x).is_ok(), "{:?}", check_partition_of_unity(n, dim, sigma, &x));
    }

    #[test]
    fn bspline_support_and_positivity(n in 1usize..9, s in -2.0f64..11.0) {
        let r = check_support_positivity(n, s);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn two_scale_refinement(n in 1usize..6, dim in 1usize..3, levels in 1u32..3, seed in any::<u64>()) {
        let r = check_two_scale(n, dim, levels, seed);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ghost_penalty_kills_polynomials(
        n in 2usize..5,
        cx in -0.3f64..0.3,
        cy in -0.3f64..0.3,
        radius in 0.6f64..1.0,
        coef in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let r = check_j_kills_polynomials(n, [cx, cy], radius, 0.2, &coef);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn mass_and_penalty_symmetric_psd(n in 2usize..5, cx in -0.3f64..0.3, cy in -0.3f64..0.3, seed in any::<u64>()) {
        let r = check_symmetric_psd(n, [cx, cy], 0.2, seed, 50);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn grid_shift_equivariance(n in 2usize..5, cx in -0.2f64..0.2, cy in -0.2f64..0.2, s0 in -5i64..6, s1 in -5i64..6) {
        let r = check_shift_equivariance(n, [cx, cy], [s0, s1]);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}
