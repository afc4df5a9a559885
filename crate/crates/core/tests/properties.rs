use nalgebra::DVector;
use proptest::prelude::*;
use spde_core::harness::Accumulator;
use spde_core::kernels::phi1;
use spde_core::linalg::Tridiagonal;

fn dominant_system() -> impl Strategy<Value = (Tridiagonal, DVector<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0..1.0f64, n - 1),
            prop::collection::vec(-1.0..1.0f64, n - 1),
            prop::collection::vec(0.1..3.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
            .prop_map(|(lo, up, extra, b)| {
                let diag = (0..lo.len() + 1)
                    .map(|i| {
                        let off = lo.get(i.wrapping_sub(1)).map_or(0.0, |x: &f64| x.abs())
                            + up.get(i).map_or(0.0, |x: &f64| x.abs());
                        off + extra[i]
                    })
                    .collect();
                (Tridiagonal::new(lo, diag, up).unwrap(), DVector::from_vec(b))
            })
    })
}

proptest! {
    #[test]
    fn tridiagonal_solve_inverts_multiplication((a, b) in dominant_system()) {
        let x = a.factor().unwrap().solve(&b);
        let r = a.mul_vec(&x) - &b;
        prop_assert!(r.norm() <= 1e-10 * (1.0 + b.norm()));
    }

    #[test]
    fn phi1_is_a_decreasing_fraction(z in 0.0..200.0f64, dz in 1e-3..1.0f64) {
        let p = phi1(z);
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!(phi1(z + dz) < p);
        // z φ₁(z) + e^{−z} = 1
        prop_assert!((z * p + (-z).exp() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn accumulator_merge_is_split_invariant(xs in prop::collection::vec(-1e3..1e3f64, 2..60), cut in 0usize..60) {
        let cut = cut.min(xs.len());
        let mut whole = Accumulator::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut left, mut right) = (Accumulator::default(), Accumulator::default());
        xs[..cut].iter().for_each(|&x| left.push(x));
        xs[cut..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        prop_assert_eq!(left.count, whole.count);
        prop_assert!((left.mean() - whole.mean()).abs() <= 1e-12 * (1.0 + whole.mean().abs()));
        prop_assert!((left.sum_sq - whole.sum_sq).abs() <= 1e-12 * whole.sum_sq.max(1.0));
    }
}
