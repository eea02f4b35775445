use num_traits::Zero;
use pqk_core::gaussian_states::{hs_distance, partial_trace, random_mixture, GaussianMixtureState};
use pqk_core::linalg::{rational, Matrix, Rational};
use pqk_core::reduced_spaces::{compose_projections, kernel_decomposition, KernelDecomposition, ProjectionMatrix, ReducedFrame};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frame(prefix: &str, n: usize) -> ReducedFrame {
    ReducedFrame::from_ids((0..n).map(|i| format!("{prefix}{i}"))).unwrap()
}

fn small_rational() -> impl Strategy<Value = Rational> {
    (-4i64..=4, 1i64..=3).prop_map(|(p, q)| rational(p, q))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<Rational>> {
    proptest::collection::vec(small_rational(), rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

/// Full-row-rank `B` (n × n'), rejecting deficient draws.
fn projection() -> impl Strategy<Value = ProjectionMatrix> {
    (1usize..=3, 0usize..=3)
        .prop_flat_map(|(n, extra)| matrix(n, n + extra))
        .prop_filter_map("rank deficient", |m| {
            ProjectionMatrix::new(frame("k", m.rows()), frame("p", m.cols()), m).ok()
        })
}

/// `W = Bᵀ(BBᵀ)⁻¹ + Kb·C` for an arbitrary rational `C`.
fn right_inverse(b: &ProjectionMatrix, shift: &[Rational]) -> Matrix<Rational> {
    let e = b.entries();
    let bt = e.transpose();
    let gram = e.checked_mul(&bt).unwrap().inverse(0.0).unwrap();
    let w = bt.checked_mul(&gram).unwrap();
    let kb = e.null_space(0.0);
    if kb.cols() == 0 {
        return w;
    }
    let c = Matrix::from_fn(kb.cols(), w.cols(), |i, j| shift[(i * w.cols() + j) % shift.len()].clone() * rational(1, 4));
    w.add_matrix(&kb.checked_mul(&c).unwrap())
}

fn decomposition() -> impl Strategy<Value = (ProjectionMatrix, Matrix<Rational>, KernelDecomposition)> {
    (projection(), proptest::collection::vec(small_rational(), 1..6)).prop_map(|(b, shift)| {
        let w = right_inverse(&b, &shift);
        let d = kernel_decomposition(&b, &w).unwrap();
        (b, w, d)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, max_global_rejects: 1_000_000, ..ProptestConfig::default() })]

    #[test]
    fn kernel_and_right_inverse_are_exact((b, w, d) in decomposition()) {
        let kb = d.kernel_basis();
        prop_assert!(b.entries().checked_mul(kb).unwrap().as_slice().iter().all(Zero::is_zero));
        prop_assert!(b.entries().checked_mul(&w).unwrap().is_identity());
        let joint = kb.hstack(&w);
        prop_assert_eq!(joint.rank_by_elimination(0.0), b.source().len());
        prop_assert_eq!(d.kernel_dim() + d.target_dim(), d.source_dim());
    }

    #[test]
    fn rank_methods_agree(b in projection()) {
        prop_assert_eq!(b.rank_exact(), b.rank_numerical());
        prop_assert_eq!(b.rank_exact(), b.target().len());
    }

    #[test]
    fn composition_is_associative(m1 in matrix(2, 3), m2 in matrix(3, 3), m3 in matrix(3, 4)) {
        let exact_left = m1.checked_mul(&m2).unwrap().checked_mul(&m3).unwrap();
        let exact_right = m1.checked_mul(&m2.checked_mul(&m3).unwrap()).unwrap();
        prop_assert_eq!(&exact_left, &exact_right);
        let (f1, f2, f3) = (m1.to_f64(), m2.to_f64(), m3.to_f64());
        let left = f1.checked_mul(&f2).unwrap().checked_mul(&f3).unwrap();
        let right = f1.checked_mul(&f2.checked_mul(&f3).unwrap()).unwrap();
        prop_assert!(left.sub_matrix(&right).max_abs() <= 1e-12);
    }

    #[test]
    fn projection_composition_matches_matrix_product(outer in projection(), extra in 0usize..=2, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = outer.source().len();
        let inner = loop {
            let m = Matrix::from_fn(n, n + extra, |_, _| rational(rng.gen_range(-3..=3), rng.gen_range(1..=2)));
            if let Ok(p) = ProjectionMatrix::new(outer.source().clone(), frame("q", n + extra), m) {
                break p;
            }
        };
        let c = compose_projections(&outer, &inner).unwrap();
        prop_assert_eq!(c.entries(), &outer.entries().checked_mul(inner.entries()).unwrap());
    }

    #[test]
    fn projected_state_ignores_kernel_basis(
        (b, w, d) in decomposition(),
        mix in proptest::collection::vec(small_rational(), 9),
        seed in any::<u64>(),
    ) {
        let k = d.kernel_dim();
        prop_assume!(k > 0);
        // A long or skewed W squeezes the projected Gaussian; its f64
        // parameters then carry errors near 1e-10 whatever the kernel basis.
        let sv = w.to_f64().singular_values();
        prop_assume!(sv[0] <= 20.0 && sv[0] <= 100.0 * sv[sv.len() - 1]);
        let m = Matrix::from_fn(k, k, |i, j| {
            let base = if i == j { rational(2, 1) } else { Rational::zero() };
            base + mix[(i * k + j) % mix.len()].clone() / rational(4, 1)
        });
        prop_assume!(!m.determinant().is_zero());
        let other = KernelDecomposition::with_kernel_basis(&b, &w, d.kernel_basis().checked_mul(&m).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state: GaussianMixtureState = random_mixture(b.source().len(), 2, &mut rng);
        let p1 = partial_trace(&state, &d).unwrap();
        let p2 = partial_trace(&state, &other).unwrap();
        prop_assert!((p1.trace_before - p2.trace_before).abs() <= 1e-10);
        prop_assert!(hs_distance(&p1.state, &p2.state).unwrap() <= 1e-10);
    }
}

#[test]
fn lebesgue_factor_scales_with_kernel_basis() {
    let b = ProjectionMatrix::new(frame("k", 1), frame("p", 2), Matrix::from_vec(1, 2, vec![rational(1, 1), rational(1, 1)])).unwrap();
    let w = Matrix::from_vec(2, 1, vec![rational(1, 1), Rational::zero()]);
    let d = kernel_decomposition(&b, &w).unwrap();
    let scaled = KernelDecomposition::with_kernel_basis(&b, &w, d.kernel_basis().scale(&rational(3, 1))).unwrap();
    assert_eq!(scaled.lebesgue_factor(), &(d.lebesgue_factor() * rational(3, 1)));
}
