use std::collections::BTreeMap;

use num_complex::Complex64;
use pqk_core::dof_systems::{refinement, SystemFamily};
use pqk_core::dpg::generate_random_system;
use pqk_core::gaussian_states::{
    check_coherent_family, hs_distance, kernel_sample_points, partial_trace, project_state, pure_state, purity,
    quadrature_partial_trace, random_mixture, random_pure_state, trace, verify_consistency, CoherentFamily,
    GaussianError, GaussianKernel, GaussianMixtureState, Provenance,
};
use pqk_core::linalg::{rational, Matrix};
use pqk_core::reduced_spaces::{kernel_decomposition, KernelDecomposition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn family(seed: u64) -> SystemFamily {
    generate_random_system(3, 3, seed).unwrap().to_family().unwrap()
}

/// A proper chain `top ≥ mid ≥ bottom` with a declared direct relation.
fn chain(f: &SystemFamily) -> Option<[String; 3]> {
    for a in f.order.iter().filter(|r| r.upper != r.lower) {
        for b in f.order.iter().filter(|r| r.upper == a.lower && r.upper != r.lower) {
            if b.lower != a.upper && f.relation(&a.upper, &b.lower).is_some() {
                return Some([a.upper.clone(), a.lower.clone(), b.lower.clone()]);
            }
        }
    }
    None
}

fn decomposition_of(f: &SystemFamily, upper: &str, lower: &str) -> (pqk_core::dof_systems::Refinement, KernelDecomposition) {
    let r = f.relation(upper, lower).unwrap();
    let rf = refinement(f.label(upper).unwrap(), f.label(lower).unwrap(), &r.witness, &f.basis).unwrap();
    let d = kernel_decomposition(&rf.projection, &rf.embedding).unwrap();
    (rf, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hermitian_structure(seed in any::<u64>(), dim in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_mixture(dim, 3, &mut rng);
        for (x, y) in kernel_sample_points(dim, 16) {
            let a = s.kernel_value(&x, &y);
            let b = s.kernel_value(&y, &x).conj();
            prop_assert!((a - b).norm() <= 1e-15 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn projection_preserves_trace_and_consistency(seed in 0u64..500) {
        let f = family(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in f.order.iter().filter(|r| r.upper != r.lower) {
            let (u, l) = (f.label(&r.upper).unwrap(), f.label(&r.lower).unwrap());
            let s = random_mixture(u.dim(), 3, &mut rng);
            let p = project_state(&s, u, l, &r.witness, &f.basis).unwrap();
            prop_assert!(p.drift() <= 1e-9);
            prop_assert!((trace(&p.state).unwrap() - 1.0).abs() <= 1e-10);
        }
        if let Some([t, m, b]) = chain(&f) {
            let s = random_mixture(f.label(&t).unwrap().dim(), 3, &mut rng);
            let rep = verify_consistency(&s, &f, [&t, &m, &b], 1e-9).unwrap();
            prop_assert!(rep.passed, "distance {}", rep.distance);
        }
    }

    #[test]
    fn pure_inputs_do_not_gain_purity(seed in 0u64..500) {
        let f = family(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for r in f.order.iter().filter(|r| r.upper != r.lower) {
            let (u, l) = (f.label(&r.upper).unwrap(), f.label(&r.lower).unwrap());
            let s = random_pure_state(u.dim(), &mut rng);
            let p = project_state(&s, u, l, &r.witness, &f.basis).unwrap();
            prop_assert!(purity(&p.state).unwrap() <= purity(&s).unwrap() + 1e-9);
        }
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `½(|0⟩⟨0| ⊗ |a⟩⟨a| + |0⟩⟨0| ⊗ |b⟩⟨b|)` with nearly orthogonal `a`, `b`:
/// purity about ½, while its marginal on the first factor is pure.
#[test]
fn partial_trace_can_raise_purity_of_a_mixture() {
    let eye = Matrix::from_fn(2, 2, |i, j| c(if i == j { 1.0 } else { 0.0 }));
    let left = pure_state(&eye, &[c(0.0), c(-4.0)]).unwrap();
    let right = pure_state(&eye, &[c(0.0), c(4.0)]).unwrap();
    let terms: Vec<_> = left.terms().iter().chain(right.terms()).map(|(_, k)| (0.5, k.clone())).collect();
    let s = GaussianMixtureState::new(terms, Provenance::Mixed).unwrap();
    let b = pqk_core::reduced_spaces::ProjectionMatrix::new(
        pqk_core::ReducedFrame::from_ids(["x"]).unwrap(),
        pqk_core::ReducedFrame::from_ids(["x", "y"]).unwrap(),
        Matrix::from_vec(1, 2, vec![rational(1, 1), rational(0, 1)]),
    )
    .unwrap();
    let d = kernel_decomposition(&b, &Matrix::from_vec(2, 1, vec![rational(1, 1), rational(0, 1)])).unwrap();
    let p = partial_trace(&s, &d).unwrap();
    assert!(purity(&s).unwrap() < 0.51);
    assert!((purity(&p.state).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn trivial_chain_has_zero_distance() {
    let f = family(3);
    let top = f.labels.last().unwrap().id().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_mixture(f.label(&top).unwrap().dim(), 3, &mut rng);
    let rep = verify_consistency(&s, &f, [&top, &top, &top], 1e-12).unwrap();
    assert_eq!(rep.distance, 0.0);
}

#[test]
fn corrupted_embedding_breaks_consistency() {
    let (f, [t, m, b]) = (0..50)
        .find_map(|seed| {
            let f = family(seed);
            let c = chain(&f)?;
            let (_, d) = decomposition_of(&f, &c[0], &c[1]);
            (d.kernel_dim() > 0).then_some((f, c))
        })
        .expect("a chain with a nontrivial kernel");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_pure_state(f.label(&t).unwrap().dim(), &mut rng);
    let (rf, d) = decomposition_of(&f, &t, &m);
    // Shift one column of W by a tenth of a kernel vector: still a right
    // inverse of B, but not the embedding the labels determine.
    let kb = d.kernel_basis();
    let mut w = rf.embedding.clone();
    for i in 0..w.rows() {
        let v = w[(i, 0)].clone() + kb[(i, 0)].clone() * rational(1, 10);
        w[(i, 0)] = v;
    }
    let bad = KernelDecomposition::with_kernel_basis(&rf.projection, &w, kb.clone()).unwrap();
    let halfway = partial_trace(&s, &bad).unwrap().state;
    let (_, d_mb) = decomposition_of(&f, &m, &b);
    let composed = partial_trace(&halfway, &d_mb).unwrap().state;
    let (_, d_tb) = decomposition_of(&f, &t, &b);
    let direct = partial_trace(&s, &d_tb).unwrap().state;
    let good = verify_consistency(&s, &f, [&t, &m, &b], 1e-9).unwrap();
    assert!(good.passed);
    let dist = hs_distance(&direct, &composed).unwrap();
    assert!(dist > 1e-3, "distance {dist}");
}

#[test]
fn quadrature_on_a_product_factor_has_unit_trace() {
    let eye = Matrix::from_fn(2, 2, |i, j| c(if i == j { 1.0 } else { 0.0 }));
    let s = pure_state(&eye, &[Complex64::new(0.3, 0.1), c(-0.2)]).unwrap();
    let b = pqk_core::reduced_spaces::ProjectionMatrix::new(
        pqk_core::ReducedFrame::from_ids(["x"]).unwrap(),
        pqk_core::ReducedFrame::from_ids(["x", "y"]).unwrap(),
        Matrix::from_vec(1, 2, vec![rational(0, 1), rational(1, 1)]),
    )
    .unwrap();
    let d = kernel_decomposition(&b, &Matrix::from_vec(2, 1, vec![rational(0, 1), rational(1, 1)])).unwrap();
    let samples = kernel_sample_points(1, 64);
    let table = quadrature_partial_trace(&s, &d, 64, 8.0, &samples).unwrap();
    let closed = partial_trace(&s, &d).unwrap();
    assert!((closed.trace_before - 1.0).abs() < 1e-6);
    assert!(table.max_relative_error(&closed.state) <= 1e-4);
    assert!(matches!(quadrature_partial_trace(&s, &d, 8, 8.0, &samples), Err(GaussianError::InvalidKernel(_))));
}

#[test]
fn coherent_family_examples() {
    let f = family(5);
    let top = f.labels.last().unwrap().id().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_mixture(f.label(&top).unwrap().dim(), 2, &mut rng);
    let mut states = BTreeMap::new();
    for r in f.order.iter().filter(|r| r.upper == top) {
        let (u, l) = (f.label(&r.upper).unwrap(), f.label(&r.lower).unwrap());
        states.insert(r.lower.clone(), project_state(&s, u, l, &r.witness, &f.basis).unwrap().state);
    }
    states.insert(top.clone(), s);
    let mut coherent = CoherentFamily { system: f.clone(), states };
    let report = check_coherent_family(&coherent, 1e-8);
    assert!(report.len() >= 2 && report.iter().all(|p| p.passed), "{report:?}");

    let victim = report.iter().find(|p| p.upper == top).unwrap().lower.clone();
    let dim = coherent.states[&victim].dim();
    coherent.states.insert(victim.clone(), random_pure_state(dim, &mut rng));
    let report = check_coherent_family(&coherent, 1e-8);
    assert!(report.iter().filter(|p| !p.passed).all(|p| p.upper == victim || p.lower == victim));
    assert!(report.iter().any(|p| !p.passed && p.lower == victim));

    let single = CoherentFamily {
        system: SystemFamily { order: Vec::new(), ..f },
        states: BTreeMap::new(),
    };
    assert!(check_coherent_family(&single, 1e-8).is_empty());
}

#[test]
fn kernel_rejects_non_hermitian_cross_block() {
    let p = Matrix::from_fn(1, 1, |_, _| c(2.0));
    let r = Matrix::from_fn(1, 1, |_, _| Complex64::new(0.1, 0.5));
    assert!(matches!(GaussianKernel::new(p, r, vec![c(0.0)], 0.0), Err(GaussianError::InvalidKernel(_))));
}
