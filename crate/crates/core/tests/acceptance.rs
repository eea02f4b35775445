//! Acceptance run: one line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex;
use pqk_core::almost_periodic::{inner_product, promote, APVector, Amplitude, Frequency};
use pqk_core::dof_systems::{
    action_matrix, check_assumptions, refinement, relation_geq, select_independent_dofs, MomentumOperator,
    OrderRelation, SystemFamily, SystemLabel,
};
use pqk_core::dpg::{generate_random_system, is_join_block_form, label_determinant};
use pqk_core::gaussian_states::{
    kernel_sample_points, min_grid_eigenvalue, partial_trace, project_state, purity, quadrature_partial_trace,
    random_mixture, random_pure_state, verify_consistency, GaussianMixtureState,
};
use pqk_core::linalg::{rational, rational_int, Matrix, Rational};
use pqk_core::reduced_spaces::{compose_projections, kernel_decomposition, ProjectionMatrix, ReducedFrame};
use pqk_core::DofId;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `(top, mid, bottom)` with `top ≥ mid ≥ bottom` and `top ≥ bottom` all
/// declared and non-reflexive.
fn chains(f: &SystemFamily) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for a in proper(&f.order) {
        for b in proper(&f.order) {
            if b.upper == a.lower && a.upper != b.lower && f.relation(&a.upper, &b.lower).is_some() {
                out.push((a.upper.clone(), a.lower.clone(), b.lower.clone()));
            }
        }
    }
    out
}

fn proper(order: &[OrderRelation]) -> impl Iterator<Item = &OrderRelation> {
    order.iter().filter(|r| r.upper != r.lower)
}

fn labels<'a>(f: &'a SystemFamily, r: &OrderRelation) -> (&'a SystemLabel, &'a SystemLabel) {
    (f.label(&r.upper).unwrap(), f.label(&r.lower).unwrap())
}

fn triple_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut seeds_without_chain = 0;
    for seed in 0..100u64 {
        let f = generate_random_system(5, 3, seed).unwrap().to_family().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let cs = chains(&f);
        if cs.is_empty() {
            seeds_without_chain += 1;
        }
        for (t, m, b) in cs {
            let state = random_mixture(f.label(&t).unwrap().dim(), 3, &mut rng);
            match verify_consistency(&state, &f, [&t, &m, &b], 1e-9) {
                Ok(r) => worst = worst.max(r.distance),
                Err(e) => return outcome(false, format!("seed {seed} chain {t},{m},{b}: {e}")),
            }
            count += 1;
        }
    }
    outcome(
        worst <= 1e-9 && seeds_without_chain == 0,
        format!("{count} chains over 100 systems, max HS distance {worst:.2e}"),
    )
}

fn max_abs_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.sub_matrix(b).max_abs()
}

fn projection_algebra() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact = true;
    let (mut pairs, mut triples) = (0, 0);
    for seed in 0..100u64 {
        let f = generate_random_system(5, 3, seed).unwrap().to_family().unwrap();
        let mut refs = BTreeMap::new();
        for r in proper(&f.order) {
            let (u, l) = labels(&f, r);
            let rf = refinement(u, l, &r.witness, &f.basis).unwrap();
            let bw = rf.projection.entries().checked_mul(&rf.embedding).unwrap();
            exact &= bw.is_identity();
            let bw_f = rf.projection.entries().to_f64().checked_mul(&rf.embedding.to_f64()).unwrap();
            worst = worst.max(max_abs_diff(&bw_f, &Matrix::identity(l.dim())));
            refs.insert((r.upper.clone(), r.lower.clone()), rf);
            pairs += 1;
        }
        for (t, m, b) in chains(&f) {
            let tm = &refs[&(t.clone(), m.clone())];
            let mb = &refs[&(m.clone(), b.clone())];
            let tb = &refs[&(t.clone(), b.clone())];
            let w = tm.embedding.checked_mul(&mb.embedding).unwrap();
            exact &= w == tb.embedding;
            let w_f = tm.embedding.to_f64().checked_mul(&mb.embedding.to_f64()).unwrap();
            worst = worst.max(max_abs_diff(&w_f, &tb.embedding.to_f64()));
            let pr = compose_projections(&mb.projection, &tm.projection).unwrap();
            exact &= pr == tb.projection;
            triples += 1;
        }
    }
    outcome(
        exact && worst <= 1e-10,
        format!("{pairs} pairs, {triples} chains, exact identities {exact}, float residual {worst:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst64: f64 = 0.0;
    let mut halving = true;
    let mut fixtures = 0;
    let mut kernel_dims = [0usize; 4];
    for (n_edges, depth) in [(1, 1), (1, 2), (1, 3), (2, 1)] {
        for seed in 0..8u64 {
            let f = generate_random_system(n_edges, depth, seed).unwrap().to_family().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            for r in proper(&f.order) {
                let (u, l) = labels(&f, r);
                if u.dim() > 3 {
                    continue;
                }
                let state = random_mixture(u.dim(), 3, &mut rng);
                let rf = refinement(u, l, &r.witness, &f.basis).unwrap();
                let d = kernel_decomposition(&rf.projection, &rf.embedding).unwrap();
                let closed = partial_trace(&state, &d).unwrap();
                let samples = kernel_sample_points(l.dim(), 64);
                let err = |grid: usize| {
                    let mut t = quadrature_partial_trace(&state, &d, grid, 8.0, &samples).unwrap();
                    for v in &mut t.values {
                        *v /= closed.trace_before;
                    }
                    t.max_relative_error(&closed.state)
                };
                let (e64, e128) = (err(64), err(128));
                worst64 = worst64.max(e64);
                halving &= e128 <= (e64 / 2.0).max(1e-12);
                kernel_dims[d.kernel_dim().min(3)] += 1;
                fixtures += 1;
            }
        }
    }
    outcome(
        fixtures > 0 && worst64 <= 1e-4 && halving,
        format!(
            "{fixtures} fixtures (kernel dims 0/1/2: {}/{}/{}), max relative error {worst64:.2e}, doubling ok {halving}",
            kernel_dims[0], kernel_dims[1], kernel_dims[2]
        ),
    )
}

fn trace_and_positivity() -> Outcome {
    let mut drift: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut pure_increase: f64 = f64::NEG_INFINITY;
    let (mut mixtures, mut mixture_increases) = (0, 0);
    let mut projections = 0;
    for seed in 0..20u64 {
        let f = generate_random_system(3, 3, seed).unwrap().to_family().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2000);
        for r in proper(&f.order) {
            let (u, l) = labels(&f, r);
            let inputs: [(bool, GaussianMixtureState); 2] = [
                (true, random_pure_state(u.dim(), &mut rng)),
                (false, random_mixture(u.dim(), 3, &mut rng)),
            ];
            for (pure, state) in inputs {
                let p = project_state(&state, u, l, &r.witness, &f.basis).unwrap();
                drift = drift.max(p.drift());
                min_eig = min_eig.min(min_grid_eigenvalue(&p.state, 64, 8.0));
                let gain = purity(&p.state).unwrap() - purity(&state).unwrap();
                if pure {
                    pure_increase = pure_increase.max(gain);
                } else {
                    mixtures += 1;
                    if gain > 1e-9 {
                        mixture_increases += 1;
                    }
                }
                projections += 1;
            }
        }
    }
    outcome(
        drift <= 1e-9 && min_eig >= -1e-8 && pure_increase <= 1e-9,
        format!(
            "{projections} projections, trace drift {drift:.2e}, min eigenvalue {min_eig:.2e}, \
             max purity gain on pure inputs {pure_increase:.2e} \
             (mixtures: {mixture_increases}/{mixtures} gain purity, as partial traces of mixtures may)"
        ),
    )
}

fn join_correctness() -> Outcome {
    let mut bad = Vec::new();
    for seed in 0..100u64 {
        let n_edges = 1 + (seed as usize % 5);
        let mut sys = generate_random_system(n_edges, 2, seed).unwrap();
        let out = sys.join("X", "L0a", "L0b").unwrap();
        let g = out.label.g_matrix(&sys.faces).unwrap();
        let det_ok = label_determinant(&out.label, &sys.faces).unwrap() == Some(Rational::one());
        let f = sys.to_family().unwrap();
        let x = f.label("X").unwrap();
        let geq = ["L0a", "L0b"].iter().all(|lower| {
            let w = &f.relation("X", lower).unwrap().witness;
            relation_geq(x, f.label(lower).unwrap(), w, &f.basis).is_ok()
        });
        if !(is_join_block_form(&g, out.m) && det_ok && geq) {
            bad.push(seed);
        }
    }
    outcome(bad.is_empty(), format!("100 joins, failing seeds {bad:?}"))
}

fn singular_copy(l: &SystemLabel) -> Option<SystemLabel> {
    if l.ops().len() < 2 {
        return None;
    }
    let mut ops = l.ops().to_vec();
    ops[1] = ops[0].clone().with_id(format!("{}.dup", ops[0].id()));
    SystemLabel::new(l.id(), ops, l.frame().clone()).ok()
}

fn assumption_audit() -> Outcome {
    let mut clean_failures = Vec::new();
    let mut undetected = Vec::new();
    let mut defects = 0;
    for seed in 0..100u64 {
        let sys = generate_random_system(1 + seed as usize % 5, 1 + seed as usize % 3, seed).unwrap();
        let f = sys.to_family().unwrap();
        if !check_assumptions(&f).passed() {
            clean_failures.push(seed);
        }
        if seed % 5 != 0 {
            continue;
        }
        if let Some(i) = f.labels.iter().position(|l| singular_copy(l).is_some()) {
            let mut g = f.clone();
            g.labels[i] = singular_copy(&f.labels[i]).unwrap();
            defects += 1;
            if check_assumptions(&g).passed() {
                undetected.push(format!("singular G, seed {seed}"));
            }
        }
        if let Some(i) = f.order.iter().position(|r| r.upper != r.lower) {
            let mut g = f.clone();
            let entry = g.order[i].witness.combos.values_mut().next().unwrap();
            entry[0] += Rational::one();
            defects += 1;
            if check_assumptions(&g).passed() {
                undetected.push(format!("broken witness, seed {seed}"));
            }
        }
        let top = f.labels.last().unwrap().id().to_string();
        let mut g = f.clone();
        g.order.retain(|r| r.upper != top || r.lower == top);
        if g.order.len() < f.order.len() {
            defects += 1;
            if check_assumptions(&g).passed() {
                undetected.push(format!("missing join, seed {seed}"));
            }
        }
    }
    outcome(
        clean_failures.is_empty() && undetected.is_empty(),
        format!(
            "100 systems, clean failures {clean_failures:?}; {defects} injected defects, undetected {undetected:?}"
        ),
    )
}

fn random_frame(prefix: &str, n: usize) -> ReducedFrame {
    ReducedFrame::from_ids((0..n).map(|i| format!("{prefix}{i}"))).unwrap()
}

fn random_projection(rng: &mut ChaCha8Rng, target: &ReducedFrame, source: &ReducedFrame) -> ProjectionMatrix {
    loop {
        let m = Matrix::from_fn(target.len(), source.len(), |_, _| rational(rng.gen_range(-3..=3), rng.gen_range(1..=3)));
        if let Ok(p) = ProjectionMatrix::new(target.clone(), source.clone(), m) {
            return p;
        }
    }
}

fn random_ap(rng: &mut ChaCha8Rng, frame: &ReducedFrame) -> APVector {
    let terms: Vec<(Vec<Rational>, Amplitude)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            let b = (0..frame.len()).map(|_| rational(rng.gen_range(-4..=4), rng.gen_range(1..=4))).collect();
            let a = Complex::new(rational(rng.gen_range(-5..=5), rng.gen_range(1..=5)), rational(rng.gen_range(-5..=5), rng.gen_range(1..=5)));
            (b, a)
        })
        .collect();
    APVector::from_terms(frame.clone(), terms).unwrap()
}

fn almost_periodic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    for _ in 0..1000 {
        let (n0, n1) = (rng.gen_range(1..=3), rng.gen_range(0..=2));
        let n2 = rng.gen_range(0..=2);
        let k = random_frame("k", n0);
        let k1 = random_frame("m", n0 + n1);
        let k2 = random_frame("n", n0 + n1 + n2);
        let outer = random_projection(&mut rng, &k, &k1);
        let inner = random_projection(&mut rng, &k1, &k2);
        let (v, w) = (random_ap(&mut rng, &k), random_ap(&mut rng, &k));
        let before = inner_product(&v, &w).unwrap();
        let pv = promote(&v, &outer).unwrap();
        let pw = promote(&w, &outer).unwrap();
        let isometry = inner_product(&pv, &pw).unwrap() == before;
        let total = compose_projections(&outer, &inner).unwrap();
        let cocycle = promote(&pv, &inner).unwrap() == promote(&v, &total).unwrap();
        if !(isometry && cocycle) {
            failures += 1;
        }
    }
    let frame = random_frame("k", 2);
    let freqs: Vec<Vec<Rational>> = (0..20)
        .map(|i| vec![rational(i % 5, 1 + i / 5), rational(i / 7, 3)])
        .collect();
    let mut table_ok = true;
    for a in &freqs {
        for b in &freqs {
            let ea = APVector::character(Frequency::new(a.clone(), frame.clone()).unwrap());
            let eb = APVector::character(Frequency::new(b.clone(), frame.clone()).unwrap());
            let expect = if a == b { rational_int(1) } else { Rational::zero() };
            table_ok &= inner_product(&ea, &eb).unwrap() == Complex::new(expect, Rational::zero());
        }
    }
    outcome(
        failures == 0 && table_ok,
        format!("1000 random chains, {failures} failures; 20x20 Kronecker table exact {table_ok}"),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

fn greedy_selection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut resolved, mut refused, mut mismatches) = (0, 0, 0);
    for _ in 0..300 {
        let m = rng.gen_range(1..=5);
        let pool_size = rng.gen_range(1..=12);
        let pool: Vec<DofId> = (0..pool_size).map(|i| DofId::new(format!("d{i:02}"))).collect();
        let sparsity = rng.gen_range(0.2..0.9);
        let ops: Vec<MomentumOperator> = (0..m)
            .map(|j| {
                let action = pool
                    .iter()
                    .map(|d| {
                        let v = if rng.gen_bool(sparsity) { 0 } else { rng.gen_range(-2..=2) };
                        (d.clone(), rational_int(v))
                    })
                    .collect();
                MomentumOperator::new(format!("op{j}"), action)
            })
            .collect();
        let exhaustive = subsets(pool_size, m).into_iter().any(|s| {
            let dofs: Vec<DofId> = s.iter().map(|&i| pool[i].clone()).collect();
            action_matrix(&ops, &dofs).unwrap().rank_by_elimination(0.0) == m
        });
        match select_independent_dofs(&ops, &pool) {
            Ok(chosen) => {
                let rank = action_matrix(&ops, &chosen).unwrap().rank_by_elimination(0.0);
                if rank != m || chosen.len() != m || !exhaustive {
                    mismatches += 1;
                }
                resolved += 1;
            }
            Err(_) => {
                if exhaustive {
                    mismatches += 1;
                }
                refused += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && resolved > 0 && refused > 0,
        format!("300 operator sets ({resolved} resolvable, {refused} not), {mismatches} disagreements with exhaustive search"),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome, u64);
    let criteria: [Criterion; 8] = [
        ("triple consistency", triple_consistency, 60),
        ("projection/injection algebra", projection_algebra, 5),
        ("oracle equivalence", oracle_equivalence, 30),
        ("trace and positivity", trace_and_positivity, 30),
        ("join correctness", join_correctness, 10),
        ("assumption audit", assumption_audit, 10),
        ("almost periodic", almost_periodic, 5),
        ("greedy selection", greedy_selection, 10),
    ];
    let mut all = true;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let passed = o.passed && in_time;
        all &= passed;
        println!(
            "criterion {}: {} {name}: {} [{:.2}s of {limit}s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
