//! Labels `λ = (F̂, K)`, their pairing matrix `G`, the order `λ' ≥ λ` with
//! its injections `ω_{λ'λ}`, and instance-level audits of the structural
//! assumptions a family of labels has to satisfy.
//!
//! Degrees of freedom are compared as functions through an
//! [`EvaluationBasis`]: a finite list of test configurations together with the
//! value of every registered degree of freedom on each of them. All checks are
//! exact over the rationals.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Zero};

use crate::linalg::{Matrix, Rational};
use crate::reduced_spaces::{
    build_projection, DofId, ProjectionMatrix, ReducedFrame, ReducedSpaceError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DofError {
    #[error("operator `{operator}` has no action on `{dof}`")]
    MissingAction { operator: String, dof: DofId },
    #[error("no evaluation data for `{0}`")]
    MissingValues(DofId),
    #[error("label `{0}` has a degenerate G matrix")]
    DegenerateG(String),
    #[error("malformed label `{label}`: {reason}")]
    MalformedLabel { label: String, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("order witness rejected: {0}")]
    WitnessInvalid(OrderViolation),
    #[error("the pool cannot separate the operators: rank {rank} of {wanted}")]
    NotResolvable { rank: usize, wanted: usize },
    #[error(transparent)]
    Reduced(#[from] ReducedSpaceError),
}

/// Test configurations and the value of every registered degree of freedom
/// on each of them.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EvaluationBasis {
    points: Vec<String>,
    values: BTreeMap<DofId, Vec<Rational>>,
}

impl EvaluationBasis {
    pub fn new(points: Vec<String>) -> Self {
        EvaluationBasis {
            points,
            values: BTreeMap::new(),
        }
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn insert(&mut self, dof: DofId, values: Vec<Rational>) -> Result<(), DofError> {
        if values.len() != self.points.len() {
            return Err(DofError::DimensionMismatch(format!(
                "`{}` has {} values for {} test configurations",
                dof,
                values.len(),
                self.points.len()
            )));
        }
        self.values.insert(dof, values);
        Ok(())
    }

    pub fn values(&self, dof: &DofId) -> Result<&[Rational], DofError> {
        self.values
            .get(dof)
            .map(Vec::as_slice)
            .ok_or_else(|| DofError::MissingValues(dof.clone()))
    }

    /// Every registered degree of freedom, in id order.
    pub fn dofs(&self) -> impl Iterator<Item = &DofId> {
        self.values.keys()
    }

    /// Value of `dof` on a configuration given as a combination of the test
    /// configurations. Unknown point names are ignored.
    pub fn evaluate(
        &self,
        dof: &DofId,
        configuration: &BTreeMap<String, Rational>,
    ) -> Result<Rational, DofError> {
        let values = self.values(dof)?;
        let mut total = Rational::zero();
        for (p, v) in self.points.iter().zip(values) {
            if let Some(c) = configuration.get(p) {
                total += c * v;
            }
        }
        Ok(total)
    }

    fn matrix_for(&self, dofs: &[DofId]) -> Result<Matrix<Rational>, DofError> {
        let rows = dofs
            .iter()
            .map(|d| self.values(d).map(<[Rational]>::to_vec))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix::from_rows(rows, self.points.len()).expect("lengths checked on insert"))
    }
}

/// A momentum operator `φ̂`, known through its constant values `φ̂κ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumOperator {
    id: String,
    action: BTreeMap<DofId, Rational>,
}

impl MomentumOperator {
    pub fn new(id: impl Into<String>, action: BTreeMap<DofId, Rational>) -> Self {
        MomentumOperator {
            id: id.into(),
            action,
        }
    }

    pub fn zero(id: impl Into<String>) -> Self {
        Self::new(id, BTreeMap::new())
    }

    /// `Σ c_k φ̂_k`, acting by the same combination of action maps. A dof
    /// missing from some term's map is taken as outside its support.
    pub fn combination(id: impl Into<String>, terms: &[(Rational, &MomentumOperator)]) -> Self {
        let mut action: BTreeMap<DofId, Rational> = BTreeMap::new();
        for (c, op) in terms {
            for (k, v) in &op.action {
                let slot = action.entry(k.clone()).or_insert_with(Rational::zero);
                *slot += c * v;
            }
        }
        Self::new(id, action)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn action(&self) -> &BTreeMap<DofId, Rational> {
        &self.action
    }

    pub fn act(&self, dof: &DofId) -> Result<&Rational, DofError> {
        self.action.get(dof).ok_or_else(|| DofError::MissingAction {
            operator: self.id.clone(),
            dof: dof.clone(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Coordinates `(φ̂κ_1, …, φ̂κ_N)` of the point `[φ̂] ∈ Q_K`.
pub fn operator_point(op: &MomentumOperator, frame: &ReducedFrame) -> Result<Vec<Rational>, DofError> {
    frame.dofs().iter().map(|d| op.act(d).cloned()).collect()
}

/// A reduced system: a basis of `F̂` paired with the frame `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemLabel {
    id: String,
    ops: Vec<MomentumOperator>,
    frame: ReducedFrame,
}

impl SystemLabel {
    pub fn new(
        id: impl Into<String>,
        ops: Vec<MomentumOperator>,
        frame: ReducedFrame,
    ) -> Result<Self, DofError> {
        let id = id.into();
        if ops.len() != frame.len() {
            return Err(DofError::MalformedLabel {
                label: id,
                reason: format!("{} operators for {} degrees of freedom", ops.len(), frame.len()),
            });
        }
        let mut seen = BTreeSet::new();
        for op in &ops {
            if !seen.insert(op.id()) {
                return Err(DofError::MalformedLabel {
                    label: id,
                    reason: format!("operator `{}` listed twice", op.id()),
                });
            }
        }
        Ok(SystemLabel { id, ops, frame })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ops(&self) -> &[MomentumOperator] {
        &self.ops
    }

    pub fn frame(&self) -> &ReducedFrame {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }
}

/// `G_{ji} = φ̂_j κ_i`, nondegenerate.
pub fn g_matrix(label: &SystemLabel) -> Result<Matrix<Rational>, DofError> {
    let g = action_matrix(label.ops(), label.frame().dofs())?;
    if g.determinant().is_zero() {
        return Err(DofError::DegenerateG(label.id.clone()));
    }
    Ok(g)
}

/// Rows are operators, columns are degrees of freedom.
pub fn action_matrix(ops: &[MomentumOperator], dofs: &[DofId]) -> Result<Matrix<Rational>, DofError> {
    let mut data = Vec::with_capacity(ops.len() * dofs.len());
    for op in ops {
        for d in dofs {
            data.push(op.act(d)?.clone());
        }
    }
    Ok(Matrix::from_vec(ops.len(), dofs.len(), data))
}

/// Witness for `λ' ≥ λ`: each `κ ∈ K` as coefficients over `K'`, and each
/// basis operator of `F̂` (by id) as coefficients over the basis of `F̂'`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OrderWitness {
    pub combos: BTreeMap<DofId, Vec<Rational>>,
    pub op_membership: BTreeMap<String, Vec<Rational>>,
}

impl OrderWitness {
    pub fn identity(label: &SystemLabel) -> Self {
        let n = label.dim();
        let unit = |i: usize| {
            (0..n)
                .map(|j| if i == j { Rational::one() } else { Rational::zero() })
                .collect::<Vec<_>>()
        };
        OrderWitness {
            combos: label
                .frame()
                .dofs()
                .iter()
                .enumerate()
                .map(|(i, d)| (d.clone(), unit(i)))
                .collect(),
            op_membership: label
                .ops()
                .iter()
                .enumerate()
                .map(|(i, op)| (op.id().to_string(), unit(i)))
                .collect(),
        }
    }
}

/// Why a claimed `λ' ≥ λ` does not hold.
#[derive(Clone, Debug, PartialEq)]
pub enum OrderViolation {
    MissingCombination(DofId),
    CombinationLength { dof: DofId, got: usize, expected: usize },
    CombinationMismatch(DofId),
    MissingMembership(String),
    MembershipLength { operator: String, got: usize, expected: usize },
    MembershipMismatch { operator: String, dof: DofId },
    Data(String),
}

impl fmt::Display for OrderViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderViolation::MissingCombination(d) => write!(f, "no combination given for `{d}`"),
            OrderViolation::CombinationLength { dof, got, expected } => {
                write!(f, "combination for `{dof}` has {got} coefficients, expected {expected}")
            }
            OrderViolation::CombinationMismatch(d) => {
                write!(f, "`{d}` differs from its witnessed combination on the evaluation basis")
            }
            OrderViolation::MissingMembership(op) => write!(f, "no membership coefficients for operator `{op}`"),
            OrderViolation::MembershipLength { operator, got, expected } => write!(
                f,
                "membership of `{operator}` has {got} coefficients, expected {expected}"
            ),
            OrderViolation::MembershipMismatch { operator, dof } => write!(
                f,
                "operator `{operator}` differs from its witnessed combination on `{dof}`"
            ),
            OrderViolation::Data(msg) => f.write_str(msg),
        }
    }
}

/// Part (a) of the order: each `κ ∈ K` equals its combination of `K'` as a
/// function on the evaluation basis.
pub fn check_combinations(
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
    basis: &EvaluationBasis,
) -> Result<(), OrderViolation> {
    let n_up = upper.dim();
    let upper_values = basis
        .matrix_for(upper.frame().dofs())
        .map_err(|e| OrderViolation::Data(e.to_string()))?;
    for d in lower.frame().dofs() {
        let c = w
            .combos
            .get(d)
            .ok_or_else(|| OrderViolation::MissingCombination(d.clone()))?;
        if c.len() != n_up {
            return Err(OrderViolation::CombinationLength {
                dof: d.clone(),
                got: c.len(),
                expected: n_up,
            });
        }
        let combined = upper_values.transpose().mul_vec(c);
        let own = basis.values(d).map_err(|e| OrderViolation::Data(e.to_string()))?;
        if combined.as_slice() != own {
            return Err(OrderViolation::CombinationMismatch(d.clone()));
        }
    }
    Ok(())
}

/// Part (b) of the order: each basis operator of `F̂` equals its combination
/// of the basis of `F̂'` on every registered degree of freedom.
pub fn check_membership(
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
    basis: &EvaluationBasis,
) -> Result<(), OrderViolation> {
    let n_up = upper.dim();
    for op in lower.ops() {
        let c = w
            .op_membership
            .get(op.id())
            .ok_or_else(|| OrderViolation::MissingMembership(op.id().to_string()))?;
        if c.len() != n_up {
            return Err(OrderViolation::MembershipLength {
                operator: op.id().to_string(),
                got: c.len(),
                expected: n_up,
            });
        }
        for d in basis.dofs() {
            let mut combined = Rational::zero();
            for (coef, op_up) in c.iter().zip(upper.ops()) {
                if coef.is_zero() {
                    continue;
                }
                let v = op_up.act(d).map_err(|e| OrderViolation::Data(e.to_string()))?;
                combined += coef * v;
            }
            let own = op.act(d).map_err(|e| OrderViolation::Data(e.to_string()))?;
            if &combined != own {
                return Err(OrderViolation::MembershipMismatch {
                    operator: op.id().to_string(),
                    dof: d.clone(),
                });
            }
        }
    }
    Ok(())
}

/// `λ' ≥ λ` as certified by `w`; both parts are checked exactly.
pub fn relation_geq(
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
    basis: &EvaluationBasis,
) -> Result<(), OrderViolation> {
    check_combinations(upper, lower, w, basis)?;
    check_membership(upper, lower, w, basis)
}

/// `pr_{KK'}` read off the witness.
pub fn projection_of(
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
) -> Result<ProjectionMatrix, DofError> {
    Ok(build_projection(lower.frame(), upper.frame(), &w.combos)?)
}

/// `W = G'ᵀ (Gᵀ)⁻¹`, the coordinates of `ω_{λ'λ}`. Here `G` pairs the basis
/// of `F̂` with `K` and `G'` pairs the same operators with `K'`.
pub fn injection_omega(
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
    basis: &EvaluationBasis,
) -> Result<Matrix<Rational>, DofError> {
    relation_geq(upper, lower, w, basis).map_err(DofError::WitnessInvalid)?;
    let g = g_matrix(lower)?;
    let g_up = action_matrix(lower.ops(), upper.frame().dofs())?;
    let gt_inv = g
        .transpose()
        .inverse(0.0)
        .ok_or_else(|| DofError::DegenerateG(lower.id.clone()))?;
    Ok(g_up.transpose().checked_mul(&gt_inv).expect("N' x N times N x N"))
}

/// Projection and injection of a verified pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub projection: ProjectionMatrix,
    pub embedding: Matrix<Rational>,
}

pub fn refinement(
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
    basis: &EvaluationBasis,
) -> Result<Refinement, DofError> {
    let embedding = injection_omega(upper, lower, w, basis)?;
    let projection = projection_of(upper, lower, w)?;
    Ok(Refinement {
        projection,
        embedding,
    })
}

/// Witness for `top ≥ bottom` obtained from `top ≥ mid` and `mid ≥ bottom`.
pub fn compose_witnesses(
    top_mid: &OrderWitness,
    mid_bottom: &OrderWitness,
    mid: &SystemLabel,
    bottom: &SystemLabel,
) -> Result<OrderWitness, OrderViolation> {
    let mut combos = BTreeMap::new();
    for d in bottom.frame().dofs() {
        let c = mid_bottom
            .combos
            .get(d)
            .ok_or_else(|| OrderViolation::MissingCombination(d.clone()))?;
        let rows = mid
            .frame()
            .dofs()
            .iter()
            .map(|m| {
                top_mid
                    .combos
                    .get(m)
                    .ok_or_else(|| OrderViolation::MissingCombination(m.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        combos.insert(d.clone(), combine_rows(c, &rows));
    }
    let mut op_membership = BTreeMap::new();
    for op in bottom.ops() {
        let c = mid_bottom
            .op_membership
            .get(op.id())
            .ok_or_else(|| OrderViolation::MissingMembership(op.id().to_string()))?;
        let rows = mid
            .ops()
            .iter()
            .map(|m| {
                top_mid
                    .op_membership
                    .get(m.id())
                    .ok_or_else(|| OrderViolation::MissingMembership(m.id().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        op_membership.insert(op.id().to_string(), combine_rows(c, &rows));
    }
    Ok(OrderWitness {
        combos,
        op_membership,
    })
}

fn combine_rows(coefs: &[Rational], rows: &[&Vec<Rational>]) -> Vec<Rational> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = vec![Rational::zero(); width];
    for (c, row) in coefs.iter().zip(rows) {
        if c.is_zero() {
            continue;
        }
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += c * v;
        }
    }
    out
}

/// Greedy choice of degrees of freedom from `pool` on which the operators
/// stay independent. A candidate is kept when it raises the rank of the
/// action matrix, i.e. strictly shrinks the set of coefficient vectors
/// annihilating every kept degree of freedom.
pub fn select_independent_dofs(
    ops: &[MomentumOperator],
    pool: &[DofId],
) -> Result<Vec<DofId>, DofError> {
    let m = ops.len();
    let mut chosen: Vec<DofId> = Vec::new();
    let mut rank = 0;
    for d in pool {
        if rank == m {
            break;
        }
        let mut trial = chosen.clone();
        trial.push(d.clone());
        let r = action_matrix(ops, &trial)?.rank_by_elimination(0.0);
        if r > rank {
            rank = r;
            chosen = trial;
        }
    }
    if rank < m {
        return Err(DofError::NotResolvable { rank, wanted: m });
    }
    Ok(chosen)
}

/// An order relation `upper ≥ lower` between labels of a family.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderRelation {
    pub upper: String,
    pub lower: String,
    pub witness: OrderWitness,
}

/// Finite degrees of freedom that some label must span.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanProbe {
    pub dofs: Vec<DofId>,
    pub label: String,
}

/// Finite operator set that some label must contain.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverProbe {
    pub operators: Vec<MomentumOperator>,
    pub label: String,
}

/// Configurations, as combinations of the test configurations, whose images
/// under `K̃` should span `ℝ^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurjectivityProbe {
    pub label: String,
    pub configurations: Vec<BTreeMap<String, Rational>>,
}

/// Claims that `join` is an upper bound of `first` and `second`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectednessProbe {
    pub first: String,
    pub second: String,
    pub join: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Probes {
    pub spans: Vec<SpanProbe>,
    pub covers: Vec<CoverProbe>,
    pub surjectivity: Vec<SurjectivityProbe>,
    pub directedness: Vec<DirectednessProbe>,
}

/// A finite presented sublattice of labels with everything needed to audit it.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemFamily {
    pub basis: EvaluationBasis,
    pub labels: Vec<SystemLabel>,
    pub order: Vec<OrderRelation>,
    pub probes: Probes,
}

impl SystemFamily {
    pub fn label(&self, id: &str) -> Option<&SystemLabel> {
        self.labels.iter().find(|l| l.id() == id)
    }

    pub fn relation(&self, upper: &str, lower: &str) -> Option<&OrderRelation> {
        self.order
            .iter()
            .find(|r| r.upper == upper && r.lower == lower)
    }

    /// Witness for `upper ≥ lower`: declared, the identity when the labels
    /// coincide, or composed through one intermediate label.
    pub fn witness_between(&self, upper: &str, lower: &str) -> Option<OrderWitness> {
        if let Some(r) = self.relation(upper, lower) {
            return Some(r.witness.clone());
        }
        if upper == lower {
            return self.label(upper).map(OrderWitness::identity);
        }
        let bottom = self.label(lower)?;
        for first in self.order.iter().filter(|r| r.upper == upper) {
            if let (Some(second), Some(mid)) = (self.relation(&first.lower, lower), self.label(&first.lower)) {
                if let Ok(w) = compose_witnesses(&first.witness, &second.witness, mid, bottom) {
                    return Some(w);
                }
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Assumption {
    SpansDofs,
    ContainsOperators,
    Surjective,
    DerivationRule,
    ConstantAction,
    NondegenerateG,
    EqualSpaces,
    LinearCombination,
    OperatorInclusion,
    Transitivity,
    Directedness,
}

impl Assumption {
    pub fn code(self) -> &'static str {
        match self {
            Assumption::SpansDofs => "A1a",
            Assumption::ContainsOperators => "A1b",
            Assumption::Surjective => "A2",
            Assumption::DerivationRule => "A3a",
            Assumption::ConstantAction => "A3b",
            Assumption::NondegenerateG => "A4",
            Assumption::EqualSpaces => "A5",
            Assumption::LinearCombination => "A6a",
            Assumption::OperatorInclusion => "A6b",
            Assumption::Transitivity => "transitivity",
            Assumption::Directedness => "directedness",
        }
    }

    pub fn anchor(self) -> &'static str {
        match self {
            Assumption::SpansDofs => "Assumption 1(a) (finite d.o.f. sets are cylindrical)",
            Assumption::ContainsOperators => "Assumption 1(b) (finite operator sets are contained)",
            Assumption::Surjective => "Assumption 2 (image of K̃ is ℝ^N)",
            Assumption::DerivationRule => "Assumption 3(a) (operators act as derivations)",
            Assumption::ConstantAction => "Assumption 3(b) (φ̂κ is constant)",
            Assumption::NondegenerateG => "Assumption 4 (nondegenerate G)",
            Assumption::EqualSpaces => "Assumption 5 (equal spaces are ordered)",
            Assumption::LinearCombination => "Assumption 6(a) (K is a linear combination of K')",
            Assumption::OperatorInclusion => "Assumption 6(b) (F̂ ⊂ F̂')",
            Assumption::Transitivity => "preorder (transitivity of ≥)",
            Assumption::Directedness => "directed set (upper bounds exist)",
        }
    }
}

/// One checked instance of an assumption.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceCheck {
    pub assumption: Assumption,
    pub subject: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AssumptionReport {
    pub instances: Vec<InstanceCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.instances.iter().all(|i| i.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InstanceCheck> {
        self.instances.iter().filter(|i| !i.passed)
    }

    pub fn count(&self, assumption: Assumption) -> usize {
        self.instances.iter().filter(|i| i.assumption == assumption).count()
    }

    fn push(&mut self, assumption: Assumption, subject: String, outcome: Result<String, String>) {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.instances.push(InstanceCheck {
            assumption,
            subject,
            passed,
            detail,
        });
    }
}

/// Audits a presented family instance by instance. The report lists every
/// checked instance with the witness or the reason it failed.
pub fn check_assumptions(family: &SystemFamily) -> AssumptionReport {
    let mut report = AssumptionReport::default();
    let basis = &family.basis;
    let label = |id: &str| family.label(id).ok_or_else(|| format!("unknown label `{id}`"));

    for p in &family.probes.spans {
        let outcome = label(&p.label).and_then(|l| check_span(l, &p.dofs, basis));
        report.push(Assumption::SpansDofs, format!("{:?} in {}", p.dofs, p.label), outcome);
    }
    for p in &family.probes.covers {
        let ids: Vec<&str> = p.operators.iter().map(MomentumOperator::id).collect();
        let outcome = label(&p.label).and_then(|l| check_cover(l, &p.operators, basis));
        report.push(Assumption::ContainsOperators, format!("{:?} in {}", ids, p.label), outcome);
    }

    check_surjectivity(family, &mut report);

    for l in &family.labels {
        for op in l.ops() {
            let subject = format!("{}: {}", l.id(), op.id());
            report.push(Assumption::ConstantAction, subject.clone(), check_total_action(op, basis));
            report.push(Assumption::DerivationRule, subject, check_factorization(op, basis));
        }
    }

    for l in &family.labels {
        let outcome = match g_matrix(l) {
            Ok(g) => Ok(format!("det G = {}", g.determinant())),
            Err(e) => Err(e.to_string()),
        };
        report.push(Assumption::NondegenerateG, l.id().to_string(), outcome);
    }

    check_equal_spaces(family, &mut report);

    for r in &family.order {
        let subject = format!("{} ≥ {}", r.upper, r.lower);
        let pair = label(&r.upper).and_then(|u| label(&r.lower).map(|l| (u, l)));
        let (a, b) = match pair {
            Ok((u, l)) => (
                check_combinations(u, l, &r.witness, basis)
                    .map(|()| "combination witness verified".to_string())
                    .map_err(|e| e.to_string()),
                check_membership(u, l, &r.witness, basis)
                    .map(|()| "membership witness verified".to_string())
                    .map_err(|e| e.to_string()),
            ),
            Err(e) => (Err(e.clone()), Err(e)),
        };
        report.push(Assumption::LinearCombination, subject.clone(), a);
        report.push(Assumption::OperatorInclusion, subject, b);
    }

    for first in &family.order {
        for second in family.order.iter().filter(|s| s.upper == first.lower) {
            if first.upper == first.lower || second.upper == second.lower {
                continue;
            }
            let subject = format!("{} ≥ {} ≥ {}", first.upper, first.lower, second.lower);
            let outcome = (|| {
                let top = label(&first.upper)?;
                let mid = label(&first.lower)?;
                let bottom = label(&second.lower)?;
                let w = compose_witnesses(&first.witness, &second.witness, mid, bottom)
                    .map_err(|e| e.to_string())?;
                relation_geq(top, bottom, &w, basis).map_err(|e| e.to_string())?;
                Ok("composed witness verified".to_string())
            })();
            report.push(Assumption::Transitivity, subject, outcome);
        }
    }

    for p in &family.probes.directedness {
        let subject = format!("{{{}, {}}}", p.first, p.second);
        let outcome = match &p.join {
            None => Err("no upper bound supplied".to_string()),
            Some(j) => (|| {
                let top = label(j)?;
                for lower in [&p.first, &p.second] {
                    let bottom = label(lower)?;
                    let w = family
                        .witness_between(j, lower)
                        .ok_or_else(|| format!("no witnessed relation {j} ≥ {lower}"))?;
                    relation_geq(top, bottom, &w, basis).map_err(|e| format!("{j} ≥ {lower}: {e}"))?;
                }
                Ok(format!("upper bound {j}"))
            })(),
        };
        report.push(Assumption::Directedness, subject, outcome);
    }
    report
}

fn check_span(l: &SystemLabel, dofs: &[DofId], basis: &EvaluationBasis) -> Result<String, String> {
    let frame_values = basis.matrix_for(l.frame().dofs()).map_err(|e| e.to_string())?;
    let system = frame_values.transpose();
    for d in dofs {
        let target = basis.values(d).map_err(|e| e.to_string())?;
        if system.solve_consistent(target, 0.0).is_none() {
            return Err(format!("`{d}` is not a linear combination of the frame of {}", l.id()));
        }
    }
    Ok(format!("{} degrees of freedom expressed over {}", dofs.len(), l.id()))
}

fn check_cover(l: &SystemLabel, ops: &[MomentumOperator], basis: &EvaluationBasis) -> Result<String, String> {
    let dofs: Vec<DofId> = basis.dofs().cloned().collect();
    let label_actions = action_matrix(l.ops(), &dofs).map_err(|e| e.to_string())?;
    let system = label_actions.transpose();
    for op in ops {
        let target = dofs
            .iter()
            .map(|d| op.act(d).cloned())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        if system.solve_consistent(&target, 0.0).is_none() {
            return Err(format!("operator `{}` is not in the span of {}", op.id(), l.id()));
        }
    }
    Ok(format!("{} operators expressed over {}", ops.len(), l.id()))
}

fn check_total_action(op: &MomentumOperator, basis: &EvaluationBasis) -> Result<String, String> {
    for d in basis.dofs() {
        op.act(d).map_err(|e| e.to_string())?;
    }
    Ok("constant value on every registered d.o.f.".to_string())
}

/// The operator is a derivation with constant coefficients exactly when its
/// values factor linearly through the evaluation data: `φ̂κ = ℓ · values(κ)`.
fn check_factorization(op: &MomentumOperator, basis: &EvaluationBasis) -> Result<String, String> {
    let dofs: Vec<DofId> = basis.dofs().cloned().collect();
    let values = basis.matrix_for(&dofs).map_err(|e| e.to_string())?;
    let target = dofs
        .iter()
        .map(|d| op.act(d).cloned())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    match values.solve_consistent(&target, 0.0) {
        Some(_) => Ok("action factors through the evaluation basis".to_string()),
        None => Err("action is not linear in the degrees of freedom".to_string()),
    }
}

fn image_rank(l: &SystemLabel, configs: &[BTreeMap<String, Rational>], basis: &EvaluationBasis) -> Result<usize, String> {
    let mut data = Vec::new();
    for c in configs {
        for d in l.frame().dofs() {
            data.push(basis.evaluate(d, c).map_err(|e| e.to_string())?);
        }
    }
    Ok(Matrix::from_vec(configs.len(), l.dim(), data).rank_by_elimination(0.0))
}

/// Direct witnesses are checked as given. A label without one inherits the
/// configurations of any label above it that has a witness, since the image
/// of a surjection under a full-rank projection is again everything.
fn check_surjectivity(family: &SystemFamily, report: &mut AssumptionReport) {
    let basis = &family.basis;
    let mut witnessed: BTreeMap<&str, &[BTreeMap<String, Rational>]> = BTreeMap::new();
    for p in &family.probes.surjectivity {
        let outcome = match family.label(&p.label) {
            None => Err(format!("unknown label `{}`", p.label)),
            Some(l) => image_rank(l, &p.configurations, basis).and_then(|r| {
                if r == l.dim() {
                    Ok(format!("{} witness configurations reach rank {r}", p.configurations.len()))
                } else {
                    Err(format!("witness configurations reach rank {r} of {}", l.dim()))
                }
            }),
        };
        if outcome.is_ok() {
            witnessed.insert(p.label.as_str(), &p.configurations);
        }
        report.push(Assumption::Surjective, p.label.clone(), outcome);
    }
    let direct: BTreeSet<&str> = family.probes.surjectivity.iter().map(|p| p.label.as_str()).collect();
    for l in &family.labels {
        if direct.contains(l.id()) {
            continue;
        }
        let mut outcome = Err("no surjectivity witness, direct or derived".to_string());
        for r in family.order.iter().filter(|r| r.lower == l.id() && r.upper != r.lower) {
            let Some(configs) = witnessed.get(r.upper.as_str()) else {
                continue;
            };
            let Some(upper) = family.label(&r.upper) else {
                continue;
            };
            if check_combinations(upper, l, &r.witness, basis).is_err() {
                continue;
            }
            if let Ok(rank) = image_rank(l, configs, basis) {
                if rank == l.dim() {
                    outcome = Ok(format!("derived through {} ≥ {}", r.upper, l.id()));
                    break;
                }
            }
        }
        report.push(Assumption::Surjective, l.id().to_string(), outcome);
    }
}

/// Labels with the same operator span and the same space `Q_K` must be
/// related in both directions.
fn check_equal_spaces(family: &SystemFamily, report: &mut AssumptionReport) {
    let basis = &family.basis;
    let dofs: Vec<DofId> = basis.dofs().cloned().collect();
    let signature = |l: &SystemLabel| -> Option<(Matrix<Rational>, Matrix<Rational>)> {
        let ops = action_matrix(l.ops(), &dofs).ok()?.rref(0.0).reduced;
        let space = basis.matrix_for(l.frame().dofs()).ok()?.rref(0.0).reduced;
        Some((ops, space))
    };
    let sigs: Vec<_> = family.labels.iter().map(signature).collect();
    for (i, a) in family.labels.iter().enumerate() {
        for (j, b) in family.labels.iter().enumerate() {
            if i == j || sigs[i].is_none() || sigs[i] != sigs[j] {
                continue;
            }
            let subject = format!("{} ≥ {}", a.id(), b.id());
            let outcome = match family.relation(a.id(), b.id()) {
                None => Err("equal spaces but no declared relation".to_string()),
                Some(r) => relation_geq(a, b, &r.witness, basis)
                    .map(|()| "declared relation verified".to_string())
                    .map_err(|e| e.to_string()),
            };
            report.push(Assumption::EqualSpaces, subject, outcome);
        }
    }
}
