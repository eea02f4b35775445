//! Holonomy-flux degrees of freedom of a degenerate Plebański-type gravity
//! model on a combinatorial surface.
//!
//! Geometry is replaced by incidence data. Edges are words in oriented
//! atomic edges, graphs are sets of atom-disjoint edges, and a face is known
//! only through its incidence number on each atom (in halves: `±½` for an
//! endpoint touching, `±1` for a transversal puncture). The holonomy `κ_e` is
//! linear in the connection, and `φ̂_S κ_e = ε(S, e)` is the signed sum of the
//! face's incidences along the word.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dof_systems::{
    action_matrix, g_matrix, select_independent_dofs, CoverProbe, DirectednessProbe,
    EvaluationBasis, MomentumOperator, OrderRelation, OrderWitness, Probes, SpanProbe,
    SurjectivityProbe, SystemFamily, SystemLabel,
};
use crate::linalg::{rational, rational_int, Matrix, Rational};
use crate::reduced_spaces::{DofId, ReducedFrame};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpgError {
    #[error("unknown atomic edge `{0}`")]
    UnknownAtom(String),
    #[error("unknown face `{0}`")]
    UnknownFace(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("atomic edge `{0}` has equal endpoints but is not flagged as a loop")]
    UnflaggedLoop(String),
    #[error("edge word is empty")]
    EmptyWord,
    #[error("atom `{0}` occurs twice in one edge word")]
    RepeatedAtom(String),
    #[error("letters {0} and {1} of the word are not composable")]
    NotComposable(usize, usize),
    #[error("edges `{0}` and `{1}` share an atomic edge")]
    NotIndependent(String, String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("incidence value {0}/2 is outside {{-1, -1/2, 0, 1/2, 1}}")]
    BadIncidence(i64),
    #[error("edge `{0}` is declared with two different words")]
    ConflictingEdge(String),
    #[error("graph is empty")]
    EmptyGraph,
    #[error("edges overlap in a way that cannot be split")]
    IncompatibleOverlap,
    #[error("{0}")]
    Family(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn times(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn rational(self) -> Rational {
        rational_int(self.value())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicEdge {
    pub id: String,
    pub source: String,
    pub target: String,
    pub is_loop: bool,
}

impl AtomicEdge {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
        is_loop: bool,
    ) -> Result<Self, DpgError> {
        let a = AtomicEdge {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            is_loop,
        };
        if a.source == a.target && !a.is_loop {
            return Err(DpgError::UnflaggedLoop(a.id));
        }
        Ok(a)
    }
}

pub type AtomTable = BTreeMap<String, AtomicEdge>;
pub type FaceTable = BTreeMap<String, Face>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub atom: String,
    pub sign: Sign,
}

impl Letter {
    pub fn new(atom: impl Into<String>, sign: Sign) -> Self {
        Letter {
            atom: atom.into(),
            sign,
        }
    }

    fn inverse(&self) -> Letter {
        Letter::new(self.atom.clone(), self.sign.flip())
    }

    fn start<'a>(&self, atoms: &'a AtomTable) -> Result<&'a str, DpgError> {
        let a = atoms.get(&self.atom).ok_or_else(|| DpgError::UnknownAtom(self.atom.clone()))?;
        Ok(match self.sign {
            Sign::Plus => &a.source,
            Sign::Minus => &a.target,
        })
    }

    fn end<'a>(&self, atoms: &'a AtomTable) -> Result<&'a str, DpgError> {
        self.inverse().start(atoms)
    }
}

/// A composable word of distinct signed atoms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeWord {
    letters: Vec<Letter>,
}

impl EdgeWord {
    pub fn new(letters: Vec<Letter>, atoms: &AtomTable) -> Result<Self, DpgError> {
        if letters.is_empty() {
            return Err(DpgError::EmptyWord);
        }
        let mut seen = BTreeSet::new();
        for l in &letters {
            if !atoms.contains_key(&l.atom) {
                return Err(DpgError::UnknownAtom(l.atom.clone()));
            }
            if !seen.insert(&l.atom) {
                return Err(DpgError::RepeatedAtom(l.atom.clone()));
            }
        }
        for i in 1..letters.len() {
            if letters[i - 1].end(atoms)? != letters[i].start(atoms)? {
                return Err(DpgError::NotComposable(i - 1, i));
            }
        }
        Ok(EdgeWord { letters })
    }

    pub fn single(atom: impl Into<String>, sign: Sign) -> Self {
        EdgeWord {
            letters: vec![Letter::new(atom, sign)],
        }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &str> {
        self.letters.iter().map(|l| l.atom.as_str())
    }

    /// `e⁻¹`: letters reversed with flipped signs.
    pub fn inverse(&self) -> EdgeWord {
        EdgeWord {
            letters: self.letters.iter().rev().map(Letter::inverse).collect(),
        }
    }

    /// `self ∘ first`: traverse `first`, then `self`.
    pub fn after(&self, first: &EdgeWord, atoms: &AtomTable) -> Result<EdgeWord, DpgError> {
        let mut letters = first.letters.clone();
        letters.extend(self.letters.iter().cloned());
        EdgeWord::new(letters, atoms)
    }

    /// Orientation in which the smallest atom is traversed positively.
    pub fn canonical(&self) -> EdgeWord {
        let min = self
            .letters
            .iter()
            .min_by(|a, b| a.atom.cmp(&b.atom))
            .expect("words are nonempty");
        if min.sign == Sign::Plus {
            self.clone()
        } else {
            self.inverse()
        }
    }

    /// Signed indicator of the word on `points` (atom ids).
    pub fn indicator(&self, points: &[String]) -> Vec<Rational> {
        points
            .iter()
            .map(|p| match self.letters.iter().find(|l| &l.atom == p) {
                Some(l) => l.sign.rational(),
                None => Rational::zero(),
            })
            .collect()
    }

    fn subword(&self, from: usize, to: usize) -> EdgeWord {
        EdgeWord {
            letters: self.letters[from..to].to_vec(),
        }
    }
}

impl fmt::Display for EdgeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let s = if l.sign == Sign::Plus { '+' } else { '-' };
            write!(f, "{s}{}", l.atom)?;
        }
        Ok(())
    }
}

/// Id used for an edge created by refinement: its canonical word.
pub fn canonical_edge_id(word: &EdgeWord) -> String {
    format!("e[{}]", word.canonical())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub word: EdgeWord,
}

impl Edge {
    pub fn new(id: impl Into<String>, word: EdgeWord) -> Self {
        Edge { id: id.into(), word }
    }

    pub fn canonical(word: &EdgeWord) -> Self {
        let w = word.canonical();
        Edge::new(canonical_edge_id(&w), w)
    }

    pub fn dof(&self) -> DofId {
        DofId::new(self.id.clone())
    }
}

/// A finite set of pairwise atom-disjoint edges, in a fixed order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(edges: Vec<Edge>) -> Result<Self, DpgError> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for e in &edges {
            if !ids.insert(e.id.as_str()) {
                return Err(DpgError::DuplicateId(e.id.clone()));
            }
            for a in e.word.atoms() {
                if let Some(prev) = owner.insert(a, &e.id) {
                    return Err(DpgError::NotIndependent(prev.to_string(), e.id.clone()));
                }
            }
        }
        Ok(Graph { edges })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn support(&self) -> BTreeSet<&str> {
        self.edges.iter().flat_map(|e| e.word.atoms()).collect()
    }

    pub fn frame(&self) -> Result<ReducedFrame, DpgError> {
        ReducedFrame::new(self.edges.iter().map(Edge::dof).collect())
            .map_err(|e| DpgError::Family(e.to_string()))
    }

    fn locate(&self) -> BTreeMap<&str, (usize, usize, Sign)> {
        let mut at = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            for (p, l) in e.word.letters.iter().enumerate() {
                at.insert(l.atom.as_str(), (i, p, l.sign));
            }
        }
        at
    }
}

/// Face incidence on one atom, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i8);

impl HalfInt {
    pub fn from_halves(halves: i64) -> Result<Self, DpgError> {
        if !(-2..=2).contains(&halves) {
            return Err(DpgError::BadIncidence(halves));
        }
        Ok(HalfInt(halves as i8))
    }

    pub fn halves(self) -> i64 {
        self.0 as i64
    }

    pub fn rational(self) -> Rational {
        rational(self.halves(), 2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Face {
    pub id: String,
    incidence: BTreeMap<String, HalfInt>,
}

impl Face {
    /// Zero incidences are dropped.
    pub fn new(id: impl Into<String>, incidence: BTreeMap<String, HalfInt>) -> Self {
        Face {
            id: id.into(),
            incidence: incidence.into_iter().filter(|(_, v)| v.0 != 0).collect(),
        }
    }

    pub fn incidence(&self) -> &BTreeMap<String, HalfInt> {
        &self.incidence
    }

    pub fn at(&self, atom: &str) -> HalfInt {
        self.incidence.get(atom).copied().unwrap_or(HalfInt(0))
    }
}

/// A connection known through its integral over each atomic edge.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TestConnection {
    pub values: BTreeMap<String, Rational>,
}

/// `κ_e(A) = ∫_e A`.
pub fn holonomy(e: &EdgeWord, a: &TestConnection) -> Rational {
    e.letters.iter().fold(Rational::zero(), |acc, l| match a.values.get(&l.atom) {
        Some(v) => acc + l.sign.rational() * v,
        None => acc,
    })
}

/// A connection with prescribed holonomies along the edges of `graph`.
pub fn witness_connection(graph: &Graph, targets: &[Rational]) -> Result<TestConnection, DpgError> {
    if targets.len() != graph.len() {
        return Err(DpgError::Family(format!(
            "{} targets for {} edges",
            targets.len(),
            graph.len()
        )));
    }
    let mut values = BTreeMap::new();
    for (e, t) in graph.edges.iter().zip(targets) {
        let first = &e.word.letters[0];
        if !t.is_zero() {
            values.insert(first.atom.clone(), first.sign.rational() * t);
        }
    }
    Ok(TestConnection { values })
}

/// `ε(S, e)`: the incidences along the word, each counted with the sign of
/// its letter.
pub fn epsilon(face: &Face, e: &EdgeWord) -> Rational {
    let halves: i64 = e
        .letters
        .iter()
        .map(|l| l.sign.value() * face.at(&l.atom).halves())
        .sum();
    rational(halves, 2)
}

/// `φ̂_S` acting on the holonomies of `edges`.
pub fn flux_operator(face: &Face, edges: &[Edge]) -> MomentumOperator {
    MomentumOperator::new(
        face.id.clone(),
        edges.iter().map(|e| (e.dof(), epsilon(face, &e.word))).collect(),
    )
}

/// A finite real combination of flux operators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FluxCombination {
    pub id: String,
    pub terms: Vec<(String, Rational)>,
}

impl FluxCombination {
    pub fn single(face: &str) -> Self {
        FluxCombination {
            id: face.to_string(),
            terms: vec![(face.to_string(), Rational::one())],
        }
    }

    /// Incidence on atoms of the combined operator.
    pub fn incidence(&self, faces: &FaceTable) -> Result<BTreeMap<String, Rational>, DpgError> {
        let mut out: BTreeMap<String, Rational> = BTreeMap::new();
        for (f, c) in &self.terms {
            let face = faces.get(f).ok_or_else(|| DpgError::UnknownFace(f.clone()))?;
            for (a, v) in &face.incidence {
                *out.entry(a.clone()).or_insert_with(Rational::zero) += c * v.rational();
            }
        }
        out.retain(|_, v| !v.is_zero());
        Ok(out)
    }

    pub fn act(&self, e: &EdgeWord, faces: &FaceTable) -> Result<Rational, DpgError> {
        let mut total = Rational::zero();
        for (f, c) in &self.terms {
            let face = faces.get(f).ok_or_else(|| DpgError::UnknownFace(f.clone()))?;
            total += c * epsilon(face, e);
        }
        Ok(total)
    }

    pub fn to_operator(&self, faces: &FaceTable, edges: &[Edge]) -> Result<MomentumOperator, DpgError> {
        let mut action = BTreeMap::new();
        for e in edges {
            action.insert(e.dof(), self.act(&e.word, faces)?);
        }
        Ok(MomentumOperator::new(self.id.clone(), action))
    }
}

/// Dual faces: `S_j` punctures only the first atom of `e_j`, oriented so that
/// `ε(S_j, e_i) = δ_ji`.
pub fn dual_flux_basis(graph: &Graph) -> Vec<Face> {
    graph.edges.iter().map(dual_face).collect()
}

fn dual_face(e: &Edge) -> Face {
    let first = &e.word.letters[0];
    let value = HalfInt(2 * first.sign.value() as i8);
    Face::new(format!("S[{}]", e.id), [(first.atom.clone(), value)].into_iter().collect())
}

/// Why `γ' ≥ γ` could not be established.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphRefusal {
    pub edge: String,
    pub position: usize,
}

impl fmt::Display for GraphRefusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "edge `{}` does not factor through the finer graph at letter {}",
            self.edge, self.position
        )
    }
}

/// For every edge of `lower`, the edges of `upper` (by index, with the sign
/// of traversal) whose concatenation spells it.
///
/// A loop is only recognized at the base point the finer graph uses; a
/// rotated presentation of the same loop is refused.
pub fn graph_geq(upper: &Graph, lower: &Graph) -> Result<Vec<Vec<(usize, Sign)>>, GraphRefusal> {
    let at = upper.locate();
    let mut out = Vec::with_capacity(lower.len());
    for e in &lower.edges {
        let letters = &e.word.letters;
        let refuse = |position| GraphRefusal {
            edge: e.id.clone(),
            position,
        };
        let mut pieces = Vec::new();
        let mut p = 0;
        while p < letters.len() {
            let &(k, pos, sign) = at.get(letters[p].atom.as_str()).ok_or_else(|| refuse(p))?;
            let piece = &upper.edges[k].word;
            let rel = sign.times(letters[p].sign);
            let word = if rel == Sign::Plus { piece.clone() } else { piece.inverse() };
            let expected_start = if rel == Sign::Plus { pos } else { piece.len() - 1 - pos };
            if expected_start != 0 || letters.len() - p < word.len() || letters[p..p + word.len()] != word.letters[..] {
                return Err(refuse(p));
            }
            pieces.push((k, rel));
            p += word.len();
        }
        out.push(pieces);
    }
    Ok(out)
}

/// Coefficients of each `κ_e`, `e ∈ lower`, over the holonomies of `upper`.
pub fn factorization_combos(
    upper: &Graph,
    lower: &Graph,
    factors: &[Vec<(usize, Sign)>],
) -> BTreeMap<DofId, Vec<Rational>> {
    lower
        .edges
        .iter()
        .zip(factors)
        .map(|(e, pieces)| {
            let mut c = vec![Rational::zero(); upper.len()];
            for (k, s) in pieces {
                c[*k] += s.rational();
            }
            (e.dof(), c)
        })
        .collect()
}

/// Common refinement: every edge of both graphs is cut wherever the edge
/// containing the next atom in the other graph changes or stops running
/// alongside, and the resulting pieces are oriented canonically and merged.
pub fn graph_join(first: &Graph, second: &Graph) -> Result<Graph, DpgError> {
    let loc = [first.locate(), second.locate()];
    let mut pieces: BTreeMap<String, EdgeWord> = BTreeMap::new();
    for (g, graph) in [first, second].into_iter().enumerate() {
        let other = &loc[1 - g];
        for e in &graph.edges {
            let letters = &e.word.letters;
            let mut start = 0;
            for i in 1..=letters.len() {
                let cut = i == letters.len() || !runs_alongside(&letters[i - 1], &letters[i], other);
                if cut {
                    let piece = e.word.subword(start, i).canonical();
                    let min = piece.letters.iter().map(|l| l.atom.clone()).min().expect("nonempty");
                    if let Some(prev) = pieces.insert(min, piece.clone()) {
                        if prev != piece {
                            return Err(DpgError::IncompatibleOverlap);
                        }
                    }
                    start = i;
                }
            }
        }
    }
    Graph::new(pieces.into_values().map(|w| Edge::canonical(&w)).collect())
}

/// Whether consecutive letters `x y` of a word are also consecutive, in the
/// same relative orientation, in the other graph (or both absent from it).
fn runs_alongside(x: &Letter, y: &Letter, other: &BTreeMap<&str, (usize, usize, Sign)>) -> bool {
    match (other.get(x.atom.as_str()), other.get(y.atom.as_str())) {
        (None, None) => true,
        (Some(&(ex, px, sx)), Some(&(ey, py, sy))) => {
            if ex != ey {
                return false;
            }
            let rel = sx.times(x.sign);
            if sy.times(y.sign) != rel {
                return false;
            }
            py as i64 == px as i64 + rel.value()
        }
        _ => false,
    }
}

/// A label `(F̂, K_γ)` of the holonomy-flux family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpgLabel {
    pub id: String,
    pub graph: Graph,
    pub flux_basis: Vec<FluxCombination>,
}

impl DpgLabel {
    pub fn dual(id: impl Into<String>, graph: Graph) -> (Self, Vec<Face>) {
        let faces = dual_flux_basis(&graph);
        let flux_basis = faces.iter().map(|f| FluxCombination::single(&f.id)).collect();
        (
            DpgLabel {
                id: id.into(),
                graph,
                flux_basis,
            },
            faces,
        )
    }

    /// The label seen by the generic machinery, with operator actions on
    /// `registry`.
    pub fn to_system_label(&self, faces: &FaceTable, registry: &[Edge]) -> Result<SystemLabel, DpgError> {
        let ops = self
            .flux_basis
            .iter()
            .map(|op| op.to_operator(faces, registry))
            .collect::<Result<Vec<_>, _>>()?;
        SystemLabel::new(self.id.clone(), ops, self.graph.frame()?).map_err(|e| DpgError::Family(e.to_string()))
    }

    /// `G` restricted to this label's own graph.
    pub fn g_matrix(&self, faces: &FaceTable) -> Result<Matrix<Rational>, DpgError> {
        let label = self.to_system_label(faces, self.graph.edges())?;
        let ops = label.ops().to_vec();
        action_matrix(&ops, label.frame().dofs()).map_err(|e| DpgError::Family(e.to_string()))
    }
}

/// Order witness for `upper ≥ lower`, if the graphs refine and every basis
/// operator of `lower` is a combination of those of `upper` (compared on the
/// incidence of every atom).
pub fn dpg_order_witness(upper: &DpgLabel, lower: &DpgLabel, faces: &FaceTable) -> Result<Option<OrderWitness>, DpgError> {
    let Ok(factors) = graph_geq(&upper.graph, &lower.graph) else {
        return Ok(None);
    };
    let combos = factorization_combos(&upper.graph, &lower.graph, &factors);
    let Some(coeffs) = express_in_basis(&lower.flux_basis, &upper.flux_basis, faces)? else {
        return Ok(None);
    };
    let op_membership = lower
        .flux_basis
        .iter()
        .zip(coeffs)
        .map(|(op, c)| (op.id.clone(), c))
        .collect();
    Ok(Some(OrderWitness { combos, op_membership }))
}

/// Coefficients expressing each of `targets` in `basis`, exact on atoms.
fn express_in_basis(
    targets: &[FluxCombination],
    basis: &[FluxCombination],
    faces: &FaceTable,
) -> Result<Option<Vec<Vec<Rational>>>, DpgError> {
    let basis_inc = basis.iter().map(|b| b.incidence(faces)).collect::<Result<Vec<_>, _>>()?;
    let target_inc = targets.iter().map(|t| t.incidence(faces)).collect::<Result<Vec<_>, _>>()?;
    let atoms: Vec<String> = basis_inc
        .iter()
        .chain(&target_inc)
        .flat_map(|m| m.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let columns = incidence_matrix(&basis_inc, &atoms).transpose();
    let mut out = Vec::with_capacity(targets.len());
    for t in &target_inc {
        let rhs: Vec<Rational> = atoms.iter().map(|a| t.get(a).cloned().unwrap_or_else(Rational::zero)).collect();
        match columns.solve_consistent(&rhs, 0.0) {
            Some(x) => out.push(x),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

fn incidence_matrix(rows: &[BTreeMap<String, Rational>], atoms: &[String]) -> Matrix<Rational> {
    Matrix::from_fn(rows.len(), atoms.len(), |r, c| {
        rows[r].get(&atoms[c]).cloned().unwrap_or_else(Rational::zero)
    })
}

/// Result of joining two labels.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinOutcome {
    pub label: DpgLabel,
    /// Witness for `label ≥ first`.
    pub over_first: OrderWitness,
    /// Witness for `label ≥ second`.
    pub over_second: OrderWitness,
    /// Dimension of the span of both operator sets.
    pub m: usize,
    /// Row operations taking `G⁰` to reduced form, `M x M`.
    pub transform: Matrix<Rational>,
    /// `e'_i = e_{permutation[i]}` in the refined graph.
    pub permutation: Vec<usize>,
    /// Faces created for the trailing edges.
    pub new_faces: Vec<Face>,
}

/// Upper bound `λ'' ≥ λ', λ` with `G'' = [[I, G'], [0, I]]`.
///
/// The span `F̂⁰` of both operator sets gets a basis taken from the operators
/// of `first`, then `second`. The graph is the common refinement, further cut
/// at atoms chosen greedily when `F̂⁰` is not yet independent on it. The basis
/// is row reduced against the holonomies (lowest nonzero column, largest
/// entry as pivot), the pivot edges are moved to the front, and the trailing
/// edges receive dual faces.
pub fn lambda_join(
    faces: &mut FaceTable,
    id: &str,
    first: &DpgLabel,
    second: &DpgLabel,
) -> Result<JoinOutcome, DpgError> {
    // F̂⁰: independent operators among first's basis then second's.
    let candidates: Vec<&FluxCombination> = first.flux_basis.iter().chain(&second.flux_basis).collect();
    let incidences = candidates.iter().map(|c| c.incidence(faces)).collect::<Result<Vec<_>, _>>()?;
    let atoms: Vec<String> = incidences
        .iter()
        .flat_map(|m| m.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut basis: Vec<FluxCombination> = Vec::new();
    let mut kept: Vec<BTreeMap<String, Rational>> = Vec::new();
    for (c, inc) in candidates.iter().zip(&incidences) {
        let mut trial = kept.clone();
        trial.push(inc.clone());
        if incidence_matrix(&trial, &atoms).rank_by_elimination(0.0) == trial.len() {
            kept = trial;
            basis.push((*c).clone());
        }
    }
    let m = basis.len();

    let mut graph = graph_join(&first.graph, &second.graph)?;
    let action_rank = |g: &Graph, faces: &FaceTable| -> Result<usize, DpgError> {
        Ok(basis_on(&basis, g.edges(), faces)?.rank_by_elimination(0.0))
    };
    if action_rank(&graph, faces)? < m {
        let pool: Vec<Edge> = atoms
            .iter()
            .map(|a| Edge::canonical(&EdgeWord::single(a.clone(), Sign::Plus)))
            .collect();
        let ops = basis
            .iter()
            .map(|b| b.to_operator(faces, &pool))
            .collect::<Result<Vec<_>, _>>()?;
        let pool_ids: Vec<DofId> = pool.iter().map(Edge::dof).collect();
        let chosen = select_independent_dofs(&ops, &pool_ids).map_err(|e| DpgError::Family(e.to_string()))?;
        let extra: Vec<Edge> = pool.into_iter().filter(|e| chosen.contains(&e.dof())).collect();
        graph = graph_join(&graph, &Graph::new(extra)?)?;
        debug_assert_eq!(action_rank(&graph, faces)?, m);
    }
    let n = graph.len();

    let g0 = basis_on(&basis, graph.edges(), faces)?;
    let reduced = g0.hstack(&Matrix::identity(m)).rref(0.0);
    let pivots: Vec<usize> = reduced.pivots.iter().copied().filter(|&p| p < n).collect();
    if pivots.len() != m {
        return Err(DpgError::Family("operators are dependent on the refined graph".into()));
    }
    let transform = Matrix::from_fn(m, m, |r, c| reduced.reduced[(r, n + c)].clone());
    let mut permutation = pivots.clone();
    permutation.extend((0..n).filter(|c| !pivots.contains(c)));
    let edges: Vec<Edge> = permutation.iter().map(|&i| graph.edges()[i].clone()).collect();
    let graph = Graph::new(edges)?;

    let mut flux_basis = Vec::with_capacity(n);
    for j in 0..m {
        let mut terms: BTreeMap<String, Rational> = BTreeMap::new();
        for (k, b) in basis.iter().enumerate() {
            let t = &transform[(j, k)];
            if t.is_zero() {
                continue;
            }
            for (f, c) in &b.terms {
                *terms.entry(f.clone()).or_insert_with(Rational::zero) += t * c;
            }
        }
        terms.retain(|_, v| !v.is_zero());
        flux_basis.push(FluxCombination {
            id: format!("{id}.op{}", j + 1),
            terms: terms.into_iter().collect(),
        });
    }
    let mut new_faces = Vec::new();
    for e in &graph.edges()[m..] {
        let face = dual_face(e);
        flux_basis.push(FluxCombination::single(&face.id));
        if !faces.contains_key(&face.id) {
            faces.insert(face.id.clone(), face.clone());
            new_faces.push(face);
        }
    }
    let label = DpgLabel {
        id: id.to_string(),
        graph,
        flux_basis,
    };
    let missing = || DpgError::Family(format!("{id} does not dominate its inputs"));
    let over_first = dpg_order_witness(&label, first, faces)?.ok_or_else(missing)?;
    let over_second = dpg_order_witness(&label, second, faces)?.ok_or_else(missing)?;
    Ok(JoinOutcome {
        label,
        over_first,
        over_second,
        m,
        transform,
        permutation,
        new_faces,
    })
}

fn basis_on(basis: &[FluxCombination], edges: &[Edge], faces: &FaceTable) -> Result<Matrix<Rational>, DpgError> {
    let mut data = Vec::with_capacity(basis.len() * edges.len());
    for b in basis {
        for e in edges {
            data.push(b.act(&e.word, faces)?);
        }
    }
    Ok(Matrix::from_vec(basis.len(), edges.len(), data))
}

/// Probe data of a presented family, in holonomy-flux terms.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DpgProbes {
    /// Edge ids that the named label must span.
    pub spans: Vec<(Vec<String>, String)>,
    /// Face ids whose operators the named label must contain.
    pub covers: Vec<(Vec<String>, String)>,
    pub surjectivity: Vec<(String, Vec<TestConnection>)>,
    pub directedness: Vec<DirectednessProbe>,
}

/// A presented holonomy-flux family: the atomic universe, every named edge
/// and face, the labels, their witnessed order and the audit probes.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DpgSystem {
    pub atoms: AtomTable,
    pub edges: BTreeMap<String, EdgeWord>,
    pub faces: FaceTable,
    pub labels: Vec<DpgLabel>,
    pub order: Vec<OrderRelation>,
    pub probes: DpgProbes,
}

impl DpgSystem {
    pub fn label(&self, id: &str) -> Result<&DpgLabel, DpgError> {
        self.labels
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| DpgError::UnknownLabel(id.to_string()))
    }

    /// Registers the label and its edges.
    pub fn add_label(&mut self, label: DpgLabel) -> Result<(), DpgError> {
        if self.labels.iter().any(|l| l.id == label.id) {
            return Err(DpgError::DuplicateId(label.id));
        }
        for e in label.graph.edges() {
            self.register_edge(e)?;
        }
        self.labels.push(label);
        Ok(())
    }

    pub fn register_edge(&mut self, e: &Edge) -> Result<(), DpgError> {
        match self.edges.get(&e.id) {
            Some(w) if *w != e.word => Err(DpgError::ConflictingEdge(e.id.clone())),
            Some(_) => Ok(()),
            None => {
                self.edges.insert(e.id.clone(), e.word.clone());
                Ok(())
            }
        }
    }

    pub fn registry(&self) -> Vec<Edge> {
        self.edges.iter().map(|(id, w)| Edge::new(id.clone(), w.clone())).collect()
    }

    /// Joins two registered labels, registers the result and records both
    /// order relations.
    pub fn join(&mut self, id: &str, first: &str, second: &str) -> Result<JoinOutcome, DpgError> {
        let a = self.label(first)?.clone();
        let b = self.label(second)?.clone();
        let out = lambda_join(&mut self.faces, id, &a, &b)?;
        self.add_label(out.label.clone())?;
        self.order.push(OrderRelation {
            upper: id.to_string(),
            lower: first.to_string(),
            witness: out.over_first.clone(),
        });
        if first != second {
            self.order.push(OrderRelation {
                upper: id.to_string(),
                lower: second.to_string(),
                witness: out.over_second.clone(),
            });
        }
        Ok(out)
    }

    /// The generic family: atoms are the test configurations, every
    /// registered edge is a degree of freedom.
    pub fn to_family(&self) -> Result<SystemFamily, DpgError> {
        let points: Vec<String> = self.atoms.keys().cloned().collect();
        let mut basis = EvaluationBasis::new(points.clone());
        let registry = self.registry();
        for e in &registry {
            basis
                .insert(e.dof(), e.word.indicator(&points))
                .map_err(|e| DpgError::Family(e.to_string()))?;
        }
        let labels = self
            .labels
            .iter()
            .map(|l| l.to_system_label(&self.faces, &registry))
            .collect::<Result<Vec<_>, _>>()?;
        let mut probes = Probes::default();
        for (edges, label) in &self.probes.spans {
            for e in edges {
                if !self.edges.contains_key(e) {
                    return Err(DpgError::UnknownEdge(e.clone()));
                }
            }
            probes.spans.push(SpanProbe {
                dofs: edges.iter().map(|e| DofId::new(e.clone())).collect(),
                label: label.clone(),
            });
        }
        for (face_ids, label) in &self.probes.covers {
            let operators = face_ids
                .iter()
                .map(|f| {
                    let face = self.faces.get(f).ok_or_else(|| DpgError::UnknownFace(f.clone()))?;
                    Ok(flux_operator(face, &registry))
                })
                .collect::<Result<Vec<_>, DpgError>>()?;
            probes.covers.push(CoverProbe {
                operators,
                label: label.clone(),
            });
        }
        for (label, connections) in &self.probes.surjectivity {
            probes.surjectivity.push(SurjectivityProbe {
                label: label.clone(),
                configurations: connections.iter().map(|c| c.values.clone()).collect(),
            });
        }
        probes.directedness = self.probes.directedness.clone();
        Ok(SystemFamily {
            basis,
            labels,
            order: self.order.clone(),
            probes,
        })
    }
}

/// Random holonomy-flux family. Base labels live on random paths in a random
/// tree of atoms with random faces; each level joins the previous top with a
/// fresh base label. All order relations that hold between the emitted labels
/// are witnessed, together with span, cover, surjectivity and directedness
/// probes.
pub fn generate_random_system(n_edges: usize, depth: usize, seed: u64) -> Result<DpgSystem, DpgError> {
    assert!(n_edges >= 1 && depth >= 1, "need at least one edge and one level");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sys = DpgSystem::default();
    let n_atoms = 3 * n_edges + 3;
    let mut adjacency: Vec<Vec<(String, usize, Sign)>> = vec![Vec::new(); n_atoms + 1];
    for i in 1..=n_atoms {
        let parent = rng.gen_range(0..i);
        let id = format!("a{:03}", i - 1);
        let (src, tgt) = if rng.gen_bool(0.5) { (parent, i) } else { (i, parent) };
        sys.atoms
            .insert(id.clone(), AtomicEdge::new(id.clone(), format!("n{src}"), format!("n{tgt}"), false)?);
        adjacency[src].push((id.clone(), tgt, Sign::Plus));
        adjacency[tgt].push((id, src, Sign::Minus));
    }

    let mut face_counter = 0usize;
    let mut base = |sys: &mut DpgSystem, rng: &mut ChaCha8Rng, id: &str| -> Result<(), DpgError> {
        let graph = random_graph(rng, &adjacency, &sys.atoms, n_edges)?;
        if depth == 1 {
            let (label, faces) = DpgLabel::dual(id, graph);
            for f in faces {
                sys.faces.insert(f.id.clone(), f);
            }
            return sys.add_label(label);
        }
        let atom_ids: Vec<String> = sys.atoms.keys().cloned().collect();
        let support: Vec<String> = graph.support().into_iter().map(String::from).collect();
        for _ in 0..64 {
            let mut faces = Vec::new();
            for _ in 0..graph.len() {
                face_counter += 1;
                faces.push(random_face(rng, format!("F{face_counter:03}"), &support, &atom_ids));
            }
            let table: FaceTable = faces.iter().map(|f| (f.id.clone(), f.clone())).collect();
            let label = DpgLabel {
                id: id.to_string(),
                graph: graph.clone(),
                flux_basis: faces.iter().map(|f| FluxCombination::single(&f.id)).collect(),
            };
            if !label.g_matrix(&table)?.determinant().is_zero() {
                sys.faces.extend(table);
                return sys.add_label(label);
            }
        }
        let (label, faces) = DpgLabel::dual(id, graph);
        for f in faces {
            sys.faces.insert(f.id.clone(), f);
        }
        sys.add_label(label)
    };

    base(&mut sys, &mut rng, "L0a")?;
    let mut top = "L0a".to_string();
    if depth >= 2 {
        base(&mut sys, &mut rng, "L0b")?;
        sys.join("J1", "L0a", "L0b")?;
        top = "J1".to_string();
        for k in 2..depth {
            let b = format!("L{}b", k - 1);
            let j = format!("J{k}");
            base(&mut sys, &mut rng, &b)?;
            sys.join(&j, &top, &b)?;
            top = j;
        }
    }

    // Every relation that holds between emitted labels, witnessed.
    let mut order = Vec::new();
    for upper in &sys.labels {
        for lower in &sys.labels {
            let declared = sys
                .order
                .iter()
                .find(|r| r.upper == upper.id && r.lower == lower.id)
                .map(|r| r.witness.clone());
            let witness = match declared {
                Some(w) => Some(w),
                None => dpg_order_witness(upper, lower, &sys.faces)?,
            };
            if let Some(witness) = witness {
                order.push(OrderRelation {
                    upper: upper.id.clone(),
                    lower: lower.id.clone(),
                    witness,
                });
            }
        }
    }
    sys.order = order;

    let base_ids: Vec<String> = sys
        .labels
        .iter()
        .filter(|l| l.id.starts_with('L'))
        .map(|l| l.id.clone())
        .collect();
    let mut spanned = Vec::new();
    let mut covered = Vec::new();
    for id in &base_ids {
        let l = sys.label(id)?;
        spanned.extend(l.graph.edges().iter().map(|e| e.id.clone()));
        for op in &l.flux_basis {
            covered.extend(op.terms.iter().map(|(f, _)| f.clone()));
        }
    }
    spanned.dedup();
    covered.sort();
    covered.dedup();
    sys.probes.spans.push((spanned, top.clone()));
    sys.probes.covers.push((covered, top.clone()));

    let top_graph = sys.label(&top)?.graph.clone();
    let mut connections = Vec::with_capacity(top_graph.len());
    for k in 0..top_graph.len() {
        let targets: Vec<Rational> = (0..top_graph.len())
            .map(|i| if i == k { Rational::one() } else { Rational::zero() })
            .collect();
        connections.push(witness_connection(&top_graph, &targets)?);
    }
    sys.probes.surjectivity.push((top.clone(), connections));

    let ids: Vec<String> = sys.labels.iter().map(|l| l.id.clone()).collect();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let join = ids
                .iter()
                .find(|c| {
                    let has = |lower: &String| sys.order.iter().any(|r| &r.upper == *c && &r.lower == lower);
                    has(a) && has(b)
                })
                .cloned();
            sys.probes.directedness.push(DirectednessProbe {
                first: a.clone(),
                second: b.clone(),
                join,
            });
        }
    }
    Ok(sys)
}

fn random_graph(
    rng: &mut ChaCha8Rng,
    adjacency: &[Vec<(String, usize, Sign)>],
    atoms: &AtomTable,
    max_edges: usize,
) -> Result<Graph, DpgError> {
    let wanted = rng.gen_range(1..=max_edges);
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut words = Vec::new();
    let mut attempts = 0;
    while words.len() < wanted && attempts < 200 {
        attempts += 1;
        let mut node = rng.gen_range(0..adjacency.len());
        let length = rng.gen_range(1..=3);
        let mut letters = Vec::new();
        for _ in 0..length {
            let options: Vec<&(String, usize, Sign)> = adjacency[node]
                .iter()
                .filter(|(a, _, _)| !used.contains(a) && !letters.iter().any(|l: &Letter| &l.atom == a))
                .collect();
            let Some(&&(ref a, next, sign)) = options.choose(rng) else {
                break;
            };
            letters.push(Letter::new(a.clone(), sign));
            node = next;
        }
        if letters.is_empty() {
            continue;
        }
        for l in &letters {
            used.insert(l.atom.clone());
        }
        words.push(EdgeWord::new(letters, atoms)?);
    }
    if words.is_empty() {
        return Err(DpgError::EmptyGraph);
    }
    Graph::new(words.iter().map(Edge::canonical).collect())
}

fn random_face(rng: &mut ChaCha8Rng, id: String, support: &[String], all: &[String]) -> Face {
    let mut incidence = BTreeMap::new();
    let k = rng.gen_range(1..=3);
    for i in 0..k {
        let pool = if i == 0 || rng.gen_bool(0.7) { support } else { all };
        let atom = pool.choose(rng).expect("nonempty support").clone();
        let halves = 2 * rng.gen_range(-1i64..=1);
        incidence.insert(atom, HalfInt(halves as i8));
    }
    Face::new(id, incidence)
}

/// Whether the emitted `G` has the exact block form `[[I, G'], [0, I]]` with
/// an `m x m` leading identity.
pub fn is_join_block_form(g: &Matrix<Rational>, m: usize) -> bool {
    let n = g.rows();
    if g.cols() != n || m > n {
        return false;
    }
    (0..n).all(|r| {
        (0..n).all(|c| {
            let v = &g[(r, c)];
            if r == c {
                v.is_one()
            } else if r >= m || c < m {
                v.is_zero()
            } else {
                true
            }
        })
    })
}

/// `|det G|` of a label over its own graph, or `None` when degenerate.
pub fn label_determinant(label: &DpgLabel, faces: &FaceTable) -> Result<Option<Rational>, DpgError> {
    let g = label.g_matrix(faces)?;
    let d = g.determinant();
    Ok(if d.is_zero() { None } else { Some(d.abs()) })
}

/// Nondegeneracy through the generic checker.
pub fn label_is_nondegenerate(label: &DpgLabel, faces: &FaceTable) -> bool {
    label
        .to_system_label(faces, label.graph.edges())
        .ok()
        .is_some_and(|l| g_matrix(&l).is_ok())
}
