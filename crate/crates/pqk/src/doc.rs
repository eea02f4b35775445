//! JSON documents: system descriptions, Gaussian states and almost periodic
//! vectors. Rationals travel as `"p/q"` strings, complex numbers as
//! `[re, im]` pairs, matrices row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use num_traits::{One, Zero};
use pqk_core::almost_periodic::{APVector, Amplitude};
use pqk_core::dof_systems::{DirectednessProbe, OrderRelation, OrderWitness};
use pqk_core::dpg::{
    AtomicEdge, DpgLabel, DpgProbes, DpgSystem, Edge, EdgeWord, Face, FluxCombination, Graph, HalfInt, Letter, Sign,
    TestConnection,
};
use pqk_core::gaussian_states::{GaussianKernel, GaussianMixtureState, Provenance};
use pqk_core::linalg::Matrix;
use pqk_core::reduced_spaces::ProjectionMatrix;
use pqk_core::{DofId, Rational, ReducedFrame};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Malformed input, with the offending field.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct InputError {
    pub path: String,
    pub message: String,
}

impl InputError {
    pub fn new(path: impl Into<String>, message: impl ToString) -> Self {
        InputError {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

/// Reads and deserializes `path`, naming the field on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    let text = fs::read_to_string(path).map_err(|e| InputError::new(path.display().to_string(), e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        InputError::new(format!("{}: field `{field}`", path.display()), e.into_inner())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), InputError> {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| InputError::new(path.display().to_string(), e))
}

pub fn parse_rational(s: &str, path: &str) -> Result<Rational, InputError> {
    s.trim()
        .parse::<Rational>()
        .map_err(|_| InputError::new(path, format!("`{s}` is not a rational of the form p/q")))
}

fn rationals(v: &[String], path: &str) -> Result<Vec<Rational>, InputError> {
    v.iter()
        .enumerate()
        .map(|(i, s)| parse_rational(s, &format!("{path}[{i}]")))
        .collect()
}

fn strings(v: &[Rational]) -> Vec<String> {
    v.iter().map(|r| r.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicEdgeDoc {
    pub id: String,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_loop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LetterDoc {
    pub atom: String,
    /// `1` or `-1`.
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub id: String,
    pub letters: Vec<LetterDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidenceDoc {
    pub atom: String,
    /// One of `-1, -0.5, 0, 0.5, 1`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceDoc {
    pub id: String,
    pub incidence: Vec<IncidenceDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub face: String,
    pub coefficient: String,
}

/// A flux basis element: a face id, or a named combination of faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FluxDoc {
    Face(String),
    Combination { id: String, terms: Vec<TermDoc> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDoc {
    pub id: String,
    pub graph: Vec<String>,
    pub flux_basis: Vec<FluxDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderDoc {
    pub upper: String,
    pub lower: String,
    /// Each edge of `lower` as coefficients over the edges of `upper`.
    pub combos: BTreeMap<String, Vec<String>>,
    /// Each basis operator of `lower` over the basis of `upper`.
    pub ops: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanDoc {
    pub edges: Vec<String>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverDoc {
    pub faces: Vec<String>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurjectivityDoc {
    pub label: String,
    /// Test connections: atom id to the integral over that atom.
    pub connections: Vec<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectednessDoc {
    pub first: String,
    pub second: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesDoc {
    #[serde(default)]
    pub spans: Vec<SpanDoc>,
    #[serde(default)]
    pub covers: Vec<CoverDoc>,
    #[serde(default)]
    pub surjectivity: Vec<SurjectivityDoc>,
    #[serde(default)]
    pub directedness: Vec<DirectednessDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub atomic_edges: Vec<AtomicEdgeDoc>,
    pub edges: Vec<EdgeDoc>,
    pub faces: Vec<FaceDoc>,
    pub labels: Vec<LabelDoc>,
    #[serde(default)]
    pub order: Vec<OrderDoc>,
    #[serde(default)]
    pub probes: ProbesDoc,
}

fn check_label(sys: &DpgSystem, id: &str, path: &str) -> Result<(), InputError> {
    if sys.labels.iter().any(|l| l.id == id) {
        Ok(())
    } else {
        Err(InputError::new(path, format!("unknown label `{id}`")))
    }
}

impl SystemDocument {
    /// Builds and validates the system. Field paths in errors follow the
    /// JSON layout.
    pub fn to_system(&self) -> Result<DpgSystem, InputError> {
        let mut sys = DpgSystem::default();
        for (i, a) in self.atomic_edges.iter().enumerate() {
            let path = format!("atomic_edges[{i}]");
            let atom = AtomicEdge::new(&a.id, &a.source, &a.target, a.is_loop).map_err(|e| InputError::new(&path, e))?;
            if sys.atoms.insert(a.id.clone(), atom).is_some() {
                return Err(InputError::new(format!("{path}.id"), format!("duplicate atomic edge `{}`", a.id)));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let path = format!("edges[{i}]");
            let letters = e
                .letters
                .iter()
                .enumerate()
                .map(|(j, l)| {
                    let sign = match l.sign {
                        1 => Sign::Plus,
                        -1 => Sign::Minus,
                        other => {
                            return Err(InputError::new(
                                format!("{path}.letters[{j}].sign"),
                                format!("sign must be 1 or -1, got {other}"),
                            ))
                        }
                    };
                    Ok(Letter::new(&l.atom, sign))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let word = EdgeWord::new(letters, &sys.atoms).map_err(|err| InputError::new(format!("{path}.letters"), err))?;
            if sys.edges.insert(e.id.clone(), word).is_some() {
                return Err(InputError::new(format!("{path}.id"), format!("duplicate edge `{}`", e.id)));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            let path = format!("faces[{i}]");
            let mut incidence = BTreeMap::new();
            for (j, inc) in f.incidence.iter().enumerate() {
                let ipath = format!("{path}.incidence[{j}]");
                if !sys.atoms.contains_key(&inc.atom) {
                    return Err(InputError::new(format!("{ipath}.atom"), format!("unknown atomic edge `{}`", inc.atom)));
                }
                let halves = inc.value * 2.0;
                if halves.fract() != 0.0 || halves.abs() > 2.0 {
                    return Err(InputError::new(
                        format!("{ipath}.value"),
                        format!("{} is not one of -1, -0.5, 0, 0.5, 1", inc.value),
                    ));
                }
                let h = HalfInt::from_halves(halves as i64).map_err(|e| InputError::new(format!("{ipath}.value"), e))?;
                if incidence.insert(inc.atom.clone(), h).is_some() {
                    return Err(InputError::new(format!("{ipath}.atom"), format!("atom `{}` listed twice", inc.atom)));
                }
            }
            if sys.faces.insert(f.id.clone(), Face::new(&f.id, incidence)).is_some() {
                return Err(InputError::new(format!("{path}.id"), format!("duplicate face `{}`", f.id)));
            }
        }
        for (i, l) in self.labels.iter().enumerate() {
            let path = format!("labels[{i}]");
            let edges = l
                .graph
                .iter()
                .enumerate()
                .map(|(j, id)| {
                    sys.edges
                        .get(id)
                        .map(|w| Edge::new(id.clone(), w.clone()))
                        .ok_or_else(|| InputError::new(format!("{path}.graph[{j}]"), format!("unknown edge `{id}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let graph = Graph::new(edges).map_err(|e| InputError::new(format!("{path}.graph"), e))?;
            let mut flux_basis = Vec::new();
            for (j, fd) in l.flux_basis.iter().enumerate() {
                let fpath = format!("{path}.flux_basis[{j}]");
                let comb = match fd {
                    FluxDoc::Face(id) => FluxCombination::single(id),
                    FluxDoc::Combination { id, terms } => FluxCombination {
                        id: id.clone(),
                        terms: terms
                            .iter()
                            .enumerate()
                            .map(|(k, t)| Ok((t.face.clone(), parse_rational(&t.coefficient, &format!("{fpath}.terms[{k}].coefficient"))?)))
                            .collect::<Result<Vec<_>, InputError>>()?,
                    },
                };
                comb.incidence(&sys.faces).map_err(|e| InputError::new(&fpath, e))?;
                flux_basis.push(comb);
            }
            let label = DpgLabel {
                id: l.id.clone(),
                graph,
                flux_basis,
            };
            label
                .to_system_label(&sys.faces, label.graph.edges())
                .map_err(|e| InputError::new(&path, e))?;
            if sys.labels.iter().any(|x| x.id == l.id) {
                return Err(InputError::new(format!("{path}.id"), format!("duplicate label `{}`", l.id)));
            }
            sys.labels.push(label);
        }
        for (i, o) in self.order.iter().enumerate() {
            let path = format!("order[{i}]");
            check_label(&sys, &o.upper, &format!("{path}.upper"))?;
            check_label(&sys, &o.lower, &format!("{path}.lower"))?;
            let combos = o
                .combos
                .iter()
                .map(|(k, v)| Ok((DofId::new(k.clone()), rationals(v, &format!("{path}.combos.{k}"))?)))
                .collect::<Result<_, InputError>>()?;
            let op_membership = o
                .ops
                .iter()
                .map(|(k, v)| Ok((k.clone(), rationals(v, &format!("{path}.ops.{k}"))?)))
                .collect::<Result<_, InputError>>()?;
            sys.order.push(OrderRelation {
                upper: o.upper.clone(),
                lower: o.lower.clone(),
                witness: OrderWitness { combos, op_membership },
            });
        }
        sys.probes = self.probes_to_core(&sys)?;
        sys.to_family().map_err(|e| InputError::new("document", e))?;
        Ok(sys)
    }

    fn probes_to_core(&self, sys: &DpgSystem) -> Result<DpgProbes, InputError> {
        let p = &self.probes;
        let mut out = DpgProbes::default();
        for (i, s) in p.spans.iter().enumerate() {
            check_label(sys, &s.label, &format!("probes.spans[{i}].label"))?;
            for (j, e) in s.edges.iter().enumerate() {
                if !sys.edges.contains_key(e) {
                    return Err(InputError::new(format!("probes.spans[{i}].edges[{j}]"), format!("unknown edge `{e}`")));
                }
            }
            out.spans.push((s.edges.clone(), s.label.clone()));
        }
        for (i, c) in p.covers.iter().enumerate() {
            check_label(sys, &c.label, &format!("probes.covers[{i}].label"))?;
            for (j, f) in c.faces.iter().enumerate() {
                if !sys.faces.contains_key(f) {
                    return Err(InputError::new(format!("probes.covers[{i}].faces[{j}]"), format!("unknown face `{f}`")));
                }
            }
            out.covers.push((c.faces.clone(), c.label.clone()));
        }
        for (i, s) in p.surjectivity.iter().enumerate() {
            check_label(sys, &s.label, &format!("probes.surjectivity[{i}].label"))?;
            let connections = s
                .connections
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let values = c
                        .iter()
                        .map(|(atom, v)| {
                            let path = format!("probes.surjectivity[{i}].connections[{j}].{atom}");
                            if !sys.atoms.contains_key(atom) {
                                return Err(InputError::new(path, format!("unknown atomic edge `{atom}`")));
                            }
                            Ok((atom.clone(), parse_rational(v, &path)?))
                        })
                        .collect::<Result<_, _>>()?;
                    Ok(TestConnection { values })
                })
                .collect::<Result<Vec<_>, InputError>>()?;
            out.surjectivity.push((s.label.clone(), connections));
        }
        for (i, d) in p.directedness.iter().enumerate() {
            let path = format!("probes.directedness[{i}]");
            check_label(sys, &d.first, &format!("{path}.first"))?;
            check_label(sys, &d.second, &format!("{path}.second"))?;
            if let Some(j) = &d.join {
                check_label(sys, j, &format!("{path}.join"))?;
            }
            out.directedness.push(DirectednessProbe {
                first: d.first.clone(),
                second: d.second.clone(),
                join: d.join.clone(),
            });
        }
        Ok(out)
    }

    pub fn from_system(sys: &DpgSystem) -> Self {
        let atomic_edges = sys
            .atoms
            .values()
            .map(|a| AtomicEdgeDoc {
                id: a.id.clone(),
                source: a.source.clone(),
                target: a.target.clone(),
                is_loop: a.is_loop,
            })
            .collect();
        let edges = sys
            .edges
            .iter()
            .map(|(id, w)| EdgeDoc {
                id: id.clone(),
                letters: w
                    .letters()
                    .iter()
                    .map(|l| LetterDoc {
                        atom: l.atom.clone(),
                        sign: l.sign.value() as i8,
                    })
                    .collect(),
            })
            .collect();
        let faces = sys
            .faces
            .values()
            .map(|f| FaceDoc {
                id: f.id.clone(),
                incidence: f
                    .incidence()
                    .iter()
                    .map(|(a, h)| IncidenceDoc {
                        atom: a.clone(),
                        value: h.halves() as f64 / 2.0,
                    })
                    .collect(),
            })
            .collect();
        let labels = sys
            .labels
            .iter()
            .map(|l| LabelDoc {
                id: l.id.clone(),
                graph: l.graph.edges().iter().map(|e| e.id.clone()).collect(),
                flux_basis: l.flux_basis.iter().map(flux_doc).collect(),
            })
            .collect();
        let order = sys
            .order
            .iter()
            .map(|r| OrderDoc {
                upper: r.upper.clone(),
                lower: r.lower.clone(),
                combos: r.witness.combos.iter().map(|(k, v)| (k.to_string(), strings(v))).collect(),
                ops: r.witness.op_membership.iter().map(|(k, v)| (k.clone(), strings(v))).collect(),
            })
            .collect();
        let p = &sys.probes;
        let probes = ProbesDoc {
            spans: p.spans.iter().map(|(e, l)| SpanDoc { edges: e.clone(), label: l.clone() }).collect(),
            covers: p.covers.iter().map(|(f, l)| CoverDoc { faces: f.clone(), label: l.clone() }).collect(),
            surjectivity: p
                .surjectivity
                .iter()
                .map(|(l, cs)| SurjectivityDoc {
                    label: l.clone(),
                    connections: cs
                        .iter()
                        .map(|c| c.values.iter().map(|(a, v)| (a.clone(), v.to_string())).collect())
                        .collect(),
                })
                .collect(),
            directedness: p
                .directedness
                .iter()
                .map(|d| DirectednessDoc {
                    first: d.first.clone(),
                    second: d.second.clone(),
                    join: d.join.clone(),
                })
                .collect(),
        };
        SystemDocument {
            atomic_edges,
            edges,
            faces,
            labels,
            order,
            probes,
        }
    }
}

fn flux_doc(c: &FluxCombination) -> FluxDoc {
    match c.terms.as_slice() {
        [(face, coef)] if *face == c.id && coef.is_one() => FluxDoc::Face(face.clone()),
        _ => FluxDoc::Combination {
            id: c.id.clone(),
            terms: c
                .terms
                .iter()
                .map(|(f, r)| TermDoc {
                    face: f.clone(),
                    coefficient: r.to_string(),
                })
                .collect(),
        },
    }
}

pub type ComplexDoc = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTermDoc {
    pub weight: f64,
    #[serde(rename = "P")]
    pub p: Vec<Vec<ComplexDoc>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<ComplexDoc>>,
    pub s: Vec<ComplexDoc>,
    pub logw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProvenanceDoc {
    PureProjector,
    Projected,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub label: String,
    pub terms: Vec<KernelTermDoc>,
    #[serde(default = "mixed")]
    pub provenance: ProvenanceDoc,
}

fn mixed() -> ProvenanceDoc {
    ProvenanceDoc::Mixed
}

fn complex_matrix(rows: &[Vec<ComplexDoc>], n: usize, path: &str) -> Result<Matrix<Complex64>, InputError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(InputError::new(path, format!("expected a {n}x{n} matrix")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn matrix_doc(m: &Matrix<Complex64>) -> Vec<Vec<ComplexDoc>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

impl StateDocument {
    pub fn to_state(&self) -> Result<GaussianMixtureState, InputError> {
        if self.terms.is_empty() {
            return Err(InputError::new("terms", "a state needs at least one term"));
        }
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let path = format!("terms[{i}]");
                let n = t.s.len();
                let p = complex_matrix(&t.p, n, &format!("{path}.P"))?;
                let r = complex_matrix(&t.r, n, &format!("{path}.R"))?;
                let s = t.s.iter().map(|z| Complex64::new(z[0], z[1])).collect();
                if !(t.weight.is_finite() && t.weight > 0.0) {
                    return Err(InputError::new(format!("{path}.weight"), "weight must be positive"));
                }
                let k = GaussianKernel::new(p, r, s, t.logw).map_err(|e| InputError::new(&path, e))?;
                Ok((t.weight, k))
            })
            .collect::<Result<Vec<_>, InputError>>()?;
        let provenance = match self.provenance {
            ProvenanceDoc::PureProjector => Provenance::PureProjector,
            ProvenanceDoc::Projected => Provenance::Projected,
            ProvenanceDoc::Mixed => Provenance::Mixed,
        };
        GaussianMixtureState::new(terms, provenance).map_err(|e| InputError::new("terms", e))
    }

    pub fn from_state(label: &str, state: &GaussianMixtureState) -> Self {
        StateDocument {
            label: label.to_string(),
            terms: state
                .terms()
                .iter()
                .map(|(w, k)| KernelTermDoc {
                    weight: *w,
                    p: matrix_doc(k.p()),
                    r: matrix_doc(k.r()),
                    s: k.s().iter().map(|z| [z.re, z.im]).collect(),
                    logw: k.logw(),
                })
                .collect(),
            provenance: match state.provenance() {
                Provenance::PureProjector => ProvenanceDoc::PureProjector,
                Provenance::Projected => ProvenanceDoc::Projected,
                Provenance::Mixed => ProvenanceDoc::Mixed,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApTermDoc {
    pub frequency: Vec<String>,
    /// `[re, im]` as rationals.
    pub amplitude: [String; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApVectorDoc {
    pub frame: Vec<String>,
    pub terms: Vec<ApTermDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionDoc {
    pub target: Vec<String>,
    pub source: Vec<String>,
    pub matrix: Vec<Vec<String>>,
}

/// Projections from a common refinement onto the frames of two vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpperDoc {
    pub first: ProjectionDoc,
    pub second: ProjectionDoc,
}

/// Either a vector or a projection, for `ap` inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ApInput {
    Vector(ApVectorDoc),
    Projection(ProjectionDoc),
}

fn frame(ids: &[String], path: &str) -> Result<ReducedFrame, InputError> {
    ReducedFrame::from_ids(ids.iter().cloned()).map_err(|e| InputError::new(path, e))
}

impl ApVectorDoc {
    pub fn to_vector(&self) -> Result<APVector, InputError> {
        let f = frame(&self.frame, "frame")?;
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let path = format!("terms[{i}]");
                let b = rationals(&t.frequency, &format!("{path}.frequency"))?;
                let re = parse_rational(&t.amplitude[0], &format!("{path}.amplitude[0]"))?;
                let im = parse_rational(&t.amplitude[1], &format!("{path}.amplitude[1]"))?;
                Ok((b, Amplitude::new(re, im)))
            })
            .collect::<Result<Vec<_>, InputError>>()?;
        APVector::from_terms(f, terms).map_err(|e| InputError::new("terms", e))
    }

    pub fn from_vector(v: &APVector) -> Self {
        ApVectorDoc {
            frame: v.frame().dofs().iter().map(|d| d.to_string()).collect(),
            terms: v
                .amplitudes()
                .iter()
                .map(|(b, a)| ApTermDoc {
                    frequency: strings(b),
                    amplitude: [a.re.to_string(), a.im.to_string()],
                })
                .collect(),
        }
    }
}

impl ProjectionDoc {
    pub fn to_projection(&self, path: &str) -> Result<ProjectionMatrix, InputError> {
        let target = frame(&self.target, &format!("{path}.target"))?;
        let source = frame(&self.source, &format!("{path}.source"))?;
        let rows = self
            .matrix
            .iter()
            .enumerate()
            .map(|(i, r)| rationals(r, &format!("{path}.matrix[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let m = Matrix::from_rows(rows, source.len())
            .ok_or_else(|| InputError::new(format!("{path}.matrix"), "rows must all match the source frame"))?;
        ProjectionMatrix::new(target, source, m).map_err(|e| InputError::new(format!("{path}.matrix"), e))
    }
}

/// `[re, im]` of an exact amplitude as strings.
pub fn amplitude_doc(a: &Amplitude) -> [String; 2] {
    [a.re.to_string(), a.im.to_string()]
}

pub fn is_zero_amplitude(a: &Amplitude) -> bool {
    a.re.is_zero() && a.im.is_zero()
}
