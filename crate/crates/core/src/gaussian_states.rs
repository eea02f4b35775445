//! Density operators on `L²(ℝ^N)` given as finite positive mixtures of
//! Gaussian kernels
//!
//! ```text
//! ρ̌(x, y) = exp(−½ xᵀPx − ½ yᵀP̄y + xᵀRy + sᵀx + s̄ᵀy + logw)
//! ```
//!
//! with `P` complex symmetric and `R` Hermitian, so that `ρ̌(x, y)` and
//! `conj(ρ̌(y, x))` agree term by term. The projection to a coarser label
//! integrates the kernel over the kernel of `pr` (the same kernel coordinate
//! in both slots) and pulls the result back along `ω`. Every integral here is
//! a Gaussian in closed form; the determinants of complex symmetric forms are
//! taken through an `LDLᵀ` factorization whose pivots all have positive real
//! part, which fixes the branch of the square root.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{Float, Zero};
use rand::Rng;

use crate::dof_systems::{
    refinement, relation_geq, DofError, EvaluationBasis, OrderWitness, SystemFamily, SystemLabel,
};
use crate::linalg::{ComplexLdl, Matrix};
use crate::reduced_spaces::{kernel_decomposition, KernelDecomposition, ReducedSpaceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaussianError {
    #[error("real part of the quadratic form is not positive definite")]
    NotPositiveDefinite,
    #[error("Gaussian integral diverges: {0}")]
    Divergent(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("order violation: {0}")]
    OrderViolation(String),
    #[error("integration extent too small: estimated tail mass {0:e}")]
    ExtentTooSmall(f64),
    #[error("a mixture needs at least one term with positive weight")]
    EmptyMixture,
    #[error(transparent)]
    Dof(#[from] DofError),
    #[error(transparent)]
    Reduced(#[from] ReducedSpaceError),
}

type CMatrix = Matrix<Complex64>;

const STRUCTURE_RTOL: f64 = 1e-12;

/// One Gaussian kernel term.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    p: CMatrix,
    r: CMatrix,
    s: Vec<Complex64>,
    logw: f64,
}

impl GaussianKernel {
    /// Validates symmetry of `P`, Hermiticity of `R` and trace convergence.
    /// Round-off asymmetry below `1e-12` relative is projected away.
    pub fn new(p: CMatrix, r: CMatrix, s: Vec<Complex64>, logw: f64) -> Result<Self, GaussianError> {
        let n = s.len();
        if p.shape() != (n, n) || r.shape() != (n, n) {
            return Err(GaussianError::DimensionMismatch(format!(
                "P is {:?}, R is {:?}, s has length {n}",
                p.shape(),
                r.shape()
            )));
        }
        if n == 0 {
            return Err(GaussianError::InvalidKernel("zero-dimensional kernel".into()));
        }
        if !logw.is_finite() || p.as_slice().iter().chain(r.as_slice()).chain(&s).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(GaussianError::InvalidKernel("non-finite entry".into()));
        }
        let scale = 1.0 + p.max_abs().max(r.max_abs());
        if p.sub_matrix(&p.transpose()).max_abs() > STRUCTURE_RTOL * scale {
            return Err(GaussianError::InvalidKernel("P is not symmetric".into()));
        }
        if r.sub_matrix(&r.adjoint()).max_abs() > STRUCTURE_RTOL * scale {
            return Err(GaussianError::InvalidKernel("R is not Hermitian".into()));
        }
        let k = GaussianKernel {
            p: symmetrize(&p),
            r: hermitize(&r),
            s,
            logw,
        };
        k.diagonal_form()?;
        Ok(k)
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn p(&self) -> &CMatrix {
        &self.p
    }

    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    pub fn s(&self) -> &[Complex64] {
        &self.s
    }

    pub fn logw(&self) -> f64 {
        self.logw
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Complex64 {
        let n = self.dim();
        assert!(x.len() == n && y.len() == n, "kernel argument length");
        let mut e = Complex64::new(self.logw, 0.0);
        for i in 0..n {
            e += self.s[i] * x[i] + self.s[i].conj() * y[i];
            for j in 0..n {
                e += -0.5 * self.p[(i, j)] * (x[i] * x[j]) - 0.5 * self.p[(i, j)].conj() * (y[i] * y[j])
                    + self.r[(i, j)] * (x[i] * y[j]);
            }
        }
        e.exp()
    }

    /// `D = 2(Re P − Re R)` and `t = 2 Re s` of the diagonal
    /// `ρ̌(x, x) = exp(−½xᵀDx + tᵀx + logw)`.
    fn diagonal_form(&self) -> Result<(Matrix<f64>, Vec<f64>), GaussianError> {
        let d = self.p.re().sub_matrix(&self.r.re()).scale(&2.0).symmetrized();
        if d.cholesky().is_none() {
            return Err(GaussianError::Divergent(
                "Re P − Re R is not positive definite".into(),
            ));
        }
        Ok((d, self.s.iter().map(|z| 2.0 * z.re).collect()))
    }

    /// `ln ∫ ρ̌(x, x) dx`.
    pub fn ln_trace(&self) -> Result<f64, GaussianError> {
        let (d, t) = self.diagonal_form()?;
        let (quad, ln_det) = gaussian_exponent(&d.to_complex(), &to_complex_vec(&t))?;
        let n = self.dim() as f64;
        Ok(self.logw + 0.5 * n * (2.0 * PI).ln() - 0.5 * ln_det.re + 0.5 * quad.re)
    }

    /// The quadratic form on `z = (x, y)`: `M = [[P, −R], [−Rᵀ, P̄]]`,
    /// `v = (s, s̄)`.
    fn joint_form(&self) -> (CMatrix, Vec<Complex64>) {
        let n = self.dim();
        let m = Matrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.p[(i, j)],
            (true, false) => -self.r[(i, j - n)],
            (false, true) => -self.r[(j, i - n)],
            (false, false) => self.p[(i - n, j - n)].conj(),
        });
        let v = self.s.iter().copied().chain(self.s.iter().map(|z| z.conj())).collect();
        (m, v)
    }

    fn with_logw(&self, logw: f64) -> Self {
        GaussianKernel { logw, ..self.clone() }
    }
}

fn symmetrize(m: &CMatrix) -> CMatrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] + m[(j, i)]) * 0.5)
}

fn hermitize(m: &CMatrix) -> CMatrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

fn to_complex_vec(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(Complex64::zero(), |acc, (x, y)| acc + x * y)
}

/// `(vᵀM⁻¹v, ln det M)` for complex symmetric `M` with positive definite
/// real part.
fn gaussian_exponent(m: &CMatrix, v: &[Complex64]) -> Result<(Complex64, Complex64), GaussianError> {
    let ldl = ComplexLdl::new(m).ok_or_else(|| GaussianError::Divergent("form has no positive real part".into()))?;
    let sol = ldl.solve(v);
    Ok((dot(v, &sol), ldl.ln_det()))
}

/// `ln ∫ exp(−½zᵀMz + vᵀz + c) dz`.
fn ln_gaussian_integral(m: &CMatrix, v: &[Complex64], c: Complex64) -> Result<Complex64, GaussianError> {
    let (quad, ln_det) = gaussian_exponent(m, v)?;
    let n = v.len() as f64;
    Ok(c + 0.5 * n * (2.0 * PI).ln() - 0.5 * ln_det + 0.5 * quad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    PureProjector,
    Projected,
    Mixed,
}

/// `Σ_k w_k ρ̌_k` with positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureState {
    dim: usize,
    terms: Vec<(f64, GaussianKernel)>,
    provenance: Provenance,
}

impl GaussianMixtureState {
    pub fn new(terms: Vec<(f64, GaussianKernel)>, provenance: Provenance) -> Result<Self, GaussianError> {
        let Some(dim) = terms.first().map(|(_, k)| k.dim()) else {
            return Err(GaussianError::EmptyMixture);
        };
        for (w, k) in &terms {
            if !(w.is_finite() && *w > 0.0) {
                return Err(GaussianError::EmptyMixture);
            }
            if k.dim() != dim {
                return Err(GaussianError::DimensionMismatch(format!(
                    "terms of dimension {dim} and {}",
                    k.dim()
                )));
            }
        }
        Ok(GaussianMixtureState { dim, terms, provenance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(f64, GaussianKernel)] {
        &self.terms
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn kernel_value(&self, x: &[f64], y: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .fold(Complex64::zero(), |acc, (w, k)| acc + k.eval(x, y) * *w)
    }

    /// Same state with weights rescaled to unit trace.
    pub fn normalized(&self) -> Result<Self, GaussianError> {
        let t = trace(self)?;
        Ok(GaussianMixtureState {
            dim: self.dim,
            terms: self.terms.iter().map(|(w, k)| (w / t, k.clone())).collect(),
            provenance: self.provenance,
        })
    }
}

/// Convex combination of states over the same space.
pub fn mix(parts: &[(f64, GaussianMixtureState)]) -> Result<GaussianMixtureState, GaussianError> {
    let mut terms = Vec::new();
    for (c, s) in parts {
        terms.extend(s.terms.iter().map(|(w, k)| (c * w, k.clone())));
    }
    GaussianMixtureState::new(terms, Provenance::Mixed)?.normalized()
}

/// Normalized projector onto `ψ(x) = exp(−½xᵀAx + bᵀx)`.
pub fn pure_state(a: &CMatrix, b: &[Complex64]) -> Result<GaussianMixtureState, GaussianError> {
    let n = b.len();
    if a.shape() != (n, n) {
        return Err(GaussianError::DimensionMismatch(format!("A is {:?}, b has length {n}", a.shape())));
    }
    if a.re().symmetrized().cholesky().is_none() {
        return Err(GaussianError::NotPositiveDefinite);
    }
    let k = GaussianKernel::new(a.clone(), Matrix::zeros(n, n), b.to_vec(), 0.0)?;
    let ln_t = k.ln_trace()?;
    GaussianMixtureState::new(vec![(1.0, k.with_logw(-ln_t))], Provenance::PureProjector)
}

/// `tr ρ = Σ w_k ∫ ρ̌_k(x, x) dx`.
pub fn trace(state: &GaussianMixtureState) -> Result<f64, GaussianError> {
    let mut t = 0.0;
    for (w, k) in &state.terms {
        t += w * k.ln_trace()?.exp();
    }
    Ok(t)
}

/// `⟨σ, ρ⟩ = ∫∫ conj(σ̌(x, y)) ρ̌(x, y) dx dy`.
pub fn hs_inner(a: &GaussianMixtureState, b: &GaussianMixtureState) -> Result<Complex64, GaussianError> {
    check_dims(a, b)?;
    let mut total = Complex64::zero();
    for (wa, ka) in &a.terms {
        let (ma, va) = ka.joint_form();
        for (wb, kb) in &b.terms {
            let (mb, vb) = kb.joint_form();
            let m = ma.conj().add_matrix(&mb);
            let v: Vec<Complex64> = va.iter().zip(&vb).map(|(x, y)| x.conj() + y).collect();
            let c = Complex64::new(ka.logw + kb.logw + wa.ln() + wb.ln(), 0.0);
            total += ln_gaussian_integral(&m, &v, c)?.exp();
        }
    }
    Ok(total)
}

pub fn purity(state: &GaussianMixtureState) -> Result<f64, GaussianError> {
    let t = trace(state)?;
    Ok(hs_inner(state, state)?.re / (t * t))
}

fn check_dims(a: &GaussianMixtureState, b: &GaussianMixtureState) -> Result<(), GaussianError> {
    if a.dim != b.dim {
        return Err(GaussianError::DimensionMismatch(format!("dimensions {} and {}", a.dim, b.dim)));
    }
    Ok(())
}

#[allow(clippy::excessive_precision)]
const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Hilbert–Schmidt distance `‖σ − ρ‖₂`.
///
/// Far-apart states use `⟨σ,σ⟩ + ⟨ρ,ρ⟩ − 2 Re⟨σ,ρ⟩` directly. When that
/// difference drops into round-off and the states are term-by-term
/// neighbours, the squared distance is evaluated instead as
/// `∫₀¹∫₀¹ ⟨∂F_s, ∂F_t⟩ ds dt` along the straight line between the exponent
/// parameters, which involves no cancellation.
pub fn hs_distance(a: &GaussianMixtureState, b: &GaussianMixtureState) -> Result<f64, GaussianError> {
    check_dims(a, b)?;
    let aa = hs_inner(a, a)?.re;
    let bb = hs_inner(b, b)?.re;
    let direct = aa + bb - 2.0 * hs_inner(a, b)?.re;
    if direct >= 1e-4 * (aa + bb) || !neighbours(a, b) {
        return Ok(direct.max(0.0).sqrt());
    }
    Ok(path_distance_squared(a, b)?.max(0.0).sqrt())
}

struct Exponent {
    m: CMatrix,
    v: Vec<Complex64>,
    c: f64,
}

fn exponent_of(w: f64, k: &GaussianKernel) -> Exponent {
    let (m, v) = k.joint_form();
    Exponent { m, v, c: k.logw + w.ln() }
}

fn neighbours(a: &GaussianMixtureState, b: &GaussianMixtureState) -> bool {
    if a.terms.len() != b.terms.len() {
        return false;
    }
    a.terms.iter().zip(&b.terms).all(|((wa, ka), (wb, kb))| {
        let ea = exponent_of(*wa, ka);
        let eb = exponent_of(*wb, kb);
        let scale = 1.0 + ea.m.max_abs().max(ea.c.abs());
        let dv = ea.v.iter().zip(&eb.v).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let diff = ea.m.sub_matrix(&eb.m).max_abs().max(dv).max((ea.c - eb.c).abs());
        diff <= 0.05 * scale
    })
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.rows();
    let mut t = Complex64::zero();
    for i in 0..n {
        for k in 0..n {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

fn path_distance_squared(a: &GaussianMixtureState, b: &GaussianMixtureState) -> Result<f64, GaussianError> {
    let start: Vec<Exponent> = a.terms.iter().map(|(w, k)| exponent_of(*w, k)).collect();
    let end: Vec<Exponent> = b.terms.iter().map(|(w, k)| exponent_of(*w, k)).collect();
    // Exponents are affine in the path parameter, so each derivative is the
    // fixed quadratic −½zᵀΔM z + Δvᵀz + Δc.
    let deltas: Vec<Exponent> = start
        .iter()
        .zip(&end)
        .map(|(s, e)| Exponent {
            m: e.m.sub_matrix(&s.m),
            v: e.v.iter().zip(&s.v).map(|(x, y)| x - y).collect(),
            c: e.c - s.c,
        })
        .collect();
    let at = |i: usize, t: f64| -> Exponent {
        Exponent {
            m: start[i].m.add_matrix(&deltas[i].m.scale(&Complex64::new(t, 0.0))),
            v: start[i].v.iter().zip(&deltas[i].v).map(|(x, d)| x + d * t).collect(),
            c: start[i].c + t * deltas[i].c,
        }
    };
    let nodes: Vec<(f64, f64)> = GAUSS_LEGENDRE_8.iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    let mut total = 0.0;
    for &(s, ws) in &nodes {
        let left: Vec<Exponent> = (0..start.len()).map(|i| at(i, s)).collect();
        for &(t, wt) in &nodes {
            for (i, li) in left.iter().enumerate() {
                for j in 0..start.len() {
                    let rj = at(j, t);
                    let m = li.m.conj().add_matrix(&rj.m);
                    let v: Vec<Complex64> = li.v.iter().zip(&rj.v).map(|(x, y)| x.conj() + y).collect();
                    let ldl = ComplexLdl::new(&m)
                        .ok_or_else(|| GaussianError::Divergent("Hilbert–Schmidt form".into()))?;
                    let mean = ldl.solve(&v);
                    let cov = ldl.solve_matrix(&Matrix::identity(m.rows()));
                    let n = v.len() as f64;
                    let ln_z = Complex64::new(li.c + rj.c, 0.0) + 0.5 * n * (2.0 * PI).ln() - 0.5 * ldl.ln_det()
                        + 0.5 * dot(&v, &mean);
                    let e = isserlis(&deltas[i], true, &deltas[j], &mean, &cov);
                    total += ws * wt * (ln_z.exp() * e).re;
                }
            }
        }
    }
    Ok(total)
}

/// `E[p q]` for `z ~ N(μ, C)` where `p` is `conj` of the first quadratic when
/// `conj_first` is set, `q` the second, each of the form
/// `−½zᵀAz + aᵀz + α`.
fn isserlis(first: &Exponent, conj_first: bool, second: &Exponent, mu: &[Complex64], cov: &CMatrix) -> Complex64 {
    let (a_m, a_v) = if conj_first {
        (first.m.conj(), first.v.iter().map(|z| z.conj()).collect::<Vec<_>>())
    } else {
        (first.m.clone(), first.v.clone())
    };
    let centered = |m: &CMatrix, v: &[Complex64], c: f64| -> (Vec<Complex64>, Complex64) {
        let m_mu = m.mul_vec(mu);
        let lin: Vec<Complex64> = v.iter().zip(&m_mu).map(|(x, y)| x - y).collect();
        let constant = Complex64::new(c, 0.0) + dot(v, mu) - 0.5 * dot(mu, &m_mu);
        (lin, constant)
    };
    let (a1, alpha) = centered(&a_m, &a_v, first.c);
    let (b1, beta) = centered(&second.m, &second.v, second.c);
    let ac = a_m.checked_mul(cov).expect("square");
    let bc = second.m.checked_mul(cov).expect("square");
    let tr_ac = (0..ac.rows()).fold(Complex64::zero(), |t, i| t + ac[(i, i)]);
    let tr_bc = (0..bc.rows()).fold(Complex64::zero(), |t, i| t + bc[(i, i)]);
    let tr_acbc = trace_product(&ac, &bc);
    let cb = cov.mul_vec(&b1);
    0.25 * (tr_ac * tr_bc + 2.0 * tr_acbc) - 0.5 * tr_ac * beta - 0.5 * alpha * tr_bc + dot(&a1, &cb) + alpha * beta
}

/// Closed-form partial trace of one kernel along a decomposition
/// `x' = Kb·u + W·x`.
pub fn project_kernel(k: &GaussianKernel, d: &KernelDecomposition) -> Result<GaussianKernel, GaussianError> {
    if k.dim() != d.source_dim() {
        return Err(GaussianError::DimensionMismatch(format!(
            "kernel of dimension {} on a space of dimension {}",
            k.dim(),
            d.source_dim()
        )));
    }
    let w = d.embedding().to_f64().to_complex();
    let wt = w.transpose();
    let mul = |a: &CMatrix, b: &CMatrix| a.checked_mul(b).expect("conformable");
    let mut p = mul(&mul(&wt, &k.p), &w);
    let mut r = mul(&mul(&wt, &k.r), &w);
    let mut s = wt.mul_vec(&k.s);
    let dim_k = d.kernel_dim();
    let mut logw = k.logw;
    if dim_k == 0 {
        logw += d.lebesgue_factor_f64().ln();
    } else {
        // The measure on the kernel does not depend on its basis; an
        // orthonormal one keeps the Schur complements well conditioned.
        let kb = orthonormal_columns(&d.kernel_basis().to_f64());
        let lebesgue = kb.hstack(&d.embedding().to_f64()).determinant().abs();
        logw += lebesgue.ln();
        let kbt = kb.transpose();
        let q = kbt
            .checked_mul(&k.p.re().sub_matrix(&k.r.re()).scale(&2.0))
            .and_then(|m| m.checked_mul(&kb))
            .expect("conformable")
            .symmetrized();
        let ldl = ComplexLdl::new(&q.to_complex())
            .ok_or_else(|| GaussianError::Divergent("traced-out block is not positive definite".into()))?;
        let a = mul(&mul(&kbt.to_complex(), &k.r.transpose().sub_matrix(&k.p)), &w);
        let c: Vec<Complex64> = kbt.mul_vec(&k.s.iter().map(|z| 2.0 * z.re).collect::<Vec<_>>()).into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        let at = a.transpose();
        let qi_a = ldl.solve_matrix(&a);
        let qi_abar = ldl.solve_matrix(&a.conj());
        let qi_c = ldl.solve(&c);
        p = p.sub_matrix(&mul(&at, &qi_a));
        r = r.add_matrix(&mul(&at, &qi_abar));
        s = s.iter().zip(at.mul_vec(&qi_c)).map(|(x, y)| x + y).collect();
        logw += 0.5 * dot(&c, &qi_c).re + 0.5 * dim_k as f64 * (2.0 * PI).ln() - 0.5 * ldl.ln_det().re;
    }
    GaussianKernel::new(p, r, s, logw)
}

/// Modified Gram–Schmidt, applied twice.
fn orthonormal_columns(m: &Matrix<f64>) -> Matrix<f64> {
    let (rows, cols) = m.shape();
    let mut q: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    for j in 0..cols {
        for _ in 0..2 {
            for i in 0..j {
                let proj: f64 = (0..rows).map(|r| q[i][r] * q[j][r]).sum();
                for r in 0..rows {
                    q[j][r] -= proj * q[i][r];
                }
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    Matrix::from_fn(rows, cols, |r, c| q[c][r])
}

/// A projected state with the trace it had before renormalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub state: GaussianMixtureState,
    pub trace_before: f64,
}

impl Projection {
    pub fn drift(&self) -> f64 {
        (self.trace_before - 1.0).abs()
    }
}

/// Partial trace along `d`, renormalized.
pub fn partial_trace(state: &GaussianMixtureState, d: &KernelDecomposition) -> Result<Projection, GaussianError> {
    let terms = state
        .terms
        .iter()
        .map(|(w, k)| Ok((*w, project_kernel(k, d)?)))
        .collect::<Result<Vec<_>, GaussianError>>()?;
    let raw = GaussianMixtureState::new(terms, Provenance::Projected)?;
    let trace_before = trace(&raw)?;
    Ok(Projection {
        state: raw.normalized()?,
        trace_before,
    })
}

/// `π_{λλ'} ρ` for a witnessed `upper ≥ lower`.
pub fn project_state(
    state: &GaussianMixtureState,
    upper: &SystemLabel,
    lower: &SystemLabel,
    w: &OrderWitness,
    basis: &EvaluationBasis,
) -> Result<Projection, GaussianError> {
    relation_geq(upper, lower, w, basis)
        .map_err(|e| GaussianError::OrderViolation(format!("{} ≥ {}: {e}", upper.id(), lower.id())))?;
    if state.dim() != upper.dim() {
        return Err(GaussianError::DimensionMismatch(format!(
            "state of dimension {} over label {} of dimension {}",
            state.dim(),
            upper.id(),
            upper.dim()
        )));
    }
    let r = refinement(upper, lower, w, basis)?;
    let d = kernel_decomposition(&r.projection, &r.embedding)?;
    partial_trace(state, &d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub direct: GaussianMixtureState,
    pub composed: GaussianMixtureState,
    pub distance: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares `π_{λλ''} ρ` with `π_{λλ'} π_{λ'λ''} ρ` on a chain of labels
/// `[λ'', λ', λ]` of `family`.
pub fn verify_consistency(
    state: &GaussianMixtureState,
    family: &SystemFamily,
    chain: [&str; 3],
    tol: f64,
) -> Result<ConsistencyReport, GaussianError> {
    let label = |id: &str| {
        family
            .label(id)
            .ok_or_else(|| GaussianError::OrderViolation(format!("unknown label `{id}`")))
    };
    let witness = |u: &str, l: &str| {
        family
            .witness_between(u, l)
            .ok_or_else(|| GaussianError::OrderViolation(format!("no witnessed relation {u} ≥ {l}")))
    };
    let [top, mid, bottom] = chain;
    let (t, m, b) = (label(top)?, label(mid)?, label(bottom)?);
    let direct = project_state(state, t, b, &witness(top, bottom)?, &family.basis)?.state;
    let halfway = project_state(state, t, m, &witness(top, mid)?, &family.basis)?.state;
    let composed = project_state(&halfway, m, b, &witness(mid, bottom)?, &family.basis)?.state;
    let distance = hs_distance(&direct, &composed)?;
    Ok(ConsistencyReport {
        direct,
        composed,
        distance,
        tol,
        passed: distance <= tol,
    })
}

/// States assigned to labels of a family.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentFamily {
    pub system: SystemFamily,
    pub states: BTreeMap<String, GaussianMixtureState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairCheck {
    pub upper: String,
    pub lower: String,
    /// `None` when the projection itself failed.
    pub distance: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

/// Checks `π_{λλ'} ρ_{λ'} = ρ_λ` for every declared relation between labels
/// that carry states.
pub fn check_coherent_family(f: &CoherentFamily, tol: f64) -> Vec<PairCheck> {
    let mut out = Vec::new();
    for r in &f.system.order {
        if r.upper == r.lower {
            continue;
        }
        let (Some(su), Some(sl)) = (f.states.get(&r.upper), f.states.get(&r.lower)) else {
            continue;
        };
        let result = (|| {
            let up = f.system.label(&r.upper).ok_or_else(|| GaussianError::OrderViolation(r.upper.clone()))?;
            let lo = f.system.label(&r.lower).ok_or_else(|| GaussianError::OrderViolation(r.lower.clone()))?;
            let projected = project_state(su, up, lo, &r.witness, &f.system.basis)?;
            hs_distance(&projected.state, sl)
        })();
        let (distance, passed, detail) = match result {
            Ok(d) => (Some(d), d <= tol, format!("distance {d:e}")),
            Err(e) => (None, false, format!("{e}")),
        };
        out.push(PairCheck {
            upper: r.upper.clone(),
            lower: r.lower.clone(),
            distance,
            passed,
            detail,
        });
    }
    out
}

/// Kernel samples of a partial trace computed by the midpoint rule.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
    pub values: Vec<Complex64>,
}

impl KernelTable {
    /// `max |table − state| / max |state|` over the sample points.
    pub fn max_relative_error(&self, state: &GaussianMixtureState) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for ((x, y), v) in self.points.iter().zip(&self.values) {
            let exact = state.kernel_value(x, y);
            num = num.max((v - exact).norm());
            den = den.max(exact.norm());
        }
        num / den
    }
}

/// Deterministic sample points `(x, y) ∈ [−1.5, 1.5]^{2N}` from an additive
/// recurrence with square roots of primes as increments.
pub fn kernel_sample_points(dim: usize, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    const PRIMES: [f64; 12] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0];
    let alpha: Vec<f64> = (0..2 * dim).map(|i| PRIMES[i % PRIMES.len()].sqrt().fract() + (i / PRIMES.len()) as f64 * 0.137).collect();
    (1..=count)
        .map(|n| {
            let coord = |i: usize| 3.0 * (n as f64 * alpha[i]).fract() - 1.5;
            ((0..dim).map(coord).collect(), (dim..2 * dim).map(coord).collect())
        })
        .collect()
}

/// Midpoint-rule evaluation of the partial trace on `grid_points` nodes per
/// kernel coordinate over `[−extent, extent]`, sampled at
/// [`kernel_sample_points`]. Works on the un-normalized kernel, so the values
/// compare directly with `project_kernel` output scaled by the term weights.
pub fn quadrature_partial_trace(
    state: &GaussianMixtureState,
    d: &KernelDecomposition,
    grid_points: usize,
    extent: f64,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<KernelTable, GaussianError> {
    if grid_points < 16 {
        return Err(GaussianError::InvalidKernel("at least 16 grid points are required".into()));
    }
    if state.dim() != d.source_dim() {
        return Err(GaussianError::DimensionMismatch("state and decomposition".into()));
    }
    let kb = d.kernel_basis().to_f64();
    let w = d.embedding().to_f64();
    let k = d.kernel_dim();
    let lebesgue = d.lebesgue_factor_f64();
    let h = 2.0 * extent / grid_points as f64;
    let nodes: Vec<f64> = (0..grid_points).map(|i| -extent + (i as f64 + 0.5) * h).collect();
    check_extent(state, d, extent, samples)?;

    let total = grid_points.pow(k as u32);
    let mut values = Vec::with_capacity(samples.len());
    for (x, y) in samples {
        let wx = w.mul_vec(x);
        let wy = w.mul_vec(y);
        let mut acc = Complex64::zero();
        let mut u = vec![0.0; k];
        for flat in 0..total {
            let mut rest = flat;
            for slot in u.iter_mut() {
                *slot = nodes[rest % grid_points];
                rest /= grid_points;
            }
            let ku = if k > 0 { kb.mul_vec(&u) } else { vec![0.0; wx.len()] };
            let xp: Vec<f64> = ku.iter().zip(&wx).map(|(a, b)| a + b).collect();
            let yp: Vec<f64> = ku.iter().zip(&wy).map(|(a, b)| a + b).collect();
            acc += state.kernel_value(&xp, &yp);
        }
        values.push(acc * (h.powi(k as i32) * lebesgue));
    }
    Ok(KernelTable {
        points: samples.to_vec(),
        values,
    })
}

/// Gaussian tail mass of the integrand outside the box, summed over
/// coordinates, terms and samples.
fn check_extent(
    state: &GaussianMixtureState,
    d: &KernelDecomposition,
    extent: f64,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<(), GaussianError> {
    let k = d.kernel_dim();
    if k == 0 {
        return Ok(());
    }
    let kb = d.kernel_basis().to_f64();
    let w = d.embedding().to_f64().to_complex();
    let mut worst: f64 = 0.0;
    for (_, kern) in &state.terms {
        let q = kb
            .transpose()
            .checked_mul(&kern.p.re().sub_matrix(&kern.r.re()).scale(&2.0))
            .and_then(|m| m.checked_mul(&kb))
            .expect("conformable")
            .symmetrized();
        let cov = q.inverse(0.0).ok_or_else(|| GaussianError::Divergent("traced-out block".into()))?;
        let a = kb
            .transpose()
            .to_complex()
            .checked_mul(&kern.r.transpose().sub_matrix(&kern.p))
            .and_then(|m| m.checked_mul(&w))
            .expect("conformable");
        let c: Vec<f64> = kb.transpose().mul_vec(&kern.s.iter().map(|z| 2.0 * z.re).collect::<Vec<_>>());
        for (x, y) in samples {
            let ax = a.mul_vec(&to_complex_vec(x));
            let ay = a.conj().mul_vec(&to_complex_vec(y));
            let j: Vec<f64> = (0..k).map(|i| (ax[i] + ay[i]).re + c[i]).collect();
            let mu = cov.mul_vec(&j);
            let mut tail = 0.0;
            for i in 0..k {
                let sigma = cov[(i, i)].sqrt();
                let gap = (extent - mu[i].abs()) / (sigma * core::f64::consts::SQRT_2);
                tail += libm::erfc(gap);
            }
            worst = worst.max(tail);
        }
    }
    if worst > 1e-6 {
        return Err(GaussianError::ExtentTooSmall(worst));
    }
    Ok(())
}

/// Probe of positivity: the smallest eigenvalue of `h^N ρ̌(x_a, x_b)` over a
/// midpoint grid with `floor(points^{1/N})` nodes per axis on
/// `[−extent, extent]^N`. Once even two nodes per axis exceed `points`, the
/// nodes are instead `points` quasi-random points of `[−2, 2]^N` with unit
/// weight; any finite Gram matrix of a positive kernel is positive
/// semidefinite, so both variants probe the same property.
pub fn min_grid_eigenvalue(state: &GaussianMixtureState, points: usize, extent: f64) -> f64 {
    let n = state.dim();
    let (nodes, weight) = if 2usize.checked_pow(n as u32).is_some_and(|t| t <= points) {
        let mut per_axis = 2usize;
        while (per_axis + 1).pow(n as u32) <= points {
            per_axis += 1;
        }
        let h = 2.0 * extent / per_axis as f64;
        let axis: Vec<f64> = (0..per_axis).map(|i| -extent + (i as f64 + 0.5) * h).collect();
        let grid: Vec<Vec<f64>> = (0..per_axis.pow(n as u32))
            .map(|mut flat| {
                (0..n)
                    .map(|_| {
                        let v = axis[flat % per_axis];
                        flat /= per_axis;
                        v
                    })
                    .collect()
            })
            .collect();
        (grid, h.powi(n as i32))
    } else {
        let cloud = kernel_sample_points(n, points)
            .into_iter()
            .map(|(x, _)| x.into_iter().map(|v| v * 4.0 / 3.0).collect())
            .collect();
        (cloud, 1.0)
    };
    let total = nodes.len();
    let kmat = Matrix::from_fn(total, total, |a, b| state.kernel_value(&nodes[a], &nodes[b]) * weight);
    // A Hermitian H = X + iY has the spectrum of [[X, −Y], [Y, X]], doubled.
    let real = Matrix::from_fn(2 * total, 2 * total, |i, j| {
        let z = kmat[(i % total, j % total)];
        match (i < total, j < total) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    real.symmetrized()
        .symmetric_eigenvalues()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// A random normalized pure Gaussian: `Re A = XXᵀ/N + I/2`, small imaginary
/// part and linear term.
pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> GaussianMixtureState {
    let x = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let re = x
        .checked_mul(&x.transpose())
        .expect("square")
        .scale(&(1.0 / dim as f64))
        .add_matrix(&Matrix::identity(dim).scale(&0.5));
    let y = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-0.3..0.3));
    let im = y.add_matrix(&y.transpose()).scale(&0.5);
    let a = Matrix::from_fn(dim, dim, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
    let b: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
        .collect();
    pure_state(&a, &b).expect("positive definite by construction")
}

/// Random mixture of `terms` random pure states with weights bounded away
/// from zero.
pub fn random_mixture<R: Rng + ?Sized>(dim: usize, terms: usize, rng: &mut R) -> GaussianMixtureState {
    let parts: Vec<(f64, GaussianMixtureState)> = (0..terms)
        .map(|_| (rng.gen_range(0.2..1.0), random_pure_state(dim, rng)))
        .collect();
    mix(&parts).expect("positive weights")
}
