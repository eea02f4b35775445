//! Reduced configuration spaces `Q_K ≅ ℝ^N` and the linear projections
//! between them.
//!
//! A frame `K` is an ordered list of configurational degrees of freedom. When
//! every member of `K` is a linear combination `κ_i = B_i^j κ'_j` of the
//! members of a larger frame `K'`, the coefficient matrix `B` realizes the
//! projection `Q_{K'} → Q_K` in the coordinates the frames induce.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_traits::{Signed, Zero};

use crate::linalg::{rational_to_f64, Matrix, Rational};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReducedSpaceError {
    #[error("a reduced frame needs at least one degree of freedom")]
    EmptyFrame,
    #[error("degree of freedom `{0}` appears twice in a frame")]
    DuplicateDof(DofId),
    #[error("no coefficient vector supplied for `{0}`")]
    MissingCombination(DofId),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("projection has rank {rank}, expected {expected}: the target degrees of freedom are not independent")]
    RankDeficient { rank: usize, expected: usize },
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("embedding is not an exact right inverse of the projection")]
    NotARightInverse,
    #[error("invalid kernel basis: {0}")]
    InvalidKernelBasis(String),
}

/// Identifier of one configurational elementary degree of freedom.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DofId(String);

impl DofId {
    pub fn new(id: impl Into<String>) -> Self {
        DofId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for DofId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for DofId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DofId {
    fn from(s: &str) -> Self {
        DofId::new(s)
    }
}

/// An ordered, duplicate-free, nonempty set `K` of degrees of freedom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedFrame {
    dofs: Vec<DofId>,
}

impl ReducedFrame {
    pub fn new(dofs: Vec<DofId>) -> Result<Self, ReducedSpaceError> {
        if dofs.is_empty() {
            return Err(ReducedSpaceError::EmptyFrame);
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for d in &dofs {
            if !seen.insert(d) {
                return Err(ReducedSpaceError::DuplicateDof(d.clone()));
            }
        }
        Ok(ReducedFrame { dofs })
    }

    pub fn from_ids<I, S>(ids: I) -> Result<Self, ReducedSpaceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(ids.into_iter().map(|s| DofId::new(s)).collect())
    }

    pub fn dofs(&self) -> &[DofId] {
        &self.dofs
    }

    /// Dimension `N` of `Q_K`.
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn position(&self, id: &DofId) -> Option<usize> {
        self.dofs.iter().position(|d| d == id)
    }

    pub fn contains(&self, id: &DofId) -> bool {
        self.position(id).is_some()
    }
}

/// The matrix `B` of `pr_{KK'}: Q_{K'} → Q_K`, full row rank.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    target: ReducedFrame,
    source: ReducedFrame,
    entries: Matrix<Rational>,
}

impl ProjectionMatrix {
    /// Validates shape and full row rank.
    pub fn new(
        target: ReducedFrame,
        source: ReducedFrame,
        entries: Matrix<Rational>,
    ) -> Result<Self, ReducedSpaceError> {
        if entries.shape() != (target.len(), source.len()) {
            return Err(ReducedSpaceError::DimensionMismatch(format!(
                "matrix is {}x{}, frames need {}x{}",
                entries.rows(),
                entries.cols(),
                target.len(),
                source.len()
            )));
        }
        let rank = entries.rank_by_elimination(0.0);
        if rank < target.len() {
            return Err(ReducedSpaceError::RankDeficient {
                rank,
                expected: target.len(),
            });
        }
        Ok(ProjectionMatrix {
            target,
            source,
            entries,
        })
    }

    pub fn identity(frame: ReducedFrame) -> Self {
        let n = frame.len();
        ProjectionMatrix {
            target: frame.clone(),
            source: frame,
            entries: Matrix::identity(n),
        }
    }

    pub fn target(&self) -> &ReducedFrame {
        &self.target
    }

    pub fn source(&self) -> &ReducedFrame {
        &self.source
    }

    pub fn entries(&self) -> &Matrix<Rational> {
        &self.entries
    }

    /// Rank by exact row reduction.
    pub fn rank_exact(&self) -> usize {
        self.entries.rank_by_elimination(0.0)
    }

    /// Rank by counting singular values of the floating-point image.
    pub fn rank_numerical(&self) -> usize {
        self.entries.to_f64().rank_by_singular_values()
    }

    /// Applies the projection to coordinates on `Q_{K'}`.
    pub fn apply(&self, coords: &[Rational]) -> Vec<Rational> {
        self.entries.mul_vec(coords)
    }
}

/// Builds `B` from the linear combinations `κ_i = Σ_j B_ij κ'_j`.
pub fn build_projection(
    target: &ReducedFrame,
    source: &ReducedFrame,
    combos: &BTreeMap<DofId, Vec<Rational>>,
) -> Result<ProjectionMatrix, ReducedSpaceError> {
    let mut rows = Vec::with_capacity(target.len());
    for id in target.dofs() {
        let row = combos
            .get(id)
            .ok_or_else(|| ReducedSpaceError::MissingCombination(id.clone()))?;
        if row.len() != source.len() {
            return Err(ReducedSpaceError::DimensionMismatch(format!(
                "combination for `{}` has {} coefficients, source frame has {}",
                id,
                row.len(),
                source.len()
            )));
        }
        rows.push(row.clone());
    }
    let entries = Matrix::from_rows(rows, source.len()).expect("row lengths checked");
    ProjectionMatrix::new(target.clone(), source.clone(), entries)
}

/// `pr_{KK''} = pr_{KK'} ∘ pr_{K'K''}`.
pub fn compose_projections(
    outer: &ProjectionMatrix,
    inner: &ProjectionMatrix,
) -> Result<ProjectionMatrix, ReducedSpaceError> {
    if outer.source != inner.target {
        return Err(ReducedSpaceError::FrameMismatch(format!(
            "outer source {:?} differs from inner target {:?}",
            outer.source.dofs(),
            inner.target.dofs()
        )));
    }
    let entries = outer
        .entries
        .checked_mul(&inner.entries)
        .expect("frames agree so shapes agree");
    ProjectionMatrix::new(outer.target.clone(), inner.source.clone(), entries)
}

/// `Q_{K'} = ker pr_{KK'} ⊕ W(Q_K)` in coordinates, with the Lebesgue weight
/// of the factorized measure.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDecomposition {
    kernel_basis: Matrix<Rational>,
    embedding: Matrix<Rational>,
    lebesgue_factor: Rational,
}

impl KernelDecomposition {
    /// Columns spanning `ker B`; `N' x (N' - N)`.
    pub fn kernel_basis(&self) -> &Matrix<Rational> {
        &self.kernel_basis
    }

    /// The embedding `W` (`N' x N`).
    pub fn embedding(&self) -> &Matrix<Rational> {
        &self.embedding
    }

    /// `|det [Kb | W]|`; for a zero-dimensional kernel this is `|det W|`.
    pub fn lebesgue_factor(&self) -> &Rational {
        &self.lebesgue_factor
    }

    pub fn lebesgue_factor_f64(&self) -> f64 {
        rational_to_f64(&self.lebesgue_factor)
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.cols()
    }

    pub fn source_dim(&self) -> usize {
        self.embedding.rows()
    }

    pub fn target_dim(&self) -> usize {
        self.embedding.cols()
    }

    /// Same decomposition with a caller-chosen kernel basis.
    pub fn with_kernel_basis(
        b: &ProjectionMatrix,
        w: &Matrix<Rational>,
        kernel_basis: Matrix<Rational>,
    ) -> Result<Self, ReducedSpaceError> {
        check_right_inverse(b, w)?;
        let (n, n_src) = b.entries.shape();
        if kernel_basis.shape() != (n_src, n_src - n) {
            return Err(ReducedSpaceError::InvalidKernelBasis(format!(
                "expected {}x{}, got {}x{}",
                n_src,
                n_src - n,
                kernel_basis.rows(),
                kernel_basis.cols()
            )));
        }
        let image = b.entries.checked_mul(&kernel_basis).expect("shapes checked");
        if !image.as_slice().iter().all(Zero::is_zero) {
            return Err(ReducedSpaceError::InvalidKernelBasis(
                "columns are not in the kernel".to_string(),
            ));
        }
        let det = kernel_basis.hstack(w).determinant();
        if det.is_zero() {
            return Err(ReducedSpaceError::InvalidKernelBasis(
                "kernel columns and embedding are not jointly independent".to_string(),
            ));
        }
        Ok(KernelDecomposition {
            kernel_basis,
            embedding: w.clone(),
            lebesgue_factor: det.abs(),
        })
    }
}

fn check_right_inverse(b: &ProjectionMatrix, w: &Matrix<Rational>) -> Result<(), ReducedSpaceError> {
    if w.shape() != (b.source.len(), b.target.len()) {
        return Err(ReducedSpaceError::DimensionMismatch(format!(
            "embedding is {}x{}, expected {}x{}",
            w.rows(),
            w.cols(),
            b.source.len(),
            b.target.len()
        )));
    }
    let prod = b.entries.checked_mul(w).expect("shapes checked");
    if !prod.is_identity() {
        return Err(ReducedSpaceError::NotARightInverse);
    }
    Ok(())
}

/// Decomposes `Q_{K'}` along `ker B` and the image of `W`, using the exact
/// echelon null-space basis.
pub fn kernel_decomposition(
    b: &ProjectionMatrix,
    w: &Matrix<Rational>,
) -> Result<KernelDecomposition, ReducedSpaceError> {
    check_right_inverse(b, w)?;
    let kernel_basis = b.entries.null_space(0.0);
    KernelDecomposition::with_kernel_basis(b, w, kernel_basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rational, rational_int};
    use alloc::vec;

    fn q(n: i64) -> Rational {
        rational_int(n)
    }

    fn frame(ids: &[&str]) -> ReducedFrame {
        ReducedFrame::from_ids(ids.iter().copied()).unwrap()
    }

    fn combos(entries: &[(&str, Vec<Rational>)]) -> BTreeMap<DofId, Vec<Rational>> {
        entries.iter().map(|(k, v)| (DofId::new(*k), v.clone())).collect()
    }

    #[test]
    fn frame_rejects_duplicates_and_empty() {
        assert_eq!(ReducedFrame::new(vec![]), Err(ReducedSpaceError::EmptyFrame));
        assert!(matches!(
            ReducedFrame::from_ids(["a", "a"]),
            Err(ReducedSpaceError::DuplicateDof(_))
        ));
    }

    #[test]
    fn sum_combination_gives_row_of_ones() {
        let b = build_projection(&frame(&["k1"]), &frame(&["p1", "p2"]), &combos(&[("k1", vec![q(1), q(1)])])).unwrap();
        assert_eq!(b.entries().to_rows(), vec![vec![q(1), q(1)]]);
    }

    #[test]
    fn identity_combination_is_identity_projection() {
        let k = frame(&["a", "b"]);
        let b = build_projection(&k, &k, &combos(&[("a", vec![q(1), q(0)]), ("b", vec![q(0), q(1)])])).unwrap();
        assert!(b.entries().is_identity());
        assert_eq!(b.apply(&[q(3), q(-2)]), vec![q(3), q(-2)]);
    }

    #[test]
    fn repeated_combination_is_rank_deficient() {
        // Both 2x1 minors of [[1],[1]] are 1x1; the only 2x2 minor does not exist,
        // so the rank is at most 1 < 2.
        let err = build_projection(
            &frame(&["k1", "k2"]),
            &frame(&["p1"]),
            &combos(&[("k1", vec![q(1)]), ("k2", vec![q(1)])]),
        )
        .unwrap_err();
        assert_eq!(err, ReducedSpaceError::RankDeficient { rank: 1, expected: 2 });
    }

    #[test]
    fn missing_and_misshapen_combinations() {
        let err = build_projection(&frame(&["k1"]), &frame(&["p1"]), &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ReducedSpaceError::MissingCombination(_)));
        let err = build_projection(&frame(&["k1"]), &frame(&["p1"]), &combos(&[("k1", vec![q(1), q(2)])])).unwrap_err();
        assert!(matches!(err, ReducedSpaceError::DimensionMismatch(_)));
    }

    #[test]
    fn composition_is_matrix_product() {
        let b = build_projection(&frame(&["k"]), &frame(&["p1", "p2"]), &combos(&[("k", vec![q(1), q(1)])])).unwrap();
        let c = build_projection(
            &frame(&["p1", "p2"]),
            &frame(&["r1", "r2", "r3"]),
            &combos(&[("p1", vec![q(1), q(0), q(0)]), ("p2", vec![q(0), q(1), q(1)])]),
        )
        .unwrap();
        let d = compose_projections(&b, &c).unwrap();
        assert_eq!(d.entries().to_rows(), vec![vec![q(1), q(1), q(1)]]);
        let id = ProjectionMatrix::identity(frame(&["k"]));
        assert_eq!(compose_projections(&id, &b).unwrap(), b);
        assert!(matches!(
            compose_projections(&c, &b),
            Err(ReducedSpaceError::FrameMismatch(_))
        ));
    }

    #[test]
    fn decomposition_of_sum_projection() {
        let b = build_projection(&frame(&["k"]), &frame(&["p1", "p2"]), &combos(&[("k", vec![q(1), q(1)])])).unwrap();
        let w = Matrix::from_rows(vec![vec![q(1)], vec![q(0)]], 1).unwrap();
        let d = kernel_decomposition(&b, &w).unwrap();
        // ker [1 1] = span (-1, 1); det [[-1, 1], [1, 0]] = -1.
        assert_eq!(d.kernel_basis().to_rows(), vec![vec![q(-1)], vec![q(1)]]);
        assert_eq!(d.lebesgue_factor(), &q(1));
        // The basis (1, -1) differs by a sign and gives the same weight.
        let alt = Matrix::from_rows(vec![vec![q(1)], vec![q(-1)]], 1).unwrap();
        let d2 = KernelDecomposition::with_kernel_basis(&b, &w, alt).unwrap();
        assert_eq!(d2.lebesgue_factor(), &q(1));
    }

    #[test]
    fn zero_dimensional_kernel_weight_is_det_w() {
        let b = build_projection(&frame(&["k"]), &frame(&["p"]), &combos(&[("k", vec![q(2)])])).unwrap();
        let w = Matrix::from_rows(vec![vec![rational(1, 2)]], 1).unwrap();
        let d = kernel_decomposition(&b, &w).unwrap();
        assert_eq!(d.kernel_dim(), 0);
        assert_eq!(d.lebesgue_factor(), &rational(1, 2));

        let k = frame(&["a", "b"]);
        let id = ProjectionMatrix::identity(k);
        let d = kernel_decomposition(&id, &Matrix::identity(2)).unwrap();
        assert_eq!(d.kernel_dim(), 0);
        assert_eq!(d.lebesgue_factor(), &q(1));
    }

    #[test]
    fn wrong_embedding_is_rejected() {
        let b = build_projection(&frame(&["k"]), &frame(&["p1", "p2"]), &combos(&[("k", vec![q(1), q(1)])])).unwrap();
        let w = Matrix::from_rows(vec![vec![q(1)], vec![q(1)]], 1).unwrap();
        assert_eq!(kernel_decomposition(&b, &w), Err(ReducedSpaceError::NotARightInverse));
    }

    #[test]
    fn rank_methods_agree_on_projection() {
        let b = build_projection(
            &frame(&["k1", "k2"]),
            &frame(&["p1", "p2", "p3"]),
            &combos(&[("k1", vec![q(1), q(-1), q(0)]), ("k2", vec![q(0), q(1), rational(1, 3)])]),
        )
        .unwrap();
        assert_eq!(b.rank_exact(), 2);
        assert_eq!(b.rank_numerical(), 2);
    }
}
