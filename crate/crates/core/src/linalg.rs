//! Dense matrices over exact rationals, reals and complex numbers.
//!
//! Everything here is small-dimensional (tens of rows at most), so the
//! storage is a flat row-major `Vec` and the algorithms are textbook:
//! Gauss-Jordan elimination for rank, null spaces and solves, cyclic Jacobi
//! for symmetric eigenvalues and one-sided Jacobi for singular values.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Div, Index, IndexMut, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Relative cut-off below which a singular value counts as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Scalar field used by [`Matrix`].
pub trait Field:
    Clone
    + PartialEq
    + fmt::Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Approximate absolute value, used to rank pivot candidates.
    fn magnitude(&self) -> f64;

    /// Zero test. Exact fields ignore `tol`.
    fn is_zero_within(&self, tol: f64) -> bool;
}

impl Field for Rational {
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }

    fn is_zero_within(&self, _tol: f64) -> bool {
        self.is_zero()
    }
}

impl Field for f64 {
    fn magnitude(&self) -> f64 {
        Float::abs(*self)
    }

    fn is_zero_within(&self, tol: f64) -> bool {
        Float::abs(*self) <= tol
    }
}

impl Field for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }

    fn is_zero_within(&self, tol: f64) -> bool {
        self.norm() <= tol
    }
}

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational value of a finite double.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        list.finish()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl<T> Matrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Matrix<T> {
    /// Builds a matrix from rows; returns `None` when rows are ragged.
    pub fn from_rows(rows: Vec<Vec<T>>, cols: usize) -> Option<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            if row.len() != cols {
                return None;
            }
            data.extend(row);
        }
        Some(Matrix { rows: n, cols, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Matrix::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])].clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), self.cols, |r, c| self[(rows[r], c)].clone())
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "hstack row mismatch");
        Matrix::from_fn(self.rows, self.cols + other.cols, |r, c| {
            if c < self.cols {
                self[(r, c)].clone()
            } else {
                other[(r, c - self.cols)].clone()
            }
        })
    }

    /// `[self ; other]`.
    pub fn vstack(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Reduced row echelon form with the pivot column of every nonzero row.
#[derive(Clone, Debug)]
pub struct Rref<T> {
    pub reduced: Matrix<T>,
    pub pivots: Vec<usize>,
}

impl<T: Field> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_fn(rows, cols, |_, _| T::zero())
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn column_vector(v: &[T]) -> Self {
        Matrix::from_fn(v.len(), 1, |r, _| v[r].clone())
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols && *self == Matrix::identity(self.rows)
    }

    pub fn checked_mul(&self, other: &Self) -> Option<Self> {
        if self.cols != other.rows {
            return None;
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(r, k)];
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let prod = a.clone() * other[(k, c)].clone();
                    let cell: &mut T = &mut out[(r, c)];
                    *cell = cell.clone() + prod;
                }
            }
        }
        Some(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|x| x.clone() * s.clone())
    }

    pub fn add_matrix(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "matrix sum shape");
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            self[(r, c)].clone() + other[(r, c)].clone()
        })
    }

    pub fn sub_matrix(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "matrix difference shape");
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            self[(r, c)].clone() - other[(r, c)].clone()
        })
    }

    /// Gauss-Jordan elimination. Entries with magnitude `<= tol` are treated
    /// as zero (ignored for exact fields). The pivot in each column is the
    /// candidate of largest magnitude, ties going to the lowest row.
    pub fn rref(&self, tol: f64) -> Rref<T> {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row == m.rows {
                break;
            }
            let mut best: Option<(usize, f64)> = None;
            for r in row..m.rows {
                let v = &m[(r, col)];
                if v.is_zero_within(tol) {
                    continue;
                }
                let mag = v.magnitude();
                if best.is_none_or(|(_, b)| mag > b) {
                    best = Some((r, mag));
                }
            }
            let Some((p, _)) = best else {
                for r in row..m.rows {
                    m[(r, col)] = T::zero();
                }
                continue;
            };
            m.swap_rows(row, p);
            let inv = T::one() / m[(row, col)].clone();
            for c in col..m.cols {
                let v = m[(row, c)].clone() * inv.clone();
                m[(row, c)] = v;
            }
            for r in 0..m.rows {
                if r == row {
                    continue;
                }
                let factor = m[(r, col)].clone();
                if factor.is_zero() {
                    continue;
                }
                for c in col..m.cols {
                    let v = m[(r, c)].clone() - factor.clone() * m[(row, c)].clone();
                    m[(r, c)] = v;
                }
                m[(r, col)] = T::zero();
            }
            pivots.push(col);
            row += 1;
        }
        Rref { reduced: m, pivots }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Rank by row reduction.
    pub fn rank_by_elimination(&self, tol: f64) -> usize {
        self.rref(tol).pivots.len()
    }

    /// Basis of the right null space as columns, one per free column of the
    /// echelon form (the standard basis with a single free variable set to 1).
    pub fn null_space(&self, tol: f64) -> Matrix<T> {
        let Rref { reduced, pivots } = self.rref(tol);
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Matrix::zeros(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            basis[(f, k)] = T::one();
            for (r, &p) in pivots.iter().enumerate() {
                basis[(p, k)] = -reduced[(r, f)].clone();
            }
        }
        basis
    }

    /// Solves `self * X = rhs` for square nonsingular `self`.
    pub fn solve(&self, rhs: &Self, tol: f64) -> Option<Self> {
        if self.rows != self.cols || rhs.rows != self.rows {
            return None;
        }
        let n = self.rows;
        let Rref { reduced, pivots } = self.hstack(rhs).rref(tol);
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        Some(Matrix::from_fn(n, rhs.cols, |r, c| reduced[(r, n + c)].clone()))
    }

    pub fn inverse(&self, tol: f64) -> Option<Self> {
        self.solve(&Matrix::identity(self.rows), tol)
    }

    /// Determinant by elimination with magnitude pivoting.
    pub fn determinant(&self) -> T {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut m = self.clone();
        let mut det = T::one();
        for col in 0..n {
            let mut best: Option<(usize, f64)> = None;
            for r in col..n {
                if m[(r, col)].is_zero() {
                    continue;
                }
                let mag = m[(r, col)].magnitude();
                if best.is_none_or(|(_, b)| mag > b) {
                    best = Some((r, mag));
                }
            }
            let Some((p, _)) = best else {
                return T::zero();
            };
            if p != col {
                m.swap_rows(p, col);
                det = -det;
            }
            let pivot = m[(col, col)].clone();
            det = det * pivot.clone();
            for r in col + 1..n {
                let factor = m[(r, col)].clone() / pivot.clone();
                if factor.is_zero() {
                    continue;
                }
                for c in col..n {
                    let v = m[(r, c)].clone() - factor.clone() * m[(col, c)].clone();
                    m[(r, c)] = v;
                }
            }
        }
        det
    }

    /// A particular solution of `self * x = target` (free variables set to
    /// zero), or `None` when the system is inconsistent.
    pub fn solve_consistent(&self, target: &[T], tol: f64) -> Option<Vec<T>> {
        assert_eq!(target.len(), self.rows, "right-hand side length");
        let aug = self.hstack(&Matrix::column_vector(target));
        let Rref { reduced, pivots } = aug.rref(tol);
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![T::zero(); self.cols];
        for (r, &p) in pivots.iter().enumerate() {
            x[p] = reduced[(r, self.cols)].clone();
        }
        Some(x)
    }
}

impl Matrix<Rational> {
    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(rational_to_f64)
    }
}

impl Matrix<f64> {
    pub fn to_complex(&self) -> Matrix<Complex64> {
        self.map(|&x| Complex64::new(x, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Singular values by one-sided Jacobi, sorted descending.
    pub fn singular_values(&self) -> Vec<f64> {
        // Work on the orientation with fewer columns.
        let a = if self.cols > self.rows {
            self.transpose()
        } else {
            self.clone()
        };
        let (m, n) = a.shape();
        let mut u = a;
        for _sweep in 0..80 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        let up = u[(i, p)];
                        let uq = u[(i, q)];
                        alpha += up * up;
                        beta += uq * uq;
                        gamma += up * uq;
                    }
                    if gamma == 0.0 {
                        continue;
                    }
                    let scale = (alpha * beta).sqrt();
                    if scale == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / scale);
                    if gamma.abs() <= 1e-15 * scale {
                        continue;
                    }
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let up = u[(i, p)];
                        let uq = u[(i, q)];
                        u[(i, p)] = c * up - s * uq;
                        u[(i, q)] = s * up + c * uq;
                    }
                }
            }
            if off <= 1e-15 {
                break;
            }
        }
        let mut sv: Vec<f64> = (0..n)
            .map(|c| (0..m).map(|i| u[(i, c)] * u[(i, c)]).sum::<f64>().sqrt())
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
        sv
    }

    /// Numerical rank: singular values below `RANK_RTOL * sigma_max` are zero.
    pub fn rank_by_singular_values(&self) -> usize {
        let sv = self.singular_values();
        let Some(&top) = sv.first() else { return 0 };
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > RANK_RTOL * top).count()
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi, sorted ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        assert_eq!(self.rows, self.cols, "eigenvalues of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            let mut diag = 0.0;
            for p in 0..n {
                diag += a[(p, p)] * a[(p, p)];
                for q in p + 1..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off <= 1e-30 * diag || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        ev
    }

    /// Cholesky factor `L` with `self = L Lᵀ`; `None` unless positive definite.
    pub fn cholesky(&self) -> Option<Matrix<f64>> {
        let n = self.rows;
        if n != self.cols {
            return None;
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut v = self[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / d;
            }
        }
        Some(l)
    }

    pub fn symmetrized(&self) -> Matrix<f64> {
        Matrix::from_fn(self.rows, self.cols, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }
}

impl Matrix<Complex64> {
    pub fn re(&self) -> Matrix<f64> {
        self.map(|z| z.re)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// `LDLᵀ` factorization (no pivoting) of a complex symmetric matrix.
///
/// When the real part of the matrix is positive definite every Schur
/// complement keeps a positive definite real part, so all pivots lie in the
/// open right half-plane and `Π sqrt(d_i)` with principal roots is the branch
/// of `sqrt(det)` continuously connected to the real positive definite case.
#[derive(Clone, Debug)]
pub struct ComplexLdl {
    lower: Matrix<Complex64>,
    pivots: Vec<Complex64>,
}

impl ComplexLdl {
    /// Factorizes `m`; returns `None` if some pivot has non-positive real part.
    pub fn new(m: &Matrix<Complex64>) -> Option<Self> {
        let n = m.rows();
        assert_eq!(n, m.cols(), "LDL of a non-square matrix");
        let mut a = m.clone();
        let mut lower = Matrix::identity(n);
        let mut pivots = Vec::with_capacity(n);
        for j in 0..n {
            let d = a[(j, j)];
            if !(d.re > 0.0) || !d.re.is_finite() || !d.im.is_finite() {
                return None;
            }
            pivots.push(d);
            for i in j + 1..n {
                lower[(i, j)] = a[(i, j)] / d;
            }
            for i in j + 1..n {
                let lij = lower[(i, j)];
                if lij == Complex64::zero() {
                    continue;
                }
                for k in j + 1..n {
                    let v = a[(i, k)] - lij * a[(j, k)];
                    a[(i, k)] = v;
                }
            }
        }
        Some(ComplexLdl { lower, pivots })
    }

    pub fn pivots(&self) -> &[Complex64] {
        &self.pivots
    }

    /// `ln det` on the branch fixed by the principal root of each pivot.
    pub fn ln_det(&self) -> Complex64 {
        self.pivots.iter().map(|d| d.ln()).sum()
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.pivots.len();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let v = y[i] - self.lower[(i, k)] * y[k];
                y[i] = v;
            }
        }
        for i in 0..n {
            y[i] /= self.pivots[i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let v = y[i] - self.lower[(k, i)] * y[k];
                y[i] = v;
            }
        }
        y
    }

    pub fn solve_matrix(&self, b: &Matrix<Complex64>) -> Matrix<Complex64> {
        let cols: Vec<Vec<Complex64>> = (0..b.cols()).map(|c| self.solve(&b.column(c))).collect();
        Matrix::from_fn(b.rows(), b.cols(), |r, c| cols[c][r])
    }
}
