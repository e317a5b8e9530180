//! Dense row-major matrices plus the interval-analysis primitives the
//! observer math is built on: ⊕/⊖ splitting, interval matrix products,
//! bilinear range bounds, spectral predicates, and M-matrix structure tests.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default absolute tolerance for entrywise comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative entry {value} at ({row},{col}) in a bound matrix")]
    NegativeBound { row: usize, col: usize, value: f64 },
    #[error("interval bounds inverted at ({row},{col}): lo {lo} > hi {hi}")]
    IntervalInverted { row: usize, col: usize, lo: f64, hi: f64 },
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    #[error("matrix is singular")]
    Singular,
}

/// Dense matrix, row-major storage. All entries are expected to stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Panics if `data.len() != rows * cols`. Use [`Mat::checked`] for fallible input.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::new: {rows}x{cols} needs {} entries", rows * cols);
        Mat { rows, cols, data }
    }

    /// Validating constructor: length and finiteness.
    pub fn checked(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::ShapeMismatch(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatError::NonFinite { row: idx / cols.max(1), col: idx % cols.max(1) });
            }
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from nested rows; rows must be rectangular.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(MatError::ShapeMismatch("ragged rows".into()));
        }
        Mat::checked(r, c, rows.concat())
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[f64]) -> Self {
        Mat::new(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|v| v * s)
    }

    /// Entrywise positive part A⊕ = max(A, 0).
    pub fn pos_part(&self) -> Mat {
        self.map(|v| v.max(0.0))
    }

    /// Entrywise negative part A⊖ = max(−A, 0), so A = A⊕ − A⊖.
    pub fn neg_part(&self) -> Mat {
        self.map(|v| (-v).max(0.0))
    }

    /// Entrywise absolute value, |A| = A⊕ + A⊖.
    pub fn abs(&self) -> Mat {
        self.map(f64::abs)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_nonneg(&self, tol: f64) -> bool {
        self.data.iter().all(|&v| v >= -tol)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix-vector product.
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mat_vec: {}x{} times len-{}", self.rows, self.cols, v.len());
        (0..self.rows).map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum()).collect()
    }

    fn to_na(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_na(m: &nalgebra::DMatrix<f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Inverse via LU; errors on singularity.
    pub fn inverse(&self) -> Result<Mat, MatError> {
        if !self.is_square() {
            return Err(MatError::NotSquare { rows: self.rows, cols: self.cols });
        }
        self.to_na().try_inverse().map(|m| Mat::from_na(&m)).ok_or(MatError::Singular)
    }

    /// 2-norm condition number σ_max/σ_min (∞ if rank-deficient).
    pub fn condition_number(&self) -> Result<f64, MatError> {
        let svd = nalgebra::SVD::try_new(self.to_na(), false, false, 1e-14, 10_000)
            .ok_or(MatError::EigenFailure)?;
        let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
        let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(if smin <= 0.0 { f64::INFINITY } else { smax / smin })
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl std::ops::Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl std::ops::Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl std::ops::Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "mul: {}x{} times {}x{}", self.rows, self.cols, rhs.rows, rhs.cols);
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl std::ops::Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

// Matrices serialize as row-major nested arrays.
impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_nested().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Mat::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Entrywise matrix interval [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatInterval {
    pub lo: Mat,
    pub hi: Mat,
}

impl MatInterval {
    /// Validates equal shapes and lo ≤ hi (up to 1e−12 slack for solver residue).
    pub fn new(lo: Mat, hi: Mat) -> Result<Self, MatError> {
        if (lo.rows(), lo.cols()) != (hi.rows(), hi.cols()) {
            return Err(MatError::ShapeMismatch(format!(
                "interval lo {}x{} vs hi {}x{}",
                lo.rows(),
                lo.cols(),
                hi.rows(),
                hi.cols()
            )));
        }
        for i in 0..lo.rows() {
            for j in 0..lo.cols() {
                if lo[(i, j)] > hi[(i, j)] + 1e-12 {
                    return Err(MatError::IntervalInverted { row: i, col: j, lo: lo[(i, j)], hi: hi[(i, j)] });
                }
            }
        }
        Ok(MatInterval { lo, hi })
    }

    pub fn degenerate(m: Mat) -> Self {
        MatInterval { lo: m.clone(), hi: m }
    }

    pub fn contains(&self, m: &Mat, tol: f64) -> bool {
        if (m.rows(), m.cols()) != (self.lo.rows(), self.lo.cols()) {
            return false;
        }
        (0..m.rows()).all(|i| {
            (0..m.cols()).all(|j| self.lo[(i, j)] - tol <= m[(i, j)] && m[(i, j)] <= self.hi[(i, j)] + tol)
        })
    }

    /// Uniform sample from the interval, one draw per entry.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Mat {
        Mat::from_fn(self.lo.rows(), self.lo.cols(), |i, j| {
            let (lo, hi) = (self.lo[(i, j)], self.hi[(i, j)]);
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        })
    }
}

pub fn pos_part(a: &Mat) -> Mat {
    a.pos_part()
}

pub fn neg_part(a: &Mat) -> Mat {
    a.neg_part()
}

pub fn is_nonneg(a: &Mat, tol: f64) -> bool {
    a.is_nonneg(tol)
}

/// Range of A·B over B̲ ≤ B ≤ B̄: [A⊕B̲ − A⊖B̄, A⊕B̄ − A⊖B̲].
pub fn interval_product(a: &Mat, b: &MatInterval) -> Result<MatInterval, MatError> {
    if a.cols() != b.lo.rows() {
        return Err(MatError::ShapeMismatch(format!(
            "interval_product: {}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.lo.rows(),
            b.lo.cols()
        )));
    }
    let (ap, an) = (a.pos_part(), a.neg_part());
    let lo = &(&ap * &b.lo) - &(&an * &b.hi);
    let hi = &(&ap * &b.hi) - &(&an * &b.lo);
    Ok(MatInterval { lo, hi })
}

/// Range of A·B over −A̲ ≤ A ≤ Ā, −B̲ ≤ B ≤ B̄ with all four bound
/// matrices nonnegative: [−A̲B̄ − ĀB̲, ĀB̄ + A̲B̲].
pub fn bilinear_bounds(a_hi: &Mat, a_lo: &Mat, b_hi: &Mat, b_lo: &Mat) -> Result<MatInterval, MatError> {
    for m in [a_hi, a_lo, b_hi, b_lo] {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] < 0.0 {
                    return Err(MatError::NegativeBound { row: i, col: j, value: m[(i, j)] });
                }
            }
        }
    }
    if (a_hi.rows(), a_hi.cols()) != (a_lo.rows(), a_lo.cols())
        || (b_hi.rows(), b_hi.cols()) != (b_lo.rows(), b_lo.cols())
        || a_hi.cols() != b_hi.rows()
    {
        return Err(MatError::ShapeMismatch("bilinear_bounds shapes".into()));
    }
    let hi = &(a_hi * b_hi) + &(a_lo * b_lo);
    let lo = -&(&(a_lo * b_hi) + &(a_hi * b_lo));
    Ok(MatInterval { lo, hi })
}

/// Complex eigenvalues as (re, im) pairs, via real Schur decomposition.
pub fn eigenvalues(a: &Mat) -> Result<Vec<(f64, f64)>, MatError> {
    if !a.is_square() {
        return Err(MatError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if a.rows() == 0 {
        return Ok(vec![]);
    }
    let schur = nalgebra::Schur::try_new(a.to_na(), 1e-14, 100_000).ok_or(MatError::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect())
}

pub fn spectral_radius(a: &Mat) -> Result<f64, MatError> {
    Ok(eigenvalues(a)?.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max))
}

/// Schur means every eigenvalue has modulus < 1 − tol.
pub fn is_schur(a: &Mat, tol: f64) -> Result<bool, MatError> {
    Ok(spectral_radius(a)? < 1.0 - tol)
}

/// Sign-pattern M-matrix test: diagonal > tol, off-diagonal ≤ tol.
pub fn is_mmatrix_structure(a: &Mat, tol: f64) -> Result<bool, MatError> {
    if !a.is_square() {
        return Err(MatError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let v = a[(i, j)];
            if i == j && v <= tol {
                return Ok(false);
            }
            if i != j && v > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// [[a, b], [c, d]] with conformal blocks.
pub fn block2x2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<Mat, MatError> {
    if a.rows() != b.rows() || c.rows() != d.rows() || a.cols() != c.cols() || b.cols() != d.cols() {
        return Err(MatError::ShapeMismatch("block2x2: non-conformal blocks".into()));
    }
    let (r0, c0) = (a.rows(), a.cols());
    let mut out = Mat::zeros(r0 + c.rows(), c0 + b.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out[(i, j)] = a[(i, j)];
        }
    }
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            out[(i, c0 + j)] = b[(i, j)];
        }
    }
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            out[(r0 + i, j)] = c[(i, j)];
        }
    }
    for i in 0..d.rows() {
        for j in 0..d.cols() {
            out[(r0 + i, c0 + j)] = d[(i, j)];
        }
    }
    Ok(out)
}

/// Eigenvalues of a symmetric matrix, ascending. Input is symmetrized first.
pub fn symmetric_eigenvalues(a: &Mat) -> Result<Vec<f64>, MatError> {
    if !a.is_square() {
        return Err(MatError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if a.rows() == 0 {
        return Ok(vec![]);
    }
    let sym = (a + &a.transpose()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::try_new(sym.to_na(), 1e-14, 100_000)
        .ok_or(MatError::EigenFailure)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn min_eig_sym(a: &Mat) -> Result<f64, MatError> {
    Ok(*symmetric_eigenvalues(a)?.first().ok_or(MatError::EigenFailure)?)
}

pub fn max_eig_sym(a: &Mat) -> Result<f64, MatError> {
    Ok(*symmetric_eigenvalues(a)?.last().ok_or(MatError::EigenFailure)?)
}

// Small vector helpers used by the observer recursions.

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn vec_norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn vec_min(a: &[f64]) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}
