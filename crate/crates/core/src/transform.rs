//! Coordinate transformations z = Sx for observer synthesis: a structural
//! diagnostic for when the untransformed design is impossible, construction
//! of S from the eigenstructure of A − ΛC, and validation of the spectral
//! assumptions any supplied (Λ, S) pair must satisfy.

use crate::matops::{self, Mat, MatError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the diagonal membership ℵ_ii ∈ (−1, 1) and Schur checks.
pub const ASSUMPTION3_TOL: f64 = 1e-9;

/// Maximum admitted condition number for a user-supplied S.
pub const MAX_S_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("S is singular or too ill-conditioned (condition number {0:.3e})")]
    SingularS(f64),
    #[error("complex eigenvalues: supply S")]
    ComplexEigenvalues,
    #[error("repeated eigenvalues: supply S")]
    RepeatedEigenvalues,
    #[error("spectral assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("pole placement needs a single-output observable pair: {0}")]
    PolePlacement(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// A validated transformation: U = S⁻¹ and ℵ = S(A−ΛC)U is Schur with
/// every diagonal entry strictly inside (−1, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformPair {
    pub lambda: Mat,
    pub s: Mat,
    pub u: Mat,
    pub aleph: Mat,
}

impl TransformPair {
    /// Validates a user-supplied (Λ, S) against the plant pair (A, C).
    pub fn from_parts(a: &Mat, c: &Mat, lambda: Mat, s: Mat) -> Result<Self, TransformError> {
        let report = check_assumption3(a, c, &lambda, &s)?;
        if !report.holds {
            return Err(TransformError::AssumptionViolated(report.describe()));
        }
        Ok(TransformPair { lambda, s: s.clone(), u: report.u, aleph: report.aleph })
    }
}

/// One state index whose error-dynamics diagonal entry is structurally fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagonalObstruction {
    /// 0-based state index.
    pub index: usize,
    /// The value (A−LC)_ii takes for every L.
    pub fixed_value: f64,
}

impl std::fmt::Display for DiagonalObstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x{}: (A-LC) diagonal fixed at {}", self.index + 1, self.fixed_value)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectDiagnosis {
    pub flags: Vec<DiagonalObstruction>,
}

impl DirectDiagnosis {
    /// True when the untransformed synthesis is provably infeasible.
    pub fn is_blocked(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Structural necessity test for the untransformed observer. If column i of C
/// is zero then (A−LC)_ii = A_ii for every L; a fixed value outside (−1, 1)
/// rules out any Schur-and-nonnegative coupled error matrix. Sound but not
/// complete: no flags proves nothing about feasibility.
pub fn diagnose_direct(a: &Mat, c: &Mat) -> Result<DirectDiagnosis, TransformError> {
    if !a.is_square() || c.cols() != a.rows() {
        return Err(TransformError::Dimension(format!(
            "A is {}x{}, C is {}x{}",
            a.rows(),
            a.cols(),
            c.rows(),
            c.cols()
        )));
    }
    let mut flags = Vec::new();
    for i in 0..a.rows() {
        let column_zero = (0..c.rows()).all(|q| c[(q, i)] == 0.0);
        if column_zero && a[(i, i)].abs() >= 1.0 {
            flags.push(DiagonalObstruction { index: i, fixed_value: a[(i, i)] });
        }
    }
    Ok(DirectDiagnosis { flags })
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumption3Report {
    pub holds: bool,
    pub schur_ok: bool,
    pub diag_ok: bool,
    pub spectral_radius: f64,
    pub diag: Vec<f64>,
    pub aleph: Mat,
    #[serde(skip)]
    pub u: Mat,
}

impl Assumption3Report {
    pub fn describe(&self) -> String {
        format!(
            "spectral radius {:.6} ({}), diagonal {:?} ({})",
            self.spectral_radius,
            if self.schur_ok { "Schur" } else { "not Schur" },
            self.diag,
            if self.diag_ok { "inside (-1,1)" } else { "outside (-1,1)" }
        )
    }
}

/// Recomputes ℵ = S(A−ΛC)U and checks it is Schur with diagonal inside (−1, 1).
pub fn check_assumption3(a: &Mat, c: &Mat, lambda: &Mat, s: &Mat) -> Result<Assumption3Report, TransformError> {
    let n = a.rows();
    if !a.is_square() || c.cols() != n || lambda.rows() != n || lambda.cols() != c.rows() || s.rows() != n || !s.is_square() {
        return Err(TransformError::Dimension("check_assumption3 shapes".into()));
    }
    let cond = s.condition_number()?;
    if !cond.is_finite() || cond > MAX_S_CONDITION {
        return Err(TransformError::SingularS(cond));
    }
    let u = s.inverse().map_err(|_| TransformError::SingularS(f64::INFINITY))?;
    if (&(s * &u) - &Mat::identity(n)).max_abs() > 1e-10 {
        return Err(TransformError::SingularS(cond));
    }
    let m = &(a - &(lambda * c));
    let aleph = &(s * m) * &u;
    let rho = matops::spectral_radius(&aleph)?;
    let schur_ok = rho < 1.0 - ASSUMPTION3_TOL;
    let diag: Vec<f64> = (0..n).map(|i| aleph[(i, i)]).collect();
    let diag_ok = diag.iter().all(|&d| d.abs() < 1.0 - ASSUMPTION3_TOL);
    Ok(Assumption3Report { holds: schur_ok && diag_ok, schur_ok, diag_ok, spectral_radius: rho, diag, aleph, u })
}

/// Builds S from the eigenstructure of A − ΛC. Requires real, distinct
/// eigenvalues; they are sorted ascending and each eigenvector is normalized
/// to unit length with its largest-magnitude entry positive, so the result is
/// deterministic. U holds the eigenvectors as columns and S = U⁻¹, making ℵ
/// diagonal. Errors rather than returning a pair violating the assumptions.
pub fn build_transform(a: &Mat, c: &Mat, lambda: &Mat) -> Result<TransformPair, TransformError> {
    let n = a.rows();
    if !a.is_square() || c.cols() != n || lambda.rows() != n || lambda.cols() != c.rows() {
        return Err(TransformError::Dimension("build_transform shapes".into()));
    }
    let m = &(a - &(lambda * c));
    let eigs = matops::eigenvalues(m)?;
    let scale = m.max_abs().max(1.0);
    if eigs.iter().any(|(_, im)| im.abs() > 1e-9 * scale) {
        return Err(TransformError::ComplexEigenvalues);
    }
    let mut vals: Vec<f64> = eigs.iter().map(|(re, _)| *re).collect();
    vals.sort_by(f64::total_cmp);
    if vals.windows(2).any(|w| (w[1] - w[0]).abs() <= 1e-9 * scale) {
        return Err(TransformError::RepeatedEigenvalues);
    }

    let mut u = Mat::zeros(n, n);
    for (k, &val) in vals.iter().enumerate() {
        let v = null_vector(&(m - &Mat::identity(n).scale(val)))?;
        for i in 0..n {
            u[(i, k)] = v[i];
        }
    }
    let s = u.inverse().map_err(|_| TransformError::SingularS(f64::INFINITY))?;
    let report = check_assumption3(a, c, lambda, &s)?;
    if !report.holds {
        return Err(TransformError::AssumptionViolated(report.describe()));
    }
    Ok(TransformPair { lambda: lambda.clone(), s, u, aleph: report.aleph })
}

/// Unit-norm null vector of a (numerically) rank-deficient matrix, sign-fixed
/// so the largest-magnitude entry is positive.
fn null_vector(m: &Mat) -> Result<Vec<f64>, TransformError> {
    let n = m.rows();
    let na = nalgebra::DMatrix::from_row_slice(n, n, m.data());
    let svd = nalgebra::SVD::try_new(na, false, true, 1e-14, 100_000).ok_or(MatError::EigenFailure)?;
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut min_idx = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[min_idx] {
            min_idx = i;
        }
    }
    let mut v: Vec<f64> = (0..n).map(|j| v_t[(min_idx, j)]).collect();
    let norm = matops::vec_norm2(&v);
    if norm == 0.0 {
        return Err(TransformError::AssumptionViolated("degenerate eigenvector".into()));
    }
    let mut max_idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[max_idx].abs() {
            max_idx = i;
        }
    }
    let sign = if v[max_idx] < 0.0 { -1.0 } else { 1.0 };
    for x in &mut v {
        *x *= sign / norm;
    }
    Ok(v)
}

/// Naive observer pole placement (Ackermann on the observability matrix) for
/// single-output pairs with user-chosen real poles.
pub fn pole_place(a: &Mat, c: &Mat, poles: &[f64]) -> Result<Mat, TransformError> {
    let n = a.rows();
    if c.rows() != 1 {
        return Err(TransformError::PolePlacement(format!("m = {} outputs", c.rows())));
    }
    if !a.is_square() || c.cols() != n || poles.len() != n {
        return Err(TransformError::Dimension("pole_place shapes".into()));
    }
    // Observability matrix [C; CA; …; CA^{n−1}].
    let mut obs = Mat::zeros(n, n);
    let mut row = c.clone();
    for i in 0..n {
        for j in 0..n {
            obs[(i, j)] = row[(0, j)];
        }
        row = &row * a;
    }
    let obs_inv = obs.inverse().map_err(|_| TransformError::PolePlacement("pair is unobservable".into()))?;
    // q(A) = Π (A − p_i·I).
    let mut q = Mat::identity(n);
    for &p in poles {
        q = &q * &(a - &Mat::identity(n).scale(p));
    }
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let l = q.mat_vec(&obs_inv.mat_vec(&e_n));
    Ok(Mat::col_vec(&l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pendulum_ac() -> (Mat, Mat) {
        (Mat::new(2, 2, vec![1.0, 0.065, 0.0, 1.0]), Mat::new(1, 2, vec![1.0, 0.0]))
    }

    fn paper_lambda() -> Mat {
        Mat::new(2, 1, vec![0.9, 0.5])
    }

    fn paper_s() -> Mat {
        Mat::new(2, 2, vec![0.6063, -0.0457, -0.6063, 1.0457])
    }

    #[test]
    fn diagnose_flags_fixed_unit_diagonal() {
        let (a, c) = pendulum_ac();
        let report = diagnose_direct(&a, &c).unwrap();
        assert!(report.is_blocked());
        assert_eq!(report.flags.len(), 1);
        assert_eq!(report.flags[0].index, 1);
        assert_eq!(report.flags[0].fixed_value, 1.0);
    }

    #[test]
    fn diagnose_clean_when_all_diagonals_adjustable() {
        let report = diagnose_direct(&Mat::identity(2).scale(0.5), &Mat::identity(2)).unwrap();
        assert!(!report.is_blocked());
    }

    #[test]
    fn diagnose_flags_large_negative_entry() {
        let a = Mat::new(2, 2, vec![-1.5, 0.0, 0.0, 0.0]);
        let c = Mat::new(1, 2, vec![0.0, 1.0]);
        let report = diagnose_direct(&a, &c).unwrap();
        assert_eq!(report.flags.len(), 1);
        assert_eq!(report.flags[0].index, 0);
        assert_eq!(report.flags[0].fixed_value, -1.5);
    }

    #[test]
    fn paper_transform_satisfies_assumptions() {
        let (a, c) = pendulum_ac();
        let report = check_assumption3(&a, &c, &paper_lambda(), &paper_s()).unwrap();
        assert!(report.holds, "{}", report.describe());
        assert_abs_diff_eq!(report.spectral_radius, 0.9623105625617661, epsilon = 1e-6);
    }

    #[test]
    fn identity_transform_with_unit_diagonal_fails() {
        let (a, c) = pendulum_ac();
        // S = I leaves (A−ΛC)₂₂ = 1 on the diagonal.
        let report = check_assumption3(&a, &c, &paper_lambda(), &Mat::identity(2)).unwrap();
        assert!(!report.holds);
        assert!(!report.diag_ok);
    }

    #[test]
    fn non_schur_pair_fails() {
        let a = Mat::identity(2).scale(1.5);
        let c = Mat::new(1, 2, vec![1.0, 0.0]);
        let lambda = Mat::new(2, 1, vec![0.0, 0.0]);
        let report = check_assumption3(&a, &c, &lambda, &Mat::identity(2)).unwrap();
        assert!(!report.holds);
        assert!(!report.schur_ok);
    }

    #[test]
    fn singular_s_rejected() {
        let (a, c) = pendulum_ac();
        let s = Mat::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            check_assumption3(&a, &c, &paper_lambda(), &s),
            Err(TransformError::SingularS(_))
        ));
    }

    #[test]
    fn build_transform_diagonalizes_pendulum() {
        let (a, c) = pendulum_ac();
        let pair = build_transform(&a, &c, &paper_lambda()).unwrap();
        // Eigenvalues ascending on the diagonal of ℵ.
        assert_abs_diff_eq!(pair.aleph[(0, 0)], 0.13768943743823395, epsilon = 1e-9);
        assert_abs_diff_eq!(pair.aleph[(1, 1)], 0.9623105625617661, epsilon = 1e-9);
        assert!(pair.aleph[(0, 1)].abs() < 1e-9 && pair.aleph[(1, 0)].abs() < 1e-9);
        assert!((&(&pair.s * &pair.u) - &Mat::identity(2)).max_abs() < 1e-10);
        // Output always satisfies the spectral assumption.
        let report = check_assumption3(&a, &c, &pair.lambda, &pair.s).unwrap();
        assert!(report.holds);
    }

    #[test]
    fn build_transform_keeps_spectrum() {
        let (a, c) = pendulum_ac();
        let pair = build_transform(&a, &c, &paper_lambda()).unwrap();
        let m = &a - &(&pair.lambda * &c);
        let mut orig: Vec<f64> = matops::eigenvalues(&m).unwrap().iter().map(|(re, _)| *re).collect();
        let mut new: Vec<f64> = matops::eigenvalues(&pair.aleph).unwrap().iter().map(|(re, _)| *re).collect();
        orig.sort_by(f64::total_cmp);
        new.sort_by(f64::total_cmp);
        for (o, n) in orig.iter().zip(&new) {
            assert_abs_diff_eq!(o, n, epsilon = 1e-8);
        }
    }

    #[test]
    fn already_diagonal_gives_identity_transform() {
        let a = Mat::new(2, 2, vec![0.3, 0.0, 0.0, 0.7]);
        let c = Mat::new(1, 2, vec![1.0, 0.0]);
        let lambda = Mat::new(2, 1, vec![0.0, 0.0]);
        let pair = build_transform(&a, &c, &lambda).unwrap();
        assert!((&pair.s - &Mat::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn rotation_reports_complex_eigenvalues() {
        let th = 0.7f64;
        let a = Mat::new(2, 2, vec![th.cos(), -th.sin(), th.sin(), th.cos()]).scale(0.9);
        let c = Mat::new(1, 2, vec![1.0, 0.0]);
        let lambda = Mat::new(2, 1, vec![0.0, 0.0]);
        assert!(matches!(build_transform(&a, &c, &lambda), Err(TransformError::ComplexEigenvalues)));
    }

    #[test]
    fn repeated_eigenvalues_rejected() {
        let a = Mat::new(2, 2, vec![0.5, 1.0, 0.0, 0.5]);
        let c = Mat::new(1, 2, vec![0.0, 0.0]);
        let lambda = Mat::new(2, 1, vec![0.0, 0.0]);
        assert!(matches!(build_transform(&a, &c, &lambda), Err(TransformError::RepeatedEigenvalues)));
    }

    #[test]
    fn pole_place_recovers_paper_gain() {
        let (a, c) = pendulum_ac();
        let l = pole_place(&a, &c, &[0.13768943743823395, 0.9623105625617661]).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 0.9, epsilon = 1e-9);
        assert_abs_diff_eq!(l[(1, 0)], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn pole_place_rejects_unobservable() {
        let a = Mat::identity(2);
        let c = Mat::new(1, 2, vec![0.0, 0.0]);
        assert!(matches!(pole_place(&a, &c, &[0.1, 0.2]), Err(TransformError::PolePlacement(_))));
    }
}
