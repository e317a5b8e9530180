//! Flat-vector representation of one feasibility program: a variable layout
//! mapping named matrix entries to indices, linear rows, and affine PSD
//! blocks. Everything is affine in the decision vector once (τ, λ) are fixed,
//! so any conic backend can consume it and any point can be re-checked here.

use super::{Margins, SynthesisError, SynthesisMode, SynthesisVariables};
use crate::matops::{self, Mat};
use std::collections::BTreeMap;

/// Index map for the decision vector. Matrix variables are stored row-major;
/// P (symmetric, 2n×2n) stores only its upper triangle. The optional families
/// are: Y (direct), K (direct with free injection), H (transformed).
#[derive(Debug, Clone)]
pub struct VarLayout {
    pub n: usize,
    pub m: usize,
    pub has_y: bool,
    pub has_k: bool,
    pub has_h: bool,
    j_off: usize,
    y_off: usize,
    k_off: usize,
    h_off: usize,
    w_off: usize,
    ups_lo_off: usize,
    ups_hi_off: usize,
    g_off: usize,
    p_off: usize,
    gamma_off: usize,
    total: usize,
}

impl VarLayout {
    pub fn direct(n: usize, m: usize, fix_k_zero: bool) -> Self {
        Self::build(n, m, true, !fix_k_zero, false)
    }

    pub fn transformed(n: usize, m: usize) -> Self {
        Self::build(n, m, false, false, true)
    }

    fn build(n: usize, m: usize, has_y: bool, has_k: bool, has_h: bool) -> Self {
        let nn = n * n;
        let nm = n * m;
        let mut off = 0;
        let mut take = |count: usize| {
            let o = off;
            off += count;
            o
        };
        let j_off = take(nn);
        let y_off = take(if has_y { nm } else { 0 });
        let k_off = take(if has_k { nm } else { 0 });
        let h_off = take(if has_h { nm } else { 0 });
        let w_off = take(nn);
        let ups_lo_off = take(nn);
        let ups_hi_off = take(nn);
        let g_off = take(nn);
        let two_n = 2 * n;
        let p_off = take(two_n * (two_n + 1) / 2);
        let gamma_off = take(1);
        VarLayout { n, m, has_y, has_k, has_h, j_off, y_off, k_off, h_off, w_off, ups_lo_off, ups_hi_off, g_off, p_off, gamma_off, total: off }
    }

    pub fn num_vars(&self) -> usize {
        self.total
    }

    pub fn j(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.n && c < self.n);
        self.j_off + r * self.n + c
    }

    pub fn y(&self, r: usize, c: usize) -> usize {
        debug_assert!(self.has_y && r < self.n && c < self.m);
        self.y_off + r * self.m + c
    }

    pub fn k(&self, r: usize, c: usize) -> usize {
        debug_assert!(self.has_k && r < self.n && c < self.m);
        self.k_off + r * self.m + c
    }

    pub fn h(&self, r: usize, c: usize) -> usize {
        debug_assert!(self.has_h && r < self.n && c < self.m);
        self.h_off + r * self.m + c
    }

    pub fn w(&self, r: usize, c: usize) -> usize {
        self.w_off + r * self.n + c
    }

    pub fn ups_lo(&self, r: usize, c: usize) -> usize {
        self.ups_lo_off + r * self.n + c
    }

    pub fn ups_hi(&self, r: usize, c: usize) -> usize {
        self.ups_hi_off + r * self.n + c
    }

    pub fn g(&self, r: usize, c: usize) -> usize {
        self.g_off + r * self.n + c
    }

    /// Index of P(r, c) in the packed upper triangle (order-insensitive).
    pub fn p(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        let dim = 2 * self.n;
        debug_assert!(c < dim);
        self.p_off + r * dim - (r * r - r) / 2 + (c - r)
    }

    pub fn gamma(&self) -> usize {
        self.gamma_off
    }

    fn mat_from(&self, x: &[f64], off: usize, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |r, c| x[off + r * cols + c])
    }

    /// Reads a solver point back into named matrices.
    pub fn extract(&self, x: &[f64]) -> SynthesisVariables {
        assert_eq!(x.len(), self.total, "point length does not match layout");
        let n = self.n;
        let m = self.m;
        let two_n = 2 * n;
        SynthesisVariables {
            j: self.mat_from(x, self.j_off, n, n),
            y: self.has_y.then(|| self.mat_from(x, self.y_off, n, m)),
            k: self.has_k.then(|| self.mat_from(x, self.k_off, n, m)),
            h: self.has_h.then(|| self.mat_from(x, self.h_off, n, m)),
            w: self.mat_from(x, self.w_off, n, n),
            ups_lo: self.mat_from(x, self.ups_lo_off, n, n),
            ups_hi: self.mat_from(x, self.ups_hi_off, n, n),
            coupling: self.mat_from(x, self.g_off, n, n),
            p: Mat::from_fn(two_n, two_n, |r, c| x[self.p(r, c)]),
            gamma: x[self.gamma_off],
        }
    }

    /// Inverse of `extract`: flattens named matrices into a decision vector,
    /// so externally supplied solutions can be checked against the program.
    pub fn pack(&self, v: &SynthesisVariables) -> Result<Vec<f64>, SynthesisError> {
        let n = self.n;
        let m = self.m;
        let two_n = 2 * n;
        let want = |mat: &Mat, rows: usize, cols: usize, name: &str| -> Result<(), SynthesisError> {
            if mat.rows() != rows || mat.cols() != cols {
                return Err(SynthesisError::Dimension(format!("{name} is {}x{}, expected {rows}x{cols}", mat.rows(), mat.cols())));
            }
            Ok(())
        };
        want(&v.j, n, n, "J")?;
        want(&v.w, n, n, "W")?;
        want(&v.ups_lo, n, n, "Ups_lo")?;
        want(&v.ups_hi, n, n, "Ups_hi")?;
        want(&v.coupling, n, n, "G")?;
        want(&v.p, two_n, two_n, "P")?;
        let mut x = vec![0.0; self.total];
        let mut put = |off: usize, mat: &Mat| {
            for r in 0..mat.rows() {
                for c in 0..mat.cols() {
                    x[off + r * mat.cols() + c] = mat[(r, c)];
                }
            }
        };
        put(self.j_off, &v.j);
        put(self.w_off, &v.w);
        put(self.ups_lo_off, &v.ups_lo);
        put(self.ups_hi_off, &v.ups_hi);
        put(self.g_off, &v.coupling);
        let mut field = |present: bool, got: &Option<Mat>, off: usize, name: &str| -> Result<(), SynthesisError> {
            match (present, got) {
                (true, Some(mat)) => {
                    if mat.rows() != n || mat.cols() != m {
                        return Err(SynthesisError::Dimension(format!("{name} is {}x{}, expected {n}x{m}", mat.rows(), mat.cols())));
                    }
                    for r in 0..n {
                        for c in 0..m {
                            x[off + r * m + c] = mat[(r, c)];
                        }
                    }
                    Ok(())
                }
                (false, None) => Ok(()),
                (true, None) => Err(SynthesisError::Dimension(format!("{name} missing from variables"))),
                (false, Some(_)) => Err(SynthesisError::Dimension(format!("{name} not part of this program"))),
            }
        };
        field(self.has_y, &v.y, self.y_off, "Y")?;
        field(self.has_k, &v.k, self.k_off, "K")?;
        field(self.has_h, &v.h, self.h_off, "H")?;
        for r in 0..two_n {
            for c in r..two_n {
                x[self.p(r, c)] = 0.5 * (v.p[(r, c)] + v.p[(c, r)]);
            }
        }
        x[self.gamma_off] = v.gamma;
        Ok(x)
    }
}

/// Sparse affine scalar c₀ + Σᵢ coeffᵢ·x[varᵢ]. Duplicate variable indices are
/// allowed and sum.
#[derive(Debug, Clone, Default)]
pub struct AffExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffExpr {
    pub fn push(&mut self, var: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((var, coeff));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> AffExpr {
        AffExpr { constant: self.constant * s, terms: self.terms.iter().map(|&(v, c)| (v, c * s)).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// Σ coeff·x ≤ rhs
    Le,
    /// Σ coeff·x = rhs
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinConstraint {
    pub label: &'static str,
    pub expr: AffExpr,
    pub rhs: f64,
    pub sense: Sense,
}

impl LinConstraint {
    /// Signed violation at a point: ≤ 0 means satisfied (equality rows report
    /// the absolute defect).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.expr.eval(x);
        match self.sense {
            Sense::Le => v - self.rhs,
            Sense::Eq => (v - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatSense {
    Psd,
    Nsd,
}

/// Symmetric matrix-valued affine map. Only upper-triangle entries (r ≤ c)
/// are stored; the full matrix is mirrored on evaluation.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub label: &'static str,
    pub dim: usize,
    pub sense: MatSense,
    entries: Vec<AffExpr>,
}

impl PsdBlock {
    pub fn new(label: &'static str, dim: usize, sense: MatSense) -> Self {
        PsdBlock { label, dim, sense, entries: vec![AffExpr::default(); dim * dim] }
    }

    pub fn entry_mut(&mut self, r: usize, c: usize) -> &mut AffExpr {
        assert!(r <= c && c < self.dim, "PSD blocks populate only the upper triangle");
        &mut self.entries[r * self.dim + c]
    }

    pub fn entry(&self, r: usize, c: usize) -> &AffExpr {
        assert!(r <= c && c < self.dim);
        &self.entries[r * self.dim + c]
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.dim, self.dim, |r, c| {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            self.entries[r * self.dim + c].eval(x)
        })
    }

    /// ≤ 0 means the cone membership holds at the point.
    pub fn violation(&self, x: &[f64]) -> Result<f64, SynthesisError> {
        let m = self.eval(x);
        Ok(match self.sense {
            MatSense::Psd => -matops::min_eig_sym(&m)?,
            MatSense::Nsd => matops::max_eig_sym(&m)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityProgram {
    pub mode: SynthesisMode,
    pub tau: f64,
    pub lambda: f64,
    pub margins: Margins,
    pub layout: VarLayout,
    pub lin: Vec<LinConstraint>,
    pub psd: Vec<PsdBlock>,
    /// Linear objective Σ coeff·x to minimize; empty means pure feasibility.
    pub objective: Vec<(usize, f64)>,
}

impl FeasibilityProgram {
    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    /// Worst violation per constraint label (clamped at 0 from below for
    /// inequality/cone rows, so "satisfied with slack" reads as 0).
    pub fn residuals(&self, x: &[f64]) -> Result<BTreeMap<String, f64>, SynthesisError> {
        let mut worst: BTreeMap<String, f64> = BTreeMap::new();
        let mut note = |label: &str, v: f64| {
            let e = worst.entry(label.to_string()).or_insert(0.0);
            *e = e.max(v);
        };
        for c in &self.lin {
            note(c.label, c.violation(x).max(0.0));
        }
        for b in &self.psd {
            note(b.label, b.violation(x)?.max(0.0));
        }
        Ok(worst)
    }

    pub fn max_residual(&self, x: &[f64]) -> Result<f64, SynthesisError> {
        Ok(self.residuals(x)?.values().copied().fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_cover_every_variable_once() {
        let l = VarLayout::direct(2, 1, false);
        // J(4) + Y(2) + K(2) + W(4) + Ups_lo(4) + Ups_hi(4) + G(4) + P(10) + gamma
        assert_eq!(l.num_vars(), 35);
        let mut seen = vec![false; l.num_vars()];
        let mut mark = |i: usize| {
            assert!(!seen[i], "index {i} assigned twice");
            seen[i] = true;
        };
        for r in 0..2 {
            for c in 0..2 {
                mark(l.j(r, c));
                mark(l.w(r, c));
                mark(l.ups_lo(r, c));
                mark(l.ups_hi(r, c));
                mark(l.g(r, c));
            }
            mark(l.y(r, 0));
            mark(l.k(r, 0));
        }
        for r in 0..4 {
            for c in r..4 {
                mark(l.p(r, c));
            }
        }
        mark(l.gamma());
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn layout_without_optional_families_shrinks() {
        assert_eq!(VarLayout::direct(2, 1, true).num_vars(), 33);
        assert_eq!(VarLayout::transformed(2, 1).num_vars(), 33);
    }

    #[test]
    fn p_index_is_symmetric() {
        let l = VarLayout::transformed(3, 1);
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(l.p(r, c), l.p(c, r));
            }
        }
    }

    #[test]
    fn pack_extract_round_trip() {
        let l = VarLayout::direct(2, 1, false);
        let x: Vec<f64> = (0..l.num_vars()).map(|i| i as f64 * 0.5 - 3.0).collect();
        let vars = l.extract(&x);
        let back = l.pack(&vars).unwrap();
        assert_eq!(x, back);
    }

    #[test]
    fn pack_rejects_foreign_families() {
        let l = VarLayout::transformed(2, 1);
        let x = vec![0.0; l.num_vars()];
        let mut vars = l.extract(&x);
        vars.y = Some(Mat::zeros(2, 1));
        assert!(matches!(l.pack(&vars), Err(SynthesisError::Dimension(_))));
    }

    #[test]
    fn psd_block_eval_mirrors_upper_triangle() {
        let mut b = PsdBlock::new("t", 2, MatSense::Psd);
        b.entry_mut(0, 0).constant = 1.0;
        b.entry_mut(0, 1).push(0, 2.0);
        b.entry_mut(1, 1).constant = 4.0;
        let m = b.eval(&[1.5]);
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 0)], 3.0);
        // min eig of [[1,3],[3,4]] is negative, so the PSD requirement is violated.
        assert!(b.violation(&[1.5]).unwrap() > 0.0);
        assert!(b.violation(&[0.0]).unwrap() <= 0.0);
    }

    #[test]
    fn residuals_report_worst_per_label() {
        let layout = VarLayout::transformed(1, 1);
        let mut e1 = AffExpr::default();
        e1.push(0, 1.0);
        let mut e2 = AffExpr::default();
        e2.push(0, 2.0);
        let prog = FeasibilityProgram {
            mode: SynthesisMode::Transformed,
            tau: 1.0,
            lambda: 0.5,
            margins: Margins::default(),
            layout,
            lin: vec![
                LinConstraint { label: "same", expr: e1, rhs: 0.0, sense: Sense::Le },
                LinConstraint { label: "same", expr: e2, rhs: 0.0, sense: Sense::Le },
            ],
            psd: vec![],
            objective: vec![],
        };
        let x = vec![3.0; prog.num_vars()];
        assert_eq!(prog.residuals(&x).unwrap()["same"], 6.0);
    }
}
