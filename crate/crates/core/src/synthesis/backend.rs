//! Conic backend interface plus the bundled Clarabel implementation. The
//! solver is treated strictly as an oracle: whatever point it returns is
//! re-verified elsewhere from raw matrices before anything is accepted.

use super::program::{FeasibilityProgram, MatSense, Sense};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    /// The backend claims this point satisfies all constraints.
    Feasible(Vec<f64>),
    /// The backend produced an infeasibility certificate.
    Infeasible,
    /// Neither: iteration limits, bad conditioning, unsupported status.
    NumericalFailure(String),
}

pub trait FeasibilityBackend: Sync {
    fn solve(&self, program: &FeasibilityProgram) -> SolveOutcome;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl FeasibilityBackend for ClarabelBackend {
    fn solve(&self, program: &FeasibilityProgram) -> SolveOutcome {
        let nvars = program.num_vars();
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        // Constraints enter as b − A·x ∈ K, cones in row order.
        let lin_pass = |sense: Sense, trips: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>, row: &mut usize| -> usize {
            let mut count = 0;
            for c in program.lin.iter().filter(|c| c.sense == sense) {
                for &(var, coeff) in &c.expr.terms {
                    trips.push((*row, var, coeff));
                }
                b.push(c.rhs - c.expr.constant);
                *row += 1;
                count += 1;
            }
            count
        };
        let n_eq = lin_pass(Sense::Eq, &mut trips, &mut b, &mut row);
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        let n_le = lin_pass(Sense::Le, &mut trips, &mut b, &mut row);
        if n_le > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_le));
        }

        // PSD blocks in scaled-triangle form: columnwise upper triangle with
        // off-diagonal entries multiplied by √2. A ⪯ 0 block is negated into
        // the ⪰ 0 cone.
        for blk in &program.psd {
            let sgn = match blk.sense {
                MatSense::Psd => 1.0,
                MatSense::Nsd => -1.0,
            };
            for c in 0..blk.dim {
                for r in 0..=c {
                    let scale = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
                    let e = blk.entry(r, c);
                    b.push(sgn * scale * e.constant);
                    for &(var, coeff) in &e.terms {
                        trips.push((row, var, -sgn * scale * coeff));
                    }
                    row += 1;
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
        }

        let a = csc_from_triplets(row, nvars, trips);
        let p = csc_from_triplets(nvars, nvars, Vec::new());
        let mut q = vec![0.0; nvars];
        for &(var, coeff) in &program.objective {
            q[var] += coeff;
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .build()
            .expect("static solver settings");
        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return SolveOutcome::NumericalFailure(format!("solver setup: {e:?}")),
        };
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveOutcome::Feasible(solver.solution.x.clone()),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveOutcome::Infeasible,
            other => SolveOutcome::NumericalFailure(format!("{other:?}")),
        }
    }
}

/// Column-compressed matrix from (row, col, value) triplets; duplicates sum.
fn csc_from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    trips.retain(|&(_, _, v)| v != 0.0);
    trips.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; ncols + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(trips.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(trips.len());
    for &(r, c, v) in &trips {
        debug_assert!(r < nrows && c < ncols);
        rowval.push(r);
        nzval.push(v);
        colptr[c + 1] += 1;
    }
    // Merge duplicates within each column (sorted, so duplicates are adjacent).
    let mut m_rowval: Vec<usize> = Vec::with_capacity(rowval.len());
    let mut m_nzval: Vec<f64> = Vec::with_capacity(nzval.len());
    let mut m_counts = vec![0usize; ncols];
    let mut idx = 0;
    for c in 0..ncols {
        let count = colptr[c + 1];
        let mut within = 0;
        while within < count {
            let r = rowval[idx];
            let mut v = nzval[idx];
            idx += 1;
            within += 1;
            while within < count && rowval[idx] == r {
                v += nzval[idx];
                idx += 1;
                within += 1;
            }
            m_rowval.push(r);
            m_nzval.push(v);
            m_counts[c] += 1;
        }
    }
    let mut m_colptr = vec![0usize; ncols + 1];
    for c in 0..ncols {
        m_colptr[c + 1] = m_colptr[c] + m_counts[c];
    }
    CscMatrix::new(nrows, ncols, m_colptr, m_rowval, m_nzval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::Mat;
    use crate::synthesis::program::{AffExpr, LinConstraint, PsdBlock, VarLayout};
    use crate::synthesis::{Margins, SynthesisMode};

    fn empty_program(layout: VarLayout) -> FeasibilityProgram {
        FeasibilityProgram {
            mode: SynthesisMode::Direct,
            tau: 1.0,
            lambda: 0.5,
            margins: Margins::default(),
            layout,
            lin: vec![],
            psd: vec![],
            objective: vec![],
        }
    }

    #[test]
    fn csc_sums_duplicate_triplets() {
        let m = csc_from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0), (0, 1, -1.0)]);
        assert_eq!(m.colptr, vec![0, 1, 3]);
        assert_eq!(m.rowval, vec![0, 0, 1]);
        assert_eq!(m.nzval, vec![3.0, -1.0, 5.0]);
    }

    #[test]
    fn minimal_psd_program_solves() {
        // One var (index 0 of a throwaway layout), minimize x subject to
        // [[x, 1],[1, x]] ⪰ 0 → x* = 1.
        let layout = VarLayout::transformed(1, 1);
        let mut blk = PsdBlock::new("test", 2, crate::synthesis::program::MatSense::Psd);
        blk.entry_mut(0, 0).push(0, 1.0);
        blk.entry_mut(0, 1).constant = 1.0;
        blk.entry_mut(1, 1).push(0, 1.0);
        let mut prog = empty_program(layout);
        prog.psd.push(blk);
        prog.objective = vec![(0, 1.0)];
        match ClarabelBackend.solve(&prog) {
            SolveOutcome::Feasible(x) => assert!((x[0] - 1.0).abs() < 1e-6, "x = {}", x[0]),
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let layout = VarLayout::transformed(1, 1);
        let mut e1 = AffExpr::default();
        e1.push(0, 1.0);
        let mut e2 = AffExpr::default();
        e2.push(0, -1.0);
        let mut prog = empty_program(layout);
        prog.lin = vec![
            LinConstraint { label: "x_le", expr: e1, rhs: -1.0, sense: Sense::Le },
            LinConstraint { label: "x_ge", expr: e2, rhs: -1.0, sense: Sense::Le },
        ];
        match ClarabelBackend.solve(&prog) {
            SolveOutcome::Infeasible => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn equality_rows_bind() {
        // x = 3 exactly, minimize x.
        let layout = VarLayout::transformed(1, 1);
        let mut e = AffExpr::default();
        e.push(0, 2.0);
        let mut prog = empty_program(layout);
        prog.lin = vec![LinConstraint { label: "eq", expr: e, rhs: 6.0, sense: Sense::Eq }];
        prog.objective = vec![(0, 1.0)];
        match ClarabelBackend.solve(&prog) {
            SolveOutcome::Feasible(x) => assert!((x[0] - 3.0).abs() < 1e-7),
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn scaled_triangle_convention_matches_eigenvalue_check() {
        // minimize −x subject to [[1, x],[x, 4]] ⪰ 0 pushes x to the boundary
        // det = 4 − x² = 0 ⇒ x = 2; a wrong off-diagonal scaling would land
        // at 2√2 or √2 instead.
        let layout = VarLayout::transformed(1, 1);
        let mut blk = PsdBlock::new("probe", 2, crate::synthesis::program::MatSense::Psd);
        blk.entry_mut(0, 0).constant = 1.0;
        blk.entry_mut(0, 1).push(0, 1.0);
        blk.entry_mut(1, 1).constant = 4.0;
        let mut prog = empty_program(layout);
        prog.psd.push(blk);
        prog.objective = vec![(0, -1.0)];
        match ClarabelBackend.solve(&prog) {
            SolveOutcome::Feasible(x) => {
                assert!((x[0] - 2.0).abs() < 1e-6, "boundary at {}", x[0]);
                let m = Mat::new(2, 2, vec![1.0, x[0], x[0], 4.0]);
                assert!(crate::matops::min_eig_sym(&m).unwrap() > -1e-7);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }
}
