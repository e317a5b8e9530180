//! Builds the feasibility program for a model. The direct build searches for
//! observer and injection gains in the plant coordinates; the transformed
//! build fixes an output gain Λ and a change of basis S up front and searches
//! the remaining variables in z = Sx coordinates. Both share one constraint
//! skeleton:
//!   - entrywise nonnegativity of the coupled one-step matrix J·(dynamics),
//!   - an interval sandwich −Υ̲ ≤ (injection argument map) ≤ Ῡ,
//!   - nonnegativity of the worst-case sector term built from Jacobian bounds,
//!   - a dissipation LMI tying the decay rate λ, the sector multiplier τ, the
//!     Lyapunov matrix P and the disturbance gain γ together,
//!   - sign structure on J (positive diagonal, nonpositive off-diagonal) and
//!     nonnegativity of W, Υ̲, Ῡ and the coupling matrix.
//! γ is minimized so returned points are deterministic and report the best
//! disturbance gain the backend can certify at this grid point.

use super::program::{AffExpr, FeasibilityProgram, LinConstraint, MatSense, PsdBlock, Sense, VarLayout};
use super::{Margins, SynthesisError, SynthesisMode};
use crate::matops::{self, Mat};
use crate::model::SystemModel;
use crate::transform::{check_assumption3, TransformError, TransformPair};

#[derive(Debug, Clone, Default)]
pub struct DirectOptions {
    /// Drop the injection gain K from the variable set (forces K = 0).
    pub fix_k_zero: bool,
    /// Pin the observer gain by the equality Y = J·L₀ (used for the
    /// fixed-gain equivalence between the two program families).
    pub fix_l: Option<Mat>,
}

pub fn assemble_direct(model: &SystemModel, tau: f64, lambda: f64, margins: Margins) -> Result<FeasibilityProgram, SynthesisError> {
    assemble_direct_with(model, tau, lambda, margins, &DirectOptions::default())
}

pub fn assemble_direct_with(
    model: &SystemModel,
    tau: f64,
    lambda: f64,
    margins: Margins,
    opts: &DirectOptions,
) -> Result<FeasibilityProgram, SynthesisError> {
    check_scalars(tau, lambda, margins)?;
    if let Some(l0) = &opts.fix_l {
        if l0.rows() != model.n || l0.cols() != model.m {
            return Err(SynthesisError::Dimension(format!(
                "fixed L is {}x{}, expected {}x{}",
                l0.rows(),
                l0.cols(),
                model.n,
                model.m
            )));
        }
    }
    let layout = VarLayout::direct(model.n, model.m, opts.fix_k_zero);
    let pieces = Pieces {
        a_eff: model.a.clone(),
        c_for_y: Some(model.c.clone()),
        inj_const: Mat::identity(model.n),
        inj_gain_mat: model.c.clone(),
        d_lo: model.d_lo.clone(),
        d_hi: model.d_hi.clone(),
    };
    Ok(build(SynthesisMode::Direct, layout, &pieces, tau, lambda, margins, opts.fix_l.as_ref()))
}

pub fn assemble_transformed(
    model: &SystemModel,
    lambda_gain: &Mat,
    s: &Mat,
    tau: f64,
    lambda: f64,
    margins: Margins,
) -> Result<FeasibilityProgram, SynthesisError> {
    let pair = TransformPair::from_parts(&model.a, &model.c, lambda_gain.clone(), s.clone())?;
    assemble_transformed_pair(model, &pair, tau, lambda, margins)
}

pub fn assemble_transformed_pair(
    model: &SystemModel,
    pair: &TransformPair,
    tau: f64,
    lambda: f64,
    margins: Margins,
) -> Result<FeasibilityProgram, SynthesisError> {
    check_scalars(tau, lambda, margins)?;
    // Pairs are validated on construction, but re-check: deserialized or
    // hand-built pairs must not smuggle in a violating (Λ, S).
    let report = check_assumption3(&model.a, &model.c, &pair.lambda, &pair.s)?;
    if !report.holds {
        return Err(TransformError::AssumptionViolated(report.describe()).into());
    }
    let layout = VarLayout::transformed(model.n, model.m);
    let theta = matops::interval_product(&pair.s, &model.d_interval())?;
    let pieces = Pieces {
        a_eff: pair.aleph.clone(),
        c_for_y: None,
        inj_const: pair.u.clone(),
        inj_gain_mat: &model.c * &pair.u,
        d_lo: theta.lo,
        d_hi: theta.hi,
    };
    Ok(build(SynthesisMode::Transformed, layout, &pieces, tau, lambda, margins, None))
}

fn check_scalars(tau: f64, lambda: f64, margins: Margins) -> Result<(), SynthesisError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(SynthesisError::Parameter(format!("tau must be positive, got {tau}")));
    }
    if !(lambda.is_finite() && (0.0..1.0).contains(&lambda)) {
        return Err(SynthesisError::Parameter(format!("lambda must lie in [0,1), got {lambda}")));
    }
    if !(margins.eps_pos.is_finite() && margins.eps_pos > 0.0 && margins.eps_pd.is_finite() && margins.eps_pd > 0.0) {
        return Err(SynthesisError::Parameter("margins must be positive".into()));
    }
    Ok(())
}

/// Mode-specific matrices feeding the shared constraint skeleton.
struct Pieces {
    /// A (direct) or ℵ = S(A−ΛC)U (transformed): the part of the one-step
    /// matrix multiplied by J besides the solved-for output gain.
    a_eff: Mat,
    /// C when an output-gain variable Y enters J·A − Y·C (direct only).
    c_for_y: Option<Mat>,
    /// Constant side of the injection sandwich: I (direct) or U (transformed).
    inj_const: Mat,
    /// Matrix multiplying the injection gain inside the sandwich:
    /// C (direct) or CU (transformed).
    inj_gain_mat: Mat,
    /// Jacobian bounds seen by the sector term: (D̲, D̄) or (Θ̲, Θ̄).
    d_lo: Mat,
    d_hi: Mat,
}

fn build(
    mode: SynthesisMode,
    layout: VarLayout,
    pieces: &Pieces,
    tau: f64,
    lambda: f64,
    margins: Margins,
    fix_l: Option<&Mat>,
) -> FeasibilityProgram {
    let n = layout.n;
    let m = layout.m;
    let two_n = 2 * n;

    // Entry (i, j) of the 2n×2n coupled matrix J·(dynamics): the diagonal
    // blocks carry J·a_eff − Y·C + W, the off-diagonal blocks carry W alone.
    let q_expr = |i: usize, j: usize| -> AffExpr {
        let (ii, jj) = (i % n, j % n);
        let mut e = AffExpr::default();
        if i / n == j / n {
            for k in 0..n {
                e.push(layout.j(ii, k), pieces.a_eff[(k, jj)]);
            }
            if let Some(c) = &pieces.c_for_y {
                for q in 0..m {
                    e.push(layout.y(ii, q), -c[(q, jj)]);
                }
            }
        }
        e.push(layout.w(ii, jj), 1.0);
        e
    };

    // Entry (i, j) of the 2n×2n sector matrix: diagonal blocks carry
    // D̄·Ῡ − D̲·Υ̲ + G, off-diagonal blocks carry G alone.
    let psi_expr = |i: usize, j: usize| -> AffExpr {
        let (ii, jj) = (i % n, j % n);
        let mut e = AffExpr::default();
        if i / n == j / n {
            for k in 0..n {
                e.push(layout.ups_hi(k, jj), pieces.d_hi[(ii, k)]);
                e.push(layout.ups_lo(k, jj), -pieces.d_lo[(ii, k)]);
            }
        }
        e.push(layout.g(ii, jj), 1.0);
        e
    };

    // blkdiag(J, J) over 2n indices.
    let jj_var = |i: usize, j: usize| -> Option<usize> { (i / n == j / n).then(|| layout.j(i % n, j % n)) };

    let mut lin: Vec<LinConstraint> = Vec::new();
    let mut le = |label: &'static str, expr: AffExpr, rhs: f64| {
        lin.push(LinConstraint { label, expr, rhs, sense: Sense::Le });
    };

    for i in 0..n {
        for j in 0..n {
            let mut e = AffExpr::default();
            if i == j {
                e.push(layout.j(i, i), -1.0);
                le("J_diagonal", e, -margins.eps_pos);
            } else {
                e.push(layout.j(i, j), 1.0);
                le("J_offdiag", e, 0.0);
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            let families = [
                ("W_nonneg", layout.w(r, c)),
                ("ups_lo_nonneg", layout.ups_lo(r, c)),
                ("ups_hi_nonneg", layout.ups_hi(r, c)),
                ("coupling_var_nonneg", layout.g(r, c)),
            ];
            for (label, var) in families {
                let mut e = AffExpr::default();
                e.push(var, -1.0);
                le(label, e, 0.0);
            }
        }
    }
    {
        let mut e = AffExpr::default();
        e.push(layout.gamma(), -1.0);
        le("gamma_positive", e, -margins.eps_pos);
    }

    // Coupled one-step matrix nonnegative entrywise. Off-diagonal blocks are
    // W, already constrained; only the diagonal block rows are new.
    for i in 0..n {
        for j in 0..n {
            le("coupled_nonneg", q_expr(i, j).scaled(-1.0), 0.0);
        }
    }

    // Injection sandwich: −Υ̲ ≤ inj_const − Gain·inj_gain_mat ≤ Ῡ.
    let gain_var = |r: usize, q: usize| -> Option<usize> {
        if layout.has_k {
            Some(layout.k(r, q))
        } else if layout.has_h {
            Some(layout.h(r, q))
        } else {
            None
        }
    };
    for i in 0..n {
        for j in 0..n {
            let base = pieces.inj_const[(i, j)];
            let mut upper = AffExpr::default();
            let mut lower = AffExpr::default();
            for q in 0..m {
                if let Some(gv) = gain_var(i, q) {
                    let coef = pieces.inj_gain_mat[(q, j)];
                    upper.push(gv, -coef);
                    lower.push(gv, coef);
                }
            }
            upper.push(layout.ups_hi(i, j), -1.0);
            lower.push(layout.ups_lo(i, j), -1.0);
            le("injection_upper", upper, -base);
            le("injection_lower", lower, base);
        }
    }

    // Worst-case sector term nonnegative: D̲·Ῡ − D̄·Υ̲ + G ≥ 0.
    for i in 0..n {
        for j in 0..n {
            let mut e = AffExpr::default();
            for k in 0..n {
                e.push(layout.ups_hi(k, j), -pieces.d_lo[(i, k)]);
                e.push(layout.ups_lo(k, j), pieces.d_hi[(i, k)]);
            }
            e.push(layout.g(i, j), -1.0);
            le("coupling_nonneg", e, 0.0);
        }
    }

    if let Some(l0) = fix_l {
        for i in 0..n {
            for q in 0..m {
                let mut e = AffExpr::default();
                for k in 0..n {
                    e.push(layout.j(i, k), l0[(k, q)]);
                }
                e.push(layout.y(i, q), -1.0);
                lin.push(LinConstraint { label: "gain_equality", expr: e, rhs: 0.0, sense: Sense::Eq });
            }
        }
    }

    let mut p_block = PsdBlock::new("P_definite", two_n, MatSense::Psd);
    for r in 0..two_n {
        for c in r..two_n {
            let e = p_block.entry_mut(r, c);
            e.push(layout.p(r, c), 1.0);
            if r == c {
                e.constant = -margins.eps_pd;
            }
        }
    }

    // Dissipation LMI, 4×4 grid of 2n×2n blocks, required ⪯ 0:
    //   [ −λP     Qᵀ        (τ/2)Ψᵀ   0  ]
    //   [  ⋆      P−𝒥−𝒥ᵀ    𝒥         𝒥  ]
    //   [  ⋆      ⋆         −τI       0  ]
    //   [  ⋆      ⋆         ⋆        −γI ]
    let dim = 4 * two_n;
    let mut lmi = PsdBlock::new("dissipation", dim, MatSense::Nsd);
    for r in 0..dim {
        for c in r..dim {
            let (br, bc) = (r / two_n, c / two_n);
            let (ri, ci) = (r % two_n, c % two_n);
            match (br, bc) {
                (0, 0) => lmi.entry_mut(r, c).push(layout.p(ri, ci), -lambda),
                (0, 1) => *lmi.entry_mut(r, c) = q_expr(ci, ri),
                (0, 2) => *lmi.entry_mut(r, c) = psi_expr(ci, ri).scaled(tau / 2.0),
                (1, 1) => {
                    let e = lmi.entry_mut(r, c);
                    e.push(layout.p(ri, ci), 1.0);
                    if let Some(v) = jj_var(ri, ci) {
                        e.push(v, -1.0);
                    }
                    if let Some(v) = jj_var(ci, ri) {
                        e.push(v, -1.0);
                    }
                }
                (1, 2) | (1, 3) => {
                    if let Some(v) = jj_var(ri, ci) {
                        lmi.entry_mut(r, c).push(v, 1.0);
                    }
                }
                (2, 2) => {
                    if ri == ci {
                        lmi.entry_mut(r, c).constant = -tau;
                    }
                }
                (3, 3) => {
                    if ri == ci {
                        lmi.entry_mut(r, c).push(layout.gamma(), -1.0);
                    }
                }
                (0, 3) | (2, 3) => {}
                _ => unreachable!("upper-triangle block walk"),
            }
        }
    }

    // Pure feasibility, deliberately: minimizing γ drives 𝒥 toward zero
    // (eliminating the −γI block adds γ⁻¹𝒥𝒥ᵀ to the dissipation inequality),
    // which parks J at the margin floor where solver tolerance destroys the
    // sign structure of J⁻¹. Interior points keep the recovered gains clean;
    // γ is reported as returned, not optimized.
    let objective = Vec::new();
    FeasibilityProgram { mode, tau, lambda, margins, layout, lin, psd: vec![p_block, lmi], objective }
}
