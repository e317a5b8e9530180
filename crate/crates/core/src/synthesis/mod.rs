//! Observer-gain synthesis: assembles the coupled positivity + dissipation
//! feasibility program for a model (directly, or in transformed coordinates),
//! hands it to a conic backend, and re-verifies every returned point from raw
//! matrices before accepting it. A grid search over the two fixed scalars
//! (τ, λ) turns the single-point feasibility test into a synthesis routine.

mod assemble;
mod backend;
mod grid;
mod program;
mod verify;

pub use assemble::{assemble_direct, assemble_direct_with, assemble_transformed, assemble_transformed_pair, DirectOptions};
pub use backend::{ClarabelBackend, FeasibilityBackend, SolveOutcome};
pub use grid::{
    default_lambda_grid, default_tau_grid, grid_synthesize, grid_synthesize_with, max_alpha, max_alpha_with,
    solve_feasibility, solve_feasibility_with, table1, table1_with, table1_dtildes, AlphaSearch, GridOutcome,
    GridSpec, GridStats, SynthesisTask, Table1Report, Table1Row, ALPHA_BISECTION_WIDTH,
};
pub use program::{AffExpr, FeasibilityProgram, LinConstraint, MatSense, PsdBlock, Sense, VarLayout};
pub use verify::{injection_coupling_check, verify_certificate, CouplingCheck, PostChecks};

use crate::matops::{self, Mat, MatError};
use crate::model::{ModelError, SystemModel};
use crate::transform::TransformError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("bracket does not straddle the feasibility boundary: {0}")]
    Bracket(String),
    #[error("solver numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Slack used to realize the strict inequalities (J diagonal, γ, P ≻ 0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Margins {
    pub eps_pos: f64,
    pub eps_pd: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { eps_pos: 1e-6, eps_pd: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMode {
    Direct,
    Transformed,
}

impl std::fmt::Display for SynthesisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SynthesisMode::Direct => write!(f, "direct"),
            SynthesisMode::Transformed => write!(f, "transformed"),
        }
    }
}

/// One feasible point of the synthesis program, in raw (pre-gain) variables.
/// `coupling` is the nonnegative mixed-monotonicity matrix: G in direct mode,
/// Γ in transformed mode. Exactly one of `y`/`h` families is present per mode
/// (`y` direct, `h` transformed; `k` only for direct programs with free K).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisVariables {
    #[serde(rename = "J")]
    pub j: Mat,
    #[serde(rename = "Y", default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Mat>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Mat>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Mat>,
    #[serde(rename = "W")]
    pub w: Mat,
    #[serde(rename = "Ups_lo")]
    pub ups_lo: Mat,
    #[serde(rename = "Ups_hi")]
    pub ups_hi: Mat,
    #[serde(rename = "G")]
    pub coupling: Mat,
    #[serde(rename = "P")]
    pub p: Mat,
    pub gamma: f64,
}

/// A self-contained record of one accepted (or candidate) feasible point:
/// everything needed to re-check the constraints and to run the runtime
/// monitors (quadratic sector bound, Lyapunov decrease) without the solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub mode: SynthesisMode,
    pub tau: f64,
    pub lambda: f64,
    pub margins: Margins,
    pub variables: SynthesisVariables,
    /// Worst violation per constraint label, evaluated at the returned point.
    pub residuals: BTreeMap<String, f64>,
}

impl Certificate {
    /// The 2n×2n sector-bound matrix used by the quadratic monitor: blocks
    /// [[B, G],[G, B]] with B = D̄·Ῡ − D̲·Υ̲ + G, where (D̲, D̄) are the model's
    /// Jacobian bounds in direct mode and the S-multiplied bounds
    /// (S⁺D̲ − S⁻D̄, S⁺D̄ − S⁻D̲) in transformed mode.
    pub fn sector_matrix(&self, model: &SystemModel, s: Option<&Mat>) -> Result<Mat, SynthesisError> {
        let (d_lo, d_hi) = match (self.mode, s) {
            (SynthesisMode::Direct, _) => (model.d_lo.clone(), model.d_hi.clone()),
            (SynthesisMode::Transformed, Some(s)) => {
                let theta = matops::interval_product(s, &model.d_interval())?;
                (theta.lo, theta.hi)
            }
            (SynthesisMode::Transformed, None) => {
                return Err(SynthesisError::Dimension("transformed certificate needs S to build the sector matrix".into()))
            }
        };
        let v = &self.variables;
        let diag = &(&(&d_hi * &v.ups_hi) - &(&d_lo * &v.ups_lo)) + &v.coupling;
        Ok(matops::block2x2(&diag, &v.coupling, &v.coupling, &diag)?)
    }

    pub fn worst_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

/// Scalar/summary slice of a certificate for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub residuals: BTreeMap<String, f64>,
    pub post_checks: PostChecks,
}

/// Top-level machine-readable synthesis result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub mode: SynthesisMode,
    /// "feasible" | "infeasible" | "numerical_failure"
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<crate::transform::DirectDiagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<crate::transform::TransformPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<crate::observer::ObserverGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_checks: Option<PostChecks>,
    pub grid: GridStats,
}
