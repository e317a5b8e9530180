//! Interval observer execution: the two coupled update laws (plant
//! coordinates, and transformed coordinates z = Sx with back-transformation),
//! seeded closed-loop simulation against synthetic plants, runtime monitors
//! for every certified property, and trace export.

mod export;
mod simulate;

pub use export::{trace_to_csv, TraceSummary};
pub use simulate::{simulate, simulate_sampled, SampledDataConfig, POSITIVITY_TOL, QUAD_TOL};

use crate::matops::{self, Mat, MatError};
use crate::model::{ModelError, SystemModel};
use crate::synthesis::SynthesisMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("coupling matrices must be nonnegative: {0}")]
    SignStructure(String),
    #[error("initial interval inverted: {0}")]
    InitialInterval(String),
    #[error("S·U differs from identity by {0:.3e}")]
    TransformInconsistent(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("discretization defect {defect:.6e} exceeds the declared bound {bound:.6e} at step {step}")]
    DefectBound { step: usize, defect: f64, bound: f64 },
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Gains for the plant-coordinate observer. F and G couple the upper and
/// lower laws and must be nonnegative for the coupled error dynamics to be
/// order-preserving.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectObserverGains {
    #[serde(rename = "L")]
    pub l: Mat,
    #[serde(rename = "K")]
    pub k: Mat,
    #[serde(rename = "F")]
    pub f: Mat,
    #[serde(rename = "G")]
    pub g: Mat,
}

impl DirectObserverGains {
    pub fn new(l: Mat, k: Mat, f: Mat, g: Mat) -> Result<Self, ObserverError> {
        let gains = DirectObserverGains { l, k, f, g };
        gains.validate_shapes()?;
        Ok(gains)
    }

    fn validate_shapes(&self) -> Result<(), ObserverError> {
        let n = self.l.rows();
        let m = self.l.cols();
        if self.k.rows() != n || self.k.cols() != m {
            return Err(ObserverError::Dimension(format!("K is {}x{}, L is {n}x{m}", self.k.rows(), self.k.cols())));
        }
        for (name, mat) in [("F", &self.f), ("G", &self.g)] {
            if mat.rows() != n || mat.cols() != n {
                return Err(ObserverError::Dimension(format!("{name} is {}x{}, expected {n}x{n}", mat.rows(), mat.cols())));
            }
            if mat.min_entry() < 0.0 {
                return Err(ObserverError::SignStructure(format!("{name} has entry {}", mat.min_entry())));
            }
        }
        Ok(())
    }

    pub fn validate(&self, model: &SystemModel) -> Result<(), ObserverError> {
        self.validate_shapes()?;
        if self.l.rows() != model.n || self.l.cols() != model.m {
            return Err(ObserverError::Dimension(format!(
                "gains sized {}x{}, model has n = {}, m = {}",
                self.l.rows(),
                self.l.cols(),
                model.n,
                model.m
            )));
        }
        Ok(())
    }
}

/// Gains for the transformed-coordinate observer, carrying the transformation
/// (Λ, S, U) along with the solved injection gain H and couplings Φ, Γ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformedObserverGains {
    #[serde(rename = "Lambda")]
    pub lambda: Mat,
    #[serde(rename = "S")]
    pub s: Mat,
    #[serde(rename = "U")]
    pub u: Mat,
    #[serde(rename = "H")]
    pub h: Mat,
    #[serde(rename = "Phi")]
    pub phi: Mat,
    #[serde(rename = "Gamma")]
    pub gamma: Mat,
}

impl TransformedObserverGains {
    pub fn new(lambda: Mat, s: Mat, u: Mat, h: Mat, phi: Mat, gamma: Mat) -> Result<Self, ObserverError> {
        let gains = TransformedObserverGains { lambda, s, u, h, phi, gamma };
        gains.validate_shapes()?;
        Ok(gains)
    }

    fn validate_shapes(&self) -> Result<(), ObserverError> {
        let n = self.s.rows();
        let m = self.lambda.cols();
        if !self.s.is_square() || self.u.rows() != n || self.u.cols() != n {
            return Err(ObserverError::Dimension("S and U must be square and same-sized".into()));
        }
        if self.lambda.rows() != n || self.h.rows() != n || self.h.cols() != m {
            return Err(ObserverError::Dimension("Lambda and H must be n×m".into()));
        }
        let gap = (&(&self.s * &self.u) - &Mat::identity(n)).max_abs();
        if gap > 1e-10 {
            return Err(ObserverError::TransformInconsistent(gap));
        }
        for (name, mat) in [("Phi", &self.phi), ("Gamma", &self.gamma)] {
            if mat.rows() != n || mat.cols() != n {
                return Err(ObserverError::Dimension(format!("{name} is {}x{}, expected {n}x{n}", mat.rows(), mat.cols())));
            }
            if mat.min_entry() < 0.0 {
                return Err(ObserverError::SignStructure(format!("{name} has entry {}", mat.min_entry())));
            }
        }
        Ok(())
    }

    pub fn validate(&self, model: &SystemModel) -> Result<(), ObserverError> {
        self.validate_shapes()?;
        if self.s.rows() != model.n || self.lambda.cols() != model.m {
            return Err(ObserverError::Dimension(format!(
                "gains sized for n = {}, m = {}, model has n = {}, m = {}",
                self.s.rows(),
                self.lambda.cols(),
                model.n,
                model.m
            )));
        }
        Ok(())
    }

    /// The transformed one-step matrix S(A−ΛC)U.
    pub fn aleph(&self, model: &SystemModel) -> Mat {
        &(&self.s * &(&model.a - &(&self.lambda * &model.c))) * &self.u
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ObserverGains {
    Direct(DirectObserverGains),
    Transformed(TransformedObserverGains),
}

impl ObserverGains {
    pub fn mode(&self) -> SynthesisMode {
        match self {
            ObserverGains::Direct(_) => SynthesisMode::Direct,
            ObserverGains::Transformed(_) => SynthesisMode::Transformed,
        }
    }

    pub fn validate(&self, model: &SystemModel) -> Result<(), ObserverError> {
        match self {
            ObserverGains::Direct(g) => g.validate(model),
            ObserverGains::Transformed(g) => g.validate(model),
        }
    }
}

fn check_step_dims(model: &SystemModel, hi: &[f64], lo: &[f64], y: &[f64]) -> Result<(), ObserverError> {
    if hi.len() != model.n || lo.len() != model.n || y.len() != model.m {
        return Err(ObserverError::Dimension(format!(
            "step inputs sized {}/{}/{}, model has n = {}, m = {}",
            hi.len(),
            lo.len(),
            y.len(),
            model.n,
            model.m
        )));
    }
    Ok(())
}

/// The decomposition term π(x₁, x₂, y) = p((I−KC)x₁ + Ky) + G(x₁−x₂).
fn pi_direct(gains: &DirectObserverGains, model: &SystemModel, x1: &[f64], x2: &[f64], y: &[f64]) -> Vec<f64> {
    let shifted = matops::vec_sub(x1, &gains.k.mat_vec(&model.c.mat_vec(x1)));
    let arg = matops::vec_add(&shifted, &gains.k.mat_vec(y));
    let p = model.eval_p(&arg);
    matops::vec_add(&p, &gains.g.mat_vec(&matops::vec_sub(x1, x2)))
}

/// One step of the plant-coordinate observer:
///   x̄⁺ = (A−LC)x̄ + π(x̄, x̲, y) + Ly + F(x̄−x̲) + w̄
///   x̲⁺ = (A−LC)x̲ + π(x̲, x̄, y) + Ly + F(x̲−x̄) + w̲
pub fn step_direct(
    gains: &DirectObserverGains,
    model: &SystemModel,
    x_hi: &[f64],
    x_lo: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ObserverError> {
    check_step_dims(model, x_hi, x_lo, y)?;
    let a_lc = &model.a - &(&gains.l * &model.c);
    let ly = gains.l.mat_vec(y);
    let law = |x1: &[f64], x2: &[f64], w: &[f64]| -> Vec<f64> {
        let mut out = a_lc.mat_vec(x1);
        out = matops::vec_add(&out, &pi_direct(gains, model, x1, x2, y));
        out = matops::vec_add(&out, &ly);
        out = matops::vec_add(&out, &gains.f.mat_vec(&matops::vec_sub(x1, x2)));
        matops::vec_add(&out, w)
    };
    Ok((law(x_hi, x_lo, &model.w_hi), law(x_lo, x_hi, &model.w_lo)))
}

/// The transformed decomposition π̃(z₁, z₂, y) = S·p((U−HCU)z₁ + Hy) + Γ(z₁−z₂).
fn pi_transformed(gains: &TransformedObserverGains, model: &SystemModel, z1: &[f64], z2: &[f64], y: &[f64]) -> Vec<f64> {
    let uz = gains.u.mat_vec(z1);
    let shifted = matops::vec_sub(&uz, &gains.h.mat_vec(&model.c.mat_vec(&uz)));
    let arg = matops::vec_add(&shifted, &gains.h.mat_vec(y));
    let sp = gains.s.mat_vec(&model.eval_p(&arg));
    matops::vec_add(&sp, &gains.gamma.mat_vec(&matops::vec_sub(z1, z2)))
}

/// One step of the transformed-coordinate observer:
///   z̄⁺ = S(A−ΛC)U z̄ + π̃(z̄, z̲, y) + SΛy + Φ(z̄−z̲) + S⁺w̄ − S⁻w̲
///   z̲⁺ = S(A−ΛC)U z̲ + π̃(z̲, z̄, y) + SΛy + Φ(z̲−z̄) + S⁺w̲ − S⁻w̄
pub fn step_transformed(
    gains: &TransformedObserverGains,
    model: &SystemModel,
    z_hi: &[f64],
    z_lo: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ObserverError> {
    check_step_dims(model, z_hi, z_lo, y)?;
    let aleph = gains.aleph(model);
    let s_lam_y = gains.s.mat_vec(&gains.lambda.mat_vec(y));
    let s_pos = gains.s.pos_part();
    let s_neg = gains.s.neg_part();
    let w_hi_z = matops::vec_sub(&s_pos.mat_vec(&model.w_hi), &s_neg.mat_vec(&model.w_lo));
    let w_lo_z = matops::vec_sub(&s_pos.mat_vec(&model.w_lo), &s_neg.mat_vec(&model.w_hi));
    let law = |z1: &[f64], z2: &[f64], w: &[f64]| -> Vec<f64> {
        let mut out = aleph.mat_vec(z1);
        out = matops::vec_add(&out, &pi_transformed(gains, model, z1, z2, y));
        out = matops::vec_add(&out, &s_lam_y);
        out = matops::vec_add(&out, &gains.phi.mat_vec(&matops::vec_sub(z1, z2)));
        matops::vec_add(&out, w)
    };
    Ok((law(z_hi, z_lo, &w_hi_z), law(z_lo, z_hi, &w_lo_z)))
}

/// Maps a z-interval back to plant coordinates: x̄ = U⁺z̄ − U⁻z̲,
/// x̲ = U⁺z̲ − U⁻z̄. Ordering of the input interval is not enforced here —
/// the simulation monitors flag inversions instead.
pub fn back_transform(u: &Mat, z_hi: &[f64], z_lo: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let u_pos = u.pos_part();
    let u_neg = u.neg_part();
    let x_hi = matops::vec_sub(&u_pos.mat_vec(z_hi), &u_neg.mat_vec(z_lo));
    let x_lo = matops::vec_sub(&u_pos.mat_vec(z_lo), &u_neg.mat_vec(z_hi));
    (x_hi, x_lo)
}

/// Maps an initial plant-coordinate interval into z: z̄₀ = S⁺x̄₀ − S⁻x̲₀,
/// z̲₀ = S⁺x̲₀ − S⁻x̄₀.
pub fn init_transformed(s: &Mat, x_hi: &[f64], x_lo: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s_pos = s.pos_part();
    let s_neg = s.neg_part();
    let z_hi = matops::vec_sub(&s_pos.mat_vec(x_hi), &s_neg.mat_vec(x_lo));
    let z_lo = matops::vec_sub(&s_pos.mat_vec(x_lo), &s_neg.mat_vec(x_hi));
    (z_hi, z_lo)
}

/// Per-step simulation record. `transition` carries the monitor data for the
/// step k → k+1 and is absent on the final record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    /// Transformed-mode bounds in z coordinates (plant-coordinate bounds
    /// above are the back-transformed ones).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_lo: Option<Vec<f64>>,
    /// Stacked error [upper; lower] in the coordinates the observer runs in.
    pub eps: Vec<f64>,
    /// min over components of eps (containment margin; ≥ 0 means contained).
    pub eps_min: f64,
    pub positivity_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionRecord>,
}

/// Monitor data for one transition k → k+1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// Disturbance applied to the plant at this step.
    pub w: Vec<f64>,
    /// Measured decomposition slack [π(up) − p(x); p(x) − π(lo)] ≥ 0.
    pub delta_p: Vec<f64>,
    /// Stacked disturbance slack (in observer coordinates).
    pub delta_w: Vec<f64>,
    /// Quadratic sector value (Ψε − Δp)ᵀΔp; certified runs keep it ≥ −1e−7.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_ok: Option<bool>,
    /// Lyapunov decrease slack λV(ε) + γ‖Δw‖ + tol − V(ε⁺); ≥ 0 when the
    /// certified decrease holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObserverTrace {
    pub mode: SynthesisMode,
    pub seed: u64,
    pub horizon: usize,
    pub records: Vec<StepRecord>,
    /// Worst defect between the reference integrator and the Euler map, for
    /// sampled-data runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_defect: Option<f64>,
}

impl ObserverTrace {
    pub fn min_eps(&self) -> f64 {
        self.records.iter().map(|r| r.eps_min).fold(f64::INFINITY, f64::min)
    }

    pub fn positivity_violations(&self) -> usize {
        self.records.iter().filter(|r| !r.positivity_ok).count()
    }

    pub fn sector_violations(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| r.transition.as_ref())
            .filter(|t| t.sector_ok == Some(false))
            .count()
    }

    pub fn lyapunov_violations(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| r.transition.as_ref())
            .filter(|t| t.lyapunov_ok == Some(false))
            .count()
    }

    /// Per-step interval width, max over components.
    pub fn widths(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| {
                r.x_hi
                    .iter()
                    .zip(&r.x_lo)
                    .map(|(hi, lo)| hi - lo)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Long-run width estimate: mean of the per-step max-component width over
    /// the final 20% of the horizon.
    pub fn ultimate_bound(&self) -> f64 {
        let widths = self.widths();
        let start = widths.len() - (widths.len() / 5).max(1);
        let tail = &widths[start..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pendulum_model, NonlinearitySpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_disturbance_linear() -> SystemModel {
        SystemModel::new(
            Mat::new(2, 2, vec![0.5, 0.1, 0.0, 0.4]),
            Mat::new(1, 2, vec![1.0, 0.0]),
            NonlinearitySpec::zero(),
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn linear_reduction_matches_closed_form() {
        let model = zero_disturbance_linear();
        let gains = DirectObserverGains::new(
            Mat::new(2, 1, vec![0.3, 0.1]),
            Mat::zeros(2, 1),
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
        )
        .unwrap();
        let x_hi = vec![1.0, -2.0];
        let x_lo = vec![0.5, -2.5];
        let y = vec![0.7];
        let (hi, lo) = step_direct(&gains, &model, &x_hi, &x_lo, &y).unwrap();
        let a_lc = &model.a - &(&gains.l * &model.c);
        let expect_hi = matops::vec_add(&a_lc.mat_vec(&x_hi), &gains.l.mat_vec(&y));
        let expect_lo = matops::vec_add(&a_lc.mat_vec(&x_lo), &gains.l.mat_vec(&y));
        for i in 0..2 {
            assert_abs_diff_eq!(hi[i], expect_hi[i], epsilon = 1e-15);
            assert_abs_diff_eq!(lo[i], expect_lo[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn collapsed_interval_steps_with_the_plant() {
        // With x̄ = x̲ = x, y = Cx and w̄ = w̲, both laws reduce to the plant map.
        let mut model = pendulum_model(0.065);
        model.w_lo = vec![0.0; 2];
        model.w_hi = vec![0.0; 2];
        let gains = DirectObserverGains::new(
            Mat::new(2, 1, vec![0.4, 0.2]),
            Mat::new(2, 1, vec![0.9, -0.3]),
            Mat::new(2, 2, vec![0.1, 0.0, 0.2, 0.1]),
            Mat::new(2, 2, vec![0.0, 0.0, 0.13, 0.0]),
        )
        .unwrap();
        let x = vec![0.3, -0.2];
        let y = model.c.mat_vec(&x);
        let (hi, lo) = step_direct(&gains, &model, &x, &x, &y).unwrap();
        let plant = matops::vec_add(&model.a.mat_vec(&x), &model.eval_p(&x));
        for i in 0..2 {
            assert_abs_diff_eq!(hi[i], plant[i], epsilon = 1e-14);
            assert_abs_diff_eq!(lo[i], plant[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn one_step_containment_with_structural_gains() {
        // L = K = 0, F = 0, G = D̄ − D̲ keeps the decomposition
        // order-preserving, so one step preserves containment.
        let mut model = pendulum_model(0.065);
        model.w_lo = vec![0.0; 2];
        model.w_hi = vec![0.0; 2];
        let g = &model.d_hi - &model.d_lo;
        let gains =
            DirectObserverGains::new(Mat::zeros(2, 1), Mat::zeros(2, 1), Mat::zeros(2, 2), g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let x_hi = vec![x[0] + 0.1, x[1] + 0.1];
            let x_lo = vec![x[0] - 0.1, x[1] - 0.1];
            let y = model.c.mat_vec(&x);
            let (hi, lo) = step_direct(&gains, &model, &x_hi, &x_lo, &y).unwrap();
            let next = matops::vec_add(&model.a.mat_vec(&x), &model.eval_p(&x));
            for i in 0..2 {
                assert!(lo[i] <= next[i] + 1e-12 && next[i] <= hi[i] + 1e-12);
            }
        }
    }

    #[test]
    fn identity_transform_matches_direct_step() {
        let mut model = pendulum_model(0.065);
        model.w_lo = vec![-0.001, -0.002];
        model.w_hi = vec![0.003, 0.004];
        let lambda = Mat::new(2, 1, vec![0.4, 0.2]);
        let h = Mat::new(2, 1, vec![0.9, -0.3]);
        let phi = Mat::new(2, 2, vec![0.1, 0.0, 0.2, 0.1]);
        let gamma = Mat::new(2, 2, vec![0.0, 0.0, 0.13, 0.0]);
        let tg = TransformedObserverGains::new(
            lambda.clone(),
            Mat::identity(2),
            Mat::identity(2),
            h.clone(),
            phi.clone(),
            gamma.clone(),
        )
        .unwrap();
        let dg = DirectObserverGains::new(lambda, h, phi, gamma).unwrap();
        let z_hi = vec![0.4, -0.1];
        let z_lo = vec![0.2, -0.3];
        let y = vec![0.33];
        let (thi, tlo) = step_transformed(&tg, &model, &z_hi, &z_lo, &y).unwrap();
        let (dhi, dlo) = step_direct(&dg, &model, &z_hi, &z_lo, &y).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(thi[i], dhi[i], epsilon = 1e-14);
            assert_abs_diff_eq!(tlo[i], dlo[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn back_transform_identity_and_sign_flip() {
        let z_hi = vec![2.0, 1.0];
        let z_lo = vec![-1.0, 0.5];
        let (x_hi, x_lo) = back_transform(&Mat::identity(2), &z_hi, &z_lo);
        assert_eq!(x_hi, z_hi);
        assert_eq!(x_lo, z_lo);
        let (f_hi, f_lo) = back_transform(&Mat::identity(2).scale(-1.0), &z_hi, &z_lo);
        assert_eq!(f_hi, vec![1.0, -0.5]);
        assert_eq!(f_lo, vec![-2.0, -1.0]);
    }

    #[test]
    fn transform_round_trip_contains_the_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let s = Mat::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let Ok(u) = s.inverse() else { continue };
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let x_hi = vec![x[0] + rng.random_range(0.0..0.5), x[1] + rng.random_range(0.0..0.5)];
            let x_lo = vec![x[0] - rng.random_range(0.0..0.5), x[1] - rng.random_range(0.0..0.5)];
            let (z_hi, z_lo) = init_transformed(&s, &x_hi, &x_lo);
            let z = s.mat_vec(&x);
            for i in 0..2 {
                assert!(z_lo[i] <= z[i] + 1e-12 && z[i] <= z_hi[i] + 1e-12);
            }
            let (b_hi, b_lo) = back_transform(&u, &z_hi, &z_lo);
            for i in 0..2 {
                assert!(b_lo[i] <= x[i] + 1e-10 && x[i] <= b_hi[i] + 1e-10);
            }
        }
    }

    #[test]
    fn negative_coupling_rejected() {
        let bad = DirectObserverGains::new(
            Mat::zeros(2, 1),
            Mat::zeros(2, 1),
            Mat::new(2, 2, vec![0.0, -0.1, 0.0, 0.0]),
            Mat::zeros(2, 2),
        );
        assert!(matches!(bad, Err(ObserverError::SignStructure(_))));
    }

    #[test]
    fn inconsistent_transform_rejected() {
        let bad = TransformedObserverGains::new(
            Mat::zeros(2, 1),
            Mat::identity(2),
            Mat::identity(2).scale(1.1),
            Mat::zeros(2, 1),
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
        );
        assert!(matches!(bad, Err(ObserverError::TransformInconsistent(_))));
    }
}
