//! System models: x⁺ = Ax + p(x) + w with y = Cx, a globally bounded
//! nonlinearity Jacobian D̲ ≤ ∂p/∂x ≤ D̄ (D̲ ≤ 0 ≤ D̄), and a bounded
//! disturbance w̲ ≤ w ≤ w̄. Models load from declarative JSON; nonlinearities
//! resolve through a built-in registry so files stay reproducible.

use crate::matops::{Mat, MatError, MatInterval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Default finite-difference acceptance slack for Jacobian bound checks.
pub const JACOBIAN_CHECK_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("D_lo has a positive entry {value} at ({row},{col})")]
    DLoPositive { row: usize, col: usize, value: f64 },
    #[error("D_hi has a negative entry {value} at ({row},{col})")]
    DHiNegative { row: usize, col: usize, value: f64 },
    #[error("disturbance bounds inverted: w_lo[{index}] = {lo} > w_hi[{index}] = {hi}")]
    DisturbanceBoundsInverted { index: usize, lo: f64, hi: f64 },
    #[error("region bounds inverted at coordinate {index}")]
    RegionInverted { index: usize },
    #[error("unknown nonlinearity {0:?}")]
    UnknownNonlinearity(String),
    #[error("bad nonlinearity params: {0}")]
    BadParams(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Named entry in the nonlinearity registry plus its real parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl NonlinearitySpec {
    pub fn new(name: &str, params: Vec<f64>) -> Self {
        NonlinearitySpec { name: name.into(), params }
    }

    pub fn zero() -> Self {
        NonlinearitySpec::new("zero", vec![])
    }
}

type CustomP = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The discrete-time plant. Immutable after load; safe to share across solves.
#[derive(Clone, Serialize, Deserialize)]
pub struct SystemModel {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Mat,
    #[serde(rename = "C")]
    pub c: Mat,
    pub nonlinearity: NonlinearitySpec,
    #[serde(rename = "D_lo")]
    pub d_lo: Mat,
    #[serde(rename = "D_hi")]
    pub d_hi: Mat,
    pub w_lo: Vec<f64>,
    pub w_hi: Vec<f64>,
    /// Per-coordinate sampling box for desk checks; defaults to [−π, π]ⁿ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<(f64, f64)>>,
    /// Library-level override: an arbitrary callable replacing the registry map.
    #[serde(skip)]
    custom_p: Option<CustomP>,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("a", &self.a)
            .field("c", &self.c)
            .field("nonlinearity", &self.nonlinearity)
            .field("d_lo", &self.d_lo)
            .field("d_hi", &self.d_hi)
            .field("w_lo", &self.w_lo)
            .field("w_hi", &self.w_hi)
            .field("region", &self.region)
            .field("custom_p", &self.custom_p.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl SystemModel {
    pub fn new(
        a: Mat,
        c: Mat,
        nonlinearity: NonlinearitySpec,
        d_lo: Mat,
        d_hi: Mat,
        w_lo: Vec<f64>,
        w_hi: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let model = SystemModel {
            n: a.rows(),
            m: c.rows(),
            a,
            c,
            nonlinearity,
            d_lo,
            d_hi,
            w_lo,
            w_hi,
            region: None,
            custom_p: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Replaces the registry map with an arbitrary callable (bounds unchanged).
    pub fn with_custom_nonlinearity(mut self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.custom_p = Some(Arc::new(f));
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(ModelError::Dimension("state dimension n must be positive".into()));
        }
        let shape_of = |mat: &Mat| (mat.rows(), mat.cols());
        if shape_of(&self.a) != (n, n) {
            return Err(ModelError::Dimension(format!("A is {}x{}, expected {n}x{n}", self.a.rows(), self.a.cols())));
        }
        if shape_of(&self.c) != (m, n) {
            return Err(ModelError::Dimension(format!("C is {}x{}, expected {m}x{n}", self.c.rows(), self.c.cols())));
        }
        if shape_of(&self.d_lo) != (n, n) || shape_of(&self.d_hi) != (n, n) {
            return Err(ModelError::Dimension("D_lo/D_hi must be n x n".into()));
        }
        if self.w_lo.len() != n || self.w_hi.len() != n {
            return Err(ModelError::Dimension("w_lo/w_hi must have length n".into()));
        }
        for mat in [&self.a, &self.c, &self.d_lo, &self.d_hi] {
            if !mat.is_finite() {
                return Err(ModelError::Dimension("non-finite matrix entry".into()));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if self.d_lo[(i, j)] > 0.0 {
                    return Err(ModelError::DLoPositive { row: i, col: j, value: self.d_lo[(i, j)] });
                }
                if self.d_hi[(i, j)] < 0.0 {
                    return Err(ModelError::DHiNegative { row: i, col: j, value: self.d_hi[(i, j)] });
                }
            }
        }
        for i in 0..n {
            if self.w_lo[i] > self.w_hi[i] {
                return Err(ModelError::DisturbanceBoundsInverted { index: i, lo: self.w_lo[i], hi: self.w_hi[i] });
            }
            if !self.w_lo[i].is_finite() || !self.w_hi[i].is_finite() {
                return Err(ModelError::Dimension("non-finite disturbance bound".into()));
            }
        }
        if let Some(region) = &self.region {
            if region.len() != n {
                return Err(ModelError::Dimension("region must have one (lo, hi) pair per state".into()));
            }
            for (i, (lo, hi)) in region.iter().enumerate() {
                if lo > hi {
                    return Err(ModelError::RegionInverted { index: i });
                }
            }
        }
        if self.custom_p.is_none() {
            registry::resolve(&self.nonlinearity, n)?;
        }
        Ok(())
    }

    /// Evaluates the nonlinearity p(x).
    pub fn eval_p(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "eval_p: state length");
        if let Some(f) = &self.custom_p {
            let out = f(x);
            assert_eq!(out.len(), self.n, "custom nonlinearity output length");
            return out;
        }
        registry::resolve(&self.nonlinearity, self.n)
            .expect("validated at construction")
            .eval(x)
    }

    /// Declared Jacobian bounds as an interval.
    pub fn d_interval(&self) -> MatInterval {
        MatInterval { lo: self.d_lo.clone(), hi: self.d_hi.clone() }
    }

    /// Sampling region: declared, else [−π, π]ⁿ.
    pub fn sampling_region(&self) -> Vec<(f64, f64)> {
        self.region.clone().unwrap_or_else(|| {
            (0..self.n).map(|_| (-std::f64::consts::PI, std::f64::consts::PI)).collect()
        })
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SystemModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let model: SystemModel = serde_json::from_str(&text)?;
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &SystemModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    model.validate()?;
    let text = serde_json::to_string_pretty(model)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// One finite-difference Jacobian entry escaping its declared bounds.
#[derive(Debug, Clone, Serialize)]
pub struct JacobianViolation {
    pub x: Vec<f64>,
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianReport {
    pub samples: usize,
    pub tol: f64,
    pub violation_count: usize,
    pub worst_excess: f64,
    /// At most 16 representative violations.
    pub examples: Vec<JacobianViolation>,
}

impl JacobianReport {
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }
}

/// Central-difference Jacobian check of p against [D_lo, D_hi] over `region`
/// (model's region if `None`). Sampling is deterministic.
pub fn check_jacobian_bounds(
    model: &SystemModel,
    sample_count: usize,
    region: Option<&[(f64, f64)]>,
) -> JacobianReport {
    let region: Vec<(f64, f64)> = match region {
        Some(r) => r.to_vec(),
        None => model.sampling_region(),
    };
    assert_eq!(region.len(), model.n, "region length");
    let tol = JACOBIAN_CHECK_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut report = JacobianReport {
        samples: sample_count,
        tol,
        violation_count: 0,
        worst_excess: 0.0,
        examples: Vec::new(),
    };
    let n = model.n;
    for _ in 0..sample_count {
        let x: Vec<f64> = region
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect();
        for j in 0..n {
            // Central differences, step 1e−6·(1+|x_j|) per coordinate.
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (pp, pm) = (model.eval_p(&xp), model.eval_p(&xm));
            for i in 0..n {
                let d = (pp[i] - pm[i]) / (2.0 * h);
                let (lo, hi) = (model.d_lo[(i, j)], model.d_hi[(i, j)]);
                let excess = (lo - d).max(d - hi);
                if excess > tol {
                    report.violation_count += 1;
                    report.worst_excess = report.worst_excess.max(excess);
                    if report.examples.len() < 16 {
                        report.examples.push(JacobianViolation {
                            x: x.clone(),
                            row: i,
                            col: j,
                            value: d,
                            bound_lo: lo,
                            bound_hi: hi,
                            excess,
                        });
                    }
                }
            }
        }
    }
    report
}

pub mod registry {
    //! Built-in nonlinearities. Each entry evaluates p, declares canonical
    //! Jacobian bounds and a default sampling region, and scales linearly so
    //! continuous-time maps h·p_c stay in the registry after discretization.

    use super::*;

    pub const NAMES: &[&str] = &["zero", "pendulum_sin", "sin_coupling", "affine_saturation"];

    pub(crate) enum Resolved {
        Zero { n: usize },
        /// p(x) = [0, −scale·sin(x₁)]: the pendulum torque term.
        PendulumSin { scale: f64 },
        /// p(x) = P·[sin x₁, …, sin xₙ] for a coupling matrix P.
        SinCoupling { p: Mat },
        /// p_i(x) = gain·tanh(x_i).
        AffineSaturation { gain: f64, n: usize },
    }

    impl Resolved {
        pub(crate) fn eval(&self, x: &[f64]) -> Vec<f64> {
            match self {
                Resolved::Zero { n } => vec![0.0; *n],
                Resolved::PendulumSin { scale } => vec![0.0, -scale * x[0].sin()],
                Resolved::SinCoupling { p } => {
                    let s: Vec<f64> = x.iter().map(|v| v.sin()).collect();
                    p.mat_vec(&s)
                }
                Resolved::AffineSaturation { gain, n } => {
                    (0..*n).map(|i| gain * x[i].tanh()).collect()
                }
            }
        }
    }

    pub(crate) fn resolve(spec: &NonlinearitySpec, n: usize) -> Result<Resolved, ModelError> {
        match spec.name.as_str() {
            "zero" => Ok(Resolved::Zero { n }),
            "pendulum_sin" => {
                if n != 2 {
                    return Err(ModelError::BadParams("pendulum_sin needs n = 2".into()));
                }
                let [scale] = spec.params[..] else {
                    return Err(ModelError::BadParams("pendulum_sin takes params = [scale]".into()));
                };
                if !scale.is_finite() || scale < 0.0 {
                    return Err(ModelError::BadParams("pendulum_sin scale must be finite and >= 0".into()));
                }
                Ok(Resolved::PendulumSin { scale })
            }
            "sin_coupling" => {
                if spec.params.len() != n * n {
                    return Err(ModelError::BadParams(format!(
                        "sin_coupling takes an n*n = {} row-major coupling matrix, got {} params",
                        n * n,
                        spec.params.len()
                    )));
                }
                Ok(Resolved::SinCoupling { p: Mat::checked(n, n, spec.params.clone()).map_err(|e| ModelError::BadParams(e.to_string()))? })
            }
            "affine_saturation" => {
                let [gain] = spec.params[..] else {
                    return Err(ModelError::BadParams("affine_saturation takes params = [gain]".into()));
                };
                if !gain.is_finite() {
                    return Err(ModelError::BadParams("affine_saturation gain must be finite".into()));
                }
                Ok(Resolved::AffineSaturation { gain, n })
            }
            other => Err(ModelError::UnknownNonlinearity(other.into())),
        }
    }

    /// Canonical Jacobian bounds for a registry entry.
    pub fn declared_bounds(spec: &NonlinearitySpec, n: usize) -> Result<MatInterval, ModelError> {
        match resolve(spec, n)? {
            Resolved::Zero { n } => Ok(MatInterval::degenerate(Mat::zeros(n, n))),
            Resolved::PendulumSin { scale } => {
                // ∂p₂/∂x₁ = −scale·cos x₁ ∈ [−scale, scale].
                let hi = Mat::new(2, 2, vec![0.0, 0.0, scale, 0.0]);
                Ok(MatInterval { lo: -&hi, hi })
            }
            Resolved::SinCoupling { p } => {
                let hi = p.abs();
                Ok(MatInterval { lo: -&hi, hi })
            }
            Resolved::AffineSaturation { gain, n } => {
                // d/dx gain·tanh = gain·sech² ∈ [min(gain,0), max(gain,0)].
                let lo = Mat::identity(n).scale(gain.min(0.0));
                let hi = Mat::identity(n).scale(gain.max(0.0));
                Ok(MatInterval { lo, hi })
            }
        }
    }

    /// Default sampling region for a registry entry.
    pub fn default_region(spec: &NonlinearitySpec, n: usize) -> Vec<(f64, f64)> {
        use std::f64::consts::{FRAC_PI_2, PI};
        match spec.name.as_str() {
            "pendulum_sin" => vec![(-FRAC_PI_2, FRAC_PI_2), (-1.0, 1.0)],
            _ => (0..n).map(|_| (-PI, PI)).collect(),
        }
    }

    /// Rescales the entry by a factor h: every current entry is linear in its
    /// parameters, so h·p(params) = p(h·params).
    pub fn scale_params(spec: &NonlinearitySpec, h: f64) -> NonlinearitySpec {
        NonlinearitySpec { name: spec.name.clone(), params: spec.params.iter().map(|v| v * h).collect() }
    }
}

/// Forward-Euler discretized pendulum: A = I + h·A_c, p = h·p_c,
/// w̄ = −w̲ = h·ϱ(h)·1 with ϱ(h) = √2·h, valid on [−π/2, π/2] × [−1, 1].
pub fn pendulum_model(h: f64) -> SystemModel {
    assert!(h > 0.0, "sampling step must be positive");
    let a = Mat::new(2, 2, vec![1.0, h, 0.0, 1.0]);
    let c = Mat::new(1, 2, vec![1.0, 0.0]);
    let spec = NonlinearitySpec::new("pendulum_sin", vec![h]);
    let bounds = registry::declared_bounds(&spec, 2).expect("registry entry");
    let w = std::f64::consts::SQRT_2 * h * h;
    let mut model = SystemModel::new(a, c, spec, bounds.lo, bounds.hi, vec![-w; 2], vec![w; 2])
        .expect("pendulum model is valid");
    model.region = Some(registry::default_region(&model.nonlinearity, 2));
    model
}

/// The injection-feedback study plant: A = [[1,0],[0,0]], C = [1 0], with
/// Jacobian bounds ±α·D̃ realized by the sin-coupling nonlinearity p = αD̃·sin(x).
pub fn table1_model(alpha: f64, dtilde: &Mat) -> SystemModel {
    assert!(alpha >= 0.0 && dtilde.rows() == 2 && dtilde.cols() == 2);
    assert!(dtilde.is_nonneg(0.0), "template matrix must be nonnegative");
    let a = Mat::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]);
    let c = Mat::new(1, 2, vec![1.0, 0.0]);
    let d_hi = dtilde.scale(alpha);
    let spec = NonlinearitySpec::new("sin_coupling", d_hi.data().to_vec());
    SystemModel::new(a, c, spec, -&d_hi, d_hi.clone(), vec![-0.01; 2], vec![0.01; 2])
        .expect("study model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pendulum_model_matrices() {
        let model = pendulum_model(0.065);
        assert_eq!(model.a, Mat::new(2, 2, vec![1.0, 0.065, 0.0, 1.0]));
        assert_eq!(model.c, Mat::new(1, 2, vec![1.0, 0.0]));
        assert_abs_diff_eq!(model.d_hi[(1, 0)], 0.065, epsilon = 1e-15);
        assert_eq!(model.d_hi[(0, 1)], 0.0);
        assert_abs_diff_eq!(model.w_hi[0], std::f64::consts::SQRT_2 * 0.065 * 0.065, epsilon = 1e-15);
        model.validate().unwrap();
    }

    #[test]
    fn zero_nonlinearity_linear_system_is_valid() {
        let model = SystemModel::new(
            Mat::identity(2).scale(0.5),
            Mat::identity(2),
            NonlinearitySpec::zero(),
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert_eq!(model.eval_p(&[1.0, -3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn inverted_disturbance_bounds_rejected() {
        let err = SystemModel::new(
            Mat::identity(1),
            Mat::identity(1),
            NonlinearitySpec::zero(),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            vec![1.0],
            vec![0.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("disturbance bounds inverted"), "{err}");
    }

    #[test]
    fn d_sign_pattern_rejected() {
        let err = SystemModel::new(
            Mat::identity(1),
            Mat::identity(1),
            NonlinearitySpec::zero(),
            Mat::new(1, 1, vec![0.5]),
            Mat::zeros(1, 1),
            vec![0.0],
            vec![0.0],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DLoPositive { .. }));
    }

    #[test]
    fn load_save_round_trip() {
        let dir = std::env::temp_dir().join(format!("intobs-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pendulum.json");
        let model = pendulum_model(0.065);
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let a = serde_json::to_value(&model).unwrap();
        let b = serde_json::to_value(&loaded).unwrap();
        assert_eq!(a, b);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let dir = std::env::temp_dir().join(format!("intobs-badmodel-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::Parse(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pendulum_jacobian_within_declared_bounds() {
        let model = pendulum_model(0.065);
        let report = check_jacobian_bounds(&model, 2000, None);
        assert!(report.is_clean(), "unexpected violations: {:?}", report.examples.first());
    }

    #[test]
    fn pendulum_with_halved_bound_violates_near_origin() {
        let mut model = pendulum_model(0.065);
        model.d_hi[(1, 0)] = 0.065 / 2.0;
        model.d_lo[(1, 0)] = -0.065 / 2.0;
        let report = check_jacobian_bounds(&model, 2000, None);
        assert!(report.violation_count > 0);
        // |−h·cos x₁| > h/2 happens near x₁ = 0 and peaks there.
        assert_abs_diff_eq!(report.worst_excess, 0.065 / 2.0, epsilon = 1e-3);
        assert!(report.examples.iter().any(|v| v.x[0].abs() < 1.3));
    }

    #[test]
    fn every_registry_entry_passes_its_own_bounds() {
        let specs = [
            NonlinearitySpec::zero(),
            NonlinearitySpec::new("pendulum_sin", vec![0.3]),
            NonlinearitySpec::new("sin_coupling", vec![0.0, 0.2, 0.2, 0.0]),
            NonlinearitySpec::new("affine_saturation", vec![0.7]),
        ];
        for spec in specs {
            let n = 2;
            let bounds = registry::declared_bounds(&spec, n).unwrap();
            let a = Mat::identity(n).scale(0.5);
            let c = Mat::identity(n);
            let model = SystemModel::new(a, c, spec.clone(), bounds.lo, bounds.hi, vec![0.0; n], vec![0.0; n]).unwrap();
            let region = registry::default_region(&spec, n);
            let report = check_jacobian_bounds(&model, 2000, Some(&region));
            assert!(report.is_clean(), "{}: {:?}", spec.name, report.examples.first());
        }
    }

    #[test]
    fn unknown_nonlinearity_rejected() {
        let err = SystemModel::new(
            Mat::identity(1),
            Mat::identity(1),
            NonlinearitySpec::new("mystery", vec![]),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            vec![0.0],
            vec![0.0],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::UnknownNonlinearity(_)));
    }

    #[test]
    fn custom_callable_overrides_registry() {
        let model = SystemModel::new(
            Mat::identity(1),
            Mat::identity(1),
            NonlinearitySpec::zero(),
            Mat::new(1, 1, vec![-1.0]),
            Mat::new(1, 1, vec![1.0]),
            vec![0.0],
            vec![0.0],
        )
        .unwrap()
        .with_custom_nonlinearity(|x| vec![x[0].sin()]);
        assert_abs_diff_eq!(model.eval_p(&[1.0])[0], 1.0f64.sin(), epsilon = 1e-15);
        let report = check_jacobian_bounds(&model, 500, None);
        assert!(report.is_clean());
    }

    #[test]
    fn param_scaling_matches_function_scaling() {
        let spec = NonlinearitySpec::new("sin_coupling", vec![0.1, 0.4, 0.0, 0.3]);
        let scaled = registry::scale_params(&spec, 0.065);
        let full = registry::resolve(&spec, 2).unwrap();
        let half = registry::resolve(&scaled, 2).unwrap();
        let x = [0.7, -0.4];
        let a = full.eval(&x);
        let b = half.eval(&x);
        for i in 0..2 {
            assert_abs_diff_eq!(0.065 * a[i], b[i], epsilon = 1e-15);
        }
    }
}
