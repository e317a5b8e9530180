//! Closed-loop simulation of interval observers against synthetic plants,
//! with per-step runtime monitors for containment, the quadratic decomposition
//! sector, and the certified Lyapunov decrease. Includes the sampled-data
//! pipeline where the plant is a continuous-time system integrated by a
//! high-resolution reference method and the observer runs on its Euler
//! discretization.

use super::{
    back_transform, init_transformed, pi_direct, pi_transformed, step_direct, step_transformed,
    ObserverError, ObserverGains, ObserverTrace, StepRecord, TransitionRecord,
};
use crate::matops::{self, Mat};
use crate::model::{registry, NonlinearitySpec, SystemModel};
use crate::synthesis::Certificate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Entrywise containment tolerance for the positivity monitor.
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Tolerance for the quadratic monitors (sector value and Lyapunov decrease);
/// quadratic forms amplify rounding, so this is looser than the entrywise one.
pub const QUAD_TOL: f64 = 1e-7;

/// Continuous-time plant description for sampled-data runs. The observer
/// operates on the Euler discretization A = I + h·A_c, p = h·p_c, while the
/// ground truth is advanced by a high-resolution integrator; `rho` bounds the
/// per-sample defect between the two as ‖w[k]‖ ≤ h·ϱ(h).
#[derive(Debug, Clone)]
pub struct SampledDataConfig {
    pub a_c: Mat,
    pub nonlinearity: NonlinearitySpec,
    pub h: f64,
    pub rho: fn(f64) -> f64,
    pub truth_substeps: usize,
}

impl SampledDataConfig {
    pub fn new(
        a_c: Mat,
        nonlinearity: NonlinearitySpec,
        h: f64,
        rho: fn(f64) -> f64,
        truth_substeps: usize,
    ) -> Result<Self, ObserverError> {
        if !a_c.is_square() {
            return Err(ObserverError::Config("A_c must be square".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(ObserverError::Config(format!("sample period h = {h} must be positive")));
        }
        if truth_substeps < 10 {
            return Err(ObserverError::Config(format!(
                "truth_substeps = {truth_substeps}, need at least 10 for a credible reference trajectory"
            )));
        }
        Ok(SampledDataConfig { a_c, nonlinearity, h, rho, truth_substeps })
    }

    /// Per-sample defect bound h·ϱ(h).
    pub fn defect_bound(&self) -> f64 {
        self.h * (self.rho)(self.h)
    }

    fn vector_field(&self, x: &[f64]) -> Result<Vec<f64>, ObserverError> {
        let p = registry::resolve(&self.nonlinearity, self.a_c.rows())?.eval(x);
        Ok(matops::vec_add(&self.a_c.mat_vec(x), &p))
    }

    /// Advances the truth over one sample period with classical fourth-order
    /// Runge–Kutta using `truth_substeps` internal steps.
    pub fn advance_truth(&self, x: &[f64]) -> Result<Vec<f64>, ObserverError> {
        let dt = self.h / self.truth_substeps as f64;
        let mut state = x.to_vec();
        for _ in 0..self.truth_substeps {
            let k1 = self.vector_field(&state)?;
            let k2 = self.vector_field(&matops::vec_add(&state, &matops::vec_scale(&k1, dt / 2.0)))?;
            let k3 = self.vector_field(&matops::vec_add(&state, &matops::vec_scale(&k2, dt / 2.0)))?;
            let k4 = self.vector_field(&matops::vec_add(&state, &matops::vec_scale(&k3, dt)))?;
            let mut incr = k1;
            incr = matops::vec_add(&incr, &matops::vec_scale(&k2, 2.0));
            incr = matops::vec_add(&incr, &matops::vec_scale(&k3, 2.0));
            incr = matops::vec_add(&incr, &k4);
            state = matops::vec_add(&state, &matops::vec_scale(&incr, dt / 6.0));
        }
        Ok(state)
    }
}

/// Shared monitor state derived from an optional certificate.
struct Monitors {
    psi: Option<Mat>,
    p: Option<Mat>,
    lambda: f64,
    gamma: f64,
}

impl Monitors {
    fn from_certificate(
        model: &SystemModel,
        gains: &ObserverGains,
        cert: Option<&Certificate>,
    ) -> Result<Self, ObserverError> {
        let Some(cert) = cert else {
            return Ok(Monitors { psi: None, p: None, lambda: 0.0, gamma: 0.0 });
        };
        if cert.mode != gains.mode() {
            return Err(ObserverError::Config(format!(
                "certificate is for {} mode but gains are {} mode",
                cert.mode,
                gains.mode()
            )));
        }
        let s = match gains {
            ObserverGains::Transformed(g) => Some(&g.s),
            ObserverGains::Direct(_) => None,
        };
        let psi = cert
            .sector_matrix(model, s)
            .map_err(|e| ObserverError::Config(format!("certificate sector matrix: {e}")))?;
        Ok(Monitors {
            psi: Some(psi),
            p: Some(cert.variables.p.clone()),
            lambda: cert.lambda,
            gamma: cert.variables.gamma,
        })
    }

    fn lyapunov(&self, eps: &[f64]) -> Option<f64> {
        let p = self.p.as_ref()?;
        let pe = p.mat_vec(eps);
        Some(eps.iter().zip(&pe).map(|(a, b)| a * b).sum())
    }
}

fn check_initial_order(x0: &[f64], x0_hi: &[f64], x0_lo: &[f64]) -> Result<(), ObserverError> {
    for i in 0..x0.len() {
        if x0_lo[i] > x0[i] || x0[i] > x0_hi[i] {
            return Err(ObserverError::InitialInterval(format!(
                "component {i}: need lo <= x0 <= hi, got {} / {} / {}",
                x0_lo[i], x0[i], x0_hi[i]
            )));
        }
    }
    Ok(())
}

/// One observer update in whichever coordinates the gains live in. `bounds`
/// holds the observer state (plant coordinates for direct gains, z for
/// transformed), and the return values are (next bounds, measured
/// decomposition slack Δp for the step just taken).
fn observer_step(
    gains: &ObserverGains,
    model: &SystemModel,
    bounds: (&[f64], &[f64]),
    x: &[f64],
    y: &[f64],
) -> Result<((Vec<f64>, Vec<f64>), Vec<f64>), ObserverError> {
    let (hi, lo) = bounds;
    match gains {
        ObserverGains::Direct(g) => {
            let next = step_direct(g, model, hi, lo, y)?;
            let p_x = model.eval_p(x);
            let up = matops::vec_sub(&pi_direct(g, model, hi, lo, y), &p_x);
            let dn = matops::vec_sub(&p_x, &pi_direct(g, model, lo, hi, y));
            let mut delta_p = up;
            delta_p.extend(dn);
            Ok((next, delta_p))
        }
        ObserverGains::Transformed(g) => {
            let next = step_transformed(g, model, hi, lo, y)?;
            let sp_x = g.s.mat_vec(&model.eval_p(x));
            let up = matops::vec_sub(&pi_transformed(g, model, hi, lo, y), &sp_x);
            let dn = matops::vec_sub(&sp_x, &pi_transformed(g, model, lo, hi, y));
            let mut delta_p = up;
            delta_p.extend(dn);
            Ok((next, delta_p))
        }
    }
}

/// Stacked error in the observer's own coordinates: [x̄−x; x−x̲] for direct
/// gains, [z̄−Sx; Sx−z̲] for transformed ones.
fn stacked_error(gains: &ObserverGains, bounds: (&[f64], &[f64]), x: &[f64]) -> Vec<f64> {
    let (hi, lo) = bounds;
    let reference = match gains {
        ObserverGains::Direct(_) => x.to_vec(),
        ObserverGains::Transformed(g) => g.s.mat_vec(x),
    };
    let mut eps = matops::vec_sub(hi, &reference);
    eps.extend(matops::vec_sub(&reference, lo));
    eps
}

/// Stacked disturbance slack as seen by the error dynamics: [w̄−w; w−w̲] for
/// direct gains, with each half filtered through S⁺/S⁻ for transformed ones.
fn stacked_disturbance(gains: &ObserverGains, model: &SystemModel, w: &[f64]) -> Vec<f64> {
    let up = matops::vec_sub(&model.w_hi, w);
    let dn = matops::vec_sub(w, &model.w_lo);
    match gains {
        ObserverGains::Direct(_) => {
            let mut out = up;
            out.extend(dn);
            out
        }
        ObserverGains::Transformed(g) => {
            let s_pos = g.s.pos_part();
            let s_neg = g.s.neg_part();
            let mut out = matops::vec_add(&s_pos.mat_vec(&up), &s_neg.mat_vec(&dn));
            out.extend(matops::vec_add(&s_neg.mat_vec(&up), &s_pos.mat_vec(&dn)));
            out
        }
    }
}

fn make_record(
    gains: &ObserverGains,
    k: usize,
    x: &[f64],
    bounds: (&[f64], &[f64]),
) -> StepRecord {
    let (hi, lo) = bounds;
    let eps = stacked_error(gains, (hi, lo), x);
    let mut eps_min = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let (x_hi, x_lo, z_hi, z_lo) = match gains {
        ObserverGains::Direct(_) => (hi.to_vec(), lo.to_vec(), None, None),
        ObserverGains::Transformed(g) => {
            let (x_hi, x_lo) = back_transform(&g.u, hi, lo);
            // Containment must also hold for the back-transformed bounds.
            for i in 0..x.len() {
                eps_min = eps_min.min(x_hi[i] - x[i]).min(x[i] - x_lo[i]);
            }
            (x_hi, x_lo, Some(hi.to_vec()), Some(lo.to_vec()))
        }
    };
    StepRecord {
        k,
        x: x.to_vec(),
        x_hi,
        x_lo,
        z_hi,
        z_lo,
        positivity_ok: eps_min >= -POSITIVITY_TOL,
        eps,
        eps_min,
        transition: None,
    }
}

fn make_transition(
    monitors: &Monitors,
    w: Vec<f64>,
    delta_p: Vec<f64>,
    delta_w: Vec<f64>,
    eps: &[f64],
    eps_next: &[f64],
) -> TransitionRecord {
    let (sector_value, sector_ok) = match &monitors.psi {
        Some(psi) => {
            let gap = matops::vec_sub(&psi.mat_vec(eps), &delta_p);
            let value: f64 = gap.iter().zip(&delta_p).map(|(a, b)| a * b).sum();
            (Some(value), Some(value >= -QUAD_TOL))
        }
        None => (None, None),
    };
    let (lyapunov_slack, lyapunov_ok) = match monitors.lyapunov(eps) {
        Some(v_now) => {
            let v_next = monitors.lyapunov(eps_next).expect("P present");
            let slack = monitors.lambda * v_now + monitors.gamma * matops::vec_norm2(&delta_w) - v_next;
            (Some(slack), Some(slack >= -QUAD_TOL))
        }
        None => (None, None),
    };
    TransitionRecord { w, delta_p, delta_w, sector_value, sector_ok, lyapunov_slack, lyapunov_ok }
}

/// Simulates the plant x⁺ = Ax + p(x) + w (disturbance drawn uniformly from
/// the model's box, seeded) alongside the observer, recording per-step
/// containment and — when a certificate is supplied — the sector and Lyapunov
/// monitors it certifies.
pub fn simulate(
    model: &SystemModel,
    gains: &ObserverGains,
    certificate: Option<&Certificate>,
    x0: &[f64],
    x0_hi: &[f64],
    x0_lo: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<ObserverTrace, ObserverError> {
    gains.validate(model)?;
    if x0.len() != model.n || x0_hi.len() != model.n || x0_lo.len() != model.n {
        return Err(ObserverError::Dimension("initial state/bounds must have length n".into()));
    }
    check_initial_order(x0, x0_hi, x0_lo)?;
    let monitors = Monitors::from_certificate(model, gains, certificate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x = x0.to_vec();
    let (mut hi, mut lo) = match gains {
        ObserverGains::Direct(_) => (x0_hi.to_vec(), x0_lo.to_vec()),
        ObserverGains::Transformed(g) => init_transformed(&g.s, x0_hi, x0_lo),
    };

    let mut records = Vec::with_capacity(horizon + 1);
    let mut record = make_record(gains, 0, &x, (&hi, &lo));
    for _ in 0..horizon {
        let w: Vec<f64> = (0..model.n)
            .map(|i| {
                if model.w_hi[i] > model.w_lo[i] {
                    rng.random_range(model.w_lo[i]..=model.w_hi[i])
                } else {
                    model.w_lo[i]
                }
            })
            .collect();
        let y = model.c.mat_vec(&x);
        let ((next_hi, next_lo), delta_p) = observer_step(gains, model, (&hi, &lo), &x, &y)?;
        let mut x_next = matops::vec_add(&model.a.mat_vec(&x), &model.eval_p(&x));
        x_next = matops::vec_add(&x_next, &w);

        let delta_w = stacked_disturbance(gains, model, &w);
        let eps_next = stacked_error(gains, (&next_hi, &next_lo), &x_next);
        record.transition = Some(make_transition(&monitors, w, delta_p, delta_w, &record.eps, &eps_next));
        records.push(record);

        x = x_next;
        hi = next_hi;
        lo = next_lo;
        record = make_record(gains, records.len(), &x, (&hi, &lo));
    }
    records.push(record);

    Ok(ObserverTrace { mode: gains.mode(), seed, horizon, records, max_defect: None })
}

/// Sampled-data run: the truth follows the continuous dynamics (advanced by
/// the reference integrator), the observer steps once per sample on the
/// discretized `model`, and the per-sample defect between the two is recorded
/// and checked against the declared bound h·ϱ(h) — exceeding it invalidates
/// the run with a hard error.
pub fn simulate_sampled(
    config: &SampledDataConfig,
    model: &SystemModel,
    gains: &ObserverGains,
    certificate: Option<&Certificate>,
    x0: &[f64],
    x0_hi: &[f64],
    x0_lo: &[f64],
    horizon: usize,
) -> Result<ObserverTrace, ObserverError> {
    gains.validate(model)?;
    if config.a_c.rows() != model.n {
        return Err(ObserverError::Config("A_c dimension does not match the discrete model".into()));
    }
    let discrete_a = &Mat::identity(model.n) + &config.a_c.scale(config.h);
    if (&model.a - &discrete_a).max_abs() > 1e-12 {
        return Err(ObserverError::Config(
            "discrete model A does not match I + h*A_c for the configured plant".into(),
        ));
    }
    let bound = config.defect_bound();
    for i in 0..model.n {
        if (model.w_hi[i] - bound).abs() > 1e-12 || (model.w_lo[i] + bound).abs() > 1e-12 {
            return Err(ObserverError::Config(format!(
                "discrete model disturbance box must be ±h*rho(h) = ±{bound:.6e} (component {i} is [{}, {}])",
                model.w_lo[i], model.w_hi[i]
            )));
        }
    }
    check_initial_order(x0, x0_hi, x0_lo)?;
    let monitors = Monitors::from_certificate(model, gains, certificate)?;

    let mut x = x0.to_vec();
    let (mut hi, mut lo) = match gains {
        ObserverGains::Direct(_) => (x0_hi.to_vec(), x0_lo.to_vec()),
        ObserverGains::Transformed(g) => init_transformed(&g.s, x0_hi, x0_lo),
    };

    let mut max_defect = 0.0f64;
    let mut records = Vec::with_capacity(horizon + 1);
    let mut record = make_record(gains, 0, &x, (&hi, &lo));
    for k in 0..horizon {
        let y = model.c.mat_vec(&x);
        let ((next_hi, next_lo), delta_p) = observer_step(gains, model, (&hi, &lo), &x, &y)?;
        let x_next = config.advance_truth(&x)?;

        // Defect of the Euler map relative to the reference trajectory.
        let euler = matops::vec_add(&model.a.mat_vec(&x), &model.eval_p(&x));
        let w = matops::vec_sub(&x_next, &euler);
        let defect = matops::vec_norm2(&w);
        max_defect = max_defect.max(defect);
        if defect > bound + 1e-12 {
            return Err(ObserverError::DefectBound { step: k, defect, bound });
        }

        let delta_w = stacked_disturbance(gains, model, &w);
        let eps_next = stacked_error(gains, (&next_hi, &next_lo), &x_next);
        record.transition = Some(make_transition(&monitors, w, delta_p, delta_w, &record.eps, &eps_next));
        records.push(record);

        x = x_next;
        hi = next_hi;
        lo = next_lo;
        record = make_record(gains, records.len(), &x, (&hi, &lo));
    }
    records.push(record);

    Ok(ObserverTrace {
        mode: gains.mode(),
        seed: 0,
        horizon,
        records,
        max_defect: Some(max_defect),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pendulum_model;
    use crate::observer::DirectObserverGains;
    use approx::assert_abs_diff_eq;

    fn containment_gains(model: &SystemModel) -> ObserverGains {
        let g = &model.d_hi - &model.d_lo;
        ObserverGains::Direct(
            DirectObserverGains::new(Mat::zeros(2, 1), Mat::zeros(2, 1), Mat::zeros(2, 2), g).unwrap(),
        )
    }

    #[test]
    fn collapsed_interval_stays_collapsed_without_disturbance() {
        let mut model = pendulum_model(0.065);
        model.w_lo = vec![0.0; 2];
        model.w_hi = vec![0.0; 2];
        let gains = containment_gains(&model);
        let x0 = vec![0.4, -0.1];
        let trace = simulate(&model, &gains, None, &x0, &x0, &x0, 200, 3).unwrap();
        assert_eq!(trace.records.len(), 201);
        for r in &trace.records {
            assert_abs_diff_eq!(r.eps_min, 0.0, epsilon = 1e-12);
            assert!(r.positivity_ok);
        }
        assert_eq!(trace.positivity_violations(), 0);
    }

    #[test]
    fn containment_holds_under_random_disturbance() {
        let model = pendulum_model(0.065);
        let gains = containment_gains(&model);
        for seed in 0..5 {
            let trace = simulate(
                &model,
                &gains,
                None,
                &[0.3, 0.2],
                &[0.4, 0.3],
                &[0.2, 0.1],
                300,
                seed,
            )
            .unwrap();
            assert_eq!(trace.positivity_violations(), 0, "seed {seed}");
            assert!(trace.min_eps() >= -POSITIVITY_TOL);
        }
    }

    #[test]
    fn inverted_initial_interval_rejected() {
        let model = pendulum_model(0.065);
        let gains = containment_gains(&model);
        let err = simulate(&model, &gains, None, &[0.0, 0.0], &[-0.1, 0.1], &[0.1, -0.1], 10, 0);
        assert!(matches!(err, Err(ObserverError::InitialInterval(_))));
    }

    #[test]
    fn sampled_run_defect_stays_under_declared_bound() {
        let h = 0.065;
        let model = pendulum_model(h);
        // Declared box is ±√2·h².
        let expect = std::f64::consts::SQRT_2 * h * h;
        assert_abs_diff_eq!(model.w_hi[0], expect, epsilon = 1e-15);
        assert_abs_diff_eq!(expect, 0.005975, epsilon = 1e-6);
        let config = SampledDataConfig::new(
            Mat::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]),
            NonlinearitySpec::new("pendulum_sin", vec![1.0]),
            h,
            |h| std::f64::consts::SQRT_2 * h,
            50,
        )
        .unwrap();
        let gains = containment_gains(&model);
        let trace = simulate_sampled(
            &config,
            &model,
            &gains,
            None,
            &[0.5, 0.3],
            &[0.6, 0.4],
            &[0.4, 0.2],
            500,
        )
        .unwrap();
        let max_defect = trace.max_defect.unwrap();
        assert!(max_defect > 0.0 && max_defect <= config.defect_bound());
        assert_eq!(trace.positivity_violations(), 0);
    }

    #[test]
    fn sampled_equilibrium_stays_at_rest() {
        let h = 0.065;
        let model = pendulum_model(h);
        let config = SampledDataConfig::new(
            Mat::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]),
            NonlinearitySpec::new("pendulum_sin", vec![1.0]),
            h,
            |h| std::f64::consts::SQRT_2 * h,
            50,
        )
        .unwrap();
        let gains = containment_gains(&model);
        let trace = simulate_sampled(
            &config,
            &model,
            &gains,
            None,
            &[0.0, 0.0],
            &[0.1, 0.1],
            &[-0.1, -0.1],
            200,
        )
        .unwrap();
        for r in &trace.records {
            assert_abs_diff_eq!(r.x[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.x[1], 0.0, epsilon = 1e-12);
            assert!(r.positivity_ok);
        }
    }

    #[test]
    fn sampled_run_with_wrong_disturbance_box_rejected() {
        let h = 0.065;
        let mut model = pendulum_model(h);
        model.w_hi = vec![1.0, 1.0];
        model.w_lo = vec![-1.0, -1.0];
        let config = SampledDataConfig::new(
            Mat::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]),
            NonlinearitySpec::new("pendulum_sin", vec![1.0]),
            h,
            |h| std::f64::consts::SQRT_2 * h,
            50,
        )
        .unwrap();
        let gains = containment_gains(&model);
        let err = simulate_sampled(&config, &model, &gains, None, &[0.0; 2], &[0.1; 2], &[-0.1; 2], 10);
        assert!(matches!(err, Err(ObserverError::Config(_))));
    }

    #[test]
    fn tight_defect_bound_reported_loudly() {
        let h = 0.065;
        let mut model = pendulum_model(h);
        // Declare an absurdly tight defect bound; the run must abort.
        let tiny = 1e-12;
        model.w_hi = vec![h * tiny; 2];
        model.w_lo = vec![-h * tiny; 2];
        let config = SampledDataConfig::new(
            Mat::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]),
            NonlinearitySpec::new("pendulum_sin", vec![1.0]),
            h,
            |_| 1e-12,
            50,
        )
        .unwrap();
        let gains = containment_gains(&model);
        let err = simulate_sampled(&config, &model, &gains, None, &[0.5, 0.3], &[0.6, 0.4], &[0.4, 0.2], 50);
        assert!(matches!(err, Err(ObserverError::DefectBound { .. })));
    }

    #[test]
    fn substep_floor_enforced() {
        let bad = SampledDataConfig::new(
            Mat::identity(2),
            NonlinearitySpec::zero(),
            0.05,
            |h| h,
            5,
        );
        assert!(matches!(bad, Err(ObserverError::Config(_))));
    }
}
