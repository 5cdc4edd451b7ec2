//! Nonlinear benchmark plants: the inverted pendulum (control) and a
//! frequency-modulation channel (estimation). Each model packages the
//! continuous-time drift, the observation map where one exists, analytic
//! Jacobians, and a forward-Euler discretization step, so the receding-
//! horizon loops can linearize and re-synthesize at every step.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

type DriftFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type DriftJacFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ObserveFn = Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
type ObserveJacFn = Box<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;

/// Continuous-time model `ẋ = f(x, u, w)` with optional observation
/// `y = h(x, t) + v`, discretized by forward Euler with step `delta`.
pub struct NonlinearModel {
    pub state_dim: usize,
    pub control_dim: usize,
    pub disturbance_dim: usize,
    pub observation_dim: usize,
    pub delta: f64,
    drift: DriftFn,
    jac_x: DriftJacFn,
    jac_u: DriftJacFn,
    jac_w: DriftJacFn,
    observe: Option<ObserveFn>,
    jac_obs: Option<ObserveJacFn>,
}

impl NonlinearModel {
    pub fn drift(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x, u, w)
    }

    pub fn jac_x(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_x)(x, u, w)
    }

    pub fn jac_u(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_u)(x, u, w)
    }

    pub fn jac_w(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_w)(x, u, w)
    }

    /// Observation value `h(x, t)`, for models that have one.
    pub fn observe(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        match &self.observe {
            Some(h) => Ok(h(x, t)),
            None => Err(Error::Validation("model has no observation map".into())),
        }
    }

    /// Observation Jacobian `∂h/∂x` at `(x, t)`.
    pub fn jac_obs(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        match &self.jac_obs {
            Some(j) => Ok(j(x, t)),
            None => Err(Error::Validation("model has no observation map".into())),
        }
    }

    /// One forward-Euler step `x + Δ·f(x, u, w)`.
    pub fn euler_step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        x + self.drift(x, u, w) * self.delta
    }

    /// Euler-discretized linearization at `(x, u, w)`: transition
    /// `I + Δ·∂f/∂x` and input matrices `Δ·∂f/∂u`, `Δ·∂f/∂w`.
    pub fn linearize_dynamics(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::identity(self.state_dim, self.state_dim)
            + self.jac_x(x, u, w) * self.delta;
        let bu = self.jac_u(x, u, w) * self.delta;
        let bw = self.jac_w(x, u, w) * self.delta;
        (a, bu, bw)
    }
}

/// Inverted pendulum: states `(θ, θ̇)`, one control input and one matched
/// disturbance, both entering through the torque channel.
pub fn pendulum_model(m: f64, g: f64, l: f64, j: f64, delta: f64) -> Result<NonlinearModel> {
    for (name, v) in [("m", m), ("g", g), ("l", l), ("J", j), ("delta", delta)] {
        if !(v > 0.0) {
            return Err(Error::Validation(format!("pendulum parameter {name} must be positive, got {v}")));
        }
    }
    let gravity = m * g * l / j;
    let torque = l / j;
    Ok(NonlinearModel {
        state_dim: 2,
        control_dim: 1,
        disturbance_dim: 1,
        observation_dim: 0,
        delta,
        drift: Box::new(move |x, u, w| {
            let theta = x[0];
            DVector::from_vec(vec![
                x[1],
                gravity * theta.sin() + torque * (u[0] + w[0]) * theta.cos(),
            ])
        }),
        jac_x: Box::new(move |x, u, w| {
            let theta = x[0];
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, gravity * theta.cos() - torque * (u[0] + w[0]) * theta.sin(), 0.0],
            )
        }),
        jac_u: Box::new(move |x, _, _| {
            DMatrix::from_column_slice(2, 1, &[0.0, torque * x[0].cos()])
        }),
        jac_w: Box::new(move |x, _, _| {
            DMatrix::from_column_slice(2, 1, &[0.0, torque * x[0].cos()])
        }),
        observe: None,
        jac_obs: None,
    })
}

/// Frequency modulation: states `(λ, θ)` with linear drift (leaky integrator
/// feeding a phase accumulator driven by the message `u`) and the nonlinear
/// phase-modulated observation `y = √2·sin(ω_c t + θ)`.
pub fn fm_model(beta: f64, omega_c: f64, delta: f64) -> Result<NonlinearModel> {
    for (name, v) in [("beta", beta), ("omega_c", omega_c), ("delta", delta)] {
        if !(v > 0.0) {
            return Err(Error::Validation(format!("FM parameter {name} must be positive, got {v}")));
        }
    }
    Ok(NonlinearModel {
        state_dim: 2,
        control_dim: 1,
        disturbance_dim: 0,
        observation_dim: 1,
        delta,
        drift: Box::new(move |x, u, _| DVector::from_vec(vec![-x[0] / beta + u[0], x[0]])),
        jac_x: Box::new(move |_, _, _| {
            DMatrix::from_row_slice(2, 2, &[-1.0 / beta, 0.0, 1.0, 0.0])
        }),
        jac_u: Box::new(|_, _, _| DMatrix::from_column_slice(2, 1, &[1.0, 0.0])),
        jac_w: Box::new(|_, _, _| DMatrix::zeros(2, 0)),
        observe: Some(Box::new(move |x, t| {
            DVector::from_vec(vec![(omega_c * t + x[1]).sin() * 2f64.sqrt()])
        })),
        jac_obs: Some(Box::new(move |x, t| {
            DMatrix::from_row_slice(1, 2, &[0.0, (omega_c * t + x[1]).cos() * 2f64.sqrt()])
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FD_STEP: f64 = 1e-6;
    const FD_RTOL: f64 = 1e-5;

    fn fd_check(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) {
        let scale = analytic.abs().max().max(1.0);
        let diff = (analytic - numeric).abs().max();
        assert!(diff / scale <= FD_RTOL, "Jacobian mismatch {diff:.3e} (scale {scale:.3e})");
    }

    fn fd_drift_jacobian(
        model: &NonlinearModel,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
        arg: usize,
    ) -> DMatrix<f64> {
        let dims = [x.len(), u.len(), w.len()];
        let mut out = DMatrix::zeros(model.state_dim, dims[arg]);
        for j in 0..dims[arg] {
            let mut plus = [x.clone(), u.clone(), w.clone()];
            let mut minus = plus.clone();
            plus[arg][j] += FD_STEP;
            minus[arg][j] -= FD_STEP;
            let fp = model.drift(&plus[0], &plus[1], &plus[2]);
            let fm = model.drift(&minus[0], &minus[1], &minus[2]);
            out.set_column(j, &((fp - fm) / (2.0 * FD_STEP)));
        }
        out
    }

    #[test]
    fn pendulum_jacobians_match_finite_differences() {
        let model = pendulum_model(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let u = DVector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0));
            let w = DVector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0));
            fd_check(&model.jac_x(&x, &u, &w), &fd_drift_jacobian(&model, &x, &u, &w, 0));
            fd_check(&model.jac_u(&x, &u, &w), &fd_drift_jacobian(&model, &x, &u, &w, 1));
            fd_check(&model.jac_w(&x, &u, &w), &fd_drift_jacobian(&model, &x, &u, &w, 2));
        }
    }

    #[test]
    fn fm_jacobians_match_finite_differences() {
        let model = fm_model(1.0, 1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(402);
        let w = DVector::zeros(0);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let u = DVector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(0.0..10.0);
            fd_check(&model.jac_x(&x, &u, &w), &fd_drift_jacobian(&model, &x, &u, &w, 0));
            fd_check(&model.jac_u(&x, &u, &w), &fd_drift_jacobian(&model, &x, &u, &w, 1));

            let analytic = model.jac_obs(&x, t).unwrap();
            let mut numeric = DMatrix::zeros(1, 2);
            for j in 0..2 {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[j] += FD_STEP;
                minus[j] -= FD_STEP;
                let hp = model.observe(&plus, t).unwrap();
                let hm = model.observe(&minus, t).unwrap();
                numeric.set_column(j, &((hp - hm) / (2.0 * FD_STEP)));
            }
            fd_check(&analytic, &numeric);
        }
    }

    #[test]
    fn pendulum_equilibrium_and_tilt_values() {
        let model = pendulum_model(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let zero1 = DVector::zeros(1);
        let upright = model.drift(&DVector::zeros(2), &zero1, &zero1);
        assert_eq!(upright.abs().max(), 0.0);

        let tilted = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let f = model.drift(&tilted, &zero1, &zero1);
        assert_relative_eq!(f[1], 1.0, epsilon = 1e-12);

        let (a, _, _) = model.linearize_dynamics(&DVector::zeros(2), &zero1, &zero1);
        assert_relative_eq!(a[(0, 1)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(a[(1, 0)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fm_observation_values() {
        let model = fm_model(1.0, 1.0, 0.1).unwrap();
        let y0 = model.observe(&DVector::zeros(2), 0.0).unwrap();
        assert_eq!(y0[0], 0.0);

        let t = 0.7;
        let phase_locked = DVector::from_vec(vec![0.0, std::f64::consts::FRAC_PI_2 - t]);
        let y = model.observe(&phase_locked, t).unwrap();
        assert_relative_eq!(y[0], 2f64.sqrt(), epsilon = 1e-12);

        let dh = model.jac_obs(&DVector::zeros(2), 0.0).unwrap();
        assert_relative_eq!(dh[(0, 1)], 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(dh[(0, 0)], 0.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(pendulum_model(0.0, 1.0, 1.0, 1.0, 0.1), Err(Error::Validation(_))));
        assert!(matches!(pendulum_model(1.0, 1.0, 1.0, 1.0, -0.1), Err(Error::Validation(_))));
        assert!(matches!(fm_model(1.0, 0.0, 0.1), Err(Error::Validation(_))));
        let pend = pendulum_model(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        assert!(pend.observe(&DVector::zeros(2), 0.0).is_err());
    }
}
