//! Worst-case (H∞) estimation and control at a fixed disturbance-gain level
//! γ, plus bisection for the smallest feasible level.
//!
//! Both syntheses run an indefinite Riccati recursion whose per-step inertia
//! certifies feasibility: the estimator sweeps forward from `P₀ = 0`, the
//! controller backward from `P_T = 0`. Infeasibility surfaces as
//! [`Error::Infeasible`] with the step at which the inertia breaks.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::linalg::{block_diag, checked_inverse, hstack, inertia, pd_inverse, sym, vstack};
use crate::system::{ControlSystem, EstimationSystem, Signal};
use crate::{Error, Result};

/// Result of a γ bisection: `gamma_opt` is the smallest level verified
/// feasible (`hi`), bracketed from below by the largest level verified
/// infeasible (`lo`).
#[derive(Debug, Clone, Serialize)]
pub struct GammaCertificate {
    pub gamma_opt: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
    pub feasible_at_opt: bool,
}

/// Bisect the feasibility boundary of a monotone predicate, starting from
/// the bracket seed `[0, 1]` and doubling upward until feasible. Returns
/// [`Error::UnboundedGamma`] if no feasible level is found below `2⁶⁰`.
pub fn bisect_gamma(feasible: impl Fn(f64) -> Result<bool>, tol: f64) -> Result<GammaCertificate> {
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("bisection tolerance must be positive, got {tol}")));
    }
    let cap = (1u64 << 60) as f64;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut iterations = 0;
    while !feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if hi > cap {
            return Err(Error::UnboundedGamma);
        }
    }
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(GammaCertificate { gamma_opt: hi, lo, hi, iterations, feasible_at_opt: true })
}

/// Causal worst-case filter at level γ: innovation-form observer whose gains
/// come from the forward indefinite Riccati recursion.
#[derive(Debug, Clone)]
pub struct HinfFilter {
    pub gamma: f64,
    /// Innovation gains `K_t = P_t C_tᵀ (I + C_t P_t C_tᵀ)⁻¹`.
    pub gains: Vec<DMatrix<f64>>,
    /// Riccati iterates `P_t`, one per step.
    pub riccati: Vec<DMatrix<f64>>,
    a: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    l: Vec<DMatrix<f64>>,
}

impl HinfFilter {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// State transition used between steps `t` and `t + 1`.
    pub fn transition(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }

    /// Filter a measurement record into target estimates `ŝ_t = L_t x̂_{t|t}`.
    pub fn run(&self, y: &Signal) -> Result<Signal> {
        Ok(self.run_with_state(y)?.0)
    }

    /// Also expose the filtered state trajectory `x̂_{t|t}`.
    pub fn run_with_state(&self, y: &Signal) -> Result<(Signal, Signal)> {
        let horizon = self.horizon();
        if y.len() != horizon {
            return Err(Error::dim("measurement record length", horizon, y.len()));
        }
        let n = self.a[0].nrows();
        let mut x_hat = nalgebra::DVector::zeros(n);
        let mut estimates = Vec::with_capacity(horizon);
        let mut states = Vec::with_capacity(horizon);
        for t in 0..horizon {
            // One-step prediction is A_{t-1} x̂_{t-1|t-1}; at t = 0 it is the
            // known zero initial state.
            let pred = if t == 0 { x_hat.clone() } else { &self.a[t - 1] * &x_hat };
            x_hat = &pred + &self.gains[t] * (&y.values[t] - &self.c[t] * &pred);
            estimates.push(&self.l[t] * &x_hat);
            states.push(x_hat.clone());
        }
        Ok((Signal::new(estimates)?, Signal::new(states)?))
    }
}

/// Synthesize the worst-case filter at level γ, or report the step at which
/// the level is infeasible.
pub fn hinf_estimator(sys: &EstimationSystem, gamma: f64) -> Result<HinfFilter> {
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let (p_dim, r_dim) = (sys.measurement_dim(), sys.target_dim());
    let id_p = DMatrix::identity(p_dim, p_dim);
    let signature = block_diag(&[&id_p, &(DMatrix::identity(r_dim, r_dim) * (-gamma * gamma))]);

    let mut p = DMatrix::zeros(n, n);
    let mut riccati = Vec::with_capacity(horizon);
    let mut gains = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let cl = vstack(&[&sys.c[t], &sys.l[t]]);
        let sigma = sym(&(&signature + &cl * &p * cl.transpose()));
        let (pos, neg, zero) = inertia(&sigma);
        if pos != p_dim || neg != r_dim || zero != 0 {
            return Err(Error::Infeasible { step: t });
        }
        let innov = sym(&(&id_p + &sys.c[t] * &p * sys.c[t].transpose()));
        let innov_inv = pd_inverse(&innov, "innovation covariance", t).map_err(|_| Error::Infeasible { step: t })?;
        gains.push(&p * sys.c[t].transpose() * innov_inv);
        riccati.push(p.clone());
        if t + 1 < horizon {
            let cross = &sys.a[t] * &p * cl.transpose();
            let solved = sigma
                .clone()
                .lu()
                .solve(&(&cl * &p * sys.a[t].transpose()))
                .ok_or(Error::Infeasible { step: t })?;
            let next = &sys.a[t] * &p * sys.a[t].transpose() + &sys.b[t] * sys.b[t].transpose()
                - cross * solved;
            p = sym(&next);
        }
    }

    Ok(HinfFilter { gamma, gains, riccati, a: sys.a.clone(), c: sys.c.clone(), l: sys.l.clone() })
}

/// Certainty-equivalence filter: the time-varying Kalman recursion with unit
/// noise weights (the γ → ∞ limit of the worst-case recursion, dropping the
/// indefinite target rows). There is no level to certify, so the `gamma`
/// field is set to infinity; the recursion is unconditionally feasible.
pub fn kalman_estimator(sys: &EstimationSystem) -> Result<HinfFilter> {
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let p_dim = sys.measurement_dim();
    let id_p = DMatrix::identity(p_dim, p_dim);

    let mut p = DMatrix::zeros(n, n);
    let mut riccati = Vec::with_capacity(horizon);
    let mut gains = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let innov = sym(&(&id_p + &sys.c[t] * &p * sys.c[t].transpose()));
        let innov_inv = pd_inverse(&innov, "innovation covariance", t)?;
        let gain = &p * sys.c[t].transpose() * &innov_inv;
        gains.push(gain.clone());
        riccati.push(p.clone());
        if t + 1 < horizon {
            let filtered = &p - &gain * &sys.c[t] * &p;
            p = sym(&(&sys.a[t] * filtered * sys.a[t].transpose()
                + &sys.b[t] * sys.b[t].transpose()));
        }
    }

    Ok(HinfFilter {
        gamma: f64::INFINITY,
        gains,
        riccati,
        a: sys.a.clone(),
        c: sys.c.clone(),
        l: sys.l.clone(),
    })
}

/// `Ok(true)` iff the level-γ estimation recursion stays feasible; errors
/// other than infeasibility propagate.
pub fn estimation_feasible(sys: &EstimationSystem, gamma: f64) -> Result<bool> {
    match hinf_estimator(sys, gamma) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Bisect the smallest feasible estimation level and synthesize there.
pub fn optimal_hinf_estimator(
    sys: &EstimationSystem,
    tol: f64,
) -> Result<(HinfFilter, GammaCertificate)> {
    let cert = bisect_gamma(|g| estimation_feasible(sys, g), tol)?;
    Ok((hinf_estimator(sys, cert.gamma_opt)?, cert))
}

/// Full-information worst-case controller at level γ:
/// `u_t = −F_t x_t − G_t w_t` from the backward indefinite Riccati recursion.
#[derive(Debug, Clone)]
pub struct HinfController {
    pub gamma: f64,
    /// Riccati iterates `P_t` for `t = 0..T` (`P_T = 0`).
    pub riccati: Vec<DMatrix<f64>>,
    /// State feedback `F_t = H_t⁻¹ B_{u,t}ᵀ P_{t+1} A_t`.
    pub state_feedback: Vec<DMatrix<f64>>,
    /// Disturbance feedforward `G_t = H_t⁻¹ B_{u,t}ᵀ P_{t+1} B_{w,t}`.
    pub disturbance_feedforward: Vec<DMatrix<f64>>,
    sys: ControlSystem,
}

impl HinfController {
    pub fn horizon(&self) -> usize {
        self.state_feedback.len()
    }

    /// Control input at step `t` given the current state and disturbance.
    pub fn action(&self, t: usize, x: &nalgebra::DVector<f64>, w: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        -(&self.state_feedback[t] * x) - &self.disturbance_feedforward[t] * w
    }

    /// Close the loop over a disturbance record; returns the input and state
    /// trajectories with the incurred quadratic cost.
    pub fn run(&self, w: &Signal) -> Result<(Signal, Signal, f64)> {
        let horizon = self.horizon();
        if w.len() != horizon {
            return Err(Error::dim("disturbance record length", horizon, w.len()));
        }
        let mut x = nalgebra::DVector::zeros(self.sys.state_dim());
        let mut u_values = Vec::with_capacity(horizon);
        let mut x_values = Vec::with_capacity(horizon);
        let mut cost = 0.0;
        for t in 0..horizon {
            let u = self.action(t, &x, &w.values[t]);
            cost += (x.transpose() * &self.sys.q[t] * &x)[(0, 0)]
                + (u.transpose() * &self.sys.r[t] * &u)[(0, 0)];
            x_values.push(x.clone());
            x = &self.sys.a[t] * &x + &self.sys.bu[t] * &u + &self.sys.bw[t] * &w.values[t];
            u_values.push(u);
        }
        Ok((Signal::new(u_values)?, Signal::new(x_values)?, cost))
    }
}

/// Synthesize the worst-case controller at level γ, or report the step at
/// which the level is infeasible.
pub fn hinf_controller(sys: &ControlSystem, gamma: f64) -> Result<HinfController> {
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let (m, p_dim) = (sys.control_dim(), sys.disturbance_dim());
    let signature_w = DMatrix::identity(p_dim, p_dim) * (-gamma * gamma);

    let mut riccati = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut feedback = vec![DMatrix::zeros(m, n); horizon];
    let mut feedforward = vec![DMatrix::zeros(m, p_dim); horizon];
    for t in (0..horizon).rev() {
        let p_next = riccati[t + 1].clone();
        let b_hat = hstack(&[&sys.bu[t], &sys.bw[t]]);
        let h_hat = sym(&(block_diag(&[&sys.r[t], &signature_w]) + b_hat.transpose() * &p_next * &b_hat));
        // Feasibility needs both the control block positive definite and the
        // full mixed weight carrying exactly the disturbance block's negative
        // directions.
        let h_ctrl = sym(&(&sys.r[t] + sys.bu[t].transpose() * &p_next * &sys.bu[t]));
        let h_ctrl_inv = match pd_inverse(&h_ctrl, "control weight", t) {
            Ok(inv) => inv,
            Err(_) => return Err(Error::Infeasible { step: t }),
        };
        let (pos, neg, zero) = inertia(&h_hat);
        if pos != m || neg != p_dim || zero != 0 {
            return Err(Error::Infeasible { step: t });
        }
        feedback[t] = &h_ctrl_inv * sys.bu[t].transpose() * &p_next * &sys.a[t];
        feedforward[t] = &h_ctrl_inv * sys.bu[t].transpose() * &p_next * &sys.bw[t];
        let cross = sys.a[t].transpose() * &p_next * &b_hat;
        let solved = h_hat
            .clone()
            .lu()
            .solve(&(b_hat.transpose() * &p_next * &sys.a[t]))
            .ok_or(Error::Infeasible { step: t })?;
        let p_t = &sys.q[t] + sys.a[t].transpose() * &p_next * &sys.a[t] - cross * solved;
        riccati[t] = sym(&p_t);
    }

    Ok(HinfController {
        gamma,
        riccati,
        state_feedback: feedback,
        disturbance_feedforward: feedforward,
        sys: sys.clone(),
    })
}

/// Certainty-equivalence controller: gains from the plain quadratic value
/// iteration (the γ → ∞ limit of the worst-case recursion, dropping the
/// adversarial disturbance column), with the current disturbance fed forward
/// through the same value matrix. There is no level to certify, so the
/// `gamma` field is set to infinity and synthesis succeeds whenever the
/// control weights stay positive definite.
pub fn certainty_equivalent_controller(sys: &ControlSystem) -> Result<HinfController> {
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let (m, p_dim) = (sys.control_dim(), sys.disturbance_dim());
    let mut riccati = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut feedback = vec![DMatrix::zeros(m, n); horizon];
    let mut feedforward = vec![DMatrix::zeros(m, p_dim); horizon];
    for t in (0..horizon).rev() {
        let p_next = riccati[t + 1].clone();
        let h = sym(&(&sys.r[t] + sys.bu[t].transpose() * &p_next * &sys.bu[t]));
        let h_inv = pd_inverse(&h, "control weight", t)?;
        feedback[t] = &h_inv * sys.bu[t].transpose() * &p_next * &sys.a[t];
        feedforward[t] = &h_inv * sys.bu[t].transpose() * &p_next * &sys.bw[t];
        let p_t = &sys.q[t] + sys.a[t].transpose() * &p_next * &sys.a[t]
            - sys.a[t].transpose() * &p_next * &sys.bu[t] * &feedback[t];
        riccati[t] = sym(&p_t);
    }
    Ok(HinfController {
        gamma: f64::INFINITY,
        riccati,
        state_feedback: feedback,
        disturbance_feedforward: feedforward,
        sys: sys.clone(),
    })
}

/// `Ok(true)` iff the level-γ control recursion stays feasible.
pub fn control_feasible(sys: &ControlSystem, gamma: f64) -> Result<bool> {
    match hinf_controller(sys, gamma) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Bisect the smallest feasible control level and synthesize there.
pub fn optimal_hinf_controller(
    sys: &ControlSystem,
    tol: f64,
) -> Result<(HinfController, GammaCertificate)> {
    let cert = bisect_gamma(|g| control_feasible(sys, g), tol)?;
    Ok((hinf_controller(sys, cert.gamma_opt)?, cert))
}

/// Quadratic-cost LQR baseline: `u_t = −F_t x_t` with the standard backward
/// Riccati recursion and zero terminal weight. Used as the γ → ∞ comparator.
#[derive(Debug, Clone)]
pub struct LqrController {
    pub state_feedback: Vec<DMatrix<f64>>,
    sys: ControlSystem,
}

impl LqrController {
    pub fn horizon(&self) -> usize {
        self.state_feedback.len()
    }

    pub fn action(&self, t: usize, x: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        -(&self.state_feedback[t] * x)
    }

    pub fn run(&self, w: &Signal) -> Result<(Signal, Signal, f64)> {
        let horizon = self.horizon();
        if w.len() != horizon {
            return Err(Error::dim("disturbance record length", horizon, w.len()));
        }
        let mut x = nalgebra::DVector::zeros(self.sys.state_dim());
        let mut u_values = Vec::with_capacity(horizon);
        let mut x_values = Vec::with_capacity(horizon);
        let mut cost = 0.0;
        for t in 0..horizon {
            let u = self.action(t, &x);
            cost += (x.transpose() * &self.sys.q[t] * &x)[(0, 0)]
                + (u.transpose() * &self.sys.r[t] * &u)[(0, 0)];
            x_values.push(x.clone());
            x = &self.sys.a[t] * &x + &self.sys.bu[t] * &u + &self.sys.bw[t] * &w.values[t];
            u_values.push(u);
        }
        Ok((Signal::new(u_values)?, Signal::new(x_values)?, cost))
    }
}

/// Synthesize the finite-horizon LQR state feedback (zero terminal weight).
pub fn lqr_controller(sys: &ControlSystem) -> Result<LqrController> {
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let mut p = DMatrix::zeros(n, n);
    let mut feedback = vec![DMatrix::zeros(sys.control_dim(), n); horizon];
    for t in (0..horizon).rev() {
        let h = sym(&(&sys.r[t] + sys.bu[t].transpose() * &p * &sys.bu[t]));
        let h_inv = checked_inverse(&h, "control weight", t)?;
        feedback[t] = &h_inv * sys.bu[t].transpose() * &p * &sys.a[t];
        let next = &sys.q[t] + sys.a[t].transpose() * &p * &sys.a[t]
            - sys.a[t].transpose() * &p * &sys.bu[t] * &feedback[t];
        p = sym(&next);
    }
    Ok(LqrController { state_feedback: feedback, sys: sys.clone() })
}
