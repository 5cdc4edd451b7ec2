//! Causal spectral factorizations of the finite-horizon Gram operators.
//!
//! Each factorization turns a dense block-operator identity into a causal
//! state-space model produced by an O(T) Riccati-type recursion:
//!
//! * `forward_factor`:       Δ₁ Δ₁ᵀ = I + F Fᵀ               (control side)
//! * `backward_factor_dual`: Δ₁ᵀ Δ₁ = I + Hᵀ H               (estimation side)
//! * `control_delta2`:       Δ₂ᵀ Δ₂ = γ²I + Gᵀ(I + F Fᵀ)⁻¹ G
//! * `estimation_s_factor`:  Sᵀ S   = I + γ⁻² L (I + Hᵀ H)⁻¹ Lᵀ
//! * `estimation_t_factor`:  T Tᵀ   = γ²(Sᵀ S)⁻¹ + L (I + Hᵀ H)⁻¹ Lᵀ
//!
//! The factors and their causal inverses drive the regret syntheses. Dense
//! residuals are only evaluated on request (they are O(T²) in memory) and
//! are computed from independently assembled operators.

use nalgebra::DMatrix;

use crate::linalg::{pd_inv_sqrt, pd_inverse, pinv, psd_sqrt, sym};
use crate::operators::{assemble_control_operators, assemble_estimation_operators, DenseOperator};
use crate::system::{ControlSystem, EstimationSystem, Signal};
use crate::{Error, Result};

/// Causal linear time-varying state-space model over a fixed horizon:
/// `ξ_{t+1} = A_t ξ_t + B_t a_t`, `b_t = C_t ξ_t + D_t a_t`, `ξ₀ = 0`.
/// The step `T-1` transition is stored but never fires.
#[derive(Debug, Clone)]
pub struct CausalStateSpaceModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
}

impl CausalStateSpaceModel {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        d: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let horizon = a.len();
        if horizon == 0 || b.len() != horizon || c.len() != horizon || d.len() != horizon {
            return Err(Error::dim(
                "state-space schedules",
                horizon,
                format!("{}/{}/{}", b.len(), c.len(), d.len()),
            ));
        }
        let n = a[0].nrows();
        for t in 0..horizon {
            let ok = a[t].shape() == (n, n)
                && b[t].nrows() == n
                && c[t].ncols() == n
                && d[t].shape() == (c[t].nrows(), b[t].ncols());
            if !ok {
                return Err(Error::dim(
                    format!("state-space matrices at step {t}"),
                    format!("state dim {n}"),
                    format!("A {:?} B {:?} C {:?} D {:?}", a[t].shape(), b[t].shape(), c[t].shape(), d[t].shape()),
                ));
            }
        }
        Ok(CausalStateSpaceModel { a, b, c, d })
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    /// Run the recursion on an input signal.
    pub fn apply(&self, input: &Signal) -> Result<Signal> {
        let horizon = self.horizon();
        if input.len() != horizon {
            return Err(Error::dim("model input length", horizon, input.len()));
        }
        let mut xi = nalgebra::DVector::zeros(self.state_dim());
        let mut out = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let a_t = &input.values[t];
            if a_t.len() != self.b[t].ncols() {
                return Err(Error::dim(format!("model input dim at step {t}"), self.b[t].ncols(), a_t.len()));
            }
            out.push(&self.c[t] * &xi + &self.d[t] * a_t);
            if t + 1 < horizon {
                xi = &self.a[t] * xi + &self.b[t] * a_t;
            }
        }
        Signal::new(out)
    }

    /// Materialize the block-lower-triangular dense operator.
    pub fn to_dense(&self) -> DenseOperator {
        let horizon = self.horizon();
        let row_dims: Vec<usize> = self.c.iter().map(|c| c.nrows()).collect();
        let col_dims: Vec<usize> = self.b.iter().map(|b| b.ncols()).collect();
        let mut op = DenseOperator::zeros(row_dims, col_dims);
        for tau in 0..horizon {
            op.set_block(tau, tau, &self.d[tau].clone());
            let mut prop = self.b[tau].clone();
            for t in tau + 1..horizon {
                op.set_block(t, tau, &(&self.c[t] * &prop));
                if t + 1 < horizon {
                    prop = &self.a[t] * prop;
                }
            }
        }
        op
    }

    /// Exchange inputs and outputs: requires every `D_t` square and well
    /// conditioned. The inverse of a causal model is again causal with
    /// `A - B D⁻¹ C`, `B D⁻¹`, `-D⁻¹ C`, `D⁻¹`.
    pub fn invert(&self) -> Result<CausalStateSpaceModel> {
        let mut a = Vec::with_capacity(self.horizon());
        let mut b = Vec::with_capacity(self.horizon());
        let mut c = Vec::with_capacity(self.horizon());
        let mut d = Vec::with_capacity(self.horizon());
        for t in 0..self.horizon() {
            if self.d[t].nrows() != self.d[t].ncols() {
                return Err(Error::Singular { step: t, what: "non-square feedthrough".into() });
            }
            let d_inv = crate::linalg::checked_inverse(&self.d[t], "feedthrough", t)?;
            let bd = &self.b[t] * &d_inv;
            a.push(&self.a[t] - &bd * &self.c[t]);
            c.push(-(&d_inv * &self.c[t]));
            b.push(bd);
            d.push(d_inv);
        }
        CausalStateSpaceModel::new(a, b, c, d)
    }
}

/// Invert a causal model by exchanging its inputs and outputs.
pub fn invert_causal_ss(model: &CausalStateSpaceModel) -> Result<CausalStateSpaceModel> {
    model.invert()
}

/// A causal factor, its causal inverse, and (on request) the relative
/// Frobenius residual of its defining Gram identity.
#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub factor: CausalStateSpaceModel,
    pub inverse: CausalStateSpaceModel,
    pub residual: Option<f64>,
}

fn relative_residual(actual: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (actual - target).norm() / target.norm().max(1.0)
}

fn require_r_absorbed(sys: &ControlSystem, context: &str) -> Result<()> {
    let m = sys.control_dim();
    let id = DMatrix::identity(m, m);
    for (t, r) in sys.r.iter().enumerate() {
        if (r - &id).abs().max() > 1e-12 {
            return Err(Error::Validation(format!(
                "{context} expects the input-normalized form (R = I); found R[{t}] ≠ I"
            )));
        }
    }
    Ok(())
}

/// Forward factorization `Δ₁ Δ₁ᵀ = I + F Fᵀ` for an input-normalized control
/// system, via a forward Riccati recursion started at `P₀ = 0`.
#[derive(Debug, Clone)]
pub struct ForwardFactorization {
    pub result: FactorizationResult,
    /// Gains `K_t = A_t P_t Q_t^{1/2} Σ_t⁻¹`.
    pub gains: Vec<DMatrix<f64>>,
    /// Innovation weights `Σ_t = I + Q_t^{1/2} P_t Q_t^{1/2}`.
    pub innovations: Vec<DMatrix<f64>>,
    /// Closed-loop transitions `Ã_t = A_t − K_t Q_t^{1/2}`.
    pub closed_loop_a: Vec<DMatrix<f64>>,
    /// State weight square roots `Q_t^{1/2}` reused by downstream factors.
    pub q_sqrt: Vec<DMatrix<f64>>,
    /// Riccati iterates `P_t`, one per step.
    pub state_cov: Vec<DMatrix<f64>>,
}

pub fn forward_factor(sys: &ControlSystem, compute_residual: bool) -> Result<ForwardFactorization> {
    require_r_absorbed(sys, "forward factorization")?;
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let id_n = DMatrix::identity(n, n);

    let q_sqrt: Vec<DMatrix<f64>> = sys.q.iter().map(psd_sqrt).collect();
    let mut p = DMatrix::zeros(n, n);
    let mut gains = Vec::with_capacity(horizon);
    let mut innovations = Vec::with_capacity(horizon);
    let mut closed = Vec::with_capacity(horizon);
    let mut covs = Vec::with_capacity(horizon);
    let mut model_b = Vec::with_capacity(horizon);
    let mut model_d = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let sigma = sym(&(&id_n + &q_sqrt[t] * &p * &q_sqrt[t]));
        let sigma_inv = pd_inverse(&sigma, "forward innovation weight", t)?;
        let k = &sys.a[t] * &p * &q_sqrt[t] * &sigma_inv;
        let sigma_sqrt = psd_sqrt(&sigma);
        model_b.push(&k * &sigma_sqrt);
        model_d.push(sigma_sqrt);
        closed.push(&sys.a[t] - &k * &q_sqrt[t]);
        covs.push(p.clone());
        let next = &sys.a[t] * &p * sys.a[t].transpose() + &sys.bu[t] * sys.bu[t].transpose()
            - &k * &sigma * k.transpose();
        p = sym(&next);
        gains.push(k);
        innovations.push(sigma);
    }

    let factor = CausalStateSpaceModel::new(sys.a.clone(), model_b, q_sqrt.clone(), model_d)?;
    let inverse = factor.invert()?;
    let residual = if compute_residual {
        let (f, _) = assemble_control_operators(sys)?;
        let dense = factor.to_dense();
        let target = DMatrix::identity(f.matrix.nrows(), f.matrix.nrows()) + &f.matrix * f.matrix.transpose();
        Some(relative_residual(&(&dense.matrix * dense.matrix.transpose()), &target))
    } else {
        None
    };

    Ok(ForwardFactorization {
        result: FactorizationResult { factor, inverse, residual },
        gains,
        innovations,
        closed_loop_a: closed,
        q_sqrt,
        state_cov: covs,
    })
}

/// Backward-dual factorization `Δ₁ᵀ Δ₁ = I + Hᵀ H` for an estimation system,
/// via a backward Riccati recursion started at `P_{T-1} = 0`.
#[derive(Debug, Clone)]
pub struct DualFactorization {
    pub result: FactorizationResult,
    /// Gains `K_t = A_tᵀ P_t B_t Σ_t⁻¹`.
    pub gains: Vec<DMatrix<f64>>,
    /// Innovation weights `Σ_t = I + B_tᵀ P_t B_t`.
    pub innovations: Vec<DMatrix<f64>>,
    /// Closed-loop transitions `Ã_t = A_t − B_t K_tᵀ`.
    pub closed_loop_a: Vec<DMatrix<f64>>,
    /// Riccati iterates `P_t`, one per step.
    pub state_cov: Vec<DMatrix<f64>>,
}

pub fn backward_factor_dual(sys: &EstimationSystem, compute_residual: bool) -> Result<DualFactorization> {
    let horizon = sys.horizon();
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let id_m = DMatrix::identity(m, m);

    // Backward sweep fills P_t for every t, then the per-step quantities are
    // derived in forward order.
    let mut covs = vec![DMatrix::zeros(n, n); horizon];
    for t in (1..horizon).rev() {
        let p_t = covs[t].clone();
        let sigma = sym(&(&id_m + sys.b[t].transpose() * &p_t * &sys.b[t]));
        let sigma_inv = pd_inverse(&sigma, "dual innovation weight", t)?;
        let k = sys.a[t].transpose() * &p_t * &sys.b[t] * &sigma_inv;
        let prev = sys.a[t].transpose() * &p_t * &sys.a[t] + sys.c[t].transpose() * &sys.c[t]
            - &k * &sigma * k.transpose();
        covs[t - 1] = sym(&prev);
    }

    let mut gains = Vec::with_capacity(horizon);
    let mut innovations = Vec::with_capacity(horizon);
    let mut closed = Vec::with_capacity(horizon);
    let mut model_c = Vec::with_capacity(horizon);
    let mut model_d = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let sigma = sym(&(&id_m + sys.b[t].transpose() * &covs[t] * &sys.b[t]));
        let sigma_inv = pd_inverse(&sigma, "dual innovation weight", t)?;
        let k = sys.a[t].transpose() * &covs[t] * &sys.b[t] * &sigma_inv;
        let sigma_sqrt = psd_sqrt(&sigma);
        model_c.push(&sigma_sqrt * k.transpose());
        model_d.push(sigma_sqrt);
        closed.push(&sys.a[t] - &sys.b[t] * k.transpose());
        gains.push(k);
        innovations.push(sigma);
    }

    let factor = CausalStateSpaceModel::new(sys.a.clone(), sys.b.clone(), model_c, model_d)?;
    let inverse = factor.invert()?;
    let residual = if compute_residual {
        let (h, _) = assemble_estimation_operators(sys);
        let dense = factor.to_dense();
        let target = DMatrix::identity(h.matrix.ncols(), h.matrix.ncols()) + h.matrix.transpose() * &h.matrix;
        Some(relative_residual(&(dense.matrix.transpose() * &dense.matrix), &target))
    } else {
        None
    };

    Ok(DualFactorization {
        result: FactorizationResult { factor, inverse, residual },
        gains,
        innovations,
        closed_loop_a: closed,
        state_cov: covs,
    })
}

/// Second control factor `Δ₂ᵀ Δ₂ = γ²I + Gᵀ(I + F Fᵀ)⁻¹ G`, built on the
/// closed-loop model of the forward factor by a backward recursion with
/// `P_{T-1} = 0`.
#[derive(Debug, Clone)]
pub struct Delta2Factorization {
    pub result: FactorizationResult,
    /// Backward gains `K_tᵇ = Ã_tᵀ P_tᵇ B_w (Σ_tᵇ)⁻¹`.
    pub back_gains: Vec<DMatrix<f64>>,
    /// Backward innovation weights `Σ_tᵇ = γ²I + B_wᵀ P_tᵇ B_w`.
    pub back_innovations: Vec<DMatrix<f64>>,
    /// Backward iterates `P_tᵇ`.
    pub back_cov: Vec<DMatrix<f64>>,
}

pub fn control_delta2(
    sys: &ControlSystem,
    gamma: f64,
    fwd: &ForwardFactorization,
    compute_residual: bool,
) -> Result<Delta2Factorization> {
    require_r_absorbed(sys, "disturbance factorization")?;
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let horizon = sys.horizon();
    let (n, p) = (sys.state_dim(), sys.disturbance_dim());
    let gamma2_id = DMatrix::identity(p, p) * gamma * gamma;

    let mut back_cov = vec![DMatrix::zeros(n, n); horizon];
    for t in (1..horizon).rev() {
        let p_t = back_cov[t].clone();
        let sigma = sym(&(&gamma2_id + sys.bw[t].transpose() * &p_t * &sys.bw[t]));
        let sigma_inv = pd_inverse(&sigma, "disturbance innovation weight", t)?;
        let k = fwd.closed_loop_a[t].transpose() * &p_t * &sys.bw[t] * &sigma_inv;
        let sigma_fwd_inv = pd_inverse(&fwd.innovations[t], "forward innovation weight", t)?;
        let prev = fwd.closed_loop_a[t].transpose() * &p_t * &fwd.closed_loop_a[t]
            + &fwd.q_sqrt[t] * &sigma_fwd_inv * &fwd.q_sqrt[t]
            - &k * &sigma * k.transpose();
        back_cov[t - 1] = sym(&prev);
    }

    let mut back_gains = Vec::with_capacity(horizon);
    let mut back_innovations = Vec::with_capacity(horizon);
    let mut model_c = Vec::with_capacity(horizon);
    let mut model_d = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let sigma = sym(&(&gamma2_id + sys.bw[t].transpose() * &back_cov[t] * &sys.bw[t]));
        let sigma_inv = pd_inverse(&sigma, "disturbance innovation weight", t)?;
        let k = fwd.closed_loop_a[t].transpose() * &back_cov[t] * &sys.bw[t] * &sigma_inv;
        let sigma_sqrt = psd_sqrt(&sigma);
        model_c.push(&sigma_sqrt * k.transpose());
        model_d.push(sigma_sqrt);
        back_gains.push(k);
        back_innovations.push(sigma);
    }

    let factor =
        CausalStateSpaceModel::new(fwd.closed_loop_a.clone(), sys.bw.clone(), model_c, model_d)?;
    let inverse = factor.invert()?;
    let residual = if compute_residual {
        let (f, g) = assemble_control_operators(sys)?;
        let rows = f.matrix.nrows();
        let gram = DMatrix::identity(rows, rows) + &f.matrix * f.matrix.transpose();
        let solved = gram
            .clone()
            .lu()
            .solve(&g.matrix)
            .ok_or_else(|| Error::Numerical("I + FFᵀ could not be inverted".into()))?;
        let cols = g.matrix.ncols();
        let target = DMatrix::identity(cols, cols) * gamma * gamma + g.matrix.transpose() * solved;
        let dense = factor.to_dense();
        Some(relative_residual(&(dense.matrix.transpose() * &dense.matrix), &target))
    } else {
        None
    };

    Ok(Delta2Factorization {
        result: FactorizationResult { factor, inverse, residual },
        back_gains,
        back_innovations,
        back_cov,
    })
}

/// Whitening factor `Sᵀ S = I + γ⁻² L (I + Hᵀ H)⁻¹ Lᵀ` of the estimation
/// regret operator, built from a backward Markovian representation of the
/// closed-loop smoother model.
#[derive(Debug, Clone)]
pub struct SFactorization {
    pub result: FactorizationResult,
    /// Backward transitions `A_tᵇ` solving `A_tᵇ Π_t = Π_{t-1} Ã_{t-1}ᵀ`;
    /// `A_0ᵇ` is zero (it only ever multiplies the empty initial state).
    pub a_back: Vec<DMatrix<f64>>,
    /// Backward gains `K_tᵇ = γ⁻¹ A_tᵇ P_tᵇ L_tᵀ (Σ_tᵇ)⁻¹`.
    pub back_gains: Vec<DMatrix<f64>>,
    /// Backward innovation weights `Σ_tᵇ = I + γ⁻² L_t P_tᵇ L_tᵀ`.
    pub back_innovations: Vec<DMatrix<f64>>,
    /// Forward state covariances `Π_t` of the closed-loop smoother model.
    pub state_cov: Vec<DMatrix<f64>>,
    /// Backward iterates `P_tᵇ`.
    pub back_cov: Vec<DMatrix<f64>>,
}

pub fn estimation_s_factor(
    sys: &EstimationSystem,
    gamma: f64,
    dual: &DualFactorization,
    compute_residual: bool,
) -> Result<SFactorization> {
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let horizon = sys.horizon();
    let (n, r) = (sys.state_dim(), sys.target_dim());
    let id_r = DMatrix::identity(r, r);
    let gi = 1.0 / gamma;

    // Forward covariance sweep of the closed-loop model x⁺ = Ã x + B Σ^{-1/2} e.
    let mut pis = Vec::with_capacity(horizon);
    let mut pi = DMatrix::zeros(n, n);
    for t in 0..horizon {
        pis.push(pi.clone());
        if t + 1 < horizon {
            let sigma_inv = pd_inverse(&dual.innovations[t], "dual innovation weight", t)?;
            let next = &dual.closed_loop_a[t] * &pi * dual.closed_loop_a[t].transpose()
                + &sys.b[t] * &sigma_inv * sys.b[t].transpose();
            pi = sym(&next);
        }
    }

    // Backward transitions solving A_tᵇ Π_t = Π_{t-1} Ã_{t-1}ᵀ; the
    // least-squares solution through the pseudo-inverse is exact because the
    // right-hand side lies in the range of Π_t.
    let mut a_back = Vec::with_capacity(horizon);
    a_back.push(DMatrix::zeros(n, n));
    for t in 1..horizon {
        let rhs = &pis[t - 1] * dual.closed_loop_a[t - 1].transpose();
        a_back.push(&rhs * pinv(&pis[t]));
    }

    // Backward Riccati with terminal iterate pinned to the final covariance.
    let mut back_cov = vec![DMatrix::zeros(n, n); horizon];
    back_cov[horizon - 1] = pis[horizon - 1].clone();
    for t in (1..horizon).rev() {
        let p_t = back_cov[t].clone();
        let sigma = sym(&(&id_r + gi * gi * &sys.l[t] * &p_t * sys.l[t].transpose()));
        let sigma_inv = pd_inverse(&sigma, "whitening innovation weight", t)?;
        let k = gi * &a_back[t] * &p_t * sys.l[t].transpose() * &sigma_inv;
        let q_b = &pis[t - 1] - &a_back[t] * &pis[t] * a_back[t].transpose();
        let prev = &a_back[t] * &p_t * a_back[t].transpose() + q_b - &k * &sigma * k.transpose();
        back_cov[t - 1] = sym(&prev);
    }

    let mut back_gains = Vec::with_capacity(horizon);
    let mut back_innovations = Vec::with_capacity(horizon);
    let mut model_a = Vec::with_capacity(horizon);
    let mut model_b = Vec::with_capacity(horizon);
    let mut model_c = Vec::with_capacity(horizon);
    let mut model_d = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let sigma = sym(&(&id_r + gi * gi * &sys.l[t] * &back_cov[t] * sys.l[t].transpose()));
        let sigma_inv = pd_inverse(&sigma, "whitening innovation weight", t)?;
        let k = gi * &a_back[t] * &back_cov[t] * sys.l[t].transpose() * &sigma_inv;
        let sigma_sqrt = psd_sqrt(&sigma);
        model_a.push(a_back[t].transpose());
        model_b.push(gi * sys.l[t].transpose());
        model_c.push(&sigma_sqrt * k.transpose());
        model_d.push(sigma_sqrt);
        back_gains.push(k);
        back_innovations.push(sigma);
    }

    let factor = CausalStateSpaceModel::new(model_a, model_b, model_c, model_d)?;
    let inverse = factor.invert()?;
    let residual = if compute_residual {
        let target = s_gram_target(sys, gamma)?;
        let dense = factor.to_dense();
        Some(relative_residual(&(dense.matrix.transpose() * &dense.matrix), &target))
    } else {
        None
    };

    Ok(SFactorization {
        result: FactorizationResult { factor, inverse, residual },
        a_back,
        back_gains,
        back_innovations,
        state_cov: pis,
        back_cov,
    })
}

/// Dense `I + γ⁻² L (I + Hᵀ H)⁻¹ Lᵀ` from independently assembled operators.
fn s_gram_target(sys: &EstimationSystem, gamma: f64) -> Result<DMatrix<f64>> {
    let (h, l) = assemble_estimation_operators(sys);
    let cols = h.matrix.ncols();
    let gram = DMatrix::identity(cols, cols) + h.matrix.transpose() * &h.matrix;
    let solved = gram
        .lu()
        .solve(&l.matrix.transpose())
        .ok_or_else(|| Error::Numerical("I + HᵀH could not be inverted".into()))?;
    let rows = l.matrix.nrows();
    Ok(DMatrix::identity(rows, rows) + (1.0 / (gamma * gamma)) * &l.matrix * solved)
}

/// Final whitening factor `T Tᵀ = γ²(Sᵀ S)⁻¹ + L (I + Hᵀ H)⁻¹ Lᵀ`, realized
/// on the doubled state that stacks the closed-loop smoother model with the
/// inverse of the `S` factor.
#[derive(Debug, Clone)]
pub struct TFactorization {
    pub result: FactorizationResult,
    /// Doubled-state transitions `Ã_t` (block diagonal).
    pub a_tilde: Vec<DMatrix<f64>>,
    /// Output maps `C̃_t = [L_t  −γ (K_tᵇ)ᵀ]`.
    pub c_tilde: Vec<DMatrix<f64>>,
    /// Whitening gains `K̃_t`.
    pub gains: Vec<DMatrix<f64>>,
    /// Innovation weights `Σ̃_t`.
    pub innovations: Vec<DMatrix<f64>>,
}

pub fn estimation_t_factor(
    sys: &EstimationSystem,
    gamma: f64,
    dual: &DualFactorization,
    s_fact: &SFactorization,
    compute_residual: bool,
) -> Result<TFactorization> {
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let horizon = sys.horizon();
    let n = sys.state_dim();
    let gi = 1.0 / gamma;

    let mut a_tilde = Vec::with_capacity(horizon);
    let mut b_tilde = Vec::with_capacity(horizon);
    let mut c_tilde = Vec::with_capacity(horizon);
    let mut d_tilde = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let sigma_inv_sqrt = pd_inv_sqrt(&dual.innovations[t], "dual innovation weight", t)?;
        let sb_inv_sqrt = pd_inv_sqrt(&s_fact.back_innovations[t], "whitening innovation weight", t)?;
        let s_inv_a = s_fact.a_back[t].transpose()
            - gi * sys.l[t].transpose() * s_fact.back_gains[t].transpose();
        a_tilde.push(crate::linalg::block_diag(&[&dual.closed_loop_a[t], &s_inv_a]));
        let b_left = &sys.b[t] * &sigma_inv_sqrt;
        let b_right = gi * sys.l[t].transpose() * &sb_inv_sqrt;
        b_tilde.push(crate::linalg::block_diag(&[&b_left, &b_right]));
        c_tilde.push(crate::linalg::hstack(&[
            &sys.l[t],
            &(-gamma * s_fact.back_gains[t].transpose()),
        ]));
        let zero = DMatrix::zeros(sys.target_dim(), sys.input_dim());
        d_tilde.push(crate::linalg::hstack(&[&zero, &(gamma * sb_inv_sqrt)]));
    }

    // Forward whitening of the combined output covariance.
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    let mut gains = Vec::with_capacity(horizon);
    let mut innovations = Vec::with_capacity(horizon);
    let mut model_b = Vec::with_capacity(horizon);
    let mut model_d = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let sb_inv = pd_inverse(&s_fact.back_innovations[t], "whitening innovation weight", t)?;
        let sigma = sym(&(gamma * gamma * sb_inv + &c_tilde[t] * &p * c_tilde[t].transpose()));
        let sigma_inv = pd_inverse(&sigma, "combined innovation weight", t)?;
        let k = (&a_tilde[t] * &p * c_tilde[t].transpose() + &b_tilde[t] * d_tilde[t].transpose())
            * &sigma_inv;
        let sigma_sqrt = psd_sqrt(&sigma);
        model_b.push(&k * &sigma_sqrt);
        model_d.push(sigma_sqrt);
        let next = &a_tilde[t] * &p * a_tilde[t].transpose() + &b_tilde[t] * b_tilde[t].transpose()
            - &k * &sigma * k.transpose();
        p = sym(&next);
        gains.push(k);
        innovations.push(sigma);
    }

    let factor = CausalStateSpaceModel::new(a_tilde.clone(), model_b, c_tilde.clone(), model_d)?;
    let inverse = factor.invert()?;
    let residual = if compute_residual {
        let (h, l) = assemble_estimation_operators(sys);
        let cols = h.matrix.ncols();
        let gram = DMatrix::identity(cols, cols) + h.matrix.transpose() * &h.matrix;
        let solved = gram
            .lu()
            .solve(&l.matrix.transpose())
            .ok_or_else(|| Error::Numerical("I + HᵀH could not be inverted".into()))?;
        let w = &l.matrix * solved;
        let rows = w.nrows();
        let s_gram = DMatrix::identity(rows, rows) + (gi * gi) * &w;
        let s_gram_inv = s_gram
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("SᵀS could not be inverted".into()))?;
        let target = gamma * gamma * s_gram_inv + &w;
        let dense = factor.to_dense();
        Some(relative_residual(&(&dense.matrix * dense.matrix.transpose()), &target))
    } else {
        None
    };

    Ok(TFactorization {
        result: FactorizationResult { factor, inverse, residual },
        a_tilde,
        c_tilde,
        gains,
        innovations,
    })
}
