//! Clairvoyant (noncausal) benchmarks and regret evaluation.
//!
//! The clairvoyant controller sees the whole disturbance record before
//! acting; the clairvoyant estimator sees the whole measurement record. Both
//! are dense least-squares solutions, and regret measures how far a causal
//! policy falls behind them on the same record.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::linalg::{max_sym_eigenvalue, sym, top_sym_eigenpair};
use crate::operators::{assemble_control_operators, assemble_estimation_operators, densify_causal_map};
use crate::system::{simulate_control, simulate_estimation, ControlSystem, EstimationSystem, Signal};
use crate::{Error, Result};

/// Smallest disturbance energy for which a regret ratio is reported.
const ENERGY_FLOOR: f64 = 1e-14;

/// Clairvoyant target estimate `ŝ = L Hᵀ (I + H Hᵀ)⁻¹ y` given the full
/// measurement record.
pub fn noncausal_estimate(sys: &EstimationSystem, y: &Signal) -> Result<Signal> {
    let horizon = sys.horizon();
    if y.len() != horizon || y.dim() != sys.measurement_dim() {
        return Err(Error::dim(
            "measurement record",
            format!("{} steps of dim {}", horizon, sys.measurement_dim()),
            format!("{} steps of dim {}", y.len(), y.dim()),
        ));
    }
    let (h, l) = assemble_estimation_operators(sys);
    let rows = h.matrix.nrows();
    let gram = DMatrix::identity(rows, rows) + &h.matrix * h.matrix.transpose();
    let solved = gram
        .lu()
        .solve(&y.stacked())
        .ok_or_else(|| Error::Numerical("I + HHᵀ could not be inverted".into()))?;
    let s_hat = &l.matrix * (h.matrix.transpose() * solved);
    Signal::from_stacked(sys.target_dim(), &s_hat)
}

/// Clairvoyant control of the full disturbance record: the exact minimizer
/// of the quadratic cost, `u = −R^{-1/2}(I + FᵀF)⁻¹ Fᵀ G w`, and its cost
/// `wᵀ Gᵀ (I + F Fᵀ)⁻¹ G w`.
pub fn noncausal_control(sys: &ControlSystem, w: &Signal) -> Result<(Signal, f64)> {
    let horizon = sys.horizon();
    if w.len() != horizon || w.dim() != sys.disturbance_dim() {
        return Err(Error::dim(
            "disturbance record",
            format!("{} steps of dim {}", horizon, sys.disturbance_dim()),
            format!("{} steps of dim {}", w.len(), w.dim()),
        ));
    }
    let (f, g) = assemble_control_operators(sys)?;
    let gw = &g.matrix * w.stacked();
    let cols = f.matrix.ncols();
    let gram = DMatrix::identity(cols, cols) + f.matrix.transpose() * &f.matrix;
    let u_norm = gram
        .lu()
        .solve(&(-(f.matrix.transpose() * &gw)))
        .ok_or_else(|| Error::Numerical("I + FᵀF could not be inverted".into()))?;
    let cost = (&f.matrix * &u_norm + &gw).norm_squared() + u_norm.norm_squared();
    let u_norm_sig = Signal::from_stacked(sys.control_dim(), &u_norm)?;
    let r_inv_sqrt = sys.r_inv_sqrt()?;
    let u = Signal::new(
        (0..horizon).map(|t| &r_inv_sqrt[t] * &u_norm_sig.values[t]).collect(),
    )?;
    Ok((u, cost))
}

/// Regret of a single closed-loop record against the clairvoyant benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub policy_cost: f64,
    pub clairvoyant_cost: f64,
    pub regret: f64,
    pub disturbance_energy: f64,
    /// `regret / disturbance_energy`, absent for (numerically) empty records.
    pub ratio: Option<f64>,
}

fn report(policy_cost: f64, clairvoyant_cost: f64, disturbance_energy: f64) -> RegretReport {
    let regret = policy_cost - clairvoyant_cost;
    let ratio =
        (disturbance_energy > ENERGY_FLOOR).then_some(regret / disturbance_energy);
    RegretReport { policy_cost, clairvoyant_cost, regret, disturbance_energy, ratio }
}

/// Regret of the control actions `u` against the clairvoyant controller on
/// the same disturbance record.
pub fn regret_control(sys: &ControlSystem, u: &Signal, w: &Signal) -> Result<RegretReport> {
    let (_, policy_cost) = simulate_control(sys, u, w)?;
    let (_, clairvoyant_cost) = noncausal_control(sys, w)?;
    Ok(report(policy_cost, clairvoyant_cost, w.energy()))
}

/// Regret of the target estimates `s_hat` against the clairvoyant estimator
/// on the record generated by `(u, v)`.
pub fn regret_estimation(
    sys: &EstimationSystem,
    s_hat: &Signal,
    u: &Signal,
    v: &Signal,
) -> Result<RegretReport> {
    let (y, s) = simulate_estimation(sys, u, v)?;
    if s_hat.len() != s.len() || s_hat.dim() != s.dim() {
        return Err(Error::dim(
            "estimate record",
            format!("{} steps of dim {}", s.len(), s.dim()),
            format!("{} steps of dim {}", s_hat.len(), s_hat.dim()),
        ));
    }
    let s_nc = noncausal_estimate(sys, &y)?;
    let err = |a: &Signal| -> f64 {
        a.values.iter().zip(&s.values).map(|(x, y)| (x - y).norm_squared()).sum()
    };
    Ok(report(err(s_hat), err(&s_nc), u.energy() + v.energy()))
}

/// Worst-case regret ratio of a causal control policy, together with the
/// disturbance that attains it. The policy is densified by impulse probing,
/// so it must be linear in the disturbance record.
pub fn worst_case_regret_ratio_control(
    sys: &ControlSystem,
    policy: impl Fn(&Signal) -> Result<Signal>,
) -> Result<(f64, Signal)> {
    let horizon = sys.horizon();
    let u_of_w = densify_causal_map(&policy, horizon, sys.disturbance_dim())?;
    let (f, g) = assemble_control_operators(sys)?;
    // Normalize the probed inputs so the cost is ‖F u' + G w‖² + ‖u'‖².
    let r_sqrt_blk = crate::linalg::block_diag(&sys.r_sqrt().iter().collect::<Vec<_>>());
    let u_norm = &r_sqrt_blk * &u_of_w.matrix;
    let closed = &f.matrix * &u_norm + &g.matrix;
    let policy_form = closed.transpose() * &closed + u_norm.transpose() * &u_norm;

    let rows = f.matrix.nrows();
    let gram = DMatrix::identity(rows, rows) + &f.matrix * f.matrix.transpose();
    let solved = gram
        .lu()
        .solve(&g.matrix)
        .ok_or_else(|| Error::Numerical("I + FFᵀ could not be inverted".into()))?;
    let clairvoyant_form = g.matrix.transpose() * solved;

    let m = policy_form - clairvoyant_form;
    let skew = (&m - m.transpose()).abs().max();
    if skew > 1e-8 * m.abs().max().max(1.0) {
        return Err(Error::Numerical(format!(
            "regret quadratic form lost symmetry (max skew {skew:.3e})"
        )));
    }
    let (ratio, witness) = top_sym_eigenpair(&sym(&m));
    Ok((ratio.max(0.0), Signal::from_stacked(sys.disturbance_dim(), &witness)?))
}

/// Worst-case regret ratio of a causal filter over joint process and
/// measurement disturbances, together with the attaining pair `(u, v)`.
pub fn worst_case_regret_ratio_estimation(
    sys: &EstimationSystem,
    filter: impl Fn(&Signal) -> Result<Signal>,
) -> Result<(f64, Signal, Signal)> {
    let horizon = sys.horizon();
    let (h, l) = assemble_estimation_operators(sys);
    let meas_rows = h.matrix.nrows();

    // Densify the filter y ↦ ŝ, then express the error over stacked (u, v):
    // s − ŝ = (L − K H) u − K v.
    let k = densify_causal_map(&filter, horizon, sys.measurement_dim())?;
    let error_form = |k_mat: &DMatrix<f64>| -> DMatrix<f64> {
        let eu = &l.matrix - k_mat * &h.matrix;
        let stacked = crate::linalg::hstack(&[&eu, &(-k_mat)]);
        stacked.transpose() * stacked
    };

    let gram = DMatrix::identity(meas_rows, meas_rows) + &h.matrix * h.matrix.transpose();
    let k_nc = gram
        .lu()
        .solve(&(&h.matrix * l.matrix.transpose()))
        .ok_or_else(|| Error::Numerical("I + HHᵀ could not be inverted".into()))?
        .transpose();

    let m = error_form(&k.matrix) - error_form(&k_nc);
    let skew = (&m - m.transpose()).abs().max();
    if skew > 1e-8 * m.abs().max().max(1.0) {
        return Err(Error::Numerical(format!(
            "regret quadratic form lost symmetry (max skew {skew:.3e})"
        )));
    }
    let (ratio, witness) = top_sym_eigenpair(&sym(&m));
    let u_len: usize = sys.input_dim() * horizon;
    let u = Signal::from_stacked(sys.input_dim(), &witness.rows(0, u_len).into_owned())?;
    let v = Signal::from_stacked(
        sys.measurement_dim(),
        &witness.rows(u_len, sys.measurement_dim() * horizon).into_owned(),
    )?;
    Ok((ratio.max(0.0), u, v))
}

/// Largest clairvoyant cost per unit disturbance energy,
/// `λ_max(Gᵀ(I + FFᵀ)⁻¹G)` — the benchmark's own worst-case gain.
pub fn clairvoyant_control_gain(sys: &ControlSystem) -> Result<f64> {
    let (f, g) = assemble_control_operators(sys)?;
    let rows = f.matrix.nrows();
    let gram = DMatrix::identity(rows, rows) + &f.matrix * f.matrix.transpose();
    let solved = gram
        .lu()
        .solve(&g.matrix)
        .ok_or_else(|| Error::Numerical("I + FFᵀ could not be inverted".into()))?;
    Ok(max_sym_eigenvalue(&sym(&(g.matrix.transpose() * solved))).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{unit_scalar_control, unit_scalar_estimation};
    use crate::testutil::{random_control, random_estimation, random_signal};
    use approx::assert_relative_eq;
    use nalgebra::{dvector, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clairvoyant_control_matches_hand_values() {
        let sys = unit_scalar_control(2);
        let w = Signal::new(vec![dvector![1.0], dvector![0.0]]).unwrap();
        let (u, cost) = noncausal_control(&sys, &w).unwrap();
        assert_relative_eq!(u.values[0][0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(u.values[1][0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(cost, 0.5, epsilon = 1e-12);
        // Cost reported by the dense solve must agree with a fresh simulation.
        let (_, sim_cost) = simulate_control(&sys, &u, &w).unwrap();
        assert_relative_eq!(cost, sim_cost, epsilon = 1e-12);
    }

    #[test]
    fn clairvoyant_estimate_matches_hand_values() {
        let sys = unit_scalar_estimation(2);
        let y = Signal::new(vec![dvector![0.3], dvector![1.0]]).unwrap();
        let s_hat = noncausal_estimate(&sys, &y).unwrap();
        assert_relative_eq!(s_hat.values[0][0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s_hat.values[1][0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn regret_report_matches_hand_values() {
        // Doing nothing against the unit impulse: cost 1 versus clairvoyant
        // 1/2, regret 1/2 at unit energy.
        let sys = unit_scalar_control(2);
        let w = Signal::new(vec![dvector![1.0], dvector![0.0]]).unwrap();
        let u0 = Signal::zeros(2, 1);
        let rep = regret_control(&sys, &u0, &w).unwrap();
        assert_relative_eq!(rep.policy_cost, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rep.clairvoyant_cost, 0.5, epsilon = 1e-12);
        assert_relative_eq!(rep.regret, 0.5, epsilon = 1e-12);
        assert_relative_eq!(rep.ratio.unwrap(), 0.5, epsilon = 1e-12);

        // Estimating zero against u = (1, 0): error 1 versus clairvoyant 1/4.
        let esys = unit_scalar_estimation(2);
        let u = Signal::new(vec![dvector![1.0], dvector![0.0]]).unwrap();
        let v = Signal::zeros(2, 1);
        let rep = regret_estimation(&esys, &Signal::zeros(2, 1), &u, &v).unwrap();
        assert_relative_eq!(rep.policy_cost, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rep.clairvoyant_cost, 0.25, epsilon = 1e-12);
        assert_relative_eq!(rep.regret, 0.75, epsilon = 1e-12);
        assert_relative_eq!(rep.ratio.unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn empty_records_suppress_the_ratio() {
        let sys = unit_scalar_control(2);
        let w = Signal::zeros(2, 1);
        let rep = regret_control(&sys, &Signal::zeros(2, 1), &w).unwrap();
        assert!(rep.ratio.is_none());
        assert_relative_eq!(rep.regret, 0.0);
    }

    #[test]
    fn clairvoyant_control_beats_perturbations_pathwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = random_control(&mut rng, 7, 2, 2, 1);
        let w = random_signal(&mut rng, 7, 1);
        let (u, cost) = noncausal_control(&sys, &w).unwrap();
        for _ in 0..20 {
            let mut u2 = u.clone();
            for val in &mut u2.values {
                *val += DVector::from_fn(2, |_, _| rng.gen_range(-0.05..0.05));
            }
            let (_, cost2) = simulate_control(&sys, &u2, &w).unwrap();
            assert!(cost2 >= cost - 1e-10);
        }
    }

    #[test]
    fn clairvoyant_estimator_dominates_in_quadratic_form_order() {
        // K_nc minimizes the error Gram over all (even noncausal) filters,
        // so any perturbation must increase its smallest eigenvalue gap.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sys = random_estimation(&mut rng, 5, 2, 1, 2, 1);
        let (h, l) = assemble_estimation_operators(&sys);
        let rows = h.matrix.nrows();
        let gram = DMatrix::identity(rows, rows) + &h.matrix * h.matrix.transpose();
        let k_nc = gram.lu().solve(&(&h.matrix * l.matrix.transpose())).unwrap().transpose();
        let form = |k: &DMatrix<f64>| {
            let eu = &l.matrix - k * &h.matrix;
            &eu * eu.transpose() + k * k.transpose()
        };
        let base = form(&k_nc);
        for _ in 0..10 {
            let pert = DMatrix::from_fn(k_nc.nrows(), k_nc.ncols(), |_, _| rng.gen_range(-0.1..0.1));
            let diff = form(&(&k_nc + pert)) - &base;
            assert!(crate::linalg::min_sym_eigenvalue(&sym(&diff)) >= -1e-10);
        }
    }

    #[test]
    fn worst_case_ratio_of_doing_nothing_matches_hand_value() {
        let sys = unit_scalar_control(2);
        let policy = |w: &Signal| Ok(Signal::zeros(w.len(), 1));
        let (ratio, witness) = worst_case_regret_ratio_control(&sys, policy).unwrap();
        assert_relative_eq!(ratio, 0.5, epsilon = 1e-12);
        // The witness should realize the ratio when replayed.
        let rep = regret_control(&sys, &Signal::zeros(2, 1), &witness).unwrap();
        assert_relative_eq!(rep.ratio.unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn worst_case_ratio_witness_is_replayable() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sys = random_control(&mut rng, 6, 2, 1, 2);
        // An arbitrary causal policy: a fixed linear echo of the disturbance.
        let policy = |w: &Signal| {
            Signal::new(w.values.iter().map(|wt| DVector::from_element(1, 0.3 * wt[0])).collect())
        };
        let (ratio, witness) = worst_case_regret_ratio_control(&sys, policy).unwrap();
        let u = policy(&witness).unwrap();
        let rep = regret_control(&sys, &u, &witness).unwrap();
        assert_relative_eq!(rep.ratio.unwrap(), ratio, epsilon = 1e-9);
        // And no random disturbance can beat the eigenvector witness.
        for _ in 0..25 {
            let w = random_signal(&mut rng, 6, 2);
            let u = policy(&w).unwrap();
            let r = regret_control(&sys, &u, &w).unwrap();
            assert!(r.ratio.unwrap_or(0.0) <= ratio * (1.0 + 1e-9));
        }
    }

    #[test]
    fn estimation_worst_case_ratio_witness_is_replayable() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let sys = random_estimation(&mut rng, 5, 2, 1, 1, 2);
        let filter = |y: &Signal| {
            Signal::new(y.values.iter().map(|yt| DVector::from_element(2, 0.2 * yt[0])).collect())
        };
        let (ratio, u, v) = worst_case_regret_ratio_estimation(&sys, filter).unwrap();
        let (y, _) = simulate_estimation(&sys, &u, &v).unwrap();
        let rep = regret_estimation(&sys, &filter(&y).unwrap(), &u, &v).unwrap();
        assert_relative_eq!(rep.ratio.unwrap(), ratio, epsilon = 1e-9);
    }

    #[test]
    fn clairvoyant_policy_has_zero_regret_ratio() {
        let sys = unit_scalar_control(2);
        // The clairvoyant controller itself, wrapped as a (noncausal) map.
        let policy = |w: &Signal| noncausal_control(&sys, w).map(|r| r.0);
        let (ratio, _) = worst_case_regret_ratio_control(&sys, policy).unwrap();
        assert!(ratio <= 1e-12);
    }

    #[test]
    fn clairvoyant_gain_matches_hand_value() {
        let sys = unit_scalar_control(2);
        assert_relative_eq!(clairvoyant_control_gain(&sys).unwrap(), 0.5, epsilon = 1e-12);
    }
}
