//! State-augmentation reductions for disturbance lookahead and actuation
//! delay. Both reductions produce an ordinary `ControlSystem` with the same
//! per-step cost, so the regret synthesis applies unchanged: a causal
//! policy for the augmented system is a lookahead (resp. delayed) policy
//! for the original plant.

use nalgebra::{DMatrix, DVector};

use crate::system::{ControlSystem, Signal};
use crate::{Error, Result};

/// Which reduction produced an augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationKind {
    /// The controller previews the next `lookahead` disturbances; the
    /// augmented state appends the revealed-but-unapplied window.
    Predictions { lookahead: usize },
    /// Control actions reach the plant `delay` steps after they are chosen;
    /// the augmented state appends the in-flight actions.
    Delay { delay: usize },
}

/// Bookkeeping for moving trajectories between the original plant and the
/// augmented system.
#[derive(Debug, Clone)]
pub struct AugmentationMap {
    pub kind: AugmentationKind,
    pub horizon: usize,
    pub original_state_dim: usize,
    pub augmented_state_dim: usize,
    pub control_dim: usize,
    pub disturbance_dim: usize,
}

impl AugmentationMap {
    /// Initial augmented state: for predictions the transcript blocks hold
    /// the window `w₀..w_{h−1}` the controller already sees at `t = 0`; for
    /// delay the in-flight actions before the start are zero.
    pub fn augmented_initial_state(&self, w: &Signal) -> Result<DVector<f64>> {
        self.check_disturbance(w)?;
        let mut xi = DVector::zeros(self.augmented_state_dim);
        if let AugmentationKind::Predictions { lookahead } = self.kind {
            let p = self.disturbance_dim;
            for slot in 0..lookahead {
                if slot < self.horizon {
                    xi.rows_mut(self.original_state_dim + slot * p, p)
                        .copy_from(&w.values[slot]);
                }
            }
        }
        Ok(xi)
    }

    /// The disturbance record that drives the augmented system: shifted by
    /// the lookahead and zero-padded past the horizon for predictions,
    /// unchanged for delay.
    pub fn shift_disturbance(&self, w: &Signal) -> Result<Signal> {
        self.check_disturbance(w)?;
        match self.kind {
            AugmentationKind::Predictions { lookahead } => Signal::new(
                (0..self.horizon)
                    .map(|t| {
                        if t + lookahead < self.horizon {
                            w.values[t + lookahead].clone()
                        } else {
                            DVector::zeros(self.disturbance_dim)
                        }
                    })
                    .collect(),
            ),
            AugmentationKind::Delay { .. } => Ok(w.clone()),
        }
    }

    /// Original-plant state trajectory read off the augmented trajectory.
    pub fn extract_states(&self, xi: &Signal) -> Result<Signal> {
        if xi.len() != self.horizon {
            return Err(Error::dim("augmented trajectory length", self.horizon, xi.len()));
        }
        if xi.dim() != self.augmented_state_dim {
            return Err(Error::dim("augmented state dim", self.augmented_state_dim, xi.dim()));
        }
        Signal::new(
            xi.values
                .iter()
                .map(|v| v.rows(0, self.original_state_dim).into_owned())
                .collect(),
        )
    }

    fn check_disturbance(&self, w: &Signal) -> Result<()> {
        if w.len() != self.horizon {
            return Err(Error::dim("disturbance record length", self.horizon, w.len()));
        }
        if w.dim() != self.disturbance_dim {
            return Err(Error::dim("disturbance dim", self.disturbance_dim, w.dim()));
        }
        Ok(())
    }
}

/// Reduce lookahead of length `h` to an ordinary causal problem. The
/// augmented state appends the preview window, the shifted disturbance
/// `w'_t = w_{t+h}` enters at the tail of the window, and only the plant
/// block is penalized, so any input record incurs the original cost.
pub fn augment_predictions(sys: &ControlSystem, h: usize) -> Result<(ControlSystem, AugmentationMap)> {
    let horizon = sys.horizon();
    if h == 0 || h > horizon {
        return Err(Error::Validation(format!(
            "lookahead must satisfy 1 <= h <= {horizon}, got {h}"
        )));
    }
    let n = sys.state_dim();
    let (m, p) = (sys.control_dim(), sys.disturbance_dim());
    let dim = n + h * p;
    let mut a_hat = Vec::with_capacity(horizon);
    let mut bu_hat = Vec::with_capacity(horizon);
    let mut bw_hat = Vec::with_capacity(horizon);
    let mut q_hat = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (n, n)).copy_from(&sys.a[t]);
        a.view_mut((0, n), (n, p)).copy_from(&sys.bw[t]);
        for slot in 0..h.saturating_sub(1) {
            a.view_mut((n + slot * p, n + (slot + 1) * p), (p, p))
                .fill_with_identity();
        }
        a_hat.push(a);

        let mut bu = DMatrix::zeros(dim, m);
        bu.view_mut((0, 0), (n, m)).copy_from(&sys.bu[t]);
        bu_hat.push(bu);

        let mut bw = DMatrix::zeros(dim, p);
        bw.view_mut((n + (h - 1) * p, 0), (p, p)).fill_with_identity();
        bw_hat.push(bw);

        let mut q = DMatrix::zeros(dim, dim);
        q.view_mut((0, 0), (n, n)).copy_from(&sys.q[t]);
        q_hat.push(q);
    }
    let aug = ControlSystem::new(a_hat, bu_hat, bw_hat, q_hat, sys.r.clone())?;
    let map = AugmentationMap {
        kind: AugmentationKind::Predictions { lookahead: h },
        horizon,
        original_state_dim: n,
        augmented_state_dim: dim,
        control_dim: m,
        disturbance_dim: p,
    };
    Ok((aug, map))
}

/// Reduce actuation delay of length `d` to an ordinary causal problem: the
/// plant follows `x⁺ = A_t x + B_{u,t−d} u_{t−d} + B_{w,t} w_t`, with the
/// in-flight actions carried in the augmented state (zero before the start).
pub fn augment_delay(sys: &ControlSystem, d: usize) -> Result<(ControlSystem, AugmentationMap)> {
    let horizon = sys.horizon();
    if d == 0 || d >= horizon {
        return Err(Error::Validation(format!(
            "delay must satisfy 1 <= d < {horizon}, got {d}"
        )));
    }
    let n = sys.state_dim();
    let (m, p) = (sys.control_dim(), sys.disturbance_dim());
    let dim = n + d * m;
    let mut a_hat = Vec::with_capacity(horizon);
    let mut bu_hat = Vec::with_capacity(horizon);
    let mut bw_hat = Vec::with_capacity(horizon);
    let mut q_hat = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (n, n)).copy_from(&sys.a[t]);
        // The oldest in-flight action u_{t−d} reaches the plant through the
        // input matrix it was scheduled for; before the start it is zero and
        // the coupling block is irrelevant.
        if t >= d {
            a.view_mut((0, n + (d - 1) * m), (n, m)).copy_from(&sys.bu[t - d]);
        }
        for slot in 0..d.saturating_sub(1) {
            a.view_mut((n + (slot + 1) * m, n + slot * m), (m, m))
                .fill_with_identity();
        }
        a_hat.push(a);

        let mut bu = DMatrix::zeros(dim, m);
        bu.view_mut((n, 0), (m, m)).fill_with_identity();
        bu_hat.push(bu);

        let mut bw = DMatrix::zeros(dim, p);
        bw.view_mut((0, 0), (n, p)).copy_from(&sys.bw[t]);
        bw_hat.push(bw);

        let mut q = DMatrix::zeros(dim, dim);
        q.view_mut((0, 0), (n, n)).copy_from(&sys.q[t]);
        q_hat.push(q);
    }
    let aug = ControlSystem::new(a_hat, bu_hat, bw_hat, q_hat, sys.r.clone())?;
    let map = AugmentationMap {
        kind: AugmentationKind::Delay { delay: d },
        horizon,
        original_state_dim: n,
        augmented_state_dim: dim,
        control_dim: m,
        disturbance_dim: p,
    };
    Ok((aug, map))
}
