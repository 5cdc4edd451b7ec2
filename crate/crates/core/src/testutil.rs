//! Random problem instances shared across the unit-test modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::system::{ControlSystem, EstimationSystem, Signal};

fn mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub(crate) fn random_signal(rng: &mut ChaCha8Rng, steps: usize, dim: usize) -> Signal {
    Signal::new((0..steps).map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))).collect())
        .unwrap()
}

/// Control instance with mildly contractive dynamics, PSD state weights and
/// PD input weights.
pub(crate) fn random_control(rng: &mut ChaCha8Rng, horizon: usize, n: usize, m: usize, p: usize) -> ControlSystem {
    let q = (0..horizon)
        .map(|_| {
            let half = mat(rng, n, n, 1.0);
            &half * half.transpose()
        })
        .collect();
    let r = (0..horizon)
        .map(|_| {
            let half = mat(rng, m, m, 1.0);
            &half * half.transpose() + DMatrix::identity(m, m) * 0.3
        })
        .collect();
    ControlSystem::new(
        (0..horizon).map(|_| mat(rng, n, n, 0.8)).collect(),
        (0..horizon).map(|_| mat(rng, n, m, 1.0)).collect(),
        (0..horizon).map(|_| mat(rng, n, p, 1.0)).collect(),
        q,
        r,
    )
    .unwrap()
}

/// Like [`random_control`] but already in input-normalized form (`R = I`).
pub(crate) fn random_control_absorbed(rng: &mut ChaCha8Rng, horizon: usize, n: usize, m: usize, p: usize) -> ControlSystem {
    let q = (0..horizon)
        .map(|_| {
            let half = mat(rng, n, n, 1.0);
            &half * half.transpose()
        })
        .collect();
    ControlSystem::new(
        (0..horizon).map(|_| mat(rng, n, n, 0.8)).collect(),
        (0..horizon).map(|_| mat(rng, n, m, 1.0)).collect(),
        (0..horizon).map(|_| mat(rng, n, p, 1.0)).collect(),
        q,
        vec![DMatrix::identity(m, m); horizon],
    )
    .unwrap()
}

pub(crate) fn random_estimation(rng: &mut ChaCha8Rng, horizon: usize, n: usize, m: usize, p: usize, r: usize) -> EstimationSystem {
    EstimationSystem::new(
        (0..horizon).map(|_| mat(rng, n, n, 0.8)).collect(),
        (0..horizon).map(|_| mat(rng, n, m, 1.0)).collect(),
        (0..horizon).map(|_| mat(rng, p, n, 1.0)).collect(),
        (0..horizon).map(|_| mat(rng, r, n, 1.0)).collect(),
    )
    .unwrap()
}
