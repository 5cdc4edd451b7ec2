//! Finite-horizon linear time-varying system descriptions and simulators.
//!
//! Estimation side: `x_{t+1} = A_t x_t + B_t u_t`, `y_t = C_t x_t + v_t`,
//! target `s_t = L_t x_t`. Control side: `x_{t+1} = A_t x_t + B_u u_t + B_w w_t`
//! with stage cost `xᵀQx + uᵀRu`. The initial state is implicitly zero in
//! both settings; every schedule carries exactly `T` entries.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::linalg::{min_sym_eigenvalue, pd_inv_sqrt, psd_sqrt, sym};
use crate::{Error, Result};

/// A length-`T` vector-valued trajectory with a fixed per-step dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub values: Vec<DVector<f64>>,
}

impl Signal {
    pub fn new(values: Vec<DVector<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("signal must have at least one step".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::dim("signal", format!("uniform dim {dim}"), "mixed dims"));
        }
        Ok(Signal { values })
    }

    pub fn zeros(steps: usize, dim: usize) -> Self {
        Signal { values: vec![DVector::zeros(dim); steps] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Total energy `Σ_t ‖x_t‖²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum()
    }

    /// Concatenate all steps into one tall vector (step-major).
    pub fn stacked(&self) -> DVector<f64> {
        let dim = self.dim();
        let mut out = DVector::zeros(dim * self.len());
        for (t, v) in self.values.iter().enumerate() {
            out.rows_mut(t * dim, dim).copy_from(v);
        }
        out
    }

    /// Split a tall step-major vector back into a signal of width `dim`.
    pub fn from_stacked(dim: usize, v: &DVector<f64>) -> Result<Self> {
        if dim == 0 || v.len() % dim != 0 {
            return Err(Error::dim("stacked signal", format!("multiple of {dim}"), v.len()));
        }
        let steps = v.len() / dim;
        Signal::new((0..steps).map(|t| v.rows(t * dim, dim).into_owned()).collect())
    }
}

/// Total energy of a signal; free-function form for call sites that read
/// better with `energy(&w)`.
pub fn energy(sig: &Signal) -> f64 {
    sig.energy()
}

/// Estimation-side system description.
#[derive(Debug, Clone)]
pub struct EstimationSystem {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub l: Vec<DMatrix<f64>>,
}

impl EstimationSystem {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        l: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let horizon = a.len();
        if horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        for (name, sched) in [("B", &b), ("C", &c), ("L", &l)] {
            if sched.len() != horizon {
                return Err(Error::dim(format!("schedule {name}"), horizon, sched.len()));
            }
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        let p = c[0].nrows();
        let r = l[0].nrows();
        for t in 0..horizon {
            let shapes = [
                ("A", a[t].shape(), (n, n)),
                ("B", b[t].shape(), (n, m)),
                ("C", c[t].shape(), (p, n)),
                ("L", l[t].shape(), (r, n)),
            ];
            for (name, got, want) in shapes {
                if got != want {
                    return Err(Error::dim(
                        format!("{name}[{t}]"),
                        format!("{}x{}", want.0, want.1),
                        format!("{}x{}", got.0, got.1),
                    ));
                }
            }
        }
        Ok(EstimationSystem { a, b, c, l })
    }

    /// Parse from JSON: `{"T": …, "A": …, "B": …, "C": …, "L": …}` where each
    /// schedule is a matrix (held constant) or a length-`T` list of matrices.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawEstimation =
            serde_json::from_str(s).map_err(|e| Error::Validation(format!("estimation system JSON: {e}")))?;
        EstimationSystem::new(
            raw.a.expand(raw.t)?,
            raw.b.expand(raw.t)?,
            raw.c.expand(raw.t)?,
            raw.l.expand(raw.t)?,
        )
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn measurement_dim(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.l[0].nrows()
    }
}

/// Simulate the estimation-side dynamics from `x₀ = 0`, returning the
/// measurements `y` and the target trajectory `s`.
pub fn simulate_estimation(sys: &EstimationSystem, u: &Signal, v: &Signal) -> Result<(Signal, Signal)> {
    let horizon = sys.horizon();
    check_len("u", u, horizon, sys.input_dim())?;
    check_len("v", v, horizon, sys.measurement_dim())?;
    let mut x = DVector::zeros(sys.state_dim());
    let mut y = Vec::with_capacity(horizon);
    let mut s = Vec::with_capacity(horizon);
    for t in 0..horizon {
        y.push(&sys.c[t] * &x + &v.values[t]);
        s.push(&sys.l[t] * &x);
        if t + 1 < horizon {
            x = &sys.a[t] * x + &sys.b[t] * &u.values[t];
        }
    }
    Ok((Signal { values: y }, Signal { values: s }))
}

/// Control-side system description with PSD state weights and PD input weights.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    pub a: Vec<DMatrix<f64>>,
    pub bu: Vec<DMatrix<f64>>,
    pub bw: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
}

impl ControlSystem {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        bu: Vec<DMatrix<f64>>,
        bw: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let horizon = a.len();
        if horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        for (name, len) in [("Bu", bu.len()), ("Bw", bw.len()), ("Q", q.len()), ("R", r.len())] {
            if len != horizon {
                return Err(Error::dim(format!("schedule {name}"), horizon, len));
            }
        }
        let n = a[0].nrows();
        let m = bu[0].ncols();
        let p = bw[0].ncols();
        for t in 0..horizon {
            let shapes = [
                ("A", a[t].shape(), (n, n)),
                ("Bu", bu[t].shape(), (n, m)),
                ("Bw", bw[t].shape(), (n, p)),
                ("Q", q[t].shape(), (n, n)),
                ("R", r[t].shape(), (m, m)),
            ];
            for (name, got, want) in shapes {
                if got != want {
                    return Err(Error::dim(
                        format!("{name}[{t}]"),
                        format!("{}x{}", want.0, want.1),
                        format!("{}x{}", got.0, got.1),
                    ));
                }
            }
            let q_scale = q[t].norm().max(1.0);
            if min_sym_eigenvalue(&q[t]) < -1e-9 * q_scale {
                return Err(Error::Validation(format!("Q[{t}] is not positive semidefinite")));
            }
            let r_scale = r[t].norm().max(1.0);
            if min_sym_eigenvalue(&r[t]) <= 1e-12 * r_scale {
                return Err(Error::Validation(format!("R[{t}] is not positive definite")));
            }
        }
        // Store the symmetric parts so downstream square roots are exact.
        let q = q.iter().map(sym).collect();
        let r = r.iter().map(sym).collect();
        Ok(ControlSystem { a, bu, bw, q, r })
    }

    /// Parse from JSON: `{"T": …, "A": …, "Bu": …, "Bw": …, "Q": …, "R": …}`
    /// with the same constant-or-per-step schedule convention as the
    /// estimation loader.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawControl =
            serde_json::from_str(s).map_err(|e| Error::Validation(format!("control system JSON: {e}")))?;
        ControlSystem::new(
            raw.a.expand(raw.t)?,
            raw.bu.expand(raw.t)?,
            raw.bw.expand(raw.t)?,
            raw.q.expand(raw.t)?,
            raw.r.expand(raw.t)?,
        )
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.bu[0].ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.bw[0].ncols()
    }

    /// Per-step principal square roots `R_t^{1/2}`.
    pub fn r_sqrt(&self) -> Vec<DMatrix<f64>> {
        self.r.iter().map(psd_sqrt).collect()
    }

    /// Per-step `R_t^{-1/2}`; `R` is validated positive definite.
    pub fn r_inv_sqrt(&self) -> Result<Vec<DMatrix<f64>>> {
        self.r
            .iter()
            .enumerate()
            .map(|(t, r)| pd_inv_sqrt(r, "R", t))
            .collect()
    }

    /// Equivalent system with the input weight absorbed into the control
    /// channel: `B_u ← B_u R^{-1/2}`, `R ← I`. Costs agree under the change
    /// of variable `u' = R^{1/2} u`.
    pub fn r_absorbed(&self) -> Result<ControlSystem> {
        let ris = self.r_inv_sqrt()?;
        let m = self.control_dim();
        ControlSystem::new(
            self.a.clone(),
            self.bu.iter().zip(&ris).map(|(b, ri)| b * ri).collect(),
            self.bw.clone(),
            self.q.clone(),
            vec![DMatrix::identity(m, m); self.horizon()],
        )
    }
}

/// Simulate the controlled dynamics from `x₀ = 0`, returning the state
/// trajectory `x₀..x_{T-1}` and the accumulated cost `Σ xᵀQx + uᵀRu`.
pub fn simulate_control(sys: &ControlSystem, u: &Signal, w: &Signal) -> Result<(Signal, f64)> {
    simulate_control_from(&DVector::zeros(sys.state_dim()), sys, u, w)
}

/// As `simulate_control`, but from an explicit initial state. Augmented
/// systems built by the horizon reductions seed their transcript blocks
/// through this entry point.
pub fn simulate_control_from(
    x0: &DVector<f64>,
    sys: &ControlSystem,
    u: &Signal,
    w: &Signal,
) -> Result<(Signal, f64)> {
    let horizon = sys.horizon();
    check_len("u", u, horizon, sys.control_dim())?;
    check_len("w", w, horizon, sys.disturbance_dim())?;
    if x0.len() != sys.state_dim() {
        return Err(Error::dim("x0", sys.state_dim(), x0.len()));
    }
    let mut x = x0.clone();
    let mut traj = Vec::with_capacity(horizon);
    let mut cost = 0.0;
    for t in 0..horizon {
        let ut = &u.values[t];
        cost += (x.transpose() * &sys.q[t] * &x)[(0, 0)] + (ut.transpose() * &sys.r[t] * ut)[(0, 0)];
        traj.push(x.clone());
        if t + 1 < horizon {
            x = &sys.a[t] * x + &sys.bu[t] * ut + &sys.bw[t] * &w.values[t];
        }
    }
    Ok((Signal { values: traj }, cost))
}

fn check_len(name: &str, sig: &Signal, horizon: usize, dim: usize) -> Result<()> {
    if sig.len() != horizon {
        return Err(Error::dim(format!("signal {name} length"), horizon, sig.len()));
    }
    if sig.dim() != dim {
        return Err(Error::dim(format!("signal {name} dim"), dim, sig.dim()));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatSchedule {
    Constant(Vec<Vec<f64>>),
    PerStep(Vec<Vec<Vec<f64>>>),
}

impl MatSchedule {
    fn expand(&self, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
        if horizon == 0 {
            return Err(Error::Validation("T must be at least 1".into()));
        }
        match self {
            MatSchedule::Constant(rows) => Ok(vec![to_matrix(rows)?; horizon]),
            MatSchedule::PerStep(list) => {
                if list.len() != horizon {
                    return Err(Error::dim("per-step schedule", horizon, list.len()));
                }
                list.iter().map(|rows| to_matrix(rows)).collect()
            }
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Validation("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation("matrix rows are empty or ragged".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimation {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "A")]
    a: MatSchedule,
    #[serde(rename = "B")]
    b: MatSchedule,
    #[serde(rename = "C")]
    c: MatSchedule,
    #[serde(rename = "L")]
    l: MatSchedule,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "A")]
    a: MatSchedule,
    #[serde(rename = "Bu")]
    bu: MatSchedule,
    #[serde(rename = "Bw")]
    bw: MatSchedule,
    #[serde(rename = "Q")]
    q: MatSchedule,
    #[serde(rename = "R")]
    r: MatSchedule,
}

/// Scalar horizon-`T` system with all coefficients equal to one; the
/// workhorse of the worked examples in the test suite.
#[cfg(test)]
pub(crate) fn unit_scalar_control(horizon: usize) -> ControlSystem {
    let one = DMatrix::from_element(1, 1, 1.0);
    ControlSystem::new(
        vec![one.clone(); horizon],
        vec![one.clone(); horizon],
        vec![one.clone(); horizon],
        vec![one.clone(); horizon],
        vec![one; horizon],
    )
    .unwrap()
}

#[cfg(test)]
pub(crate) fn unit_scalar_estimation(horizon: usize) -> EstimationSystem {
    let one = DMatrix::from_element(1, 1, 1.0);
    EstimationSystem::new(
        vec![one.clone(); horizon],
        vec![one.clone(); horizon],
        vec![one.clone(); horizon],
        vec![one; horizon],
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn estimation_simulation_matches_hand_computation() {
        let sys = unit_scalar_estimation(2);
        let u = Signal::new(vec![dvector![1.0], dvector![0.0]]).unwrap();
        let v = Signal::zeros(2, 1);
        let (y, s) = simulate_estimation(&sys, &u, &v).unwrap();
        assert_eq!(y.values[0][0], 0.0);
        assert_eq!(y.values[1][0], 1.0);
        assert_eq!(s.values[0][0], 0.0);
        assert_eq!(s.values[1][0], 1.0);
    }

    #[test]
    fn control_cost_matches_hand_computation() {
        let sys = unit_scalar_control(2);
        let u = Signal::new(vec![dvector![-0.5], dvector![0.0]]).unwrap();
        let w = Signal::new(vec![dvector![1.0], dvector![0.0]]).unwrap();
        let (_, cost) = simulate_control(&sys, &u, &w).unwrap();
        assert_relative_eq!(cost, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn r_absorption_preserves_cost() {
        let a = vec![DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -0.3]); 3];
        let bu = vec![DMatrix::from_row_slice(2, 1, &[1.0, 0.5]); 3];
        let bw = vec![DMatrix::from_row_slice(2, 1, &[0.0, 1.0]); 3];
        let q = vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]); 3];
        let r = vec![DMatrix::from_element(1, 1, 4.0); 3];
        let sys = ControlSystem::new(a, bu, bw, q, r).unwrap();
        let abs = sys.r_absorbed().unwrap();
        let u = Signal::new(vec![dvector![0.7], dvector![-0.2], dvector![0.1]]).unwrap();
        let w = Signal::new(vec![dvector![1.0], dvector![0.0], dvector![-0.5]]).unwrap();
        // u' = R^{1/2} u keeps trajectories and cost identical.
        let rs = sys.r_sqrt();
        let up = Signal::new(
            u.values.iter().zip(&rs).map(|(ut, r)| r * ut).collect(),
        )
        .unwrap();
        let (_, c1) = simulate_control(&sys, &u, &w).unwrap();
        let (_, c2) = simulate_control(&abs, &up, &w).unwrap();
        assert_relative_eq!(c1, c2, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip_constant_and_per_step() {
        let sys = EstimationSystem::from_json_str(
            r#"{"T": 3, "A": [[0.9]], "B": [[1.0]], "C": [[[1.0]], [[2.0]], [[3.0]]], "L": [[1.0]]}"#,
        )
        .unwrap();
        assert_eq!(sys.horizon(), 3);
        assert_eq!(sys.c[1][(0, 0)], 2.0);
        assert_eq!(sys.a[2][(0, 0)], 0.9);
    }

    #[test]
    fn json_rejects_unknown_keys_and_bad_lengths() {
        assert!(EstimationSystem::from_json_str(
            r#"{"T": 2, "A": [[1.0]], "B": [[1.0]], "C": [[1.0]], "L": [[1.0]], "X": 1}"#
        )
        .is_err());
        assert!(EstimationSystem::from_json_str(
            r#"{"T": 2, "A": [[[1.0]], [[1.0]], [[1.0]]], "B": [[1.0]], "C": [[1.0]], "L": [[1.0]]}"#
        )
        .is_err());
    }

    #[test]
    fn validation_rejects_indefinite_weights() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let neg = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            ControlSystem::new(
                vec![one.clone()],
                vec![one.clone()],
                vec![one.clone()],
                vec![neg.clone()],
                vec![one.clone()],
            ),
            Err(Error::Validation(_))
        ));
        assert!(ControlSystem::new(
            vec![one.clone()],
            vec![one.clone()],
            vec![one.clone()],
            vec![one.clone()],
            vec![DMatrix::from_element(1, 1, 0.0)],
        )
        .is_err());
    }

    #[test]
    fn signal_stacking_round_trips() {
        let s = Signal::new(vec![dvector![1.0, 2.0], dvector![3.0, 4.0]]).unwrap();
        let stacked = s.stacked();
        assert_eq!(stacked.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(Signal::from_stacked(2, &stacked).unwrap(), s);
        assert_relative_eq!(s.energy(), 30.0);
    }
}
