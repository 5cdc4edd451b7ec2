//! Dense block-operator form of the finite-horizon transfer maps.
//!
//! Stacking signals step-major turns the input-to-output maps of an LTV
//! system into block-triangular matrices. These dense forms are the
//! comparators used by the noncausal benchmarks and the validation oracles;
//! the synthesis recursions themselves never materialize them.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::system::{ControlSystem, EstimationSystem, Signal};
use crate::{Error, Result};

/// Tolerance below which a block is considered structurally zero when
/// auditing causality.
pub const CAUSALITY_TOL: f64 = 1e-12;

/// A matrix carrying its block partition: entry `(t, τ)` maps input step `τ`
/// to output step `τ`'s contribution at output step `t`.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub row_dims: Vec<usize>,
    pub col_dims: Vec<usize>,
}

impl DenseOperator {
    pub fn zeros(row_dims: Vec<usize>, col_dims: Vec<usize>) -> Self {
        let rows = row_dims.iter().sum();
        let cols = col_dims.iter().sum();
        DenseOperator { matrix: DMatrix::zeros(rows, cols), row_dims, col_dims }
    }

    pub fn steps(&self) -> usize {
        self.row_dims.len()
    }

    fn row_offset(&self, t: usize) -> usize {
        self.row_dims[..t].iter().sum()
    }

    fn col_offset(&self, t: usize) -> usize {
        self.col_dims[..t].iter().sum()
    }

    /// View of block `(t, τ)`.
    pub fn block(&self, t: usize, tau: usize) -> DMatrixView<'_, f64> {
        self.matrix.view(
            (self.row_offset(t), self.col_offset(tau)),
            (self.row_dims[t], self.col_dims[tau]),
        )
    }

    pub fn set_block(&mut self, t: usize, tau: usize, m: &DMatrix<f64>) {
        self.matrix
            .view_mut((self.row_offset(t), self.col_offset(tau)), (self.row_dims[t], self.col_dims[tau]))
            .copy_from(m);
    }

    /// Apply to a signal whose per-step dimension matches the column blocks.
    pub fn apply(&self, input: &Signal) -> Result<Signal> {
        if input.len() != self.col_dims.len() || self.col_dims.iter().any(|&d| d != input.dim()) {
            return Err(Error::dim(
                "operator input",
                format!("{} steps of dim {:?}", self.col_dims.len(), self.col_dims.first()),
                format!("{} steps of dim {}", input.len(), input.dim()),
            ));
        }
        let out: DVector<f64> = &self.matrix * input.stacked();
        let mut values = Vec::with_capacity(self.row_dims.len());
        let mut at = 0;
        for &d in &self.row_dims {
            values.push(out.rows(at, d).into_owned());
            at += d;
        }
        Signal::new(values)
    }

    /// Largest absolute entry in blocks with `τ > t` (the anticausal part).
    pub fn max_anticausal_entry(&self) -> f64 {
        self.max_entry_where(|t, tau| tau > t)
    }

    /// Largest absolute entry in blocks with `τ ≥ t`.
    pub fn max_noncausal_entry(&self) -> f64 {
        self.max_entry_where(|t, tau| tau >= t)
    }

    fn max_entry_where(&self, pred: impl Fn(usize, usize) -> bool) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.row_dims.len() {
            for tau in 0..self.col_dims.len() {
                if pred(t, tau) {
                    worst = worst.max(self.block(t, tau).abs().max());
                }
            }
        }
        worst
    }

    /// Causal: block-lower-triangular, diagonal blocks allowed.
    pub fn is_causal(&self, tol: f64) -> bool {
        self.max_anticausal_entry() <= tol
    }

    /// Strictly causal: zero on and above the block diagonal.
    pub fn is_strictly_causal(&self, tol: f64) -> bool {
        self.max_noncausal_entry() <= tol
    }
}

/// Dense measurement and target maps of an estimation system: `y = H u + v`
/// and `s = L u`. Both are strictly block-lower-triangular because `x₀ = 0`
/// and the disturbance reaches the state with a one-step lag.
pub fn assemble_estimation_operators(sys: &EstimationSystem) -> (DenseOperator, DenseOperator) {
    let horizon = sys.horizon();
    let mut h = DenseOperator::zeros(vec![sys.measurement_dim(); horizon], vec![sys.input_dim(); horizon]);
    let mut l = DenseOperator::zeros(vec![sys.target_dim(); horizon], vec![sys.input_dim(); horizon]);
    for tau in 0..horizon {
        // prop = A_{t-1}···A_{τ+1} B_τ, advanced one step per output row.
        let mut prop = sys.b[tau].clone();
        for t in tau + 1..horizon {
            h.set_block(t, tau, &(&sys.c[t] * &prop));
            l.set_block(t, tau, &(&sys.l[t] * &prop));
            if t + 1 < horizon {
                prop = &sys.a[t] * prop;
            }
        }
    }
    (h, l)
}

/// Dense cost-output maps of a control system in input-normalized form:
/// with `u' = R^{1/2} u`, the stage costs satisfy
/// `Σ xᵀQx + uᵀRu = ‖F u' + G w‖² + ‖u'‖²`.
pub fn assemble_control_operators(sys: &ControlSystem) -> Result<(DenseOperator, DenseOperator)> {
    let horizon = sys.horizon();
    let q_sqrt: Vec<DMatrix<f64>> = sys.q.iter().map(crate::linalg::psd_sqrt).collect();
    let r_inv_sqrt = sys.r_inv_sqrt()?;
    let n = sys.state_dim();
    let mut f = DenseOperator::zeros(vec![n; horizon], vec![sys.control_dim(); horizon]);
    let mut g = DenseOperator::zeros(vec![n; horizon], vec![sys.disturbance_dim(); horizon]);
    for tau in 0..horizon {
        let mut prop_u = &sys.bu[tau] * &r_inv_sqrt[tau];
        let mut prop_w = sys.bw[tau].clone();
        for t in tau + 1..horizon {
            f.set_block(t, tau, &(&q_sqrt[t] * &prop_u));
            g.set_block(t, tau, &(&q_sqrt[t] * &prop_w));
            if t + 1 < horizon {
                prop_u = &sys.a[t] * prop_u;
                prop_w = &sys.a[t] * prop_w;
            }
        }
    }
    Ok((f, g))
}

/// Dense strictly causal state response `x_t = Σ_{τ<t} A_{t-1}···A_{τ+1} B_τ in_τ`
/// for arbitrary transition/input schedules of equal length.
pub fn assemble_state_response(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> DenseOperator {
    let horizon = a.len();
    let n = a.first().map_or(0, |m| m.nrows());
    let col_dims: Vec<usize> = b.iter().map(|m| m.ncols()).collect();
    let mut op = DenseOperator::zeros(vec![n; horizon], col_dims);
    for tau in 0..horizon {
        let mut prop = b[tau].clone();
        for t in tau + 1..horizon {
            op.set_block(t, tau, &prop);
            if t + 1 < horizon {
                prop = &a[t] * prop;
            }
        }
    }
    op
}

/// Materialize a linear signal map by probing it with unit impulses at every
/// step and coordinate. The map must be linear and defined on `steps` inputs
/// of width `in_dim`; output dimensions are taken from the first response.
pub fn densify_causal_map(
    map: impl Fn(&Signal) -> Result<Signal>,
    steps: usize,
    in_dim: usize,
) -> Result<DenseOperator> {
    let mut dense: Option<DenseOperator> = None;
    for tau in 0..steps {
        for j in 0..in_dim {
            let mut probe = Signal::zeros(steps, in_dim);
            probe.values[tau][j] = 1.0;
            let response = map(&probe)?;
            if response.len() != steps {
                return Err(Error::dim("probed map output length", steps, response.len()));
            }
            let op = dense.get_or_insert_with(|| {
                DenseOperator::zeros(vec![response.dim(); steps], vec![in_dim; steps])
            });
            let col = tau * in_dim + j;
            let mut at = 0;
            for t in 0..steps {
                let d = response.values[t].len();
                op.matrix.view_mut((at, col), (d, 1)).copy_from(&response.values[t]);
                at += d;
            }
        }
    }
    dense.ok_or_else(|| Error::Validation("cannot densify a map over zero steps".into()))
}

/// Quadratic cost of normalized inputs through the dense maps:
/// `‖F u' + G w‖² + ‖u'‖²`.
pub fn operator_cost(f: &DenseOperator, g: &DenseOperator, u_norm: &Signal, w: &Signal) -> Result<f64> {
    let fu = f.apply(u_norm)?;
    let gw = g.apply(w)?;
    let mixed: f64 = fu
        .values
        .iter()
        .zip(&gw.values)
        .map(|(a, b)| (a + b).norm_squared())
        .sum();
    Ok(mixed + u_norm.energy())
}
