use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, GridSignal};
use crate::operators::LinearOperator;

use super::ProjectedOperator;

/// `½‖K u − y‖² + α‖u‖²`
pub fn tikhonov_objective(op: &dyn LinearOperator, u: &GridSignal, y: &GridSignal, alpha: f64) -> Result<f64> {
    let r = op.apply(u)?.sub(y)?;
    Ok(0.5 * dot(r.values(), r.values()) + alpha * dot(u.values(), u.values()))
}

/// Tikhonov solver for one learned operator, reusable across data and `α`.
///
/// The minimiser lies in `U_n`, so it is found in coefficient space:
/// `(MᵀM + 2αI) c = Mᵀ y` with `M = [ŷ¹ … ŷⁿ]`, and `u = Σ c_i ûⁱ`.
#[derive(Debug, Clone)]
pub struct TikhonovSolver<'a> {
    op: ProjectedOperator<'a>,
    gram: DMatrix<f64>,
}

impl<'a> TikhonovSolver<'a> {
    pub fn new(op: ProjectedOperator<'a>) -> Self {
        let gram = op.yhat_gram();
        Self { op, gram }
    }

    pub fn solve(&self, y: &GridSignal, alpha: f64) -> Result<GridSignal> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        check_len(self.op.range_dim(), y.len())?;
        let n = self.op.n();
        let rhs = DVector::from_vec(self.op.output_coefficients(y.values()));
        let system = &self.gram + DMatrix::identity(n, n) * (2.0 * alpha);
        let ch = system
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("Tikhonov system of size {n} with alpha {alpha:e}")))?;
        let c = ch.solve(&rhs);
        Ok(self.op.synthesise(c.as_slice()))
    }
}

/// One-shot Tikhonov solve with the learned operator.
pub fn solve_tikhonov(op: &ProjectedOperator<'_>, y: &GridSignal, alpha: f64) -> Result<GridSignal> {
    TikhonovSolver::new(*op).solve(y, alpha)
}

/// Model-based Tikhonov `(AᵀA + 2αI) u = Aᵀ y` with an explicit matrix.
pub fn solve_tikhonov_dense(a: &DMatrix<f64>, y: &GridSignal, alpha: f64) -> Result<GridSignal> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    check_len(a.nrows(), y.len())?;
    let n = a.ncols();
    let system = a.tr_mul(a) + DMatrix::identity(n, n) * (2.0 * alpha);
    let rhs = a.tr_mul(&DVector::from_column_slice(y.values()));
    let ch = system.cholesky().ok_or_else(|| Error::Singular("dense Tikhonov system".into()))?;
    GridSignal::new(ch.solve(&rhs).as_slice().to_vec())
}
