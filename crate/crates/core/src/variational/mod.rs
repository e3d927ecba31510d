//! Variational regularisation with the learned operator `K = A P_{U_n}`.
//!
//! Inputs are orthonormalised (`ûⁱ`) and the Gram-Schmidt coefficients are
//! replayed on the outputs (`ŷⁱ = Aûⁱ`), so `K u = Σ (u, ûⁱ) ŷⁱ` and
//! `K* z = Σ (ŷⁱ, z) ûⁱ` need nothing but training data.

mod tikhonov;
mod tv;

pub use tikhonov::{solve_tikhonov, solve_tikhonov_dense, tikhonov_objective, TikhonovSolver};
pub use tv::{divergence, gradient, solve_tv, total_variation, tv_objective, TvControls, TvReport};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, check_len, dot, scale, GridSignal, OrthonormalBasis, DEFAULT_DEPTOL};
use crate::operators::LinearOperator;
use crate::training::TrainingSet;

/// Orthonormalised inputs `ûⁱ` with matched outputs `ŷⁱ`.
#[derive(Debug, Clone)]
pub struct InputModel {
    uhat: OrthonormalBasis,
    yhat: Vec<GridSignal>,
    accepted: Vec<usize>,
    rejected: Vec<usize>,
    pairs_seen: usize,
    output_dim: usize,
    deptol: f64,
}

impl InputModel {
    pub fn new(input_dim: usize, output_dim: usize, deptol: f64) -> Self {
        Self {
            uhat: OrthonormalBasis::new(input_dim),
            yhat: Vec::new(),
            accepted: Vec::new(),
            rejected: Vec::new(),
            pairs_seen: 0,
            output_dim,
            deptol,
        }
    }

    pub(crate) fn from_parts(
        uhat: OrthonormalBasis,
        yhat: Vec<GridSignal>,
        accepted: Vec<usize>,
        pairs_seen: usize,
        output_dim: usize,
        deptol: f64,
    ) -> Result<Self> {
        if yhat.len() != uhat.len() || accepted.len() != uhat.len() {
            return Err(Error::Format("inconsistent input model sections".into()));
        }
        let rejected = (0..pairs_seen).filter(|i| !accepted.contains(i)).collect();
        Ok(Self { uhat, yhat, accepted, rejected, pairs_seen, output_dim, deptol })
    }

    pub fn update(&mut self, pairs: &TrainingSet) -> Result<()> {
        for i in self.pairs_seen..pairs.len() {
            self.push_pair(&pairs.inputs()[i], &pairs.outputs()[i])?;
        }
        Ok(())
    }

    pub fn push_pair(&mut self, u: &GridSignal, y: &GridSignal) -> Result<bool> {
        check_len(self.output_dim, y.len())?;
        let out = self.uhat.extend(u, self.deptol)?;
        let index = self.pairs_seen;
        self.pairs_seen += 1;
        if !out.accepted() {
            self.rejected.push(index);
            return Ok(false);
        }
        let mut w = y.values().to_vec();
        for (c, yh) in out.coefficients.iter().zip(&self.yhat) {
            axpy(-c, yh.values(), &mut w);
        }
        scale(1.0 / out.residual_norm, &mut w);
        self.yhat.push(GridSignal::new(w)?.with_shape_of(y.shape())?);
        self.accepted.push(index);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.yhat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yhat.is_empty()
    }

    pub fn uhat(&self) -> &OrthonormalBasis {
        &self.uhat
    }

    pub fn yhat(&self) -> &[GridSignal] {
        &self.yhat
    }

    pub fn accepted_indices(&self) -> &[usize] {
        &self.accepted
    }

    pub fn rejected_indices(&self) -> &[usize] {
        &self.rejected
    }

    pub fn pairs_seen(&self) -> usize {
        self.pairs_seen
    }

    pub fn input_dim(&self) -> usize {
        self.uhat.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn deptol(&self) -> f64 {
        self.deptol
    }

    /// `rdiag[i] = ‖uⁱ − P_{U_{i−1}} uⁱ‖` over retained pairs.
    pub fn rdiag(&self) -> &[f64] {
        self.uhat.rdiag()
    }

    /// The learned operator restricted to the first `n` retained pairs.
    pub fn operator(&self, n: usize) -> Result<ProjectedOperator<'_>> {
        ProjectedOperator::new(self, n)
    }

    /// Orthonormal basis of `Y_n = span{ŷ¹, …, ŷⁿ}`, for residual proxies.
    /// Numerically dependent `ŷⁱ` are skipped, so the basis may be shorter
    /// than `n`.
    pub fn output_basis(&self, n: usize) -> Result<OrthonormalBasis> {
        if n > self.len() {
            return Err(Error::OutOfRange { index: n, size: self.len() });
        }
        let mut b = OrthonormalBasis::new(self.output_dim);
        for y in &self.yhat[..n] {
            b.extend(y, 1e-14)?;
        }
        Ok(b)
    }
}

/// Orthonormalises the training inputs and carries the outputs along.
pub fn fit_input_side(pairs: &TrainingSet, deptol: f64) -> Result<InputModel> {
    let (Some(nu), Some(ny)) = (pairs.input_dim(), pairs.output_dim()) else {
        return Err(Error::InvalidArgument("training set is empty".into()));
    };
    let mut model = InputModel::new(nu, ny, deptol);
    model.update(pairs)?;
    if model.is_empty() {
        return Err(Error::AllDependent);
    }
    Ok(model)
}

pub fn fit_input_side_default(pairs: &TrainingSet) -> Result<InputModel> {
    fit_input_side(pairs, DEFAULT_DEPTOL)
}

/// `K u = Σ_{i≤n} (u, ûⁱ) ŷⁱ`
#[derive(Debug, Clone, Copy)]
pub struct ProjectedOperator<'a> {
    model: &'a InputModel,
    n: usize,
}

impl<'a> ProjectedOperator<'a> {
    pub fn new(model: &'a InputModel, n: usize) -> Result<Self> {
        if n > model.len() {
            return Err(Error::OutOfRange { index: n, size: model.len() });
        }
        Ok(Self { model, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> &'a InputModel {
        self.model
    }

    /// Coordinates `(u, ûⁱ)` of `u` in the input basis.
    pub fn input_coefficients(&self, u: &[f64]) -> Vec<f64> {
        self.model.uhat.vectors()[..self.n].iter().map(|q| dot(u, q.values())).collect()
    }

    /// `Σ c_i ûⁱ`
    pub fn synthesise(&self, c: &[f64]) -> GridSignal {
        let mut out = vec![0.0; self.model.input_dim()];
        for (ci, q) in c.iter().zip(self.model.uhat.vectors()) {
            axpy(*ci, q.values(), &mut out);
        }
        GridSignal::from_raw(out, self.domain_shape())
    }

    /// `(ŷⁱ, z)` for `i ≤ n`.
    pub fn output_coefficients(&self, z: &[f64]) -> Vec<f64> {
        self.model.yhat[..self.n].iter().map(|y| dot(z, y.values())).collect()
    }

    /// Gram matrix `(ŷⁱ, ŷʲ)` of the active outputs, rows in parallel.
    pub fn yhat_gram(&self) -> DMatrix<f64> {
        let ys = &self.model.yhat[..self.n];
        let rows: Vec<Vec<f64>> =
            (0..self.n).into_par_iter().map(|i| (0..=i).map(|j| dot(ys[i].values(), ys[j].values())).collect()).collect();
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { rows[i][j] } else { rows[j][i] })
    }
}

impl LinearOperator for ProjectedOperator<'_> {
    fn domain_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn range_dim(&self) -> usize {
        self.model.output_dim
    }

    fn domain_shape(&self) -> Option<(usize, usize)> {
        self.model.uhat.vectors().first().and_then(|v| v.shape())
    }

    fn range_shape(&self) -> Option<(usize, usize)> {
        self.model.yhat.first().and_then(|v| v.shape())
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (q, y) in self.model.uhat.vectors()[..self.n].iter().zip(&self.model.yhat) {
            axpy(dot(x, q.values()), y.values(), out);
        }
    }

    fn adjoint_to(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (q, y) in self.model.uhat.vectors()[..self.n].iter().zip(&self.model.yhat) {
            axpy(dot(z, y.values()), q.values(), out);
        }
    }
}

/// Lower bound on the regularisation parameter.
pub const ALPHA_FLOOR: f64 = 1e-14;

/// `α = max(c (δ + ρ), floor)`.
pub fn choose_alpha(delta: f64, rho: f64, c: f64) -> Result<f64> {
    if !(delta >= 0.0) || !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level and residual must be non-negative, got {delta}, {rho}")));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha constant must be positive, got {c}")));
    }
    Ok((c * (delta + rho)).max(ALPHA_FLOOR))
}

/// Computable stand-in for the approximation error: `‖(I − P_{Y_n}) y^δ‖`.
pub fn data_residual_proxy(ybar: &OrthonormalBasis, y_delta: &GridSignal, n: usize) -> Result<f64> {
    ybar.residual_norm(y_delta, n.min(ybar.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    Tikhonov,
    Tv,
}

/// `min ½‖K u − y^δ‖² + α J(u)` for the learned operator.
#[derive(Debug, Clone)]
pub struct VariationalProblem<'a> {
    pub operator: ProjectedOperator<'a>,
    pub data: GridSignal,
    pub alpha: f64,
    pub penalty: Penalty,
    pub controls: TvControls,
}

#[derive(Debug, Clone)]
pub struct VariationalSolution {
    pub solution: GridSignal,
    pub objective: f64,
    /// Iteration report for the TV solver.
    pub report: Option<TvReport>,
}

impl VariationalProblem<'_> {
    pub fn solve(&self) -> Result<VariationalSolution> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        match self.penalty {
            Penalty::Tikhonov => {
                let u = solve_tikhonov(&self.operator, &self.data, self.alpha)?;
                let objective = tikhonov_objective(&self.operator, &u, &self.data, self.alpha)?;
                Ok(VariationalSolution { solution: u, objective, report: None })
            }
            Penalty::Tv => {
                let shape = self
                    .operator
                    .domain_shape()
                    .ok_or_else(|| Error::InvalidArgument("total variation needs a grid shape".into()))?;
                let report = solve_tv(&self.operator, &self.data, self.alpha, shape, &self.controls)?;
                Ok(VariationalSolution { solution: report.solution.clone(), objective: report.objective, report: Some(report) })
            }
        }
    }
}
