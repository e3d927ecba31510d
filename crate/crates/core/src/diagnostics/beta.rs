use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{columns_to_matrix, lstsq_colpiv, GridSignal, DEFAULT_DEPTOL};
use crate::operators::SeidmanOperator;
use crate::projection::ProjectionModel;
use crate::training::make_pairs;
use crate::variational::{fit_input_side, InputModel};

/// Relative pivot threshold below which the `ŷ` basis counts as singular.
pub const BETA_RCOND: f64 = 1e-13;

/// Coefficients `β` of `P_{Y_n} ŷⁱ = Σ_{j≤n} β_j ŷʲ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCheck {
    /// 1-based position of `ŷⁱ` among the retained pairs.
    pub i: usize,
    pub n: usize,
    pub coefficients: Vec<f64>,
    pub sum_squares: f64,
    /// Condition number of the matrix `[ŷ¹ … ŷⁿ]`.
    pub condition: f64,
    /// The basis matrix was numerically rank deficient, so the coefficients
    /// are a minimum-pivot solution and any verdict built on them is
    /// inconclusive.
    pub rank_deficient: bool,
}

/// Solves for `β` against `ŷ¹ … ŷⁿ` for each 1-based index in `indices`,
/// factorising the basis matrix once.
pub fn beta_coefficients(model: &InputModel, n: usize, indices: &[usize]) -> Result<Vec<BetaCheck>> {
    let len = model.len();
    if n == 0 || n > len {
        return Err(Error::OutOfRange { index: n, size: len });
    }
    if let Some(&i) = indices.iter().find(|&&i| i == 0 || i > len) {
        return Err(Error::OutOfRange { index: i, size: len });
    }
    let yhat = model.yhat();
    let columns: Vec<&[f64]> = yhat[..n].iter().map(|y| y.values()).collect();
    let rhs: Vec<&[f64]> = indices.iter().map(|&i| yhat[i - 1].values()).collect();
    let ls = lstsq_colpiv(&columns, &rhs, BETA_RCOND)?;
    Ok(indices
        .iter()
        .zip(ls.solutions)
        .map(|(&i, coefficients)| BetaCheck {
            i,
            n,
            sum_squares: coefficients.iter().map(|c| c * c).sum(),
            coefficients,
            condition: ls.condition,
            rank_deficient: ls.rank < n,
        })
        .collect())
}

pub fn beta_bound_check(model: &InputModel, i: usize, n: usize) -> Result<BetaCheck> {
    Ok(beta_coefficients(model, n, &[i])?.remove(0))
}

/// `lower ≤ ‖ūⁱ‖ ≤ upper` for one retained pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UbarBound {
    /// 1-based pair position.
    pub i: usize,
    /// `‖uⁱ − P_{U_{i−1}} uⁱ‖ / ‖yⁱ − P_{Y_{i−1}} yⁱ‖`
    pub lower: f64,
    pub value: f64,
    /// `√(C+1) · lower`
    pub upper: f64,
    /// `Σ_j (β_j^{i,i−1})²`, which makes `√(1 + ·) · lower` equal to the value.
    pub beta_sum_squares: f64,
}

impl UbarBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.lower <= self.value * (1.0 + slack) && self.value <= self.upper * (1.0 + slack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UbarBounds {
    pub rows: Vec<UbarBound>,
    /// `C = max_i Σ_j (β_j^{i,i−1})²`
    pub constant: f64,
}

impl UbarBounds {
    pub fn all_hold(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| r.holds(slack))
    }
}

/// Bounds on `‖ūⁱ‖` from the input and output Gram-Schmidt residuals.
///
/// The `β^{i,i−1}` come from one unpivoted QR of `[ŷ¹ … ŷᴺ]`: with
/// `R = [R₁₁ r; 0 ρ]` split after column `i−1`, `β = R₁₁⁻¹ r`.
pub fn ubar_bounds_check(model: &ProjectionModel, input_model: &InputModel) -> Result<UbarBounds> {
    if model.accepted_indices() != input_model.accepted_indices() {
        return Err(Error::ModelMismatch("projection and input models retained different pairs".into()));
    }
    let len = model.len();
    if len == 0 {
        return Err(Error::InvalidArgument("model has no retained pairs".into()));
    }
    let r = columns_to_matrix(input_model.yhat()).qr().r();
    let mut betas = vec![0.0; len];
    for i in 1..len.min(r.nrows()) {
        let r11 = r.view((0, 0), (i, i));
        let col = r.view((0, i), (i, 1)).into_owned();
        let beta = r11
            .solve_upper_triangular(&col)
            .ok_or_else(|| Error::Singular(format!("triangular factor of size {i}")))?;
        betas[i] = beta.norm_squared();
    }
    let constant = betas.iter().cloned().fold(0.0, f64::max);
    let rows = (0..len)
        .map(|k| {
            let lower = input_model.rdiag()[k] / model.rdiag()[k];
            UbarBound {
                i: k + 1,
                lower,
                value: model.ubar()[k].norm(),
                upper: (constant + 1.0).sqrt() * lower,
                beta_sum_squares: betas[k],
            }
        })
        .collect();
    Ok(UbarBounds { rows, constant })
}

// ---------------------------------------------------------------------------
// Seidman's example

/// `C_n = 1 / (1 + Σ_{j=n+1}^{N} j⁻²)` with the tail summed from the small end.
pub fn seidman_tail_constant(n: usize, truncation: usize) -> f64 {
    let tail: f64 = (n + 1..=truncation).rev().map(|j| 1.0 / (j as f64 * j as f64)).sum();
    1.0 / (1.0 + tail)
}

/// Numeric and closed-form expansion coefficients of `P_{Y_n} ŷⁱ` for the
/// truncated Seidman operator with canonical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaOracle {
    pub truncation: usize,
    pub n: usize,
    pub i: usize,
    pub numeric: Vec<f64>,
    pub analytic: Vec<f64>,
    pub tail_constant: f64,
    pub gamma1_deviation: f64,
    pub max_deviation: f64,
    pub sum_squares: f64,
    pub condition: f64,
}

impl GammaOracle {
    /// Every `γ_k`, `k ≥ 2`, has the opposite sign of `γ₁`.
    pub fn signs_alternate(&self) -> bool {
        let g1 = self.numeric[0];
        self.numeric[1..].iter().all(|g| g * g1 < 0.0)
    }
}

/// Input-side model of the first `count` canonical pairs `(eᵏ, Aeᵏ)`.
pub fn seidman_input_model(truncation: usize, count: usize) -> Result<InputModel> {
    if count == 0 || count > truncation {
        return Err(Error::OutOfRange { index: count, size: truncation });
    }
    let op = SeidmanOperator::new(truncation)?;
    let inputs: Vec<GridSignal> = (0..count).map(|k| GridSignal::unit(truncation, k)).collect();
    let set = make_pairs(&op, &inputs, false)?;
    let model = fit_input_side(&set, DEFAULT_DEPTOL)?;
    if model.len() != count {
        return Err(Error::Singular("canonical Seidman pairs were reported dependent".into()));
    }
    Ok(model)
}

/// `γ₁ = C_n i⁻¹ a_i` and `γ_k = −γ₁ k⁻¹ / a_k` for `k = 2..=n`.
fn analytic_gamma(truncation: usize, n: usize, i: usize) -> (Vec<f64>, f64) {
    let cn = seidman_tail_constant(n, truncation);
    let g1 = cn * SeidmanOperator::a_coeff(i) / i as f64;
    let mut g = vec![g1];
    g.extend((2..=n).map(|k| -g1 / (k as f64 * SeidmanOperator::a_coeff(k))));
    (g, cn)
}

/// Oracle comparison for every `i` in `indices` (each `> n`) using a model
/// from [`seidman_input_model`]; the basis of `Y_n` is factorised once.
pub fn seidman_gamma_sweep(model: &InputModel, n: usize, indices: &[usize]) -> Result<Vec<GammaOracle>> {
    if let Some(&i) = indices.iter().find(|&&i| i <= n) {
        return Err(Error::InvalidArgument(format!("index {i} must exceed n = {n}")));
    }
    let truncation = model.input_dim();
    let checks = beta_coefficients(model, n, indices)?;
    Ok(checks
        .into_iter()
        .map(|b| {
            let (analytic, cn) = analytic_gamma(truncation, n, b.i);
            let dev: Vec<f64> = b.coefficients.iter().zip(&analytic).map(|(x, y)| (x - y).abs()).collect();
            GammaOracle {
                truncation,
                n,
                i: b.i,
                gamma1_deviation: dev[0],
                max_deviation: dev.iter().cloned().fold(0.0, f64::max),
                sum_squares: b.sum_squares,
                condition: b.condition,
                numeric: b.coefficients,
                analytic,
                tail_constant: cn,
            }
        })
        .collect())
}

pub fn seidman_gamma_oracle(truncation: usize, n: usize, i: usize) -> Result<GammaOracle> {
    let model = seidman_input_model(truncation, i)?;
    Ok(seidman_gamma_sweep(&model, n, &[i])?.remove(0))
}
