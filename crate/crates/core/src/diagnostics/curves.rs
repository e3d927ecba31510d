use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::DualModel;
use crate::error::{Error, Result};
use crate::linalg::{GridSignal, OrthonormalBasis};
use crate::projection::ProjectionModel;
use crate::training::{add_noise, NoiseSpec};
use crate::variational::{
    choose_alpha, data_residual_proxy, solve_tv, InputModel, Penalty, TikhonovSolver, TvControls,
};

use super::check_grid;

/// Mean relative reconstruction error as a function of `n` at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    /// Relative noise level.
    pub delta: f64,
    pub grid: Vec<usize>,
    pub errors: Vec<f64>,
    pub argmin: usize,
}

impl ErrorCurve {
    fn new(delta: f64, grid: Vec<usize>, errors: Vec<f64>) -> Self {
        let k = errors
            .iter()
            .enumerate()
            .fold(0, |best, (k, e)| if *e < errors[best] { k } else { best });
        Self { delta, argmin: grid[k], grid, errors }
    }

    /// The minimum sits strictly between the first and last grid points.
    pub fn has_interior_argmin(&self) -> bool {
        self.argmin != self.grid[0] && self.argmin != *self.grid.last().unwrap()
    }

    pub fn min_error(&self) -> f64 {
        self.errors.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_non_increasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,value\n");
        for (n, e) in self.grid.iter().zip(&self.errors) {
            s.push_str(&format!("{n},{e}\n"));
        }
        s
    }
}

/// Reconstruction method swept by [`semiconvergence_curves`].
#[derive(Debug, Clone, Copy)]
pub enum CurveMethod<'a> {
    Projection(&'a ProjectionModel),
    Dual(&'a DualModel),
    /// `α = c (δ + ρ_n)`; `ρ_n = ‖(I − P_{Y_n}) y^δ‖` when an output basis is
    /// supplied and zero otherwise.
    Variational {
        model: &'a InputModel,
        penalty: Penalty,
        alpha_constant: f64,
        output_basis: Option<&'a OrthonormalBasis>,
        controls: &'a TvControls,
    },
}

impl CurveMethod<'_> {
    fn len(&self) -> usize {
        match self {
            CurveMethod::Projection(m) => m.len(),
            CurveMethod::Dual(m) => m.len(),
            CurveMethod::Variational { model, .. } => model.len(),
        }
    }

    fn path(&self, y: &GridSignal, noise: f64, grid: &[usize], tikhonov: &[TikhonovSolver<'_>]) -> Result<Vec<GridSignal>> {
        match self {
            CurveMethod::Projection(m) => m.reconstruct_path(y, grid),
            CurveMethod::Dual(m) => grid.iter().map(|&n| m.reconstruct_dual(y, n)).collect(),
            CurveMethod::Variational { model, penalty, alpha_constant, output_basis, controls } => grid
                .iter()
                .enumerate()
                .map(|(k, &n)| {
                    let rho = match output_basis {
                        Some(b) => data_residual_proxy(b, y, n)?,
                        None => 0.0,
                    };
                    let alpha = choose_alpha(noise, rho, *alpha_constant)?;
                    match penalty {
                        Penalty::Tikhonov => tikhonov[k].solve(y, alpha),
                        Penalty::Tv => {
                            let shape = y_shape(model)?;
                            Ok(solve_tv(&model.operator(n)?, y, alpha, shape, controls)?.solution)
                        }
                    }
                })
                .collect(),
        }
    }
}

fn y_shape(model: &InputModel) -> Result<(usize, usize)> {
    model
        .uhat()
        .vectors()
        .first()
        .and_then(|u| u.shape())
        .ok_or_else(|| Error::InvalidArgument("total variation needs a grid shape".into()))
}

/// Mean relative error over the validation pairs for every `(δ, n)` cell.
///
/// Sample `s` is perturbed with noise seeded by `seed + s` at every noise
/// level, so curves for different `δ` share their noise directions. Cells run
/// in parallel; averaging happens in a fixed order, so results do not depend
/// on the thread count.
pub fn semiconvergence_curves(
    method: &CurveMethod<'_>,
    truths: &[GridSignal],
    clean: &[GridSignal],
    deltas: &[f64],
    grid: &[usize],
    seed: u64,
) -> Result<Vec<ErrorCurve>> {
    check_grid(grid)?;
    if truths.is_empty() || truths.len() != clean.len() {
        return Err(Error::InvalidArgument("need matching nonempty validation inputs and outputs".into()));
    }
    let nmax = *grid.last().unwrap();
    if nmax > method.len() {
        return Err(Error::OutOfRange { index: nmax, size: method.len() });
    }
    let tikhonov: Vec<TikhonovSolver<'_>> = match method {
        CurveMethod::Variational { model, penalty: Penalty::Tikhonov, .. } => {
            grid.iter().map(|&n| Ok(TikhonovSolver::new(model.operator(n)?))).collect::<Result<_>>()?
        }
        _ => Vec::new(),
    };
    let cells: Vec<(usize, usize)> = (0..deltas.len()).flat_map(|d| (0..truths.len()).map(move |s| (d, s))).collect();
    let errors: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(d, s)| {
            let spec = NoiseSpec::relative(deltas[d], seed.wrapping_add(s as u64));
            let y = add_noise(&clean[s], &spec)?;
            let path = method.path(&y, spec.absolute_level(&clean[s]), grid, &tikhonov)?;
            path.iter().map(|u| u.relative_error(&truths[s])).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(d, &delta)| {
            let rows = &errors[d * truths.len()..(d + 1) * truths.len()];
            let mean = (0..grid.len())
                .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / truths.len() as f64)
                .collect();
            ErrorCurve::new(delta, grid.to_vec(), mean)
        })
        .collect())
}
