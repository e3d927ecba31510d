//! Total-variation regularisation by a first-order primal-dual method.
//!
//! Isotropic TV with forward differences and reflexive boundary (the
//! difference across the last row or column is zero).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, norm, GridSignal};
use crate::operators::{operator_norm, LinearOperator};

/// Forward differences `(∂x u, ∂y u)`, each of length `rows·cols`.
pub fn gradient(u: &[f64], rows: usize, cols: usize, gx: &mut [f64], gy: &mut [f64]) {
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            gx[i] = if c + 1 < cols { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if r + 1 < rows { u[i + cols] - u[i] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`gradient`].
pub fn divergence(px: &[f64], py: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let mut d = 0.0;
            if c + 1 < cols {
                d += px[i];
            }
            if c > 0 {
                d -= px[i - 1];
            }
            if r + 1 < rows {
                d += py[i];
            }
            if r > 0 {
                d -= py[i - cols];
            }
            out[i] = d;
        }
    }
}

pub fn total_variation(u: &[f64], rows: usize, cols: usize) -> f64 {
    let mut gx = vec![0.0; u.len()];
    let mut gy = vec![0.0; u.len()];
    gradient(u, rows, cols, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// `½‖A u − y‖² + α TV(u)`
pub fn tv_objective(op: &dyn LinearOperator, u: &GridSignal, y: &GridSignal, alpha: f64, shape: (usize, usize)) -> Result<f64> {
    let r = op.apply(u)?.sub(y)?;
    Ok(0.5 * dot(r.values(), r.values()) + alpha * total_variation(u.values(), shape.0, shape.1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvControls {
    pub max_iterations: usize,
    /// Stop once the primal-dual residual, relative to `‖y‖`, drops below this.
    pub tolerance: f64,
    pub power_iterations: usize,
    /// Step sizes satisfy `τ σ (‖A‖² + 8) = safety²`.
    pub safety: f64,
    /// `τ / σ`; values above one favour the primal step.
    pub step_ratio: f64,
    /// Objective is evaluated (and the best iterate kept) every this many steps.
    pub check_every: usize,
    pub record_trace: bool,
}

impl Default for TvControls {
    fn default() -> Self {
        Self { max_iterations: 5000, tolerance: 1e-6, power_iterations: 20, safety: 0.95, step_ratio: 1.0, check_every: 10, record_trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct TvReport {
    /// Iterate with the smallest objective seen.
    pub solution: GridSignal,
    pub objective: f64,
    pub iterations: usize,
    /// Final primal-dual residual relative to `‖y‖`.
    pub gap: f64,
    pub converged: bool,
    pub step: f64,
    pub trace: Vec<TraceRow>,
}

/// Minimises `½‖A u − y‖² + α TV(u)` over the full image grid.
///
/// Chambolle-Pock iteration on the saddle-point form with dual variables for
/// the data term and for the image gradient. Only `apply_to` and
/// `adjoint_to` of `op` are used, so a learned operator and an explicit model
/// share this code.
pub fn solve_tv(op: &dyn LinearOperator, y: &GridSignal, alpha: f64, shape: (usize, usize), controls: &TvControls) -> Result<TvReport> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let (rows, cols) = shape;
    let nu = op.domain_dim();
    if rows * cols != nu {
        return Err(Error::ShapeMismatch { rows, cols, len: nu });
    }
    check_len(op.range_dim(), y.len())?;
    let m = op.range_dim();
    let yv = y.values();

    let lk = operator_norm(op, controls.power_iterations);
    if !(controls.step_ratio > 0.0) {
        return Err(Error::InvalidArgument(format!("step ratio must be positive, got {}", controls.step_ratio)));
    }
    let step = controls.safety / (lk * lk + 8.0).sqrt();
    let (tau, sigma) = (step * controls.step_ratio.sqrt(), step / controls.step_ratio.sqrt());
    let scale = norm(yv).max(f64::MIN_POSITIVE);

    let mut u = vec![0.0; nu];
    let mut u_new = vec![0.0; nu];
    let mut ubar = vec![0.0; nu];
    let mut ku = vec![0.0; m];
    let mut ku_new = vec![0.0; m];
    let mut kubar = vec![0.0; m];
    let mut q = vec![0.0; m];
    let mut px = vec![0.0; nu];
    let mut py = vec![0.0; nu];
    let mut gx = vec![0.0; nu];
    let mut gy = vec![0.0; nu];
    let mut ktq = vec![0.0; nu];
    let mut div = vec![0.0; nu];
    let mut dgx = vec![0.0; nu];
    let mut dgy = vec![0.0; nu];
    let mut dq = vec![0.0; m];
    let mut diff = vec![0.0; nu];

    let objective = |ku: &[f64], u: &[f64]| -> f64 {
        let r: f64 = ku.iter().zip(yv).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * r + alpha * total_variation(u, rows, cols)
    };

    let mut best = u.clone();
    let mut best_obj = objective(&ku, &u);
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=controls.max_iterations.max(1) {
        iterations = k;
        // dual steps at the extrapolated point; dq, dgx, dgy keep (old − new)/σ
        for i in 0..m {
            let qn = (q[i] + sigma * (kubar[i] - yv[i])) / (1.0 + sigma);
            dq[i] = (q[i] - qn) / sigma;
            q[i] = qn;
        }
        gradient(&ubar, rows, cols, &mut gx, &mut gy);
        for i in 0..nu {
            let ax = px[i] + sigma * gx[i];
            let ay = py[i] + sigma * gy[i];
            let mag = (ax * ax + ay * ay).sqrt();
            let f = if mag > alpha { alpha / mag } else { 1.0 };
            let (nx, ny) = (ax * f, ay * f);
            dgx[i] = (px[i] - nx) / sigma;
            dgy[i] = (py[i] - ny) / sigma;
            px[i] = nx;
            py[i] = ny;
        }

        // primal step; its residual is ‖Lᵀ(q, p)‖
        op.adjoint_to(&q, &mut ktq);
        divergence(&px, &py, rows, cols, &mut div);
        let mut pres = 0.0;
        for i in 0..nu {
            let w = ktq[i] - div[i];
            u_new[i] = u[i] - tau * w;
            pres += w * w;
        }
        op.apply_to(&u_new, &mut ku_new);

        // dual residual (old − new)/σ + L(ū − u_new)
        let mut dres = 0.0;
        for i in 0..m {
            let t = dq[i] + kubar[i] - ku_new[i];
            dres += t * t;
        }
        for i in 0..nu {
            diff[i] = ubar[i] - u_new[i];
        }
        gradient(&diff, rows, cols, &mut gx, &mut gy);
        for i in 0..nu {
            let tx = dgx[i] + gx[i];
            let ty = dgy[i] + gy[i];
            dres += tx * tx + ty * ty;
        }
        gap = (pres.sqrt() + dres.sqrt()) / scale;

        // extrapolation
        for i in 0..nu {
            ubar[i] = 2.0 * u_new[i] - u[i];
        }
        for i in 0..m {
            kubar[i] = 2.0 * ku_new[i] - ku[i];
        }
        std::mem::swap(&mut u, &mut u_new);
        std::mem::swap(&mut ku, &mut ku_new);

        let done = gap <= controls.tolerance;
        if done || k % controls.check_every.max(1) == 0 || k == controls.max_iterations {
            let obj = objective(&ku, &u);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from_slice(&u);
            }
            if controls.record_trace {
                trace.push(TraceRow { iteration: k, objective: obj, gap });
            }
        }
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("TV solver stopped after {iterations} iterations with residual {gap:e}");
    }
    let solution = GridSignal::new(best)?.with_shape_of(Some(shape))?;
    Ok(TvReport { solution, objective: best_obj, iterations, gap, converged, step, trace })
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_dense;
    use super::*;
    use crate::operators::IdentityOperator;

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let (rows, cols) = (5, 7);
        let u: Vec<f64> = (0..35).map(|i| ((i * 17) % 11) as f64 - 4.0).collect();
        let px: Vec<f64> = (0..35).map(|i| ((i * 5) % 7) as f64 * 0.3).collect();
        let py: Vec<f64> = (0..35).map(|i| ((i * 3) % 13) as f64 - 6.0).collect();
        let mut gx = vec![0.0; 35];
        let mut gy = vec![0.0; 35];
        gradient(&u, rows, cols, &mut gx, &mut gy);
        let mut d = vec![0.0; 35];
        divergence(&px, &py, rows, cols, &mut d);
        let lhs = dot(&gx, &px) + dot(&gy, &py);
        let rhs = -dot(&u, &d);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn tv_of_constant_is_zero_and_of_step_is_edge_length() {
        assert_eq!(total_variation(&[2.0; 12], 3, 4), 0.0);
        let mut u = vec![0.0; 12];
        for r in 0..3 {
            for c in 2..4 {
                u[r * 4 + c] = 1.0;
            }
        }
        assert!((total_variation(&u, 3, 4) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn tiny_alpha_gives_least_squares_solution() {
        let op = random_dense(24, 16, 3);
        let utrue: Vec<f64> = (0..16).map(|i| (i as f64 * 0.4).sin()).collect();
        let y = op.apply(&GridSignal::new(utrue.clone()).unwrap()).unwrap();
        let controls = TvControls { max_iterations: 20000, tolerance: 1e-10, ..Default::default() };
        let rep = solve_tv(&op, &y, 1e-12, (4, 4), &controls).unwrap();
        assert!(rep.converged, "gap {}", rep.gap);
        let err = rep.solution.relative_error(&GridSignal::new(utrue).unwrap()).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_image_is_recovered() {
        let op = IdentityOperator::new(36);
        let y = GridSignal::new(vec![0.7; 36]).unwrap();
        let rep = solve_tv(&op, &y, 0.1, (6, 6), &TvControls { tolerance: 1e-10, ..Default::default() }).unwrap();
        assert!(total_variation(rep.solution.values(), 6, 6) <= 1e-6);
        assert!(rep.solution.distance(&y).unwrap() <= 1e-6);
    }

    #[test]
    fn objective_beats_trivial_guesses() {
        let op = random_dense(30, 25, 5);
        let u: Vec<f64> = (0..25).map(|i| if (i % 5) > 1 && i / 5 > 1 { 1.0 } else { 0.0 }).collect();
        let y = op.apply(&GridSignal::new(u).unwrap()).unwrap();
        let alpha = 0.5;
        let rep = solve_tv(&op, &y, alpha, (5, 5), &TvControls { record_trace: true, ..Default::default() }).unwrap();
        let zero = tv_objective(&op, &GridSignal::zeros(25), &y, alpha, (5, 5)).unwrap();
        let bp = op.adjoint_apply(&y).unwrap();
        let bp = bp.scaled(dot(y.values(), op.apply(&bp).unwrap().values()) / op.apply(&bp).unwrap().norm().powi(2));
        let bpo = tv_objective(&op, &bp, &y, alpha, (5, 5)).unwrap();
        assert!(rep.objective <= zero && rep.objective <= bpo);
        assert!((tv_objective(&op, &rep.solution, &y, alpha, (5, 5)).unwrap() - rep.objective).abs() < 1e-9);
        assert!(!rep.trace.is_empty());
        assert!(solve_tv(&op, &y, 0.0, (5, 5), &TvControls::default()).is_err());
        assert!(solve_tv(&op, &y, 1.0, (4, 5), &TvControls::default()).is_err());
    }
}
