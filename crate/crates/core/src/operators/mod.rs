//! Forward operators used to synthesise training pairs and ground truth.
//!
//! Solvers never call these at reconstruction time; they only see the
//! training pairs produced here.

mod radon;
mod seidman;
mod svd;

pub use radon::{default_detector_bins, uniform_angles, RadonOperator, RayModel};
pub use seidman::SeidmanOperator;
pub use svd::{SingularValueLaw, SvdOperator};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, GridSignal};

/// A bounded linear map between finite-dimensional spaces with its adjoint.
pub trait LinearOperator: Send + Sync {
    fn domain_dim(&self) -> usize;
    fn range_dim(&self) -> usize;

    fn domain_shape(&self) -> Option<(usize, usize)> {
        None
    }

    fn range_shape(&self) -> Option<(usize, usize)> {
        None
    }

    /// `out = A x`; slices must have the operator's dimensions.
    fn apply_to(&self, x: &[f64], out: &mut [f64]);

    /// `out = A* z`
    fn adjoint_to(&self, z: &[f64], out: &mut [f64]);

    fn apply(&self, u: &GridSignal) -> Result<GridSignal> {
        check_len(self.domain_dim(), u.len())?;
        if let (Some(s), Some(t)) = (u.shape(), self.domain_shape()) {
            if s != t {
                return Err(Error::ShapeMismatch { rows: s.0, cols: s.1, len: t.0 * t.1 });
            }
        }
        let mut out = vec![0.0; self.range_dim()];
        self.apply_to(u.values(), &mut out);
        finite(out, self.range_shape())
    }

    fn adjoint_apply(&self, z: &GridSignal) -> Result<GridSignal> {
        check_len(self.range_dim(), z.len())?;
        if let (Some(s), Some(t)) = (z.shape(), self.range_shape()) {
            if s != t {
                return Err(Error::ShapeMismatch { rows: s.0, cols: s.1, len: t.0 * t.1 });
            }
        }
        let mut out = vec![0.0; self.domain_dim()];
        self.adjoint_to(z.values(), &mut out);
        finite(out, self.domain_shape())
    }

    /// Dense matrix of the operator, built column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.range_dim(), self.domain_dim());
        let mut a = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_to(&e, &mut col);
            a.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        a
    }
}

fn finite(values: Vec<f64>, shape: Option<(usize, usize)>) -> Result<GridSignal> {
    let s = GridSignal::new(values)?;
    s.with_shape_of(shape)
}

/// Relative adjoint mismatch `|(Au, z) − (u, A*z)| / (‖Au‖‖z‖ + ‖u‖‖A*z‖)`.
pub fn adjoint_mismatch(op: &dyn LinearOperator, u: &[f64], z: &[f64]) -> f64 {
    let mut au = vec![0.0; op.range_dim()];
    let mut az = vec![0.0; op.domain_dim()];
    op.apply_to(u, &mut au);
    op.adjoint_to(z, &mut az);
    let lhs = dot(&au, z);
    let rhs = dot(u, &az);
    let scale = crate::linalg::norm(&au) * crate::linalg::norm(z) + crate::linalg::norm(u) * crate::linalg::norm(&az);
    if scale == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Estimate of `‖A‖` by power iteration on `A*A`.
pub fn operator_norm(op: &dyn LinearOperator, iterations: usize) -> f64 {
    let n = op.domain_dim();
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
    let mut ax = vec![0.0; op.range_dim()];
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let nx = crate::linalg::norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        crate::linalg::scale(1.0 / nx, &mut x);
        op.apply_to(&x, &mut ax);
        lambda = dot(&ax, &ax);
        let mut y = vec![0.0; n];
        op.adjoint_to(&ax, &mut y);
        x = y;
    }
    lambda.sqrt()
}

// ---------------------------------------------------------------------------

/// Explicit matrix operator.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if let Some(i) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn range_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, xj) in x.iter().enumerate() {
            if *xj != 0.0 {
                crate::linalg::axpy(*xj, self.matrix.column(j).as_slice(), out);
            }
        }
    }

    fn adjoint_to(&self, z: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.matrix.column(j).as_slice(), z);
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    dim: usize,
}

impl IdentityOperator {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LinearOperator for IdentityOperator {
    fn domain_dim(&self) -> usize {
        self.dim
    }

    fn range_dim(&self) -> usize {
        self.dim
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn adjoint_to(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(z);
    }
}

// ---------------------------------------------------------------------------
// configuration

/// Serialisable description of an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OperatorConfig {
    Radon {
        /// Image grid `[rows, cols]`.
        dims: [usize; 2],
        /// Number of uniformly spaced angles in `[0, π)`.
        angles: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detector_bins: Option<usize>,
        #[serde(default)]
        ray_model: RayModel,
    },
    Seidman {
        truncation: usize,
    },
    Svd {
        /// `[domain_dim, range_dim]`
        dims: [usize; 2],
        law: SingularValueLaw,
        #[serde(default)]
        seed: u64,
    },
    Identity {
        dim: usize,
    },
}

impl OperatorConfig {
    pub fn build(&self) -> Result<Box<dyn LinearOperator>> {
        Ok(match self {
            OperatorConfig::Radon { dims, angles, detector_bins, ray_model } => {
                let bins = detector_bins.unwrap_or_else(|| default_detector_bins(dims[0], dims[1]));
                Box::new(RadonOperator::new(dims[0], dims[1], uniform_angles(*angles), bins, *ray_model)?)
            }
            OperatorConfig::Seidman { truncation } => Box::new(SeidmanOperator::new(*truncation)?),
            OperatorConfig::Svd { dims, law, seed } => Box::new(SvdOperator::random(dims[0], dims[1], law, *seed)?),
            OperatorConfig::Identity { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("identity dimension must be positive".into()));
                }
                Box::new(IdentityOperator::new(*dim))
            }
        })
    }
}
