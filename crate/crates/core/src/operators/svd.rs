use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, householder_orthonormalise, GridSignal, DEFAULT_DEPTOL, DEFAULT_ORTHTOL};

use super::LinearOperator;

/// Decay law for synthetic singular values, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularValueLaw {
    /// `σ_i = i^{-exponent}`
    Power { exponent: f64 },
    /// `σ_i = ratio^{i-1}`
    Geometric { ratio: f64 },
}

impl SingularValueLaw {
    pub fn values(&self, count: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            SingularValueLaw::Power { exponent } => (1..=count).map(|i| (i as f64).powf(-exponent)).collect(),
            SingularValueLaw::Geometric { ratio } => {
                if !(*ratio > 0.0 && *ratio <= 1.0) {
                    return Err(Error::Config(format!("geometric ratio must lie in (0, 1], got {ratio}")));
                }
                (0..count).map(|i| ratio.powi(i as i32)).collect()
            }
        };
        if let SingularValueLaw::Power { exponent } = self {
            if !(*exponent >= 0.0) {
                return Err(Error::Config(format!("power exponent must be non-negative, got {exponent}")));
            }
        }
        if v.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("singular value law underflows to zero".into()));
        }
        Ok(v)
    }
}

/// `A u = Σ σ_i (u, x_i) z_i` for orthonormal `{x_i}` and `{z_i}`.
#[derive(Debug, Clone)]
pub struct SvdOperator {
    sigma: Vec<f64>,
    left: Vec<GridSignal>,
    right: Vec<GridSignal>,
    domain: usize,
    range: usize,
}

impl SvdOperator {
    pub fn new(sigma: Vec<f64>, left: Vec<GridSignal>, right: Vec<GridSignal>) -> Result<Self> {
        if sigma.is_empty() || sigma.len() != left.len() || sigma.len() != right.len() {
            return Err(Error::InvalidArgument("singular triplet lists must be nonempty and of equal length".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) || sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("singular values must be positive and non-increasing".into()));
        }
        let domain = right[0].len();
        let range = left[0].len();
        for (set, dim) in [(&right, domain), (&left, range)] {
            for (i, v) in set.iter().enumerate() {
                crate::linalg::check_len(dim, v.len())?;
                for w in &set[..=i] {
                    let target = if std::ptr::eq(v, w) { 1.0 } else { 0.0 };
                    if (dot(v.values(), w.values()) - target).abs() > DEFAULT_ORTHTOL {
                        return Err(Error::InvalidArgument("singular vectors are not orthonormal".into()));
                    }
                }
            }
        }
        Ok(Self { sigma, left, right, domain, range })
    }

    /// Random orthonormal singular vectors drawn from a seeded Gaussian,
    /// with `min(domain, range)` singular values following `law`.
    pub fn random(domain: usize, range: usize, law: &SingularValueLaw, seed: u64) -> Result<Self> {
        if domain == 0 || range == 0 {
            return Err(Error::Config("svd operator dimensions must be positive".into()));
        }
        let k = domain.min(range);
        let sigma = law.values(k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |dim: usize| -> Result<Vec<GridSignal>> {
            let vs: Vec<GridSignal> = (0..k)
                .map(|_| GridSignal::from_raw((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect(), None))
                .collect();
            let out = householder_orthonormalise(&vs, DEFAULT_DEPTOL)?;
            if out.basis.len() != k {
                return Err(Error::Singular("random singular vectors were dependent".into()));
            }
            Ok(out.basis.vectors().to_vec())
        };
        let right = draw(domain)?;
        let left = draw(range)?;
        Ok(Self { sigma, left, right, domain, range })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn left_vectors(&self) -> &[GridSignal] {
        &self.left
    }

    pub fn right_vectors(&self) -> &[GridSignal] {
        &self.right
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

impl LinearOperator for SvdOperator {
    fn domain_dim(&self) -> usize {
        self.domain
    }

    fn range_dim(&self) -> usize {
        self.range
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for ((s, xi), zi) in self.sigma.iter().zip(&self.right).zip(&self.left) {
            axpy(s * dot(x, xi.values()), zi.values(), out);
        }
    }

    fn adjoint_to(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for ((s, xi), zi) in self.sigma.iter().zip(&self.right).zip(&self.left) {
            axpy(s * dot(z, zi.values()), xi.values(), out);
        }
    }
}
