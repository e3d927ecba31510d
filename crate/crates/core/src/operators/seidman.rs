use crate::error::{Error, Result};

use super::LinearOperator;

/// Seidman's operator truncated to the first `N` modes:
/// `(Aξ)_i = a_i ξ_i + b_i ξ_1` with `a_i = 1/i` for odd `i`, `i^{-5/2}` for
/// even `i`, `b_1 = 0` and `b_i = 1/i` otherwise (indices from 1).
///
/// Gram-Schmidt on its images of the canonical basis converges to a
/// reconstruction that does not approach the true solution, which makes it a
/// useful negative test for data-driven projection methods.
#[derive(Debug, Clone)]
pub struct SeidmanOperator {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SeidmanOperator {
    pub fn new(truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidArgument("truncation must be positive".into()));
        }
        let a = (1..=truncation).map(Self::a_coeff).collect();
        let b = (1..=truncation).map(Self::b_coeff).collect();
        Ok(Self { a, b })
    }

    pub fn truncation(&self) -> usize {
        self.a.len()
    }

    /// Diagonal coefficient `a_i`, 1-based.
    pub fn a_coeff(i: usize) -> f64 {
        let x = i as f64;
        if i % 2 == 1 {
            1.0 / x
        } else {
            x.powf(-2.5)
        }
    }

    /// First-column coefficient `b_i`, 1-based.
    pub fn b_coeff(i: usize) -> f64 {
        if i == 1 {
            0.0
        } else {
            1.0 / i as f64
        }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

impl LinearOperator for SeidmanOperator {
    fn domain_dim(&self) -> usize {
        self.a.len()
    }

    fn range_dim(&self) -> usize {
        self.a.len()
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        let x1 = x[0];
        for i in 0..self.a.len() {
            out[i] = self.a[i] * x[i] + self.b[i] * x1;
        }
    }

    fn adjoint_to(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..self.a.len() {
            out[i] = self.a[i] * z[i];
        }
        let mut tail = 0.0;
        for i in (1..self.b.len()).rev() {
            tail += self.b[i] * z[i];
        }
        out[0] += tail;
    }
}
