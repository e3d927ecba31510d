//! Regularisation by projection.
//!
//! Outputs are orthonormalised incrementally, `ȳⁿ = (yⁿ − Σ_{i<n} r_{in} ȳⁱ) / r_{nn}`,
//! and the same coefficients are replayed on the inputs,
//! `ūⁿ = (uⁿ − Σ_{i<n} r_{in} ūⁱ) / r_{nn}`, so that `Aūⁱ = ȳⁱ` without ever
//! touching `A`. The reconstruction `u_n = Σ_{i≤n} (y, ȳⁱ) ūⁱ` is the
//! minimum-norm least-squares solution of `A P_{U_n} u = y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, check_len, dot, scale, GridSignal, OrthonormalBasis, DEFAULT_DEPTOL};
use crate::training::TrainingSet;

#[derive(Debug, Clone)]
pub struct ProjectionModel {
    ybar: OrthonormalBasis,
    ubar: Vec<GridSignal>,
    accepted: Vec<usize>,
    rejected: Vec<usize>,
    pairs_seen: usize,
    input_dim: usize,
    deptol: f64,
}

impl ProjectionModel {
    pub fn new(input_dim: usize, output_dim: usize, deptol: f64) -> Self {
        Self {
            ybar: OrthonormalBasis::new(output_dim),
            ubar: Vec::new(),
            accepted: Vec::new(),
            rejected: Vec::new(),
            pairs_seen: 0,
            input_dim,
            deptol,
        }
    }

    /// Fits a model to every pair of `pairs`.
    pub fn fit(pairs: &TrainingSet, deptol: f64) -> Result<Self> {
        let (Some(nu), Some(ny)) = (pairs.input_dim(), pairs.output_dim()) else {
            return Err(Error::InvalidArgument("training set is empty".into()));
        };
        let mut model = Self::new(nu, ny, deptol);
        model.update(pairs)?;
        if model.is_empty() {
            return Err(Error::AllDependent);
        }
        Ok(model)
    }

    pub fn fit_default(pairs: &TrainingSet) -> Result<Self> {
        Self::fit(pairs, DEFAULT_DEPTOL)
    }

    pub(crate) fn from_parts(
        ybar: OrthonormalBasis,
        ubar: Vec<GridSignal>,
        accepted: Vec<usize>,
        pairs_seen: usize,
        input_dim: usize,
        deptol: f64,
    ) -> Result<Self> {
        if ubar.len() != ybar.len() || accepted.len() != ybar.len() {
            return Err(Error::Format("inconsistent projection model sections".into()));
        }
        let rejected = (0..pairs_seen).filter(|i| !accepted.contains(i)).collect();
        Ok(Self { ybar, ubar, accepted, rejected, pairs_seen, input_dim, deptol })
    }

    /// Processes the pairs of `pairs` not yet seen by this model. The set must
    /// extend the one used so far.
    pub fn update(&mut self, pairs: &TrainingSet) -> Result<()> {
        for i in self.pairs_seen..pairs.len() {
            self.push_pair(&pairs.inputs()[i], &pairs.outputs()[i])?;
        }
        Ok(())
    }

    /// Offers one more pair; returns whether it was kept.
    pub fn push_pair(&mut self, u: &GridSignal, y: &GridSignal) -> Result<bool> {
        check_len(self.input_dim, u.len())?;
        let out = self.ybar.extend(y, self.deptol)?;
        let index = self.pairs_seen;
        self.pairs_seen += 1;
        if !out.accepted() {
            self.rejected.push(index);
            return Ok(false);
        }
        let mut w = u.values().to_vec();
        for (c, ub) in out.coefficients.iter().zip(&self.ubar) {
            axpy(-c, ub.values(), &mut w);
        }
        scale(1.0 / out.residual_norm, &mut w);
        self.ubar.push(GridSignal::new(w)?.with_shape_of(u.shape())?);
        self.accepted.push(index);
        Ok(true)
    }

    /// Number of retained pairs.
    pub fn len(&self) -> usize {
        self.ubar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ubar.is_empty()
    }

    pub fn ybar(&self) -> &OrthonormalBasis {
        &self.ybar
    }

    pub fn ubar(&self) -> &[GridSignal] {
        &self.ubar
    }

    /// `rdiag[i] = ‖yⁱ − P_{Y_{i−1}} yⁱ‖` over retained pairs.
    pub fn rdiag(&self) -> &[f64] {
        self.ybar.rdiag()
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
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.ybar.dim()
    }

    pub fn deptol(&self) -> f64 {
        self.deptol
    }

    /// `(y, ȳⁱ)` for `i < n`.
    pub fn coefficients(&self, y: &GridSignal, n: usize) -> Result<Vec<f64>> {
        self.ybar.coefficients(y, n)
    }

    /// `u_n = Σ_{i≤n} (y, ȳⁱ) ūⁱ`
    pub fn reconstruct(&self, y: &GridSignal, n: usize) -> Result<GridSignal> {
        let c = self.coefficients(y, n)?;
        Ok(self.combine(&c))
    }

    /// Same formula applied to noisy data `y^δ`.
    pub fn reconstruct_noisy(&self, y_delta: &GridSignal, n: usize) -> Result<GridSignal> {
        self.reconstruct(y_delta, n)
    }

    /// Reconstructions for every `n` in `ns` (ascending), sharing the partial sums.
    pub fn reconstruct_path(&self, y: &GridSignal, ns: &[usize]) -> Result<Vec<GridSignal>> {
        if ns.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("n grid must be ascending".into()));
        }
        let nmax = ns.last().copied().unwrap_or(0);
        let c = self.coefficients(y, nmax)?;
        let mut acc = vec![0.0; self.input_dim];
        let mut done = 0;
        let mut out = Vec::with_capacity(ns.len());
        for &n in ns {
            for i in done..n {
                axpy(c[i], self.ubar[i].values(), &mut acc);
            }
            done = n;
            out.push(GridSignal::from_raw(acc.clone(), self.input_shape()));
        }
        Ok(out)
    }

    /// Calls `visit(n, u_n)` for every `n = 1..=nmax`, reusing one accumulator.
    pub fn for_each_n(&self, y: &GridSignal, nmax: usize, mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
        let c = self.coefficients(y, nmax)?;
        let mut acc = vec![0.0; self.input_dim];
        for (i, ci) in c.iter().enumerate() {
            axpy(*ci, self.ubar[i].values(), &mut acc);
            visit(i + 1, &acc);
        }
        Ok(())
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        self.ubar.first().and_then(|u| u.shape())
    }

    fn combine(&self, c: &[f64]) -> GridSignal {
        let mut acc = vec![0.0; self.input_dim];
        for (ci, u) in c.iter().zip(&self.ubar) {
            axpy(*ci, u.values(), &mut acc);
        }
        GridSignal::from_raw(acc, self.input_shape())
    }

    /// `max_{i≤n} 1/rdiag[i]` for each `n = 1..=len`.
    pub fn running_inverse_rdiag(&self) -> Vec<f64> {
        let mut m = 0.0f64;
        self.rdiag()
            .iter()
            .map(|r| {
                m = m.max(1.0 / r);
                m
            })
            .collect()
    }
}

/// Threshold rule for picking `n` from the noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRule {
    /// Admissibility threshold τ.
    pub tau: f64,
    /// Candidate values of `n`; all `1..=len` when absent.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
}

impl Default for ChoiceRule {
    fn default() -> Self {
        Self { tau: 1.0, grid: None }
    }
}

impl ChoiceRule {
    pub fn with_tau(tau: f64) -> Self {
        Self { tau, grid: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NChoice {
    pub n: usize,
    /// False when no candidate satisfied the rule and `n = 1` was returned.
    pub admissible: bool,
}

/// Largest `n` with `δ √n · max_{i≤n} 1/rdiag[i] ≤ τ`, with `δ` the absolute
/// noise norm. Returns the model size for `δ = 0`.
pub fn choose_n(rule: &ChoiceRule, model: &ProjectionModel, delta: f64) -> Result<NChoice> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {delta}")));
    }
    if model.is_empty() {
        return Err(Error::InvalidArgument("model has no retained pairs".into()));
    }
    let inv = model.running_inverse_rdiag();
    let candidates: Vec<usize> = match &rule.grid {
        Some(g) => g.iter().copied().filter(|n| *n >= 1 && *n <= model.len()).collect(),
        None => (1..=model.len()).collect(),
    };
    if delta == 0.0 {
        return Ok(NChoice { n: candidates.iter().copied().max().unwrap_or(model.len()), admissible: true });
    }
    let best = candidates.iter().copied().filter(|&n| delta * (n as f64).sqrt() * inv[n - 1] <= rule.tau).max();
    Ok(match best {
        Some(n) => NChoice { n, admissible: true },
        None => {
            log::warn!("no admissible n at noise level {delta}; falling back to n = 1");
            NChoice { n: 1, admissible: false }
        }
    })
}

/// `‖u_n‖` for `n = 1..=nmax`.
pub fn norm_path(model: &ProjectionModel, y: &GridSignal, nmax: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(nmax);
    model.for_each_n(y, nmax, |_, u| out.push(dot(u, u).sqrt()))?;
    Ok(out)
}
