//! Dual least squares from adjoint training pairs `(vⁱ = A*yⁱ, yⁱ)`.
//!
//! The outputs are orthonormalised as in [`crate::projection`] and the same
//! coefficients applied to the `vⁱ` give `v̄ⁱ = A*ȳⁱ`. The minimum-norm
//! solution of `(u, v̄ⁱ) = (y, ȳⁱ)`, `i ≤ n`, is `u = Σ c_i v̄ⁱ` with
//! `G c = ((y, ȳⁱ))_i` and `G_ij = (v̄ⁱ, v̄ʲ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{axpy, check_len, dot, scale, GridSignal, OrthonormalBasis, DEFAULT_DEPTOL};
use crate::training::AdjointTrainingSet;

/// Relative diagonal shift used when the Gram block fails Cholesky.
const JITTER: f64 = 1e-12;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone)]
pub struct DualModel {
    ybar: OrthonormalBasis,
    vbar: Vec<GridSignal>,
    /// Lower triangle, row `i` holds `G_ij` for `j ≤ i`.
    gram_rows: Vec<Vec<f64>>,
    accepted: Vec<usize>,
    rejected: Vec<usize>,
    pairs_seen: usize,
    input_dim: usize,
    deptol: f64,
}

impl DualModel {
    pub fn new(input_dim: usize, output_dim: usize, deptol: f64) -> Self {
        Self {
            ybar: OrthonormalBasis::new(output_dim),
            vbar: Vec::new(),
            gram_rows: Vec::new(),
            accepted: Vec::new(),
            rejected: Vec::new(),
            pairs_seen: 0,
            input_dim,
            deptol,
        }
    }

    pub(crate) fn from_parts(
        ybar: OrthonormalBasis,
        vbar: Vec<GridSignal>,
        accepted: Vec<usize>,
        pairs_seen: usize,
        input_dim: usize,
        deptol: f64,
    ) -> Result<Self> {
        if vbar.len() != ybar.len() || accepted.len() != ybar.len() {
            return Err(Error::Format("inconsistent dual model sections".into()));
        }
        let gram_rows = (0..vbar.len())
            .map(|i| (0..=i).map(|j| dot(vbar[i].values(), vbar[j].values())).collect())
            .collect();
        let rejected = (0..pairs_seen).filter(|i| !accepted.contains(i)).collect();
        Ok(Self { ybar, vbar, gram_rows, accepted, rejected, pairs_seen, input_dim, deptol })
    }

    pub fn update(&mut self, pairs: &AdjointTrainingSet) -> Result<()> {
        for i in self.pairs_seen..pairs.len() {
            self.push_pair(&pairs.adjoint_images()[i], &pairs.outputs()[i])?;
        }
        Ok(())
    }

    /// Offers one adjoint pair; returns whether it was kept.
    pub fn push_pair(&mut self, v: &GridSignal, y: &GridSignal) -> Result<bool> {
        check_len(self.input_dim, v.len())?;
        let out = self.ybar.extend(y, self.deptol)?;
        let index = self.pairs_seen;
        self.pairs_seen += 1;
        if !out.accepted() {
            self.rejected.push(index);
            return Ok(false);
        }
        let mut w = v.values().to_vec();
        for (c, vb) in out.coefficients.iter().zip(&self.vbar) {
            axpy(-c, vb.values(), &mut w);
        }
        scale(1.0 / out.residual_norm, &mut w);
        let row: Vec<f64> = self.vbar.iter().map(|vb| dot(vb.values(), &w)).chain([dot(&w, &w)]).collect();
        self.gram_rows.push(row);
        self.vbar.push(GridSignal::new(w)?.with_shape_of(v.shape())?);
        self.accepted.push(index);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.vbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vbar.is_empty()
    }

    pub fn ybar(&self) -> &OrthonormalBasis {
        &self.ybar
    }

    pub fn vbar(&self) -> &[GridSignal] {
        &self.vbar
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

    pub fn deptol(&self) -> f64 {
        self.deptol
    }

    /// Leading `n × n` block of the Gram matrix of `{v̄ⁱ}`.
    pub fn gram_block(&self, n: usize) -> Result<DMatrix<f64>> {
        if n > self.len() {
            return Err(Error::OutOfRange { index: n, size: self.len() });
        }
        Ok(DMatrix::from_fn(n, n, |i, j| if j <= i { self.gram_rows[i][j] } else { self.gram_rows[j][i] }))
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.gram_block(self.len()).expect("full block is in range")
    }

    /// Coefficients of the minimum-norm solution for the first `n` constraints.
    fn solve(&self, y: &GridSignal, n: usize) -> Result<Vec<f64>> {
        let rhs = DVector::from_vec(self.ybar.coefficients(y, n)?);
        if n == 0 {
            return Ok(Vec::new());
        }
        let g = self.gram_block(n)?;
        let ch = match g.clone().cholesky() {
            Some(ch) => ch,
            None => {
                let shift = JITTER * g.trace() / n as f64;
                let shifted = g + DMatrix::identity(n, n) * shift;
                let ch = shifted
                    .cholesky()
                    .ok_or_else(|| Error::Singular(format!("gram block of size {n} is not positive definite")))?;
                log::warn!("gram block of size {n} needed a diagonal shift of {shift:e}");
                ch
            }
        };
        let mut c = ch.solve(&rhs);
        // refinement with residuals formed from the vectors, not the Gram matrix
        for _ in 0..REFINEMENT_STEPS {
            let u = self.combine(c.as_slice());
            let r = DVector::from_fn(n, |i, _| rhs[i] - dot(self.vbar[i].values(), &u));
            c += ch.solve(&r);
        }
        Ok(c.as_slice().to_vec())
    }

    fn combine(&self, c: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.input_dim];
        for (ci, v) in c.iter().zip(&self.vbar) {
            axpy(*ci, v.values(), &mut acc);
        }
        acc
    }

    /// `u = Σ_{i≤n} c_i v̄ⁱ` with `G⁽ⁿ⁾ c = ((y, ȳⁱ))`.
    pub fn reconstruct_dual(&self, y: &GridSignal, n: usize) -> Result<GridSignal> {
        let c = self.solve(y, n)?;
        GridSignal::new(self.combine(&c))?.with_shape_of(self.vbar.first().and_then(|v| v.shape()))
    }

    /// `μ_n = √λ_min(G⁽ⁿ⁾)`, the smallest singular value of `P_{Y_n} A`
    /// restricted to retained pairs.
    pub fn smallest_singular(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.len() {
            return Err(Error::OutOfRange { index: n, size: self.len() });
        }
        let ev = self.gram_block(n)?.symmetric_eigenvalues();
        let lmin = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(lmin.max(0.0).sqrt())
    }
}

/// Fits a dual model to every adjoint pair.
pub fn fit_dual(pairs: &AdjointTrainingSet, deptol: f64) -> Result<DualModel> {
    let (Some(v0), Some(y0)) = (pairs.adjoint_images().first(), pairs.outputs().first()) else {
        return Err(Error::InvalidArgument("adjoint training set is empty".into()));
    };
    let mut model = DualModel::new(v0.len(), y0.len(), deptol);
    model.update(pairs)?;
    if model.is_empty() {
        return Err(Error::AllDependent);
    }
    Ok(model)
}

pub fn fit_dual_default(pairs: &AdjointTrainingSet) -> Result<DualModel> {
    fit_dual(pairs, DEFAULT_DEPTOL)
}

/// Largest `n` with `δ / μ_n ≤ τ`; `μ_n` is non-increasing so the admissible
/// set is a prefix and is found by bisection. Falls back to `n = 1`.
pub fn choose_n_dual(model: &DualModel, delta: f64, tau: f64) -> Result<crate::projection::NChoice> {
    use crate::projection::NChoice;
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {delta}")));
    }
    if model.is_empty() {
        return Err(Error::InvalidArgument("model has no retained pairs".into()));
    }
    if delta == 0.0 {
        return Ok(NChoice { n: model.len(), admissible: true });
    }
    let ok = |n: usize| -> Result<bool> { Ok(delta <= tau * model.smallest_singular(n)?) };
    if !ok(1)? {
        log::warn!("no admissible n at noise level {delta}; falling back to n = 1");
        return Ok(NChoice { n: 1, admissible: false });
    }
    let (mut lo, mut hi) = (1, model.len());
    if ok(hi)? {
        return Ok(NChoice { n: hi, admissible: true });
    }
    // invariant: ok(lo), !ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NChoice { n: lo, admissible: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{DenseOperator, LinearOperator, SingularValueLaw, SvdOperator};
    use crate::projection::ProjectionModel;
    use crate::training::{make_adjoint_pairs, make_pairs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_dense(m: usize, n: usize, seed: u64) -> DenseOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseOperator::new(DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))).unwrap()
    }

    fn random_signals(count: usize, dim: usize, seed: u64) -> Vec<GridSignal> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| GridSignal::new((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn svd_operator_gives_diagonal_gram() {
        let op = SvdOperator::random(8, 10, &SingularValueLaw::Power { exponent: 1.0 }, 5).unwrap();
        let pairs = make_adjoint_pairs(&op, op.left_vectors()).unwrap();
        let m = fit_dual_default(&pairs).unwrap();
        let g = m.gram();
        for i in 0..8 {
            let s = op.singular_values()[i];
            assert!(m.ybar().vector(i).distance(&op.left_vectors()[i]).unwrap() < 1e-12);
            assert!(m.vbar()[i].distance(&op.right_vectors()[i].scaled(s)).unwrap() < 1e-12);
            for j in 0..8 {
                let expect = if i == j { s * s } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-12);
            }
            assert!((m.smallest_singular(i + 1).unwrap() - s).abs() < 1e-10);
        }
    }

    #[test]
    fn single_pair_gram() {
        let op = random_dense(5, 4, 1);
        let y = random_signals(1, 5, 2);
        let pairs = make_adjoint_pairs(&op, &y).unwrap();
        let m = fit_dual_default(&pairs).unwrap();
        let v = &pairs.adjoint_images()[0];
        let expect = v.norm().powi(2) / y[0].norm().powi(2);
        assert!((m.gram()[(0, 0)] - expect).abs() < 1e-12 * expect);
        assert!((m.smallest_singular(1).unwrap() - m.vbar()[0].norm()).abs() < 1e-12);
    }

    #[test]
    fn gram_matches_direct_adjoint_evaluation() {
        let op = random_dense(14, 10, 3);
        let ys = random_signals(7, 14, 4);
        let pairs = make_adjoint_pairs(&op, &ys).unwrap();
        let m = fit_dual_default(&pairs).unwrap();
        let direct: Vec<GridSignal> = m.ybar().vectors().iter().map(|q| op.adjoint_apply(q).unwrap()).collect();
        let g = m.gram();
        for i in 0..7 {
            assert!(m.vbar()[i].distance(&direct[i]).unwrap() <= 1e-10 * direct[i].norm().max(1.0));
            for j in 0..7 {
                let d = dot(direct[i].values(), direct[j].values());
                assert!((g[(i, j)] - d).abs() <= 1e-10);
                assert!((g[(i, j)] - g[(j, i)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn reconstructs_solution_in_span_and_projects_projection_solution() {
        let op = random_dense(16, 12, 6);
        let us = random_signals(9, 12, 7);
        let set = make_pairs(&op, &us, true).unwrap();
        let pm = ProjectionModel::fit_default(&set).unwrap();
        let dm = fit_dual_default(&make_adjoint_pairs(&op, set.outputs()).unwrap()).unwrap();

        // u† in span of v̄ⁱ
        let mut ud = GridSignal::zeros(12);
        for (k, v) in dm.vbar()[..5].iter().enumerate() {
            ud = ud.add_scaled(1.0 + k as f64, v).unwrap();
        }
        let y = op.apply(&ud).unwrap();
        assert!(dm.reconstruct_dual(&y, 5).unwrap().relative_error(&ud).unwrap() < 1e-8);

        let y = op.apply(&random_signals(1, 12, 8)[0]).unwrap();
        for n in 1..=9 {
            let up = pm.reconstruct(&y, n).unwrap();
            let basis = crate::linalg::householder_orthonormalise(&dm.vbar()[..n], 1e-12).unwrap().basis;
            let projected = basis.project(&up, basis.len()).unwrap();
            let ud = dm.reconstruct_dual(&y, n).unwrap();
            assert!(ud.distance(&projected).unwrap() <= 1e-8 * projected.norm().max(1.0));
        }
    }

    #[test]
    fn mu_is_non_increasing() {
        let op = random_dense(30, 20, 9);
        let pairs = make_adjoint_pairs(&op, &random_signals(20, 30, 10)).unwrap();
        let m = fit_dual_default(&pairs).unwrap();
        let mus: Vec<f64> = (1..=m.len()).map(|n| m.smallest_singular(n).unwrap()).collect();
        assert!(mus.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(m.smallest_singular(0).is_err());
    }

    #[test]
    fn choose_n_dual_closed_form() {
        let op = SvdOperator::random(60, 60, &SingularValueLaw::Power { exponent: 2.0 }, 11).unwrap();
        let m = fit_dual_default(&make_adjoint_pairs(&op, op.left_vectors()).unwrap()).unwrap();
        assert_eq!(choose_n_dual(&m, 1e-3, 1.0).unwrap().n, 31);
        assert_eq!(choose_n_dual(&m, 0.0, 1.0).unwrap().n, 60);
        let mut last = usize::MAX;
        for d in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            let c = choose_n_dual(&m, d, 1.0).unwrap();
            assert!(c.n <= last);
            last = c.n;
        }
        assert!(!choose_n_dual(&m, 5.0, 1.0).unwrap().admissible);
    }
}
