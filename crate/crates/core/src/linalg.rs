//! Dense vector arithmetic, orthonormalisation and orthogonal projections.
//!
//! Every method in this crate reduces to repeated inner products against an
//! orthonormal system that is grown one training vector at a time. The
//! incremental path is modified Gram-Schmidt with a single re-orthogonalisation
//! pass; Householder reflections are available for orthonormalising a batch
//! in one go with better orthogonality.
//!
//! Inner products use a fixed four-lane summation order, so results are
//! bitwise reproducible regardless of how callers parallelise around them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold below which a candidate is treated as linearly dependent.
pub const DEFAULT_DEPTOL: f64 = 1e-10;
/// Accepted max-norm deviation of a Gram matrix from the identity.
pub const DEFAULT_ORTHTOL: f64 = 1e-8;
/// Gram deviation above which a grown basis should be rebuilt.
pub const REFRESH_TRIGGER: f64 = 1e-6;
/// A second Gram-Schmidt pass runs when the residual keeps less than this
/// fraction of the candidate norm.
const REORTH_RATIO: f64 = 0.1;

// ---------------------------------------------------------------------------
// slice kernels

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `‖a − reference‖ / ‖reference‖`, or the absolute distance when the
/// reference is zero.
pub fn relative_error(a: &[f64], reference: &[f64]) -> f64 {
    let d = distance(a, reference);
    let r = norm(reference);
    if r > 0.0 {
        d / r
    } else {
        d
    }
}

// ---------------------------------------------------------------------------
// GridSignal

/// A finite real vector, optionally tagged with the 2-D grid it lives on.
///
/// Images and sinograms are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSignal {
    pub(crate) values: Vec<f64>,
    pub(crate) shape: Option<(usize, usize)>,
}

impl GridSignal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values, shape: None })
    }

    pub fn with_shape(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        let mut s = Self::new(values)?;
        s.set_shape(rows, cols)?;
        Ok(s)
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len], shape: None }
    }

    /// Zero signal with the same length and shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], shape: self.shape }
    }

    /// The `i`-th canonical unit vector of length `len`.
    pub fn unit(len: usize, i: usize) -> Self {
        let mut values = vec![0.0; len];
        values[i] = 1.0;
        Self { values, shape: None }
    }

    /// Builds a signal from values known to be finite (internal arithmetic).
    pub(crate) fn from_raw(values: Vec<f64>, shape: Option<(usize, usize)>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values, shape }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn set_shape(&mut self, rows: usize, cols: usize) -> Result<()> {
        if rows * cols != self.values.len() {
            return Err(Error::ShapeMismatch { rows, cols, len: self.values.len() });
        }
        self.shape = Some((rows, cols));
        Ok(())
    }

    pub fn with_shape_of(mut self, shape: Option<(usize, usize)>) -> Result<Self> {
        match shape {
            Some((r, c)) => self.set_shape(r, c)?,
            None => self.shape = None,
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn normalised(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut out = self.clone();
        scale(1.0 / n, &mut out.values);
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        scale(alpha, &mut out.values);
        out
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, alpha: f64, other: &GridSignal) -> Result<Self> {
        check_len(self.len(), other.len())?;
        let mut out = self.clone();
        axpy(alpha, &other.values, &mut out.values);
        Ok(out)
    }

    pub fn sub(&self, other: &GridSignal) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    pub fn distance(&self, other: &GridSignal) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(distance(&self.values, &other.values))
    }

    pub fn relative_error(&self, reference: &GridSignal) -> Result<f64> {
        check_len(self.len(), reference.len())?;
        Ok(relative_error(&self.values, &reference.values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Euclidean inner product.
pub fn inner(a: &GridSignal, b: &GridSignal) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dot(&a.values, &b.values))
}

// ---------------------------------------------------------------------------
// OrthonormalBasis

/// An orthonormal system together with the triangular factor that maps it
/// back onto the vectors it was built from.
///
/// `rcols[j]` holds the coefficients of the `j`-th accepted original vector
/// against `vectors[0..=j]`; its last entry equals `rdiag[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    dim: usize,
    vectors: Vec<GridSignal>,
    rdiag: Vec<f64>,
    rcols: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtendStatus {
    Accepted,
    Rejected,
}

/// Result of offering one candidate vector to a basis.
#[derive(Debug, Clone)]
pub struct ExtendOutcome {
    pub status: ExtendStatus,
    /// New unit vector, present when accepted.
    pub q: Option<GridSignal>,
    /// Inner products of the candidate against the prior basis vectors
    /// (summed over both passes when re-orthogonalised).
    pub coefficients: Vec<f64>,
    /// Norm of the part of the candidate orthogonal to the prior basis.
    pub residual_norm: f64,
}

impl ExtendOutcome {
    pub fn accepted(&self) -> bool {
        self.status == ExtendStatus::Accepted
    }

    /// Full triangular column: prior coefficients followed by the new
    /// diagonal entry. `None` for rejected candidates.
    pub fn rcolumn(&self) -> Option<Vec<f64>> {
        self.accepted().then(|| {
            let mut c = self.coefficients.clone();
            c.push(self.residual_norm);
            c
        })
    }
}

impl OrthonormalBasis {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: Vec::new(), rdiag: Vec::new(), rcols: Vec::new() }
    }

    /// Assembles a basis from already orthonormal parts (used by model loading).
    pub(crate) fn from_parts(dim: usize, vectors: Vec<GridSignal>, rdiag: Vec<f64>, rcols: Vec<Vec<f64>>) -> Self {
        Self { dim, vectors, rdiag, rcols }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[GridSignal] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &GridSignal {
        &self.vectors[i]
    }

    pub fn rdiag(&self) -> &[f64] {
        &self.rdiag
    }

    pub fn rcols(&self) -> &[Vec<f64>] {
        &self.rcols
    }

    /// Offers `candidate` to the basis; see [`mgs_extend`].
    pub fn extend(&mut self, candidate: &GridSignal, deptol: f64) -> Result<ExtendOutcome> {
        mgs_extend(self, candidate, deptol)
    }

    /// Coefficients `(v, q_i)` for `i < n`.
    pub fn coefficients(&self, v: &GridSignal, n: usize) -> Result<Vec<f64>> {
        self.check_prefix(v, n)?;
        Ok(self.vectors[..n].iter().map(|q| dot(&v.values, &q.values)).collect())
    }

    /// Orthogonal projection onto the span of the first `n` vectors.
    pub fn project(&self, v: &GridSignal, n: usize) -> Result<GridSignal> {
        project(self, v, n)
    }

    pub fn residual_norm(&self, v: &GridSignal, n: usize) -> Result<f64> {
        residual_norm(self, v, n)
    }

    /// Max-norm deviation of the Gram matrix of the first `n` vectors from
    /// the identity.
    pub fn gram_deviation_prefix(&self, n: usize) -> f64 {
        let n = n.min(self.len());
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                let g = dot(&self.vectors[i].values, &self.vectors[j].values);
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g - target).abs());
            }
        }
        dev
    }

    pub fn gram_deviation(&self) -> f64 {
        self.gram_deviation_prefix(self.len())
    }

    /// True once orthogonality has drifted past `trigger`; the owner should
    /// rebuild the basis from its source vectors with Householder reflections.
    pub fn needs_refresh(&self, trigger: f64) -> bool {
        self.gram_deviation() > trigger
    }

    /// Rebuilds the `j`-th accepted original vector from `rcols`.
    pub fn reconstruct_original(&self, j: usize) -> Result<GridSignal> {
        if j >= self.len() {
            return Err(Error::OutOfRange { index: j, size: self.len() });
        }
        let mut out = vec![0.0; self.dim];
        for (c, q) in self.rcols[j].iter().zip(&self.vectors) {
            axpy(*c, &q.values, &mut out);
        }
        Ok(GridSignal::from_raw(out, self.vectors[j].shape))
    }

    fn check_prefix(&self, v: &GridSignal, n: usize) -> Result<()> {
        if n > self.len() {
            return Err(Error::OutOfRange { index: n, size: self.len() });
        }
        check_len(self.dim, v.len())
    }
}

/// Modified Gram-Schmidt step: orthogonalise `candidate` against `basis` and
/// append it when it is not (numerically) dependent.
///
/// A candidate is rejected when its residual norm is at most
/// `deptol * ‖candidate‖`; the basis is left untouched in that case.
pub fn mgs_extend(basis: &mut OrthonormalBasis, candidate: &GridSignal, deptol: f64) -> Result<ExtendOutcome> {
    check_len(basis.dim, candidate.len())?;
    if !(deptol > 0.0) {
        return Err(Error::InvalidArgument(format!("deptol must be positive, got {deptol}")));
    }
    let cnorm = candidate.norm();
    if cnorm == 0.0 {
        return Err(Error::ZeroVector);
    }

    let k = basis.len();
    let mut w = candidate.values.clone();
    let mut coefficients = vec![0.0; k];
    let sweep = |w: &mut Vec<f64>, coefficients: &mut Vec<f64>| {
        for (c, q) in coefficients.iter_mut().zip(&basis.vectors) {
            let proj = dot(w, &q.values);
            axpy(-proj, &q.values, w);
            *c += proj;
        }
    };
    sweep(&mut w, &mut coefficients);
    let mut rnorm = norm(&w);
    if k > 0 && rnorm < REORTH_RATIO * cnorm {
        sweep(&mut w, &mut coefficients);
        rnorm = norm(&w);
    }

    if rnorm <= deptol * cnorm {
        return Ok(ExtendOutcome {
            status: ExtendStatus::Rejected,
            q: None,
            coefficients,
            residual_norm: rnorm,
        });
    }

    scale(1.0 / rnorm, &mut w);
    let q = GridSignal::from_raw(w, candidate.shape);
    let mut col = coefficients.clone();
    col.push(rnorm);
    basis.vectors.push(q.clone());
    basis.rdiag.push(rnorm);
    basis.rcols.push(col);
    Ok(ExtendOutcome { status: ExtendStatus::Accepted, q: Some(q), coefficients, residual_norm: rnorm })
}

/// Basis produced by batch Householder orthonormalisation.
#[derive(Debug, Clone)]
pub struct HouseholderOutcome {
    pub basis: OrthonormalBasis,
    /// Input indices that made it into the basis, in order.
    pub kept: Vec<usize>,
    /// Input indices dropped as linearly dependent.
    pub dropped: Vec<usize>,
}

/// Orthonormalises `vectors` with Householder reflections, processing them in
/// order and dropping those whose remaining component falls below
/// `deptol` relative to their norm. Diagonal entries are made positive so the
/// result matches the Gram-Schmidt convention.
pub fn householder_orthonormalise(vectors: &[GridSignal], deptol: f64) -> Result<HouseholderOutcome> {
    let first = vectors.first().ok_or_else(|| Error::InvalidArgument("empty vector list".into()))?;
    let m = first.len();
    for v in vectors {
        check_len(m, v.len())?;
    }
    if vectors.iter().all(|v| v.norm() == 0.0) {
        return Err(Error::ZeroVector);
    }

    // reflectors[k] acts on entries k.. ; stored without the leading zeros
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();

    for (j, v) in vectors.iter().enumerate() {
        let cnorm = v.norm();
        if cnorm == 0.0 {
            dropped.push(j);
            continue;
        }
        let mut w = v.values.clone();
        for (k, (h, beta)) in reflectors.iter().enumerate() {
            let s = dot(h, &w[k..]);
            axpy(-beta * s, h, &mut w[k..]);
        }
        let k = reflectors.len();
        if k >= m {
            dropped.push(j);
            continue;
        }
        let tail = norm(&w[k..]);
        if tail <= deptol * cnorm {
            dropped.push(j);
            continue;
        }
        let alpha = if w[k] >= 0.0 { -tail } else { tail };
        let mut h = w[k..].to_vec();
        h[0] -= alpha;
        let beta = 2.0 / dot(&h, &h);
        reflectors.push((h, beta));

        // R column: entries above the diagonal get the row signs of earlier
        // columns, the diagonal is |alpha|.
        let sign = if alpha < 0.0 { -1.0 } else { 1.0 };
        let mut col: Vec<f64> = w[..k].iter().zip(&signs).map(|(x, s)| x * s).collect();
        col.push(alpha * sign);
        signs.push(sign);
        rcols.push(col);
        kept.push(j);
    }

    let r = reflectors.len();
    let mut qs = Vec::with_capacity(r);
    for k in 0..r {
        let mut e = vec![0.0; m];
        e[k] = signs[k];
        for l in (0..=k).rev() {
            let (h, beta) = &reflectors[l];
            let s = dot(h, &e[l..]);
            axpy(-beta * s, h, &mut e[l..]);
        }
        qs.push(GridSignal::from_raw(e, vectors[kept[k]].shape));
    }
    let rdiag = rcols.iter().map(|c| *c.last().unwrap()).collect();
    Ok(HouseholderOutcome { basis: OrthonormalBasis::from_parts(m, qs, rdiag, rcols), kept, dropped })
}

/// `Σ_{i<n} (v, q_i) q_i`
pub fn project(basis: &OrthonormalBasis, v: &GridSignal, n: usize) -> Result<GridSignal> {
    let coeffs = basis.coefficients(v, n)?;
    let mut out = vec![0.0; basis.dim];
    for (c, q) in coeffs.iter().zip(&basis.vectors) {
        axpy(*c, &q.values, &mut out);
    }
    Ok(GridSignal::from_raw(out, v.shape))
}

/// `‖v − project(basis, v, n)‖`
pub fn residual_norm(basis: &OrthonormalBasis, v: &GridSignal, n: usize) -> Result<f64> {
    let p = project(basis, v, n)?;
    Ok(distance(&v.values, &p.values))
}

// ---------------------------------------------------------------------------
// small dense helpers

/// Column-major matrix whose columns are the given signals.
pub fn columns_to_matrix(cols: &[GridSignal]) -> DMatrix<f64> {
    let m = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, cols.len(), |i, j| cols[j].values[i])
}

/// Least-squares fit computed by column-pivoted Householder QR.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// One coefficient vector per right-hand side.
    pub solutions: Vec<Vec<f64>>,
    /// Ratio of extreme singular values of the column matrix.
    pub condition: f64,
    /// Numerical rank detected during pivoting.
    pub rank: usize,
}

/// Solves `min ‖C x − b‖` for every `b` in `rhs`, where the columns of `C`
/// are `columns`. Rank is decided by `|R_kk| > rcond · |R_00|`.
pub fn lstsq_colpiv(columns: &[&[f64]], rhs: &[&[f64]], rcond: f64) -> Result<LeastSquares> {
    let n = columns.len();
    let m = columns.first().map_or(0, |c| c.len());
    for c in columns {
        check_len(m, c.len())?;
    }
    for b in rhs {
        check_len(m, b.len())?;
    }
    if n == 0 {
        return Ok(LeastSquares { solutions: vec![Vec::new(); rhs.len()], condition: 1.0, rank: 0 });
    }
    let mut a: Vec<Vec<f64>> = columns.iter().map(|c| c.to_vec()).collect();
    let mut bs: Vec<Vec<f64>> = rhs.iter().map(|b| b.to_vec()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = n.min(m);
    let mut rank = steps;
    let mut r00 = 0.0;

    for k in 0..steps {
        let (p, best) = (k..n)
            .map(|j| (j, norm(&a[j][k..])))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        a.swap(k, p);
        perm.swap(k, p);
        if k == 0 {
            r00 = best;
        }
        if best == 0.0 || best <= rcond * r00 {
            rank = k;
            break;
        }
        let alpha = if a[k][k] >= 0.0 { -best } else { best };
        let mut h = a[k][k..].to_vec();
        h[0] -= alpha;
        let beta = 2.0 / dot(&h, &h);
        for col in a.iter_mut().skip(k + 1) {
            let s = dot(&h, &col[k..]);
            axpy(-beta * s, &h, &mut col[k..]);
        }
        for b in bs.iter_mut() {
            let s = dot(&h, &b[k..]);
            axpy(-beta * s, &h, &mut b[k..]);
        }
        a[k][k] = alpha;
        for v in a[k][k + 1..].iter_mut() {
            *v = 0.0;
        }
    }

    let r = DMatrix::from_fn(steps, n, |i, j| if i <= j { a[j][i] } else { 0.0 });
    let sv = r.columns(0, n).rows(0, steps).into_owned().singular_values();
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if steps < n || smin == 0.0 { f64::INFINITY } else { smax / smin };

    let solutions = bs
        .iter()
        .map(|b| {
            let mut z = vec![0.0; rank];
            for i in (0..rank).rev() {
                let mut s = b[i];
                for j in i + 1..rank {
                    s -= a[j][i] * z[j];
                }
                z[i] = s / a[i][i];
            }
            let mut x = vec![0.0; n];
            for (k, zk) in z.iter().enumerate() {
                x[perm[k]] = *zk;
            }
            x
        })
        .collect();
    Ok(LeastSquares { solutions, condition, rank })
}
