//! Numerical checks of the structural assumptions behind the
//! reconstruction methods.
//!
//! Trend-type checks return an [`AssumptionReport`] whose verdict only ever
//! says whether the numbers contradict an assumption; identity-type checks
//! return the raw quantities so callers can assert them with a tolerance.

mod beta;
mod curves;

pub use beta::{
    beta_bound_check, beta_coefficients, seidman_gamma_oracle, seidman_gamma_sweep, seidman_input_model,
    seidman_tail_constant, ubar_bounds_check, BetaCheck, GammaOracle, UbarBound, UbarBounds,
};
pub use curves::{semiconvergence_curves, CurveMethod, ErrorCurve};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::GridSignal;
use crate::projection::ProjectionModel;
use crate::variational::InputModel;

/// Share of the total that the last decade of a partial-sum sequence may add
/// before the sequence stops looking convergent.
pub const TAIL_INCREMENT_LIMIT: f64 = 0.05;
/// Running-minimum decay factor that counts as residuals tending to zero.
pub const RESIDUAL_DECAY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub name: String,
    pub grid: Vec<usize>,
    pub values: Vec<f64>,
    pub verdict: Verdict,
    pub notes: String,
}

impl AssumptionReport {
    pub fn new(name: &str, grid: Vec<usize>, values: Vec<f64>, verdict: Verdict, notes: String) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        check_grid(&grid)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { name: name.to_string(), grid, values, verdict, notes })
    }

    /// Plot-ready `n,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,value\n");
        for (n, v) in self.grid.iter().zip(&self.values) {
            s.push_str(&format!("{n},{v}\n"));
        }
        s
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

pub(crate) fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be strictly increasing and start at n >= 1".into()));
    }
    Ok(())
}

/// Judges whether a non-decreasing sequence of partial sums levels off.
///
/// Let `S` be the value at the last grid point `N`, `S₁` the value at the
/// largest grid point `≤ N/10` and `S₂` the value at the largest point
/// `≤ N/100`. The sequence is consistent with a finite limit when the last
/// decade adds less than [`TAIL_INCREMENT_LIMIT`] of `S`. It is inconsistent
/// when the last decade adds at least half of what the previous one added
/// (logarithmic or faster growth), or, lacking a previous decade, at least
/// half of `S`. Anything else, including grids spanning less than a decade,
/// is inconclusive.
pub fn growth_verdict(grid: &[usize], values: &[f64]) -> (Verdict, String) {
    let (Some(&nl), Some(&sl)) = (grid.last(), values.last()) else {
        return (Verdict::Inconclusive, "empty sequence".into());
    };
    let at_or_below = |bound: usize| grid.iter().rposition(|&n| n <= bound).map(|k| values[k]);
    let Some(s1) = at_or_below(nl / 10).filter(|_| nl >= 10) else {
        return (Verdict::Inconclusive, "grid spans less than one decade".into());
    };
    if sl == 0.0 {
        return (Verdict::Consistent, "all terms vanish".into());
    }
    let last = sl - s1;
    let share = last / sl.abs();
    let prev = at_or_below(nl / 100).filter(|_| nl >= 100).map(|s2| s1 - s2);
    let notes = match prev {
        Some(p) => format!("last decade adds {:.3}% of the total; previous decade added {p:e}, last {last:e}", 100.0 * share),
        None => format!("last decade adds {:.3}% of the total", 100.0 * share),
    };
    let verdict = if share < TAIL_INCREMENT_LIMIT {
        Verdict::Consistent
    } else {
        match prev {
            Some(p) if last >= 0.5 * p => Verdict::Inconsistent,
            None if share >= 0.5 => Verdict::Inconsistent,
            _ => Verdict::Inconclusive,
        }
    };
    (verdict, notes)
}

/// Partial sums `Σ_{i≤n} |(target, ûⁱ)|` over the grid.
pub fn l1_partial_sums(model: &InputModel, target: &GridSignal, grid: &[usize]) -> Result<AssumptionReport> {
    check_grid(grid)?;
    let nmax = *grid.last().unwrap();
    if nmax > model.len() {
        return Err(Error::OutOfRange { index: nmax, size: model.len() });
    }
    let c = model.uhat().coefficients(target, nmax)?;
    let mut sums = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut done = 0;
    for &n in grid {
        acc += c[done..n].iter().map(|v| v.abs()).sum::<f64>();
        done = n;
        sums.push(acc);
    }
    let (verdict, notes) = growth_verdict(grid, &sums);
    AssumptionReport::new("l1_coefficients", grid.to_vec(), sums, verdict, notes)
}

/// Running minimum of `‖yⁱ − P_{Y_{i−1}} yⁱ‖`; consistent with residuals
/// tending to zero when it falls by [`RESIDUAL_DECAY_FACTOR`] or more.
pub fn residual_decay_report(model: &ProjectionModel) -> Result<AssumptionReport> {
    let rd = model.rdiag();
    if rd.is_empty() {
        return Err(Error::InvalidArgument("model has no retained pairs".into()));
    }
    let mut m = f64::INFINITY;
    let running: Vec<f64> = rd
        .iter()
        .map(|r| {
            m = m.min(*r);
            m
        })
        .collect();
    let factor = running[0] / running[running.len() - 1];
    let verdict = if factor >= RESIDUAL_DECAY_FACTOR { Verdict::Consistent } else { Verdict::Inconclusive };
    AssumptionReport::new(
        "residual_decay",
        (1..=rd.len()).collect(),
        running,
        verdict,
        format!("running minimum decays by a factor {factor:e}"),
    )
}

/// The two sufficient conditions for strong convergence of the projection
/// method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongConditionReport {
    /// Running sup of `|(y, ȳⁱ)| / |(yⁱ, ȳⁱ)|`.
    pub coefficient_ratio: AssumptionReport,
    /// Partial sums of `|(uⁱ, ûⁱ)| = ‖uⁱ − P_{U_{i−1}} uⁱ‖`.
    pub input_residual_sums: AssumptionReport,
}

impl StrongConditionReport {
    pub fn verdict(&self) -> Verdict {
        use Verdict::*;
        match (self.coefficient_ratio.verdict, self.input_residual_sums.verdict) {
            (Consistent, Consistent) => Consistent,
            (Inconsistent, _) | (_, Inconsistent) => Inconsistent,
            _ => Inconclusive,
        }
    }
}

/// Both models must have been fitted from the same pairs; a different set of
/// retained indices is reported as a mismatch.
pub fn strong_condition_check(model: &ProjectionModel, input_model: &InputModel, y: &GridSignal) -> Result<StrongConditionReport> {
    if model.accepted_indices() != input_model.accepted_indices() {
        return Err(Error::ModelMismatch(format!(
            "retained pairs differ: {} on the output side, {} on the input side",
            model.len(),
            input_model.len()
        )));
    }
    let n = model.len();
    if n == 0 {
        return Err(Error::InvalidArgument("model has no retained pairs".into()));
    }
    let grid: Vec<usize> = (1..=n).collect();
    let c = model.coefficients(y, n)?;
    let mut sup = 0.0f64;
    let ratio: Vec<f64> = c
        .iter()
        .zip(model.rdiag())
        .map(|(ci, r)| {
            sup = sup.max(ci.abs() / r);
            sup
        })
        .collect();
    let mut acc = 0.0;
    let sums: Vec<f64> = input_model
        .rdiag()
        .iter()
        .map(|r| {
            acc += r.abs();
            acc
        })
        .collect();
    let (v1, n1) = growth_verdict(&grid, &ratio);
    let (v2, n2) = growth_verdict(&grid, &sums);
    Ok(StrongConditionReport {
        coefficient_ratio: AssumptionReport::new("coefficient_ratio_sup", grid.clone(), ratio, v1, n1)?,
        input_residual_sums: AssumptionReport::new("input_residual_sums", grid, sums, v2, n2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{LinearOperator, SeidmanOperator, SingularValueLaw, SvdOperator};
    use crate::training::make_pairs;
    use crate::variational::fit_input_side_default;

    #[test]
    fn verdict_rule_on_known_sequences() {
        let grid: Vec<usize> = (1..=2000).collect();
        let harmonic: Vec<f64> = grid.iter().scan(0.0, |s, &i| { *s += 1.0 / i as f64; Some(*s) }).collect();
        assert_eq!(growth_verdict(&grid, &harmonic).0, Verdict::Inconsistent);
        let squares: Vec<f64> = grid.iter().scan(0.0, |s, &i| { *s += 1.0 / (i as f64).powi(2); Some(*s) }).collect();
        assert_eq!(growth_verdict(&grid, &squares).0, Verdict::Consistent);
        let linear: Vec<f64> = (1..=50).map(|n| n as f64).collect();
        assert_eq!(growth_verdict(&(1..=50).collect::<Vec<_>>(), &linear).0, Verdict::Inconsistent);
        assert_eq!(growth_verdict(&[1, 2, 3], &[1.0, 2.0, 3.0]).0, Verdict::Inconclusive);
    }

    #[test]
    fn report_validates_grid_and_values() {
        assert!(AssumptionReport::new("x", vec![1, 1], vec![0.0, 0.0], Verdict::Consistent, String::new()).is_err());
        assert!(AssumptionReport::new("x", vec![1, 2], vec![0.0, f64::NAN], Verdict::Consistent, String::new()).is_err());
        let r = AssumptionReport::new("x", vec![1, 3], vec![0.5, 1.5], Verdict::Consistent, String::new()).unwrap();
        assert_eq!(r.to_csv(), "n,value\n1,0.5\n3,1.5\n");
    }

    #[test]
    fn l1_of_first_basis_vector_is_one() {
        let op = SvdOperator::random(12, 15, &SingularValueLaw::Power { exponent: 1.0 }, 3).unwrap();
        let set = make_pairs(&op, op.right_vectors(), false).unwrap();
        let m = fit_input_side_default(&set).unwrap();
        let r = l1_partial_sums(&m, m.uhat().vector(0), &[1, 2, 5, 12]).unwrap();
        for v in &r.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    fn seidman_pairs(n: usize) -> (SeidmanOperator, InputModel) {
        let op = SeidmanOperator::new(n).unwrap();
        let inputs: Vec<GridSignal> = (0..n).map(|i| GridSignal::unit(n, i)).collect();
        let set = make_pairs(&op, &inputs, false).unwrap();
        let m = fit_input_side_default(&set).unwrap();
        (op, m)
    }

    #[test]
    fn seidman_harmonic_target_is_inconsistent_and_source_condition_is_not() {
        let n = 1000;
        let (op, m) = seidman_pairs(n);
        let target = GridSignal::new((1..=n).map(|i| 1.0 / i as f64).collect()).unwrap();
        let grid: Vec<usize> = (1..=n).collect();
        let r = l1_partial_sums(&m, &target, &grid).unwrap();
        assert_eq!(r.verdict, Verdict::Inconsistent);
        let h: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
        assert!((r.last().unwrap() - h).abs() < 1e-9);
        let source = op.adjoint_apply(&target).unwrap();
        assert_eq!(l1_partial_sums(&m, &source, &grid).unwrap().verdict, Verdict::Consistent);
    }

    #[test]
    fn residual_decay_follows_singular_values() {
        let law = SingularValueLaw::Power { exponent: 1.0 };
        let op = SvdOperator::random(30, 30, &law, 1).unwrap();
        let set = make_pairs(&op, op.right_vectors(), false).unwrap();
        let m = ProjectionModel::fit_default(&set).unwrap();
        for (r, s) in m.rdiag().iter().zip(op.singular_values()) {
            assert!((r - s).abs() < 1e-12);
        }
        let rep = residual_decay_report(&m).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        let units: Vec<GridSignal> = (0..5).map(|i| GridSignal::unit(5, i)).collect();
        let flat = make_pairs(&crate::operators::IdentityOperator::new(5), &units, false).unwrap();
        let m = ProjectionModel::fit_default(&flat).unwrap();
        assert_eq!(residual_decay_report(&m).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn strong_conditions_on_svd_and_orthonormal_inputs() {
        let law = SingularValueLaw::Power { exponent: 1.0 };
        let op = SvdOperator::random(40, 40, &law, 2).unwrap();
        let set = make_pairs(&op, op.right_vectors(), false).unwrap();
        let pm = ProjectionModel::fit_default(&set).unwrap();
        let im = fit_input_side_default(&set).unwrap();
        let u = GridSignal::new((0..40).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect()).unwrap();
        let y = op.apply(&u).unwrap();
        let rep = strong_condition_check(&pm, &im, &y).unwrap();
        let bound = op.right_vectors().iter().map(|x| crate::linalg::inner(&u, x).unwrap().abs()).fold(0.0, f64::max);
        assert!((rep.coefficient_ratio.last().unwrap() - bound).abs() < 1e-9);
        assert!(rep.coefficient_ratio.last().unwrap() <= u.norm());
        // orthonormal inputs: every input residual is one
        assert!((rep.input_residual_sums.last().unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(rep.input_residual_sums.verdict, Verdict::Inconsistent);
        assert_eq!(rep.verdict(), Verdict::Inconsistent);
    }

    #[test]
    fn jittered_repeats_keep_input_sums_bounded() {
        let dim = 20;
        let base = GridSignal::new((0..dim).map(|i| 1.0 + (i as f64).sin()).collect()).unwrap();
        let inputs: Vec<GridSignal> = (0..dim)
            .map(|k| {
                let eps = 1e-3 * 0.5f64.powi(k as i32);
                let mut v = base.values().to_vec();
                v[k] += eps;
                GridSignal::new(v).unwrap()
            })
            .collect();
        let op = crate::operators::IdentityOperator::new(dim);
        let set = make_pairs(&op, &inputs, false).unwrap();
        let pm = ProjectionModel::fit(&set, 1e-14).unwrap();
        let im = crate::variational::fit_input_side(&set, 1e-14).unwrap();
        let rep = strong_condition_check(&pm, &im, &base).unwrap();
        assert!(rep.input_residual_sums.last().unwrap() < base.norm() + 4e-3);
        assert_eq!(rep.input_residual_sums.verdict, Verdict::Consistent);
    }

    #[test]
    fn mismatched_models_are_rejected() {
        let op = crate::operators::IdentityOperator::new(3);
        let u = [GridSignal::new(vec![1.0, 0.0, 0.0]).unwrap(), GridSignal::new(vec![0.0, 1.0, 0.0]).unwrap()];
        let a = make_pairs(&op, &u, false).unwrap();
        let b = make_pairs(&op, &u[..1], false).unwrap();
        let pm = ProjectionModel::fit_default(&a).unwrap();
        let im = fit_input_side_default(&b).unwrap();
        assert!(matches!(strong_condition_check(&pm, &im, &u[0]), Err(Error::ModelMismatch(_))));
    }
}
