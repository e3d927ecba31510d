//! Error against `n` for two noise levels: the curves dip and rise again, and
//! the minimiser moves left as the noise grows.

use projreg::diagnostics::{semiconvergence_curves, CurveMethod};
use projreg::operators::{LinearOperator, RadonOperator};
use projreg::projection::ProjectionModel;
use projreg::training::synthetic::smooth_fields;
use projreg::training::make_pairs;

fn main() -> projreg::Result<()> {
    let op = RadonOperator::with_defaults(32, 32, 30)?;
    let model = ProjectionModel::fit_default(&make_pairs(&op, &smooth_fields(32, 32, 300, 4.5, 1), true)?)?;
    let truths = smooth_fields(32, 32, 5, 4.5, 2);
    let clean = truths.iter().map(|u| op.apply(u)).collect::<projreg::Result<Vec<_>>>()?;
    let grid: Vec<usize> = (1..=model.len()).step_by(10).collect();

    let curves = semiconvergence_curves(&CurveMethod::Projection(&model), &truths, &clean, &[1e-2, 1e-3], &grid, 7)?;
    for c in &curves {
        println!("δ = {:.0e}: minimum {:.4} at n = {}", c.delta, c.min_error(), c.argmin);
    }
    Ok(())
}
