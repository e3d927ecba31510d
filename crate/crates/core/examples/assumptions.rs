//! Numerical checks of the structural conditions behind convergence:
//! residual decay, the strong conditions and the `ūⁱ` norm bounds.

use projreg::diagnostics::{residual_decay_report, strong_condition_check, ubar_bounds_check};
use projreg::operators::{LinearOperator, RadonOperator};
use projreg::projection::ProjectionModel;
use projreg::training::synthetic::smooth_fields;
use projreg::training::make_pairs;
use projreg::variational::fit_input_side_default;

fn main() -> projreg::Result<()> {
    let op = RadonOperator::with_defaults(24, 24, 20)?;
    let set = make_pairs(&op, &smooth_fields(24, 24, 120, 4.0, 1), true)?;
    let projection = ProjectionModel::fit_default(&set)?;
    let input = fit_input_side_default(&set)?;

    let decay = residual_decay_report(&projection)?;
    println!("residual decay: {:?} ({})", decay.verdict, decay.notes);

    let y = op.apply(&smooth_fields(24, 24, 1, 4.0, 2)[0])?;
    let strong = strong_condition_check(&projection, &input, &y)?;
    println!("coefficient ratio: {:?}", strong.coefficient_ratio.verdict);
    println!("input residual sums: {:?}", strong.input_residual_sums.verdict);

    let bounds = ubar_bounds_check(&projection, &input)?;
    println!("ūⁱ bounds hold for {} rows: {}", bounds.rows.len(), bounds.all_hold(1e-8));
    Ok(())
}
