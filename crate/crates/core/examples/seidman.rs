//! The Seidman operator: the projection method fails to converge for
//! `u† = Σ i⁻¹ eⁱ`, and the closed-form coefficients explain why.

use projreg::diagnostics::{l1_partial_sums, seidman_gamma_oracle};
use projreg::linalg::GridSignal;
use projreg::operators::{LinearOperator, SeidmanOperator};
use projreg::projection::ProjectionModel;
use projreg::training::make_pairs;
use projreg::variational::fit_input_side_default;

fn main() -> projreg::Result<()> {
    let big = 2000;
    let op = SeidmanOperator::new(big)?;
    let inputs: Vec<GridSignal> = (0..1000).map(|i| GridSignal::unit(big, i)).collect();
    let set = make_pairs(&op, &inputs, false)?;
    let model = ProjectionModel::fit_default(&set)?;

    let truth = GridSignal::new((1..=big).map(|i| 1.0 / i as f64).collect())?;
    let y = op.apply(&truth)?;
    for n in [10, 100, 500, 1000] {
        let e = model.reconstruct(&y, n)?.relative_error(&truth)?;
        println!("n = {n:4}: relative error {e:.4}");
    }

    let report = l1_partial_sums(&fit_input_side_default(&set)?, &truth, &[10, 100, 1000])?;
    println!("l1 partial sums {:?}: {:?}", report.values, report.verdict);

    let g = seidman_gamma_oracle(20000, 10, 12)?;
    println!("γ₁ numeric {:.6e}, closed form {:.6e}", g.numeric[0], g.analytic[0]);
    Ok(())
}
