//! Total-variation regularisation with the learned operator `A P_{U_n}`,
//! next to the same problem solved with the true operator.

use projreg::operators::{LinearOperator, RadonOperator};
use projreg::training::synthetic::{ellipse_phantom, smooth_fields};
use projreg::training::{add_noise, make_pairs, NoiseSpec};
use projreg::variational::{choose_alpha, fit_input_side_default, solve_tv, TvControls};

fn main() -> projreg::Result<()> {
    let op = RadonOperator::with_defaults(32, 32, 30)?;
    let model = fit_input_side_default(&make_pairs(&op, &smooth_fields(32, 32, 300, 4.5, 1), true)?)?;

    let truth = ellipse_phantom(32, 32);
    let y = op.apply(&truth)?;
    let noise = NoiseSpec::relative(1e-2, 7);
    let y_delta = add_noise(&y, &noise)?;
    let alpha = choose_alpha(noise.absolute_level(&y), 0.0, 0.1)?;
    let controls = TvControls { step_ratio: 0.03, max_iterations: 5000, ..TvControls::default() };

    for n in [50, 100, 200, model.len()] {
        let r = solve_tv(&model.operator(n)?, &y_delta, alpha, (32, 32), &controls)?;
        println!("learned n = {n:3}: error {:.4} after {} iterations", r.solution.relative_error(&truth)?, r.iterations);
    }
    let r = solve_tv(&op, &y_delta, alpha, (32, 32), &controls)?;
    println!("true operator:   error {:.4}", r.solution.relative_error(&truth)?);
    Ok(())
}
