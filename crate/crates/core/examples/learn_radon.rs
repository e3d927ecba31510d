//! Learn a reconstruction map for a 32×32 parallel-beam Radon transform from
//! smooth training images, then reconstruct a held-out image from noisy data.

use projreg::operators::{LinearOperator, RadonOperator};
use projreg::projection::{choose_n, ChoiceRule, ProjectionModel};
use projreg::training::synthetic::smooth_fields;
use projreg::training::{add_noise, make_pairs, NoiseSpec};

fn main() -> projreg::Result<()> {
    let op = RadonOperator::with_defaults(32, 32, 30)?;
    let set = make_pairs(&op, &smooth_fields(32, 32, 300, 4.5, 1), true)?;
    let model = ProjectionModel::fit_default(&set)?;
    println!("retained {} of {} training pairs", model.len(), set.len());

    let truth = smooth_fields(32, 32, 1, 4.5, 2).remove(0);
    let y = op.apply(&truth)?;
    for delta in [1e-2, 1e-3, 1e-4] {
        let noise = NoiseSpec::relative(delta, 7);
        let y_delta = add_noise(&y, &noise)?;
        let choice = choose_n(&ChoiceRule::default(), &model, noise.absolute_level(&y))?;
        let u = model.reconstruct(&y_delta, choice.n)?;
        println!("δ = {delta:.0e}: n = {:3}, relative error {:.4}", choice.n, u.relative_error(&truth)?);
    }
    Ok(())
}
