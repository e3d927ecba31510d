//! Dual least squares from adjoint pairs `(A*yⁱ, yⁱ)`: the minimum-norm
//! solution converges on clean data and `μ_n` drives the choice of `n`.

use projreg::dual::{choose_n_dual, fit_dual_default};
use projreg::operators::{LinearOperator, RadonOperator};
use projreg::training::synthetic::smooth_fields;
use projreg::training::{add_noise, make_adjoint_pairs, make_pairs, NoiseSpec};

fn main() -> projreg::Result<()> {
    let op = RadonOperator::with_defaults(32, 32, 30)?;
    let set = make_pairs(&op, &smooth_fields(32, 32, 300, 4.5, 1), true)?;
    let model = fit_dual_default(&make_adjoint_pairs(&op, set.outputs())?)?;

    let truth = smooth_fields(32, 32, 1, 4.5, 2).remove(0);
    let y = op.apply(&truth)?;
    for n in [25, 50, 100, 200, model.len()] {
        let e = model.reconstruct_dual(&y, n)?.relative_error(&truth)?;
        println!("n = {n:3}: μ_n = {:.3e}, clean-data error {e:.4}", model.smallest_singular(n)?);
    }

    let noise = NoiseSpec::relative(1e-2, 7);
    let choice = choose_n_dual(&model, noise.absolute_level(&y), 1.0)?;
    let u = model.reconstruct_dual(&add_noise(&y, &noise)?, choice.n)?;
    println!("δ = 1e-2: n = {}, error {:.4}", choice.n, u.relative_error(&truth)?);
    Ok(())
}
