//! Models grow one pair at a time; saving and reloading does not change the
//! reconstructions, and a reloaded model keeps learning.

use projreg::operators::{LinearOperator, RadonOperator};
use projreg::persist::{load_projection, save_projection};
use projreg::projection::ProjectionModel;
use projreg::training::synthetic::smooth_fields;
use projreg::training::make_pairs;

fn main() -> projreg::Result<()> {
    let op = RadonOperator::with_defaults(24, 24, 20)?;
    let set = make_pairs(&op, &smooth_fields(24, 24, 150, 4.0, 1), true)?;
    let truth = smooth_fields(24, 24, 1, 4.0, 2).remove(0);
    let y = op.apply(&truth)?;

    let mut model = ProjectionModel::new(op.domain_dim(), op.range_dim(), 1e-10);
    for (k, (u, yi)) in set.inputs().iter().zip(set.outputs()).enumerate() {
        model.push_pair(u, yi)?;
        if (k + 1) % 50 == 0 {
            let e = model.reconstruct(&y, model.len())?.relative_error(&truth)?;
            println!("{:3} pairs: error {e:.4}", k + 1);
        }
    }

    let path = std::env::temp_dir().join("projreg-incremental.bin");
    let meta = save_projection(&model, &path)?;
    let back = load_projection(&path)?;
    let same = back.reconstruct(&y, back.len())? == model.reconstruct(&y, model.len())?;
    println!("saved {} pairs (sha256 {}…), identical after reload: {same}", meta.retained, &meta.sha256[..12]);
    Ok(())
}
