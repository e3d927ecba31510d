use std::fs;

use projreg::dual::fit_dual_default;
use projreg::operators::{LinearOperator, RadonOperator};
use projreg::persist::{
    load_any, load_dual, load_input, load_projection, read_metadata, save_dual, save_input, save_projection, sidecar_path,
    AnyModel, ModelKind,
};
use projreg::projection::ProjectionModel;
use projreg::training::synthetic::smooth_fields;
use projreg::training::{make_adjoint_pairs, make_pairs, TrainingSet};
use projreg::variational::fit_input_side_default;
use projreg::{Error, GridSignal};

fn small_set() -> (RadonOperator, TrainingSet) {
    let op = RadonOperator::with_defaults(12, 12, 9).unwrap();
    let set = make_pairs(&op, &smooth_fields(12, 12, 25, 3.0, 4), true).unwrap();
    (op, set)
}

fn probe(op: &RadonOperator) -> GridSignal {
    op.apply(&smooth_fields(12, 12, 1, 3.0, 99)[0]).unwrap()
}

#[test]
fn projection_model_round_trips_bitwise() {
    let (op, set) = small_set();
    let model = ProjectionModel::fit_default(&set).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/projection.bin");
    let meta = save_projection(&model, &path).unwrap();
    assert_eq!(meta.kind, ModelKind::Projection);
    assert_eq!(meta.retained, model.len());
    assert_eq!(read_metadata(&path).unwrap(), meta);

    let back = load_projection(&path).unwrap();
    assert_eq!(back.len(), model.len());
    assert_eq!(back.accepted_indices(), model.accepted_indices());
    assert_eq!(back.rdiag(), model.rdiag());
    let y = probe(&op);
    for n in [1, model.len() / 2, model.len()] {
        assert_eq!(back.reconstruct(&y, n).unwrap(), model.reconstruct(&y, n).unwrap());
    }
}

#[test]
fn dual_and_input_models_round_trip() {
    let (op, set) = small_set();
    let dual = fit_dual_default(&make_adjoint_pairs(&op, set.outputs()).unwrap()).unwrap();
    let input = fit_input_side_default(&set).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (pd, pi) = (dir.path().join("dual.bin"), dir.path().join("input.bin"));
    save_dual(&dual, &pd).unwrap();
    save_input(&input, &pi).unwrap();

    let y = probe(&op);
    let d = load_dual(&pd).unwrap();
    assert_eq!(d.gram(), dual.gram());
    assert_eq!(d.reconstruct_dual(&y, d.len()).unwrap(), dual.reconstruct_dual(&y, dual.len()).unwrap());
    let i = load_input(&pi).unwrap();
    assert_eq!(i.yhat(), input.yhat());
    assert_eq!(i.uhat().vectors(), input.uhat().vectors());

    assert!(matches!(load_any(&pd).unwrap(), AnyModel::Dual(_)));
    assert_eq!(load_any(&pi).unwrap().kind(), ModelKind::Input);
}

#[test]
fn wrong_kind_is_a_model_mismatch() {
    let (_, set) = small_set();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("input.bin");
    save_input(&fit_input_side_default(&set).unwrap(), &path).unwrap();
    assert!(matches!(load_projection(&path), Err(Error::ModelMismatch(_))));
    assert!(matches!(load_dual(&path), Err(Error::ModelMismatch(_))));
}

#[test]
fn corruption_is_detected() {
    let (_, set) = small_set();
    let model = ProjectionModel::fit_default(&set).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_projection(&model, &path).unwrap();

    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    let err = load_projection(&path).unwrap_err();
    assert!(matches!(err, Error::Format(_)));
    assert_eq!(err.exit_code(), 4);

    bytes[mid] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    assert!(load_projection(&path).is_ok());

    fs::remove_file(sidecar_path(&path)).unwrap();
    assert!(matches!(load_projection(&path), Err(Error::Io(_))));
    assert!(matches!(load_any(&dir.path().join("absent.bin")), Err(Error::Io(_))));
}

#[test]
fn loaded_model_keeps_learning() {
    let (op, set) = small_set();
    let head = TrainingSet::from_pairs(set.inputs()[..10].to_vec(), set.outputs()[..10].to_vec(), true, "head").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_projection(&ProjectionModel::fit_default(&head).unwrap(), &path).unwrap();

    let mut resumed = load_projection(&path).unwrap();
    resumed.update(&set).unwrap();
    let full = ProjectionModel::fit_default(&set).unwrap();
    assert_eq!(resumed.len(), full.len());
    let y = probe(&op);
    let (a, b) = (resumed.reconstruct(&y, full.len()).unwrap(), full.reconstruct(&y, full.len()).unwrap());
    assert!(a.relative_error(&b).unwrap() <= 1e-12);
}
