use ccid_core::confidence::{load_confidence, save_confidence};
use ccid_core::fixtures::write_fixture_set;
use ccid_core::fusion::{fuse, Fuser};
use ccid_core::harness::{
    load_dataset, ood_eval, weight_sweep, ConfidenceSource, ExperimentSpec, OodConfig, WeightGrid,
};
use ccid_core::image::{load_image, save_image};
use ccid_core::{FusionMode, FusionParams};

#[test]
fn files_round_trip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_fixture_set(&data, 64).unwrap();
    let images = load_dataset(&data).unwrap();
    assert_eq!(images.len(), 6);

    let mut spec = ExperimentSpec::new(&data);
    spec.deep = "mock:corrupt_half".parse().unwrap();
    spec.modes = FusionMode::ALL.to_vec();
    spec.grid = WeightGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
    spec.conf = ConfidenceSource::Oracle;
    spec.out = Some(dir.path().join("out"));
    let report = weight_sweep(&spec).unwrap();
    assert_eq!(report.rows.len(), 9);
    assert!(report.failures.is_empty());

    let out = dir.path().join("out");
    let conf = load_confidence(out.join("confidence/bars.cmap")).unwrap();
    assert_eq!(conf.dims(), (8, 8));
    let fused = load_image(out.join("fused/bars/dwt-conf_w0.5.png")).unwrap();
    assert_eq!(fused.dims(), (64, 64));

    let copy = dir.path().join("copy.cmap");
    save_confidence(&conf, &copy).unwrap();
    assert_eq!(load_confidence(&copy).unwrap(), conf);
    save_image(&fused, dir.path().join("copy.pgm")).unwrap();
    assert_eq!(load_image(dir.path().join("copy.pgm")).unwrap(), fused);
}

#[test]
fn fuser_and_free_function_agree_on_loaded_images() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture_set(dir.path(), 40).unwrap();
    let deep = load_image(&paths[1]).unwrap();
    let reliable = load_image(&paths[4]).unwrap();
    let fuser = Fuser::new(deep.clone(), reliable.clone()).unwrap();
    for mode in FusionMode::ALL {
        let params = FusionParams::default().with_mode(mode).with_w(0.3);
        assert_eq!(
            fuser.fuse(None, &params).unwrap(),
            fuse(&deep, &reliable, None, &params).unwrap()
        );
    }
}

#[test]
fn ood_config_resolves_relative_datasets() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture_set(dir.path().join("imgs"), 32).unwrap();
    let config = OodConfig::from_toml(
        r#"
        seed = 5
        [[case]]
        ood_type = "noise_type"
        dataset = "imgs"
        noise = "poisson:20"
        deep = "mock:box3"
        grid = "0:1:0.25"
        "#,
    )
    .unwrap();
    let rows = ood_eval(&config.cases(dir.path()).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r.images, 6);
    assert!(r.ccid.psnr_db >= r.reliable.psnr_db.max(r.deep.psnr_db) - 1e-12);
    assert!(r.ccid.psnr_db >= r.ccid_d.psnr_db - 1e-12);
}
