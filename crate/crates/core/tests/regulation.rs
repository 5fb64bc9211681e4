use detach_core::harness::{
    generate_dataset, run_closed_loop, run_open_loop, tracking_metrics, train_from_manifest,
    Config, LoopSetup, SysidReport,
};
use detach_core::plant::Waveform;

/// Holding the plant at its starting equilibrium costs only the noise floor.
#[test]
fn flat_target_at_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.gen.samples = 300;
    generate_dataset(&cfg, 21, dir.path()).unwrap();
    let (model, _) = train_from_manifest(&dir.path().join("train.csv"), &cfg).unwrap();

    // At r_x = r_edge the camera view carries no radial offset, so the
    // measured and true DZ share an equilibrium.
    let mut scenario = cfg.scenario.clone();
    scenario.seed = 21;
    scenario.geometry = Waveform::constant([1.35, -1.05, -1.30]);
    scenario.target = Waveform::constant([0.5]);
    scenario.initial_dz = 0.5;
    let scenario = scenario.finalized();

    let step = SysidReport::default_step(&scenario, &cfg.plant, 0.25).unwrap();
    let sysid = run_open_loop(&step, &cfg.plant, &cfg.frame, Some(&model), &cfg.dz).unwrap();
    let gains = SysidReport::from_trace(&sysid, cfg.pid.lambda)
        .unwrap()
        .gains;

    let setup = LoopSetup {
        model: &model,
        gains,
        dz: cfg.dz,
        plant: &cfg.plant,
        frame: cfg.frame.clone(),
        limits: cfg.pid.limits,
    };
    let trace = run_closed_loop(&scenario, &setup).unwrap();
    let report = tracking_metrics(&trace).unwrap();
    assert!(report.mad_raw <= 0.5, "{report:?}");
}
