use otfs_mimo::config::Config;
use otfs_mimo::pipeline::{run_full_experiment, TestBank};

fn smoke() -> Config {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.toml")).unwrap();
    let mut cfg = Config::from_toml_str(&text).unwrap();
    cfg.training.frames = 6;
    cfg.training.max_epochs = 6;
    cfg
}

#[test]
fn smoke_experiment_covers_every_detector_and_snr() {
    let cfg = smoke();
    let bundle = run_full_experiment(&cfg).unwrap();
    assert_eq!(bundle.reports.len(), 10);
    assert_eq!(bundle.detectors.len(), 1);
    assert_eq!(bundle.dataset.len(), 6 * 64);
    let symbols = TestBank::simulate(&cfg).unwrap().symbols();
    assert_eq!(symbols, 16 * 64);
    for r in &bundle.reports {
        assert_eq!(r.symbols, symbols);
    }
    // MLD BER falls with SNR on the shared frames
    let mld: Vec<f64> = bundle.reports.iter().filter(|r| r.detector == "mld").map(|r| r.ber()).collect();
    assert!(mld.windows(2).all(|w| w[1] <= w[0]), "{mld:?}");
}

#[test]
fn stage_errors_name_the_stage() {
    let mut cfg = smoke();
    cfg.training.lr0 = f64::NAN;
    let err = run_full_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("config"), "{err}");
}
