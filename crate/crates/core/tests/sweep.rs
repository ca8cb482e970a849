use isac_core::config::RunConfig;
use isac_core::constellation::make_constellation;
use isac_core::constellation::ConstellationKind;
use isac_core::estimator::{range_profile, MatrixPencil, DEFAULT_ZERO_PAD};
use isac_core::filterbank::FilterKind;
use isac_core::harness::{run_sweep, McConfig};
use isac_core::pipeline::coherent_output;
use isac_core::signal::make_frame_sequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(kinds: Vec<ConstellationKind>, snr: Vec<f64>, trials: usize) -> McConfig {
    McConfig::two_target_default(kinds, snr, trials)
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let cfg = small(vec![ConstellationKind::Qam16], vec![5.0, 15.0], 12);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_sweep(&cfg).unwrap());
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_sweep(&cfg).unwrap());
    assert_eq!(one, four);
}

#[test]
fn trials_are_conserved() {
    let cfg = small(vec![ConstellationKind::Qam64, ConstellationKind::Qpsk], vec![-5.0, 10.0], 10);
    let s = run_sweep(&cfg).unwrap();
    assert_eq!(s.cells.len(), 2 * 2 * 3);
    for c in &s.cells {
        assert_eq!(c.n_effective + c.misses, c.trials * cfg.targets.len());
        assert_eq!(c.trials, 10);
    }
}

#[test]
fn rmse_falls_with_snr_for_rf_and_roi() {
    let grid = vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
    let cfg = small(vec![ConstellationKind::Qam16], grid.clone(), 60);
    let s = run_sweep(&cfg).unwrap();
    for filter in [FilterKind::Rf, FilterKind::RoiMmf] {
        for w in grid.windows(2) {
            let lo = s.find("16qam", filter, w[0]).unwrap();
            let hi = s.find("16qam", filter, w[1]).unwrap();
            // Two standard errors of an RMSE estimate from n samples is
            // roughly 2 / sqrt(2n) of its value.
            let slack = 1.0 + 2.0 / (2.0 * lo.n_effective as f64).sqrt();
            assert!(hi.rmse_m <= lo.rmse_m * slack, "{filter} {} -> {} dB", w[0], w[1]);
        }
    }
}

#[test]
fn pencil_estimates_sit_on_profile_peaks() {
    let cfg = small(vec![ConstellationKind::Qam16], vec![10.0], 1);
    let c = make_constellation(&ConstellationKind::Qam16).unwrap();
    let mp = MatrixPencil::new(cfg.numerology.subcarrier_spacing).with_roi(cfg.roi);
    let trials = 40;
    let mut hits = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let scene = cfg.scene(10.0, &mut rng);
        let frames = make_frame_sequence(&scene, &c, 8, true, &mut rng).unwrap();
        let out = coherent_output(&frames, FilterKind::RoiMmf, &cfg.design).unwrap();
        let profile = range_profile(&out.averaged, &cfg.numerology, DEFAULT_ZERO_PAD).unwrap();
        let peaks = profile.local_peaks(-20.0);
        let est = mp.estimate(&out.averaged, 2).unwrap();
        let step = profile.range_step();
        if est.ranges().iter().all(|r| peaks.iter().any(|p| (p - r).abs() <= step)) {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

#[test]
fn toml_config_drives_a_sweep() {
    let text = r#"
seed = 77
snr_db = [10.0]
[simulation]
constellations = ["qpsk"]
filters = ["rf"]
n_trials = 4
"#;
    let cfg = RunConfig::from_toml(text).unwrap().mc_config().unwrap();
    let s = run_sweep(&cfg).unwrap();
    assert_eq!(s.cells.len(), 1);
    assert_eq!(s.cells[0].filter, FilterKind::Rf);
    assert_eq!(s.cells[0].misses, 0);
}
