use microtele::sweepfit::{
    fit_noise_model, load_fidelity_csv, parse_grid, residual_report, run_sweep, write_fidelity_csv,
    FitOptions, NoiseParams, SweepSpec,
};
use microtele::teleport::{teleport_coherent, TeleportParams};

fn grid(s: &str) -> Vec<f64> {
    parse_grid(s).unwrap()
}

fn argmax_by_s(records: &[microtele::FidelityRecord], s: f64) -> f64 {
    records
        .iter()
        .filter(|r| r.squeezing_db == s)
        .max_by(|a, b| a.fidelity.total_cmp(&b.fidelity))
        .unwrap()
        .gain_db
}

#[test]
fn gain_surface_peaks_at_compensation_point() {
    // strong displacement so the gain-mismatch term dominates the optimum
    let base = TeleportParams {
        photons: 5.0,
        ..TeleportParams::default().lossless()
    };
    let spec = SweepSpec::new(base)
        .axis("G", grid("18:26:1"))
        .unwrap()
        .axis("S", grid("0:7:0.5"))
        .unwrap();
    let recs = run_sweep(&spec).unwrap();
    assert_eq!(recs.len(), 9 * 15);
    for s in grid("0.5:7:0.5") {
        let g = argmax_by_s(&recs, s);
        assert!((g - 21.0).abs() <= 1.0, "S = {s}: argmax G = {g}");
    }
}

#[test]
fn optimal_gain_grows_with_squeezing_on_theory_surface() {
    let spec = SweepSpec::new(TeleportParams::default())
        .axis("S", grid("0:7:0.5"))
        .unwrap()
        .axis("G", grid("15:28:0.25"))
        .unwrap();
    let recs = run_sweep(&spec).unwrap();
    let optima: Vec<f64> = grid("0:7:0.5")
        .into_iter()
        .map(|s| argmax_by_s(&recs, s))
        .collect();
    assert!(optima.windows(2).all(|w| w[1] >= w[0]), "{optima:?}");
    assert!(optima.last() > optima.first());
}

#[test]
fn displacement_angle_sweep_is_flat() {
    let spec = SweepSpec::new(TeleportParams::default())
        .axis(
            "theta_rad",
            grid(&format!(
                "0:{}:{}",
                std::f64::consts::TAU,
                std::f64::consts::TAU / 24.0
            )),
        )
        .unwrap();
    let recs = run_sweep(&spec).unwrap();
    let f0 = recs[0].fidelity;
    assert!(recs.iter().all(|r| (r.fidelity - f0).abs() < 1e-9));
}

#[test]
fn sweep_output_is_identical_for_any_worker_count() {
    let spec = SweepSpec::new(TeleportParams::default())
        .axis("G", grid("18:26:0.5"))
        .unwrap()
        .axis("S", grid("0:7:1"))
        .unwrap()
        .axis("nd", vec![0.5, 1.1])
        .unwrap();
    let render = |jobs| {
        let recs = run_sweep(&SweepSpec {
            jobs,
            ..spec.clone()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_fidelity_csv(&mut buf, &recs).unwrap();
        buf
    };
    let one = render(Some(1));
    assert_eq!(one, render(Some(4)));
    assert_eq!(one, render(None));
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let spec = SweepSpec::new(TeleportParams::default())
        .axis("G", vec![20.0, 21.0, 22.0])
        .unwrap();
    let recs = run_sweep(&spec).unwrap();
    write_fidelity_csv(std::fs::File::create(&path).unwrap(), &recs).unwrap();
    let back = load_fidelity_csv(&path).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.fidelity, b.fidelity);
        assert_eq!(a.gain_db, b.gain_db);
    }
}

#[test]
fn fit_on_synthetic_data_and_residuals() {
    let truth = NoiseParams {
        temperature: 0.06,
        chi1: 0.02,
        chi2: 0.7,
    };
    let mut base = TeleportParams::default();
    base.noise = truth.noise_model(base.noise.frequency);
    let spec = SweepSpec::new(base)
        .axis("G", grid("18:25:1"))
        .unwrap()
        .axis("S", grid("0:6:2"))
        .unwrap();
    let data = run_sweep(&spec).unwrap();
    let opts = FitOptions::default();
    let fit = fit_noise_model(&data, &opts).unwrap();
    assert!(fit.converged);
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(fit.rss <= fit.history[0]);
    assert!((fit.params.chi1 / truth.chi1 - 1.0).abs() < 0.01);
    assert!((fit.params.chi2 / truth.chi2 - 1.0).abs() < 0.01);

    let report = residual_report(&data, &fit, &opts.base).unwrap();
    assert_eq!(report.rows.len(), data.len());
    assert!(report.rows.iter().all(|r| r.residual.abs() < 1e-6));
    assert!((report.rms - (fit.rss / data.len() as f64).sqrt()).abs() < 1e-15);
    let direct = teleport_coherent(&data[3].params(&base)).unwrap().fidelity;
    assert!((report.rows[3].predicted - direct).abs() < 1e-6);
}

#[test]
fn error_bars_weight_the_objective() {
    let mut base = TeleportParams::default();
    base.noise.chi1 = 0.02;
    let spec = SweepSpec::new(base)
        .axis("G", grid("18:22:1"))
        .unwrap()
        .axis("S", vec![0.0, 4.0])
        .unwrap();
    let mut data = run_sweep(&spec).unwrap();
    for r in &mut data {
        r.fidelity += 0.002;
        r.fidelity_err = Some(0.01);
    }
    let fit = fit_noise_model(&data, &FitOptions::default()).unwrap();
    let report = residual_report(&data, &fit, &FitOptions::default().base).unwrap();
    assert!(report.rows.iter().all(|r| (r.weight - 1e4).abs() < 1e-6));
    assert!((report.rms - (fit.rss / data.len() as f64).sqrt()).abs() < 1e-12);
}
