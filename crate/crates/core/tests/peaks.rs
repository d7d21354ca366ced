use kac::datagen::{run_peaks_experiment, PeaksConfig, RegressorKind};

#[test]
fn both_units_fit_the_first_peak_and_rbf_updates_stay_local() {
    let cfg = PeaksConfig::default();
    let rbf = run_peaks_experiment(RegressorKind::RbfUnit, &cfg).unwrap();
    let mlp = run_peaks_experiment(RegressorKind::MlpUnit, &cfg).unwrap();
    assert!(rbf.rmse[0][0] < 0.05, "rbf {}", rbf.rmse[0][0]);
    assert!(mlp.rmse[0][0] < 0.05, "mlp {}", mlp.rmse[0][0]);
    assert_eq!(rbf.locality.len(), 5);
    for rec in &rbf.locality {
        assert!(rec.outside_weights > 0);
        assert!(rec.ratio < 1e-3, "task {}: {}", rec.task, rec.ratio);
    }
    assert!(mlp.locality.is_empty());
    assert_eq!(rbf.previous_peaks_rmse().len(), 4);
}
