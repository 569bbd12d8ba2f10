use isac_cli::{CliError, ExperimentConfig};

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.snr_radar_db = -3.5;
    cfg.scenario.rx_angle_deg = [25.0, 55.0];
    cfg.training.omega_r = 0.09;
    cfg.training.stage_fractions = [0.2, 0.3, 0.5];
    cfg.evaluation.n_trials = 12_345;
    cfg.impairment.sigma_lambda_fraction = 1.0 / 30.0;
    cfg.impairment.geometry_seed = 7;
    cfg.paths.results_dir = "out/results".into();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    cfg.save(&path).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "[scenario]\nsnr_radr_db = 3.0\n",
        "[training]\nlearning_rat = 0.1\n",
        "[bogus]\n",
        "top_level = 1\n",
    ] {
        assert!(
            matches!(ExperimentConfig::from_toml(text), Err(CliError::Validation(_))),
            "{text}"
        );
    }
}

#[test]
fn partial_sections_keep_defaults() {
    let cfg = ExperimentConfig::from_toml("[evaluation]\nn_trials = 5000\n").unwrap();
    assert_eq!(cfg.evaluation.n_trials, 5000);
    assert_eq!(cfg.evaluation.pfa_target, 0.01);
    assert_eq!(cfg.training, Default::default());
}

#[test]
fn invalid_values_are_validation_errors() {
    for text in [
        "[training]\nomega_r = 1.5\n",
        "[evaluation]\npfa_target = 0.0\n",
        "[scenario]\ntarget_angle_deg = [30.0, -30.0]\n",
        "[training]\nstage_fractions = [0.5, 0.5, 0.5]\n",
    ] {
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{text}: {err}");
    }
}
