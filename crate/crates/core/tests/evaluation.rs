use isac_core::baselines::MultibeamParams;
use isac_core::eval::stats::{binomial_acceptance, ks_same_distribution};
use isac_core::eval::{calibrate_system, evaluate, h0_scores, BaselineSystem, Knob};
use isac_core::{ArrayGeometry, ScenarioConfig};

fn geom() -> ArrayGeometry {
    ArrayGeometry::nominal(16, 1.0).unwrap()
}

#[test]
fn noiseless_known_angle_system_is_perfect() {
    let mut cfg = ScenarioConfig::default();
    cfg.noise_psd = 0.0;
    cfg.target_angle_range = (0.0, 0.0);
    let sys = BaselineSystem::design(&cfg, &geom(), MultibeamParams::new(0.5, 0.0).unwrap()).unwrap();
    let p = evaluate(&sys, &cfg, &geom(), 0.0, 20_000, 3, Knob::None).unwrap();
    assert_eq!(p.ser, 0.0);
    assert_eq!(p.pd, 1.0);
    assert_eq!(p.pfa_emp, 0.0);
    assert_eq!(p.rmse_rad, Some(0.0));
    assert!(p.n_detected > 9_000);
}

#[test]
fn calibrated_false_alarm_rate_holds_out_of_sample() {
    let cfg = ScenarioConfig::default();
    let sys = BaselineSystem::design(&cfg, &geom(), MultibeamParams::new(1.0, 0.0).unwrap()).unwrap();
    let cal = calibrate_system(&sys, &cfg, 0.01, 100_000, 11).unwrap();
    let (lo, hi) = binomial_acceptance(0.01, 100_000, 0.99).unwrap();
    assert!(lo <= cal.achieved_pfa && cal.achieved_pfa <= hi);
    let p = evaluate(&sys, &cfg, &geom(), cal.threshold, 100_000, 11, Knob::RhoPhi(1.0, 0.0)).unwrap();
    assert!((0.008..=0.012).contains(&p.pfa_emp), "held-out Pfa {}", p.pfa_emp);
}

#[test]
fn noise_only_statistic_is_beam_independent() {
    let cfg = ScenarioConfig::default();
    let a = BaselineSystem::design(&cfg, &geom(), MultibeamParams::new(1.0, 0.0).unwrap()).unwrap();
    let b = BaselineSystem::design(&cfg, &geom(), MultibeamParams::new(0.0, 2.0).unwrap()).unwrap();
    let sa = h0_scores(&a, &cfg, 20_000, 1, "ks-a").unwrap();
    let sb = h0_scores(&b, &cfg, 20_000, 1, "ks-b").unwrap();
    assert!(ks_same_distribution(&sa, &sb, 0.001).unwrap());
}

#[test]
fn evaluation_is_bitwise_reproducible() {
    let cfg = ScenarioConfig::default();
    let sys = BaselineSystem::design(&cfg, &geom(), MultibeamParams::new(0.5, 1.0).unwrap()).unwrap();
    let run = || evaluate(&sys, &cfg, &geom(), 100.0, 25_000, 4, Knob::None).unwrap();
    let (p, q) = (run(), run());
    assert_eq!(p, q);
    assert_eq!(p.rmse_rad.map(f64::to_bits), q.rmse_rad.map(f64::to_bits));
}

#[test]
fn radar_beam_beats_comm_beam_at_detection() {
    let cfg = ScenarioConfig::default();
    let design = |rho| BaselineSystem::design(&cfg, &geom(), MultibeamParams::new(rho, 0.0).unwrap()).unwrap();
    let (radar, comm) = (design(1.0), design(0.0));
    let cal = calibrate_system(&radar, &cfg, 0.01, 20_000, 2).unwrap();
    let pr = evaluate(&radar, &cfg, &geom(), cal.threshold, 20_000, 2, Knob::None).unwrap();
    let pc = evaluate(&comm, &cfg, &geom(), cal.threshold, 20_000, 2, Knob::None).unwrap();
    assert!(pr.pd > pc.pd + 0.3);
    assert!(pc.ser < pr.ser);
}
