use std::io::Write;

use crate::ae::{train, IsacModel, TrainingLog, TrainingPlan};
use crate::baselines::{multibeam, MultibeamParams};
use crate::channels::ScenarioConfig;
use crate::error::{IsacError, Result};
use crate::rng::Rng;
use crate::signal::{perturb_geometry, ArrayGeometry, C64};

use super::metrics::{
    baseline_beams, calibrate_system, evaluate, AeSystem, BaselineSystem, CalibrationResult, Knob, TradeoffPoint,
};
use super::stats::spearman;

/// Monte-Carlo sizes shared by every evaluation of an experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub n_trials: usize,
    pub n_calibration: usize,
    pub target_pfa: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_trials: 300_000,
            n_calibration: 1_000_000,
            target_pfa: 1e-2,
            seed: 0,
        }
    }
}

/// Calibrates and evaluates a trained model.
pub fn evaluate_model(
    model: &IsacModel,
    cfg: &ScenarioConfig,
    geom: &ArrayGeometry,
    settings: &EvalSettings,
    knob: Knob,
) -> Result<(CalibrationResult, TradeoffPoint)> {
    let system = AeSystem::new(model);
    let cal = calibrate_system(&system, cfg, settings.target_pfa, settings.n_calibration, settings.seed)?;
    let point = evaluate(
        &system,
        cfg,
        geom,
        cal.threshold,
        settings.n_trials,
        settings.seed,
        knob,
    )?;
    Ok((cal, point))
}

/// A trained model with its log and evaluation.
#[derive(Clone, Debug)]
pub struct AeRun {
    pub omega_r: f64,
    pub model: IsacModel,
    pub log: TrainingLog,
    pub calibration: CalibrationResult,
    pub point: TradeoffPoint,
}

/// Seed used for the `index`-th model of a sweep rooted at `base`.
pub fn sweep_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Trains and evaluates one model per `ω_r`, each from its own derived seed.
pub fn sweep_ae(
    omegas: &[f64],
    template: &TrainingPlan,
    cfg: &ScenarioConfig,
    geom: &ArrayGeometry,
    settings: &EvalSettings,
) -> Result<Vec<AeRun>> {
    omegas
        .iter()
        .enumerate()
        .map(|(i, &omega_r)| {
            let plan = TrainingPlan {
                omega_r,
                seed: sweep_seed(template.seed, i),
                ..template.clone()
            };
            let (model, log) = train(&plan, cfg, geom).map_err(|e| IsacError::AtOmega {
                omega_r,
                source: Box::new(e),
            })?;
            let (calibration, point) = evaluate_model(&model, cfg, geom, settings, Knob::OmegaR(omega_r))?;
            Ok(AeRun {
                omega_r,
                model,
                log,
                calibration,
                point,
            })
        })
        .collect()
}

/// Baseline trade-off: beams and detector designed on `design_geom`, signals
/// propagated through `true_geom`. The detector statistic under the null does
/// not depend on the beam, so one calibration serves the whole grid.
pub fn sweep_baseline(
    grid: &[MultibeamParams],
    cfg: &ScenarioConfig,
    design_geom: &ArrayGeometry,
    true_geom: &ArrayGeometry,
    settings: &EvalSettings,
) -> Result<(CalibrationResult, Vec<TradeoffPoint>)> {
    let first = *grid
        .first()
        .ok_or_else(|| IsacError::InvalidArgument("empty (rho, phi) grid".into()))?;
    let reference = BaselineSystem::design(cfg, design_geom, first)?;
    let cal = calibrate_system(
        &reference,
        cfg,
        settings.target_pfa,
        settings.n_calibration,
        settings.seed,
    )?;
    let (radar, comm) = baseline_beams(cfg, design_geom)?;
    let points = grid
        .iter()
        .map(|p| {
            let beam = multibeam(&radar, &comm, *p, cfg.energy_budget)?;
            let system = reference.with_beam(*p, beam);
            evaluate(
                &system,
                cfg,
                true_geom,
                cal.threshold,
                settings.n_trials,
                settings.seed,
                Knob::RhoPhi(p.rho, p.phi),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cal, points))
}

/// `(mean σ̂, RMSE)` per point, with the rank correlation across points and
/// the worst RMSE/σ̂ ratio (furthest from 1 on a log scale).
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintySummary {
    pub pairs: Vec<(f64, f64)>,
    pub spearman: f64,
    pub ratios: Vec<f64>,
}

pub fn uncertainty_calibration(points: &[TradeoffPoint]) -> Result<UncertaintySummary> {
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            p.rmse_rad
                .map(|r| (p.mean_sigma_hat, r))
                .ok_or_else(|| IsacError::InvalidArgument("point without detected targets".into()))
        })
        .collect::<Result<_>>()?;
    let sig: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rmse: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ratios = pairs.iter().map(|(s, r)| r / s).collect();
    Ok(UncertaintySummary {
        spearman: spearman(&sig, &rmse)?,
        pairs,
        ratios,
    })
}

/// Paired baseline and learned sweeps on one frozen perturbed array.
#[derive(Clone, Debug)]
pub struct ImpairmentResult {
    pub geometry: ArrayGeometry,
    pub baseline: Vec<TradeoffPoint>,
    pub ae: Vec<AeRun>,
}

/// Draws the impaired array for `(sigma_lambda, seed)`.
pub fn impaired_geometry(cfg: &ScenarioConfig, wavelength: f64, sigma_lambda: f64, seed: u64) -> Result<ArrayGeometry> {
    let mut rng = Rng::named(seed, "geometry", 0);
    perturb_geometry(&mut rng, cfg.num_antennas, wavelength, sigma_lambda)
}

/// Baseline designed for the nominal array and AE trained on the impaired
/// one, both evaluated on the impaired array.
pub fn impairment_experiment(
    sigma_lambda: f64,
    geometry_seed: u64,
    cfg: &ScenarioConfig,
    wavelength: f64,
    template: &TrainingPlan,
    omegas: &[f64],
    grid: &[MultibeamParams],
    settings: &EvalSettings,
) -> Result<ImpairmentResult> {
    let nominal = ArrayGeometry::nominal(cfg.num_antennas, wavelength)?;
    let geometry = impaired_geometry(cfg, wavelength, sigma_lambda, geometry_seed)?;
    let (_, baseline) = sweep_baseline(grid, cfg, &nominal, &geometry, settings)?;
    let ae = sweep_ae(omegas, template, cfg, &geometry, settings)?;
    Ok(ImpairmentResult { geometry, baseline, ae })
}

/// `(angle_deg, E(φ) in dB)` on a 1° grid over `[−90°, 90°]`.
pub fn beampattern_db(beam: &[C64], geom: &ArrayGeometry) -> Result<Vec<(f64, f64)>> {
    (-90..=90)
        .map(|d| {
            let deg = d as f64;
            let e = geom.beampattern(beam, deg.to_radians())?;
            Ok((deg, 10.0 * e.max(1e-300).log10()))
        })
        .collect()
}

/// Best point with `ser ≤ max_ser`, by detection probability.
pub fn best_pd_under_ser(points: &[TradeoffPoint], max_ser: f64) -> Option<TradeoffPoint> {
    points
        .iter()
        .filter(|p| p.ser <= max_ser)
        .max_by(|a, b| a.pd.total_cmp(&b.pd))
        .copied()
}

pub fn write_results_csv<W: Write>(mut w: W, points: &[TradeoffPoint]) -> Result<()> {
    writeln!(
        w,
        "knob_kind,knob_value_1,knob_value_2,ser,pd,pfa_emp,rmse_rad,mean_sigma_hat,n_trials,seed"
    )?;
    for p in points {
        let (v1, v2) = match p.knob {
            Knob::OmegaR(o) => (o.to_string(), String::new()),
            Knob::RhoPhi(r, f) => (r.to_string(), f.to_string()),
            Knob::None => (String::new(), String::new()),
        };
        let rmse = p.rmse_rad.map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{v1},{v2},{},{},{},{rmse},{},{},{}",
            p.knob.kind(),
            p.ser,
            p.pd,
            p.pfa_emp,
            p.mean_sigma_hat,
            p.n_trials,
            p.seed
        )?;
    }
    Ok(())
}

pub fn write_beampattern_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "angle_deg,e_db")?;
    for (a, e) in rows {
        writeln!(w, "{a},{e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(ser: f64, pd: f64) -> TradeoffPoint {
        TradeoffPoint {
            knob: Knob::OmegaR(0.5),
            ser,
            pd,
            pfa_emp: 0.01,
            rmse_rad: Some(0.03),
            mean_sigma_hat: 0.02,
            n_trials: 10,
            n_detected: 3,
            seed: 4,
        }
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        let mut p = point(0.1, 0.5);
        write_results_csv(&mut out, &[p]).unwrap();
        p.knob = Knob::RhoPhi(0.125, 0.5);
        p.rmse_rad = None;
        write_results_csv(&mut out, &[p]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "omega_r,0.5,,0.1,0.5,0.01,0.03,0.02,10,4");
        assert_eq!(lines[3], "rho_phi,0.125,0.5,0.1,0.5,0.01,,0.02,10,4");
    }

    #[test]
    fn beampattern_rows() {
        let geom = ArrayGeometry::nominal(4, 1.0).unwrap();
        let beam = vec![C64::new(0.5, 0.0); 4];
        let rows = beampattern_db(&beam, &geom).unwrap();
        assert_eq!(rows.len(), 181);
        assert_eq!(rows[90].0, 0.0);
        // broadside: |Σ 0.5|² = 4 → 6.02 dB
        assert!((rows[90].1 - 10.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn best_point_selection() {
        let pts = [point(0.001, 0.2), point(0.01, 0.6), point(0.5, 0.9)];
        assert_eq!(best_pd_under_ser(&pts, 0.02).unwrap().pd, 0.6);
        assert!(best_pd_under_ser(&pts, 1e-4).is_none());
    }

    #[test]
    fn calibration_summary() {
        let mut pts = vec![point(0.0, 0.0); 4];
        for (i, p) in pts.iter_mut().enumerate() {
            p.mean_sigma_hat = 0.01 * (i + 1) as f64;
            p.rmse_rad = Some(0.012 * (i + 1) as f64);
        }
        let s = uncertainty_calibration(&pts).unwrap();
        assert_eq!(s.spearman, 1.0);
        assert!(s.ratios.iter().all(|r| (r - 1.2).abs() < 1e-12));
    }
}
