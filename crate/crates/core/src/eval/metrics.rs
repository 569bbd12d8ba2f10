use ndarray::Array2;
use rayon::prelude::*;

use crate::ae::IsacModel;
use crate::baselines::{
    ls_beam, ml_comm_detect, multibeam, qam4_constellation, BeamSynthesisSpec, MaprtDetector, MultibeamParams,
    MAPRT_GRID_POINTS,
};
use crate::channels::{draw_radar_noise, draw_scene, ScenarioConfig, SceneSample};
use crate::error::{IsacError, Result};
use crate::rng::Rng;
use crate::signal::{ArrayGeometry, ComplexVec, C64};

use super::stats::binomial_acceptance;

/// Trials per Monte-Carlo shard. Fixed so results do not depend on thread count.
pub const SHARD_SIZE: usize = 10_000;

/// Refuse to calibrate when fewer than this many scores exceed the threshold.
pub const MIN_TAIL_COUNT: f64 = 100.0;

/// Per-trial radar receiver output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarEstimate {
    pub score: f64,
    pub theta_hat: f64,
    pub sigma_hat: f64,
}

/// A complete transceiver under test: what it transmits and how it decodes.
pub trait IsacSystem: Sync {
    /// Normalized constellation and beam; the signal for message `m` is `beam·x_m`.
    fn constellation(&self) -> &[C64];
    fn beam(&self) -> &ComplexVec;
    /// Radar decisions for rows `[Re z, Im z]`.
    fn radar(&self, features: &Array2<f64>) -> Result<Vec<RadarEstimate>>;
    /// Symbol decisions given observations and CSI.
    fn comm(&self, observations: &[(C64, C64)]) -> Result<Vec<usize>>;
    /// Whether `sigma_hat` carries an uncertainty estimate.
    fn reports_uncertainty(&self) -> bool;
}

/// Learned transceiver wrapped for evaluation.
pub struct AeSystem<'a> {
    model: &'a IsacModel,
    constellation: Vec<C64>,
    beam: ComplexVec,
}

impl<'a> AeSystem<'a> {
    pub fn new(model: &'a IsacModel) -> Self {
        let tx = model.transmitter();
        Self {
            model,
            constellation: tx.constellation,
            beam: tx.beam,
        }
    }
}

impl IsacSystem for AeSystem<'_> {
    fn constellation(&self) -> &[C64] {
        &self.constellation
    }

    fn beam(&self) -> &ComplexVec {
        &self.beam
    }

    fn radar(&self, features: &Array2<f64>) -> Result<Vec<RadarEstimate>> {
        let (q, th, sig) = self.model.radar_infer(features)?;
        Ok((0..q.len())
            .map(|i| RadarEstimate {
                score: q[i],
                theta_hat: th[i],
                sigma_hat: sig[i],
            })
            .collect())
    }

    fn comm(&self, observations: &[(C64, C64)]) -> Result<Vec<usize>> {
        let mode = self.model.comm_input();
        let mut feats = Array2::zeros((observations.len(), mode.dim()));
        for (i, (z, csi)) in observations.iter().enumerate() {
            for (j, f) in mode.features(*z, *csi).iter().take(mode.dim()).enumerate() {
                feats[[i, j]] = *f;
            }
        }
        let probs = self.model.comm_infer(&feats)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for j in 1..r.len() {
                    if r[j] > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    fn reports_uncertainty(&self) -> bool {
        true
    }
}

/// Radar-optimal and communication-optimal LS beams for a scenario, designed
/// on `design_geom`.
pub fn baseline_beams(cfg: &ScenarioConfig, design_geom: &ArrayGeometry) -> Result<(ComplexVec, ComplexVec)> {
    let radar = ls_beam(&BeamSynthesisSpec::one_degree(
        design_geom.clone(),
        cfg.target_angle_range,
    ))?;
    let comm = ls_beam(&BeamSynthesisSpec::one_degree(design_geom.clone(), cfg.rx_angle_range))?;
    Ok((radar, comm))
}

/// 4-QAM, two-beam combiner, MAPRT detector and ML symbol detector.
#[derive(Clone, Debug)]
pub struct BaselineSystem {
    pub params: MultibeamParams,
    constellation: Vec<C64>,
    beam: ComplexVec,
    detector: MaprtDetector,
}

impl BaselineSystem {
    /// Designs the transmitter and detector assuming `design_geom`.
    pub fn design(cfg: &ScenarioConfig, design_geom: &ArrayGeometry, params: MultibeamParams) -> Result<Self> {
        let (radar, comm) = baseline_beams(cfg, design_geom)?;
        let beam = multibeam(&radar, &comm, params, cfg.energy_budget)?;
        let detector = MaprtDetector::uniform(design_geom, cfg.target_angle_range, MAPRT_GRID_POINTS)?;
        Ok(Self {
            params,
            constellation: qam4_constellation().to_vec(),
            beam,
            detector,
        })
    }

    /// Same detector and constellation with a different beam.
    pub fn with_beam(&self, params: MultibeamParams, beam: ComplexVec) -> Self {
        Self {
            params,
            constellation: self.constellation.clone(),
            beam,
            detector: self.detector.clone(),
        }
    }
}

impl IsacSystem for BaselineSystem {
    fn constellation(&self) -> &[C64] {
        &self.constellation
    }

    fn beam(&self) -> &ComplexVec {
        &self.beam
    }

    fn radar(&self, features: &Array2<f64>) -> Result<Vec<RadarEstimate>> {
        let stacked = features.t().to_owned();
        Ok(self
            .detector
            .statistic_stacked(&stacked)
            .into_iter()
            .map(|(score, theta_hat)| RadarEstimate {
                score,
                theta_hat,
                sigma_hat: 0.0,
            })
            .collect())
    }

    fn comm(&self, observations: &[(C64, C64)]) -> Result<Vec<usize>> {
        Ok(observations
            .iter()
            .map(|(z, csi)| ml_comm_detect(*z, *csi, &self.constellation))
            .collect())
    }

    fn reports_uncertainty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub target_pfa: f64,
    pub achieved_pfa: f64,
    pub n_calibration_trials: usize,
}

/// Threshold at the empirical `(1 − target_pfa)` quantile; a score is a
/// detection when it is strictly greater than the threshold.
pub fn calibrate_threshold(mut scores: Vec<f64>, target_pfa: f64) -> Result<CalibrationResult> {
    let n = scores.len();
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(IsacError::InvalidArgument(format!(
            "target Pfa {target_pfa} outside (0, 1)"
        )));
    }
    if (n as f64) * target_pfa < MIN_TAIL_COUNT {
        return Err(IsacError::Calibration(format!(
            "{n} trials give only {:.1} expected exceedances at Pfa {target_pfa}; need {MIN_TAIL_COUNT}",
            n as f64 * target_pfa
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(IsacError::Calibration("non-finite detector score".into()));
    }
    scores.sort_by(f64::total_cmp);
    let idx = (((1.0 - target_pfa) * n as f64).ceil() as usize).clamp(1, n) - 1;
    let threshold = scores[idx];
    let above = n - scores.partition_point(|s| *s <= threshold);
    let achieved_pfa = above as f64 / n as f64;
    let (lo, hi) = binomial_acceptance(target_pfa, n as u64, 0.99)?;
    if !(lo..=hi).contains(&achieved_pfa) {
        return Err(IsacError::Calibration(format!(
            "degenerate scores: threshold {threshold} leaves Pfa {achieved_pfa}, target {target_pfa}"
        )));
    }
    Ok(CalibrationResult {
        threshold,
        target_pfa,
        achieved_pfa,
        n_calibration_trials: n,
    })
}

fn shard_ranges(n: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(SHARD_SIZE))
        .map(|s| (s as u64, SHARD_SIZE.min(n - s * SHARD_SIZE)))
        .collect()
}

fn noise_features(rng: &mut Rng, cfg: &ScenarioConfig, n: usize) -> Array2<f64> {
    let k = cfg.num_antennas;
    let mut f = Array2::zeros((n, 2 * k));
    for i in 0..n {
        let z = draw_radar_noise(rng, cfg);
        for (j, zj) in z.iter().enumerate() {
            f[[i, j]] = zj.re;
            f[[i, k + j]] = zj.im;
        }
    }
    f
}

/// Detector scores on `n` noise-only returns drawn from the named stream
/// `component`.
pub fn h0_scores(
    system: &dyn IsacSystem,
    cfg: &ScenarioConfig,
    n: usize,
    seed: u64,
    component: &str,
) -> Result<Vec<f64>> {
    let shards: Vec<Result<Vec<f64>>> = shard_ranges(n)
        .into_par_iter()
        .map(|(s, len)| {
            let mut rng = Rng::named(seed, component, s);
            let f = noise_features(&mut rng, cfg, len);
            Ok(system.radar(&f)?.into_iter().map(|r| r.score).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for s in shards {
        out.extend(s?);
    }
    Ok(out)
}

/// Calibrates on noise-only returns from a stream disjoint from every test stream.
pub fn calibrate_system(
    system: &dyn IsacSystem,
    cfg: &ScenarioConfig,
    target_pfa: f64,
    n_trials: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    calibrate_threshold(h0_scores(system, cfg, n_trials, seed, "calibration")?, target_pfa)
}

/// Tagged knob value identifying a trade-off point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Knob {
    OmegaR(f64),
    RhoPhi(f64, f64),
    None,
}

impl Knob {
    pub fn kind(&self) -> &'static str {
        match self {
            Knob::OmegaR(_) => "omega_r",
            Knob::RhoPhi(..) => "rho_phi",
            Knob::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub knob: Knob,
    pub ser: f64,
    pub pd: f64,
    pub pfa_emp: f64,
    /// Absent when no target was both present and detected.
    pub rmse_rad: Option<f64>,
    pub mean_sigma_hat: f64,
    pub n_trials: usize,
    /// Size of the set `{t̂ = t = 1}` the RMSE is computed over.
    pub n_detected: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    trials: usize,
    symbol_errors: usize,
    present: usize,
    detected: usize,
    absent: usize,
    false_alarms: usize,
    sq_err: f64,
    sigma_sum: f64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.trials += o.trials;
        self.symbol_errors += o.symbol_errors;
        self.present += o.present;
        self.detected += o.detected;
        self.absent += o.absent;
        self.false_alarms += o.false_alarms;
        self.sq_err += o.sq_err;
        self.sigma_sum += o.sigma_sum;
    }
}

/// Radar feature rows and the `(z_c, κ)` pair of every scene.
pub type Propagated = (Array2<f64>, Vec<(C64, C64)>);

/// Radar features and `(z_c, κ)` pairs for scenes propagated through `geom`.
pub fn propagate_scenes(system: &dyn IsacSystem, geom: &ArrayGeometry, scenes: &[SceneSample]) -> Result<Propagated> {
    let beam = system.beam();
    let k = beam.len();
    if geom.num_elements() != k {
        return Err(IsacError::DimensionMismatch {
            expected: k,
            actual: geom.num_elements(),
        });
    }
    let xs = system.constellation();
    let mut feats = Array2::zeros((scenes.len(), 2 * k));
    let mut comm = Vec::with_capacity(scenes.len());
    let mut a = vec![C64::default(); k];
    for (i, s) in scenes.iter().enumerate() {
        let x = xs[s.message];
        geom.steering_into(s.rx_angle, &mut a);
        let kappa = s.comm_gain * a.iter().zip(beam.iter()).map(|(a, v)| a * v).sum::<C64>();
        comm.push((kappa * x + s.comm_noise, kappa));
        let mut row = feats.row_mut(i);
        for (j, n) in s.radar_noise.iter().enumerate() {
            row[j] = n.re;
            row[k + j] = n.im;
        }
        if s.target_present {
            geom.steering_into(s.target_angle, &mut a);
            let echo = s.radar_gain * x * a.iter().zip(beam.iter()).map(|(a, v)| a * v).sum::<C64>();
            for (j, aj) in a.iter().enumerate() {
                let e = echo * aj;
                row[j] += e.re;
                row[k + j] += e.im;
            }
        }
    }
    Ok((feats, comm))
}

fn evaluate_shard(
    system: &dyn IsacSystem,
    cfg: &ScenarioConfig,
    geom: &ArrayGeometry,
    threshold: f64,
    rng: &mut Rng,
    n: usize,
) -> Result<Tally> {
    let scenes: Vec<SceneSample> = (0..n).map(|_| draw_scene(rng, cfg)).collect();
    let (feats, comm) = propagate_scenes(system, geom, &scenes)?;
    let radar = system.radar(&feats)?;
    let decoded = system.comm(&comm)?;
    let mut t = Tally {
        trials: n,
        ..Tally::default()
    };
    for ((s, r), m_hat) in scenes.iter().zip(&radar).zip(&decoded) {
        if *m_hat != s.message {
            t.symbol_errors += 1;
        }
        let hit = r.score > threshold;
        if s.target_present {
            t.present += 1;
            if hit {
                t.detected += 1;
                t.sq_err += (r.theta_hat - s.target_angle).powi(2);
                t.sigma_sum += r.sigma_hat;
            }
        } else {
            t.absent += 1;
            if hit {
                t.false_alarms += 1;
            }
        }
    }
    Ok(t)
}

/// Monte-Carlo metrics over `n_trials` fresh scenes propagated through `geom`.
pub fn evaluate(
    system: &dyn IsacSystem,
    cfg: &ScenarioConfig,
    geom: &ArrayGeometry,
    threshold: f64,
    n_trials: usize,
    seed: u64,
    knob: Knob,
) -> Result<TradeoffPoint> {
    if n_trials == 0 {
        return Err(IsacError::InvalidArgument("n_trials must be positive".into()));
    }
    let shards: Vec<Result<Tally>> = shard_ranges(n_trials)
        .into_par_iter()
        .map(|(s, len)| {
            let mut rng = Rng::named(seed, "test", s);
            evaluate_shard(system, cfg, geom, threshold, &mut rng, len)
        })
        .collect();
    let mut total = Tally::default();
    for s in shards {
        total.merge(&s?);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let rmse_rad = (total.detected > 0).then(|| (total.sq_err / total.detected as f64).sqrt());
    let mean_sigma_hat = if system.reports_uncertainty() && total.detected > 0 {
        total.sigma_sum / total.detected as f64
    } else {
        0.0
    };
    Ok(TradeoffPoint {
        knob,
        ser: ratio(total.symbol_errors, total.trials),
        pd: ratio(total.detected, total.present),
        pfa_emp: ratio(total.false_alarms, total.absent),
        rmse_rad,
        mean_sigma_hat,
        n_trials: total.trials,
        n_detected: total.detected,
        seed,
    })
}
