//! Scene sampling and the radar / communication forward models.
//!
//! The radar return is `z_r = t·α·a(θ)·(a(θ)ᵀ y) + n` and the single-antenna
//! link observes `z_c = κ·x + n` with `κ = β·a(ϑ)ᵀ v`. Given a drawn
//! [`SceneSample`] both maps are affine in the transmitted signal, which is
//! what lets gradients flow from the receivers back into the transmitter.

use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::rng::Rng;
use crate::signal::{cn_scalar, ArrayGeometry, ComplexVec, C64};

/// Operating point of the simulated scenario. Angles are radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_antennas: usize,
    pub modulation_size: usize,
    pub energy_budget: f64,
    pub noise_psd: f64,
    pub radar_gain_var: f64,
    pub comm_gain_var: f64,
    pub target_angle_range: (f64, f64),
    pub rx_angle_range: (f64, f64),
    pub target_prior: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_snr_db(16, 4, 0.0, 20.0, (-20.0, 20.0), (30.0, 50.0))
    }
}

impl ScenarioConfig {
    /// Builds a unit-noise scenario from SNRs in dB and angle ranges in degrees.
    pub fn from_snr_db(
        num_antennas: usize,
        modulation_size: usize,
        snr_radar_db: f64,
        snr_comm_db: f64,
        target_deg: (f64, f64),
        rx_deg: (f64, f64),
    ) -> Self {
        let noise_psd = 1.0;
        Self {
            num_antennas,
            modulation_size,
            energy_budget: 1.0,
            noise_psd,
            radar_gain_var: noise_psd * 10f64.powf(snr_radar_db / 10.0),
            comm_gain_var: noise_psd * 10f64.powf(snr_comm_db / 10.0),
            target_angle_range: (target_deg.0.to_radians(), target_deg.1.to_radians()),
            rx_angle_range: (rx_deg.0.to_radians(), rx_deg.1.to_radians()),
            target_prior: 0.5,
        }
    }

    pub fn snr_radar_db(&self) -> f64 {
        10.0 * (self.radar_gain_var / self.noise_psd).log10()
    }

    pub fn snr_comm_db(&self) -> f64 {
        10.0 * (self.comm_gain_var / self.noise_psd).log10()
    }

    /// Angular prior `[θ_min, θ_max, ϑ_min, ϑ_max]` known to the transmitter.
    pub fn angular_prior(&self) -> [f64; 4] {
        [
            self.target_angle_range.0,
            self.target_angle_range.1,
            self.rx_angle_range.0,
            self.rx_angle_range.1,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2 + 1e-12;
        let bad = |m: String| Err(IsacError::InvalidConfig(m));
        if self.num_antennas == 0 {
            return bad("num_antennas must be positive".into());
        }
        if self.modulation_size < 2 {
            return bad("modulation_size must be at least 2".into());
        }
        for (name, (lo, hi)) in [
            ("target_angle_range", self.target_angle_range),
            ("rx_angle_range", self.rx_angle_range),
        ] {
            if !(-half_pi <= lo && lo <= hi && hi <= half_pi) {
                return bad(format!("{name} ({lo}, {hi}) must satisfy -π/2 ≤ lo ≤ hi ≤ π/2"));
            }
        }
        for (name, v) in [
            ("energy_budget", self.energy_budget),
            ("noise_psd", self.noise_psd),
            ("radar_gain_var", self.radar_gain_var),
            ("comm_gain_var", self.comm_gain_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        if !(0.0..=1.0).contains(&self.target_prior) {
            return bad(format!("target_prior {} outside [0, 1]", self.target_prior));
        }
        Ok(())
    }
}

/// One Monte-Carlo draw of everything random in a transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub message: usize,
    pub target_present: bool,
    pub target_angle: f64,
    pub rx_angle: f64,
    pub radar_gain: C64,
    pub comm_gain: C64,
    pub radar_noise: ComplexVec,
    pub comm_noise: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarObservation {
    pub z: ComplexVec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommObservation {
    pub z: C64,
    pub csi: C64,
}

/// Draws one scene. The draw order is fixed so that a stream always
/// produces the same sequence of scenes.
pub fn draw_scene(rng: &mut Rng, cfg: &ScenarioConfig) -> SceneSample {
    let message = rng.below(cfg.modulation_size);
    let target_present = rng.bernoulli(cfg.target_prior);
    let target_angle = rng.uniform_in(cfg.target_angle_range.0, cfg.target_angle_range.1);
    let rx_angle = rng.uniform_in(cfg.rx_angle_range.0, cfg.rx_angle_range.1);
    let radar_gain = cn_scalar(rng, (cfg.radar_gain_var / 2.0).sqrt());
    let comm_gain = cn_scalar(rng, (cfg.comm_gain_var / 2.0).sqrt());
    let noise_std = (cfg.noise_psd / 2.0).sqrt();
    let radar_noise = (0..cfg.num_antennas).map(|_| cn_scalar(rng, noise_std)).collect();
    let comm_noise = cn_scalar(rng, noise_std);
    SceneSample {
        message,
        target_present,
        target_angle,
        rx_angle,
        radar_gain,
        comm_gain,
        radar_noise,
        comm_noise,
    }
}

/// Noise-only radar return, as seen under the no-target hypothesis.
pub fn draw_radar_noise(rng: &mut Rng, cfg: &ScenarioConfig) -> ComplexVec {
    let s = (cfg.noise_psd / 2.0).sqrt();
    (0..cfg.num_antennas).map(|_| cn_scalar(rng, s)).collect()
}

fn check_len(geom: &ArrayGeometry, len: usize) -> Result<()> {
    if len != geom.num_elements() {
        return Err(IsacError::DimensionMismatch {
            expected: geom.num_elements(),
            actual: len,
        });
    }
    Ok(())
}

/// Monostatic return of `y` for the scene; `a_rx = a_tx` on the shared array.
pub fn radar_forward(geom: &ArrayGeometry, sample: &SceneSample, y: &[C64]) -> Result<RadarObservation> {
    check_len(geom, y.len())?;
    check_len(geom, sample.radar_noise.len())?;
    let mut z = sample.radar_noise.clone();
    if sample.target_present {
        let a = geom.steering_vector(sample.target_angle);
        let echo = sample.radar_gain * a.dot(y);
        for (zk, ak) in z.iter_mut().zip(a.iter()) {
            *zk += echo * ak;
        }
    }
    Ok(RadarObservation { z })
}

/// Effective scalar channel `κ = β a(ϑ)ᵀ v`.
pub fn comm_csi(geom: &ArrayGeometry, sample: &SceneSample, v: &[C64]) -> Result<C64> {
    check_len(geom, v.len())?;
    Ok(sample.comm_gain * geom.steering_vector(sample.rx_angle).dot(v))
}

/// Received symbol for `y = v·x`, together with the CSI the receiver is given.
pub fn comm_forward(geom: &ArrayGeometry, sample: &SceneSample, v: &[C64], x: C64) -> Result<CommObservation> {
    let csi = comm_csi(geom, sample, v)?;
    Ok(CommObservation {
        z: csi * x + sample.comm_noise,
        csi,
    })
}
