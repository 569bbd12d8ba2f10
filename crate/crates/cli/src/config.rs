//! Experiment configuration file: TOML with nested sections, unknown keys rejected.

use std::path::{Path, PathBuf};

use isac_core::ae::TrainingPlan;
use isac_core::eval::EvalSettings;
use isac_core::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Operating point in user units: SNRs in dB, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub num_antennas: usize,
    pub modulation_size: usize,
    pub energy_budget: f64,
    pub snr_radar_db: f64,
    pub snr_comm_db: f64,
    pub target_angle_deg: [f64; 2],
    pub rx_angle_deg: [f64; 2],
    pub target_prior: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            num_antennas: 16,
            modulation_size: 4,
            energy_budget: 1.0,
            snr_radar_db: 0.0,
            snr_comm_db: 20.0,
            target_angle_deg: [-20.0, 20.0],
            rx_angle_deg: [30.0, 50.0],
            target_prior: 0.5,
        }
    }
}

impl ScenarioSection {
    pub fn to_scenario(&self) -> CliResult<ScenarioConfig> {
        let mut cfg = ScenarioConfig::from_snr_db(
            self.num_antennas,
            self.modulation_size,
            self.snr_radar_db,
            self.snr_comm_db,
            (self.target_angle_deg[0], self.target_angle_deg[1]),
            (self.rx_angle_deg[0], self.rx_angle_deg[1]),
        );
        cfg.energy_budget = self.energy_budget;
        cfg.target_prior = self.target_prior;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub n_trials: usize,
    pub n_calibration: usize,
    pub pfa_target: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let d = EvalSettings::default();
        Self {
            n_trials: d.n_trials,
            n_calibration: d.n_calibration,
            pfa_target: d.target_pfa,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpairmentSection {
    /// Standard deviation of each element gap, as a fraction of the wavelength.
    pub sigma_lambda_fraction: f64,
    pub geometry_seed: u64,
}

impl Default for ImpairmentSection {
    fn default() -> Self {
        Self {
            sigma_lambda_fraction: 1.0 / 30.0,
            geometry_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub checkpoint_dir: PathBuf,
    pub results_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            checkpoint_dir: PathBuf::from("checkpoints"),
            results_dir: PathBuf::from("results"),
        }
    }
}

/// Everything an experiment needs. `training.seed` is the root seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub training: TrainingPlan,
    pub evaluation: EvaluationSection,
    pub impairment: ImpairmentSection,
    pub paths: PathsSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.scenario.to_scenario()?;
        self.training.validate()?;
        let e = &self.evaluation;
        if e.n_trials == 0 {
            return Err(CliError::Validation("evaluation.n_trials must be positive".into()));
        }
        if !(e.pfa_target > 0.0 && e.pfa_target < 1.0) {
            return Err(CliError::Validation(format!(
                "evaluation.pfa_target {} outside (0, 1)",
                e.pfa_target
            )));
        }
        let s = self.impairment.sigma_lambda_fraction;
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Validation(format!(
                "impairment.sigma_lambda_fraction {s} must be nonnegative"
            )));
        }
        Ok(())
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            n_trials: self.evaluation.n_trials,
            n_calibration: self.evaluation.n_calibration,
            target_pfa: self.evaluation.pfa_target,
            seed: self.training.seed,
        }
    }
}
