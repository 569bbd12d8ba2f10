//! Monte-Carlo evaluation at a fixed empirical false-alarm rate, trade-off
//! sweeps, and the statistics used to check them.

mod metrics;
pub mod stats;
mod sweep;

pub use metrics::{
    baseline_beams, calibrate_system, calibrate_threshold, evaluate, h0_scores, propagate_scenes, AeSystem,
    BaselineSystem, CalibrationResult, IsacSystem, Knob, Propagated, RadarEstimate, TradeoffPoint, MIN_TAIL_COUNT,
    SHARD_SIZE,
};
pub use sweep::{
    beampattern_db, best_pd_under_ser, evaluate_model, impaired_geometry, impairment_experiment, sweep_ae,
    sweep_baseline, sweep_seed, uncertainty_calibration, write_beampattern_csv, write_results_csv, AeRun, EvalSettings,
    ImpairmentResult, UncertaintySummary,
};
