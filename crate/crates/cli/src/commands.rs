use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use isac_core::ae::{train, IsacModel, TrainingPlan};
use isac_core::baselines::{multibeam, MultibeamParams};
use isac_core::eval::{
    baseline_beams, beampattern_db, calibrate_system, evaluate, evaluate_model, impaired_geometry, sweep_ae,
    sweep_baseline, write_beampattern_csv, write_results_csv, AeRun, AeSystem, BaselineSystem, CalibrationResult,
    IsacSystem, Knob, TradeoffPoint,
};
use isac_core::{ArrayGeometry, ScenarioConfig};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Element spacing is expressed in wavelengths, so the wavelength is 1.
const WAVELENGTH: f64 = 1.0;

/// ω_r values of the default learned sweep.
pub const DEFAULT_OMEGAS: [f64; 11] = [0.0, 0.01, 0.014, 0.015, 0.03, 0.09, 0.15, 0.4, 0.6, 0.7, 1.0];

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "Train, evaluate and sweep ISAC transceivers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed, overriding `training.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Propagate through the perturbed array.
    #[arg(long)]
    pub impaired: bool,
    /// Gap standard deviation as a fraction of the wavelength (implies --impaired).
    #[arg(long, value_name = "X")]
    pub sigma_lambda_frac: Option<f64>,
    /// Monte-Carlo trials, overriding the configured count.
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Output directory for every file the command writes.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SystemChoice {
    /// Trained model checkpoint.
    #[arg(long, value_name = "PATH", conflicts_with = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Model-based reference design instead of a checkpoint.
    #[arg(long)]
    pub baseline: bool,
    /// Radar share of the baseline beam power.
    #[arg(long, default_value_t = 1.0, requires = "baseline")]
    pub rho: f64,
    /// Phase between the baseline beams, degrees.
    #[arg(long, default_value_t = 0.0, requires = "baseline")]
    pub phi: f64,
    /// ω_r the checkpoint was trained with, used to label its row.
    #[arg(long = "omega-r", value_name = "X", conflicts_with = "baseline")]
    pub omega_r: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its checkpoint and training log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long = "omega-r", value_name = "X")]
        omega_r: Option<f64>,
    },
    /// Calibrate and evaluate one system; writes `eval.csv`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        system: SystemChoice,
        /// Also write `beampattern.csv`.
        #[arg(long)]
        beampattern: bool,
    },
    /// Trade-off sweeps over ω_r (--ae) or the (ρ, φ) grid (--baseline).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ae: bool,
        #[arg(long)]
        baseline: bool,
        /// Comma-separated ω_r values for --ae.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
    },
    /// Detection threshold on noise-only returns; writes `calibration.csv`.
    /// --trials sets the number of calibration trials.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        system: SystemChoice,
    },
    /// Transmit beampattern on a 1° grid; writes `beampattern.csv`.
    Beampattern {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        system: SystemChoice,
    },
}

/// Resolved configuration shared by every command.
struct Context {
    config: ExperimentConfig,
    scenario: ScenarioConfig,
    nominal: ArrayGeometry,
    geometry: ArrayGeometry,
    impaired: bool,
    trials: Option<usize>,
    results_dir: PathBuf,
    checkpoint_dir: PathBuf,
}

impl Context {
    fn new(common: &Common) -> CliResult<Self> {
        let mut config = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.training.seed = seed;
        }
        if let Some(n) = common.trials {
            config.evaluation.n_trials = n;
        }
        if let Some(s) = common.sigma_lambda_frac {
            config.impairment.sigma_lambda_fraction = s;
        }
        config.validate()?;
        let scenario = config.scenario.to_scenario()?;
        let nominal = ArrayGeometry::nominal(scenario.num_antennas, WAVELENGTH)?;
        let impaired = common.impaired || common.sigma_lambda_frac.is_some();
        let geometry = if impaired {
            impaired_geometry(
                &scenario,
                WAVELENGTH,
                config.impairment.sigma_lambda_fraction * WAVELENGTH,
                config.impairment.geometry_seed,
            )?
        } else {
            nominal.clone()
        };
        let (results_dir, checkpoint_dir) = match &common.out {
            Some(d) => (d.clone(), d.clone()),
            None => (config.paths.results_dir.clone(), config.paths.checkpoint_dir.clone()),
        };
        Ok(Self {
            config,
            scenario,
            nominal,
            geometry,
            impaired,
            trials: common.trials,
            results_dir,
            checkpoint_dir,
        })
    }

    fn prefix(&self) -> &'static str {
        if self.impaired {
            "impaired_"
        } else {
            ""
        }
    }

    fn results_file(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.results_dir)?;
        Ok(self.results_dir.join(format!("{}{name}", self.prefix())))
    }

    fn checkpoint_files(&self, omega_r: f64) -> CliResult<(PathBuf, PathBuf)> {
        fs::create_dir_all(&self.checkpoint_dir)?;
        let tag = format!("{}omega_{omega_r}", self.prefix());
        Ok((
            self.checkpoint_dir.join(format!("model_{tag}.ckpt")),
            self.checkpoint_dir.join(format!("train_log_{tag}.csv")),
        ))
    }

    fn plan(&self, omega_r: Option<f64>) -> TrainingPlan {
        let mut plan = self.config.training.clone();
        if let Some(w) = omega_r {
            plan.omega_r = w;
        }
        plan
    }

    fn baseline_params(&self, system: &SystemChoice) -> CliResult<MultibeamParams> {
        Ok(MultibeamParams::new(system.rho, system.phi.to_radians())?)
    }

    fn load_model(&self, system: &SystemChoice) -> CliResult<IsacModel> {
        let path = system
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Validation("pass --checkpoint PATH or --baseline".into()))?;
        if let Some(w) = system.omega_r {
            check_omega(w)?;
        }
        Ok(IsacModel::load(path, &self.scenario)?)
    }
}

fn check_omega(w: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(CliError::Validation(format!("omega_r {w} outside [0, 1]")))
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_points(path: &Path, points: &[TradeoffPoint]) -> CliResult<()> {
    let mut w = create(path)?;
    write_results_csv(&mut w, points)?;
    w.flush()?;
    Ok(())
}

fn write_pattern(path: &Path, beam: &[isac_core::C64], geom: &ArrayGeometry) -> CliResult<()> {
    let mut w = create(path)?;
    write_beampattern_csv(&mut w, &beampattern_db(beam, geom)?)?;
    w.flush()?;
    Ok(())
}

fn save_run(ctx: &Context, omega_r: f64, model: &IsacModel, log: &isac_core::ae::TrainingLog) -> CliResult<PathBuf> {
    let (ckpt, log_path) = ctx.checkpoint_files(omega_r)?;
    model.save(&ckpt)?;
    let mut w = create(&log_path)?;
    log.write_csv(&mut w)?;
    w.flush()?;
    Ok(ckpt)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { common, omega_r } => cmd_train(&Context::new(&common)?, omega_r),
        Command::Eval {
            common,
            system,
            beampattern,
        } => cmd_eval(&Context::new(&common)?, &system, beampattern),
        Command::Sweep {
            common,
            ae,
            baseline,
            omegas,
        } => cmd_sweep(&Context::new(&common)?, ae, baseline, omegas),
        Command::Calibrate { common, system } => cmd_calibrate(&Context::new(&common)?, &system),
        Command::Beampattern { common, system } => cmd_beampattern(&Context::new(&common)?, &system),
    }
}

fn cmd_train(ctx: &Context, omega_r: Option<f64>) -> CliResult<()> {
    let plan = ctx.plan(omega_r);
    plan.validate()?;
    let (model, log) = train(&plan, &ctx.scenario, &ctx.geometry)?;
    let ckpt = save_run(ctx, plan.omega_r, &model, &log)?;
    println!("{}", ckpt.display());
    Ok(())
}

fn cmd_eval(ctx: &Context, system: &SystemChoice, beampattern: bool) -> CliResult<()> {
    let settings = ctx.config.eval_settings();
    let (point, beam) = if system.baseline {
        let params = ctx.baseline_params(system)?;
        let sys = BaselineSystem::design(&ctx.scenario, &ctx.nominal, params)?;
        let cal = calibrate_system(
            &sys,
            &ctx.scenario,
            settings.target_pfa,
            settings.n_calibration,
            settings.seed,
        )?;
        let point = evaluate(
            &sys,
            &ctx.scenario,
            &ctx.geometry,
            cal.threshold,
            settings.n_trials,
            settings.seed,
            Knob::RhoPhi(params.rho, params.phi),
        )?;
        (point, sys.beam().clone())
    } else {
        let model = ctx.load_model(system)?;
        let knob = system.omega_r.map(Knob::OmegaR).unwrap_or(Knob::None);
        let (_, point) = evaluate_model(&model, &ctx.scenario, &ctx.geometry, &settings, knob)?;
        (point, model.transmitter().beam)
    };
    let path = ctx.results_file("eval.csv")?;
    write_points(&path, &[point])?;
    println!("{}", path.display());
    if beampattern {
        let path = ctx.results_file("beampattern.csv")?;
        write_pattern(&path, &beam, &ctx.geometry)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_sweep(ctx: &Context, ae: bool, baseline: bool, omegas: Option<Vec<f64>>) -> CliResult<()> {
    // --impaired alone runs the paired experiment
    let (ae, baseline) = if !ae && !baseline && ctx.impaired {
        (true, true)
    } else {
        (ae, baseline)
    };
    if !ae && !baseline {
        return Err(CliError::Validation(
            "sweep needs --ae, --baseline or --impaired".into(),
        ));
    }
    if omegas.is_some() && !ae {
        return Err(CliError::Validation("--omegas applies to --ae sweeps".into()));
    }
    let omegas = omegas.unwrap_or_else(|| DEFAULT_OMEGAS.to_vec());
    if omegas.is_empty() {
        return Err(CliError::Validation("empty --omegas list".into()));
    }
    for w in &omegas {
        check_omega(*w)?;
    }
    let settings = ctx.config.eval_settings();
    if ctx.impaired {
        let path = ctx.results_file("geometry.csv")?;
        let mut w = create(&path)?;
        writeln!(w, "gap_index,gap_wavelengths")?;
        for (i, g) in ctx.geometry.gaps().iter().enumerate() {
            writeln!(w, "{i},{g}")?;
        }
        w.flush()?;
    }
    if baseline {
        let grid = MultibeamParams::default_grid();
        let (_, points) = sweep_baseline(&grid, &ctx.scenario, &ctx.nominal, &ctx.geometry, &settings)?;
        let path = ctx.results_file("sweep_baseline.csv")?;
        write_points(&path, &points)?;
        println!("{}", path.display());
    }
    if ae {
        let template = ctx.plan(None);
        let runs: Vec<AeRun> = sweep_ae(&omegas, &template, &ctx.scenario, &ctx.geometry, &settings)?;
        for run in &runs {
            save_run(ctx, run.omega_r, &run.model, &run.log)?;
        }
        let points: Vec<TradeoffPoint> = runs.iter().map(|r| r.point).collect();
        let path = ctx.results_file("sweep_ae.csv")?;
        write_points(&path, &points)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn write_calibration(path: &Path, cal: &CalibrationResult) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "threshold,target_pfa,achieved_pfa,n_calibration_trials")?;
    writeln!(
        w,
        "{},{},{},{}",
        cal.threshold, cal.target_pfa, cal.achieved_pfa, cal.n_calibration_trials
    )?;
    w.flush()?;
    Ok(())
}

fn cmd_calibrate(ctx: &Context, system: &SystemChoice) -> CliResult<()> {
    let settings = ctx.config.eval_settings();
    let n = ctx.trials.unwrap_or(settings.n_calibration);
    let cal = if system.baseline {
        let sys = BaselineSystem::design(&ctx.scenario, &ctx.nominal, ctx.baseline_params(system)?)?;
        calibrate_system(&sys, &ctx.scenario, settings.target_pfa, n, settings.seed)?
    } else {
        let model = ctx.load_model(system)?;
        calibrate_system(
            &AeSystem::new(&model),
            &ctx.scenario,
            settings.target_pfa,
            n,
            settings.seed,
        )?
    };
    let path = ctx.results_file("calibration.csv")?;
    write_calibration(&path, &cal)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_beampattern(ctx: &Context, system: &SystemChoice) -> CliResult<()> {
    let beam = if system.baseline {
        let (radar, comm) = baseline_beams(&ctx.scenario, &ctx.nominal)?;
        multibeam(&radar, &comm, ctx.baseline_params(system)?, ctx.scenario.energy_budget)?
    } else {
        ctx.load_model(system)?.transmitter().beam
    };
    let path = ctx.results_file("beampattern.csv")?;
    write_pattern(&path, &beam, &ctx.geometry)?;
    println!("{}", path.display());
    Ok(())
}
