use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::channels::{draw_scene, ScenarioConfig, SceneSample};
use crate::error::{IsacError, Result};
use crate::neural::{AdamConfig, AdamState, Gradients, Mlp, Tape};
use crate::rng::Rng;
use crate::signal::{ArrayGeometry, C64};

use super::loss::{
    loss_cce, loss_cce_grad, loss_isac, loss_mse, loss_mse_grad, loss_td, loss_td_grad, loss_tr, loss_tr_grad,
};
use super::model::{normalize, normalize_backward, CommInput, IsacModel, Net};

/// Radar term minimized alongside the communication loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// `Pr(t=1)·E[|θ̂ − θ|²]`, first training stage.
    AngleMse,
    /// `Pr(t=1)·J_TR` with the angle head fixed, second stage.
    Uncertainty,
    /// Binary cross-entropy of the presence head, third stage.
    Detection,
    /// `J_TD + Pr(t=1)·J_TR`, the full radar loss.
    Joint,
}

impl Objective {
    /// The three sequential stages, in order.
    pub const STAGES: [Objective; 3] = [Objective::AngleMse, Objective::Uncertainty, Objective::Detection];

    /// Networks updated while minimizing this objective.
    pub fn trainable(self) -> &'static [Net] {
        use Net::*;
        match self {
            Objective::AngleMse => &[Encoder, Beamformer, CommRx, Angle],
            Objective::Uncertainty => &[Encoder, Beamformer, CommRx, Uncertainty],
            Objective::Detection => &[Encoder, Beamformer, CommRx, Presence],
            Objective::Joint => &[Encoder, Beamformer, CommRx, Presence, Angle, Uncertainty],
        }
    }

    fn uses(self, net: Net) -> bool {
        match net {
            Net::Presence => matches!(self, Objective::Detection | Objective::Joint),
            Net::Angle => !matches!(self, Objective::Detection),
            Net::Uncertainty => matches!(self, Objective::Uncertainty | Objective::Joint),
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchLoss {
    pub comm: f64,
    pub radar: f64,
    pub total: f64,
}

/// Parameter gradients for all six networks, in checkpoint order. Networks
/// that do not take part in the objective get zeros.
#[derive(Clone, Debug)]
pub struct ModelGradients {
    pub nets: Vec<Gradients>,
}

impl ModelGradients {
    pub fn get(&self, net: Net) -> &Gradients {
        &self.nets[net as usize]
    }
}

/// Training hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingPlan {
    pub omega_r: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub total_samples: u64,
    pub stage_fractions: [f64; 3],
    pub seed: u64,
    /// Per-network cap on the gradient norm before each Adam step; 0 disables.
    pub max_grad_norm: f64,
    /// Feed the comm receiver `(z, κ)` (false) or the equalized `z/κ` (true).
    pub equalized_comm_input: bool,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        Self {
            omega_r: 0.0,
            batch_size: 10_000,
            learning_rate: 0.01,
            total_samples: 2_000_000,
            stage_fractions: [1.0 / 3.0; 3],
            seed: 0,
            max_grad_norm: 1.0,
            equalized_comm_input: false,
        }
    }
}

impl TrainingPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IsacError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.omega_r) {
            return bad(format!("omega_r {} outside [0, 1]", self.omega_r));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return bad(format!(
                "max_grad_norm {} must be finite and nonnegative",
                self.max_grad_norm
            ));
        }
        if self.stage_fractions.iter().any(|f| f.is_nan() || *f < 0.0) {
            return bad(format!("negative stage fraction in {:?}", self.stage_fractions));
        }
        let sum: f64 = self.stage_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("stage_fractions sum to {sum}, not 1"));
        }
        Ok(())
    }

    pub fn comm_input(&self) -> CommInput {
        if self.equalized_comm_input {
            CommInput::Equalized
        } else {
            CommInput::Raw
        }
    }

    /// Mini-batches run in each stage.
    pub fn batches_per_stage(&self) -> [usize; 3] {
        self.stage_fractions
            .map(|f| ((self.total_samples as f64 * f) / self.batch_size as f64).round() as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub stage: usize,
    pub batch_index: usize,
    pub loss_cce: f64,
    pub loss_radar_term: f64,
    pub loss_total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "stage,batch_index,loss_cce,loss_radar_term,loss_total")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.stage, r.batch_index, r.loss_cce, r.loss_radar_term, r.loss_total
            )?;
        }
        Ok(())
    }
}

pub fn draw_batch(rng: &mut Rng, cfg: &ScenarioConfig, n: usize) -> Vec<SceneSample> {
    (0..n).map(|_| draw_scene(rng, cfg)).collect()
}

/// Receiver inputs for a batch, together with what the reverse pass needs.
struct Forward {
    radar_in: Array2<f64>,
    comm_in: Array2<f64>,
    target_steering: Vec<C64>,
    rx_steering: Vec<C64>,
    csi: Vec<C64>,
}

fn propagate(scenes: &[SceneSample], geom: &ArrayGeometry, x: &[C64], v: &[C64], comm_input: CommInput) -> Forward {
    let (b, k) = (scenes.len(), v.len());
    let mut fw = Forward {
        radar_in: Array2::zeros((b, 2 * k)),
        comm_in: Array2::zeros((b, comm_input.dim())),
        target_steering: vec![C64::default(); b * k],
        rx_steering: vec![C64::default(); b * k],
        csi: vec![C64::default(); b],
    };
    for (i, s) in scenes.iter().enumerate() {
        let xm = x[s.message];
        let a_rx = &mut fw.rx_steering[i * k..(i + 1) * k];
        geom.steering_into(s.rx_angle, a_rx);
        let kappa = s.comm_gain * a_rx.iter().zip(v).map(|(a, v)| a * v).sum::<C64>();
        fw.csi[i] = kappa;
        let feats = comm_input.features(kappa * xm + s.comm_noise, kappa);
        for (j, f) in feats.iter().take(comm_input.dim()).enumerate() {
            fw.comm_in[[i, j]] = *f;
        }
        let mut row = fw.radar_in.row_mut(i);
        for (j, n) in s.radar_noise.iter().enumerate() {
            row[j] = n.re;
            row[k + j] = n.im;
        }
        if s.target_present {
            let a = &mut fw.target_steering[i * k..(i + 1) * k];
            geom.steering_into(s.target_angle, a);
            let echo = s.radar_gain * xm * a.iter().zip(v).map(|(a, v)| a * v).sum::<C64>();
            for (j, aj) in a.iter().enumerate() {
                let e = echo * aj;
                row[j] += e.re;
                row[k + j] += e.im;
            }
        }
    }
    fw
}

fn head_forward(net: &Mlp, input: &Array2<f64>) -> Result<(Vec<f64>, Tape)> {
    let (out, tape) = net.forward_recorded(input.clone())?;
    Ok((out.column(0).to_vec(), tape))
}

fn column(g: Vec<f64>, scale: f64) -> Array2<f64> {
    let n = g.len();
    Array2::from_shape_vec((n, 1), g.into_iter().map(|v| v * scale).collect()).expect("column")
}

/// Loss of one batch under `objective` and its gradient with respect to every
/// network parameter, backpropagated through the receivers, both channels,
/// and the transmit normalization.
pub fn batch_loss(
    model: &IsacModel,
    geom: &ArrayGeometry,
    scenes: &[SceneSample],
    objective: Objective,
    omega_r: f64,
    target_prior: f64,
) -> Result<(BatchLoss, ModelGradients)> {
    let k = model.num_antennas();
    if geom.num_elements() != k {
        return Err(IsacError::DimensionMismatch {
            expected: k,
            actual: geom.num_elements(),
        });
    }
    let mm = model.num_messages();

    let (raw_x, tape_enc) = model.encoder.forward_recorded(model.encoder_input())?;
    let sx = model.constellation_scale();
    let (x_flat, x_norm) = normalize(raw_x.as_slice().expect("standard layout"), sx);
    let x: Vec<C64> = x_flat.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
    let (raw_u, tape_bf) = model.beamformer.forward_recorded(model.beamformer_input())?;
    let sv = model.energy_budget().sqrt();
    let (v_flat, v_norm) = normalize(raw_u.as_slice().expect("standard layout"), sv);
    let v: Vec<C64> = (0..k).map(|j| C64::new(v_flat[j], v_flat[k + j])).collect();

    let fw = propagate(scenes, geom, &x, &v, model.comm_input());
    let present: Vec<bool> = scenes.iter().map(|s| s.target_present).collect();
    let theta: Vec<f64> = scenes.iter().map(|s| s.target_angle).collect();
    let messages: Vec<usize> = scenes.iter().map(|s| s.message).collect();

    let (w_radar, w_comm) = if omega_r == 0.0 {
        (0.0, 1.0)
    } else if omega_r == 1.0 {
        (1.0, 0.0)
    } else {
        (omega_r, 1.0 - omega_r)
    };

    // communication receiver
    let (probs, tape_rx) = model.comm_rx.forward_recorded(fw.comm_in.clone())?;
    let comm = loss_cce(&probs, &messages);
    let g_probs = loss_cce_grad(&probs, &messages) * w_comm;
    let (g_rx, g_comm_in) = model.comm_rx.backward(&tape_rx, &g_probs)?;

    // radar heads
    let mut radar = 0.0;
    let mut g_radar_in = Array2::<f64>::zeros(fw.radar_in.raw_dim());
    let mut head_grads: [Option<Gradients>; 3] = [None, None, None];
    let mut run_head = |net: &Mlp, tape: &Tape, g: Array2<f64>, slot: usize| -> Result<()> {
        let (grads, g_in) = net.backward(tape, &g)?;
        g_radar_in += &g_in;
        head_grads[slot] = Some(grads);
        Ok(())
    };
    if objective.uses(Net::Presence) {
        let (q, tape) = head_forward(&model.presence, &fw.radar_in)?;
        radar += loss_td(&q, &present);
        run_head(&model.presence, &tape, column(loss_td_grad(&q, &present), w_radar), 0)?;
    }
    if objective == Objective::AngleMse {
        let (th, tape) = head_forward(&model.angle, &fw.radar_in)?;
        radar += target_prior * loss_mse(&th, &theta, &present);
        let g = loss_mse_grad(&th, &theta, &present);
        run_head(&model.angle, &tape, column(g, w_radar * target_prior), 1)?;
    } else if objective.uses(Net::Uncertainty) {
        let (th, tape_a) = head_forward(&model.angle, &fw.radar_in)?;
        let (sig, tape_s) = head_forward(&model.uncertainty, &fw.radar_in)?;
        radar += target_prior * loss_tr(&th, &sig, &theta, &present);
        let (g_th, g_sig) = loss_tr_grad(&th, &sig, &theta, &present);
        let w = w_radar * target_prior;
        run_head(&model.angle, &tape_a, column(g_th, w), 1)?;
        run_head(&model.uncertainty, &tape_s, column(g_sig, w), 2)?;
    }
    let total = loss_isac(radar, comm, omega_r);

    // back through the channels into the transmitter
    let mut g_v = vec![C64::default(); k];
    let mut g_x = vec![C64::default(); mm];
    for (i, s) in scenes.iter().enumerate() {
        let xm = x[s.message];
        let kappa = fw.csi[i];
        let gc = g_comm_in.row(i);
        let g_kappa = match model.comm_input() {
            CommInput::Raw => {
                let g_z = C64::new(gc[0], gc[1]);
                g_x[s.message] += kappa.conj() * g_z;
                C64::new(gc[2], gc[3]) + xm.conj() * g_z
            }
            CommInput::Equalized => {
                let g_e = C64::new(gc[0], gc[1]);
                g_x[s.message] += g_e;
                (-s.comm_noise / (kappa * kappa)).conj() * g_e
            }
        };
        let a_rx = &fw.rx_steering[i * k..(i + 1) * k];
        let beta_g = s.comm_gain.conj() * g_kappa;
        for (gv, a) in g_v.iter_mut().zip(a_rx) {
            *gv += a.conj() * beta_g;
        }
        if s.target_present {
            let a = &fw.target_steering[i * k..(i + 1) * k];
            let gr = g_radar_in.row(i);
            let proj: C64 = (0..k).map(|j| a[j].conj() * C64::new(gr[j], gr[k + j])).sum();
            let c = s.radar_gain.conj() * proj;
            let mut g_xm = C64::default();
            for j in 0..k {
                let g_y = c * a[j].conj();
                g_v[j] += xm.conj() * g_y;
                g_xm += v[j].conj() * g_y;
            }
            g_x[s.message] += g_xm;
        }
    }

    let g_v_flat: Vec<f64> = g_v.iter().map(|c| c.re).chain(g_v.iter().map(|c| c.im)).collect();
    let g_u = normalize_backward(&v_flat, sv, v_norm, &g_v_flat);
    let g_x_flat: Vec<f64> = g_x.iter().flat_map(|c| [c.re, c.im]).collect();
    let g_raw_x = normalize_backward(&x_flat, sx, x_norm, &g_x_flat);
    let (g_bf, _) = model
        .beamformer
        .backward(&tape_bf, &Array2::from_shape_vec((1, 2 * k), g_u).expect("row"))?;
    let (g_enc, _) = model
        .encoder
        .backward(&tape_enc, &Array2::from_shape_vec((mm, 2), g_raw_x).expect("matrix"))?;

    let [g_pres, g_ang, g_unc] = head_grads;
    let or_zero = |g: Option<Gradients>, net: &Mlp| g.unwrap_or_else(|| Gradients::zeros_like(net));
    let nets = vec![
        g_enc,
        g_bf,
        or_zero(g_pres, &model.presence),
        or_zero(g_ang, &model.angle),
        or_zero(g_unc, &model.uncertainty),
        g_rx,
    ];
    Ok((BatchLoss { comm, radar, total }, ModelGradients { nets }))
}

/// Optimizer state for the networks a stage updates.
struct StageOptimizer {
    states: Vec<(Net, AdamState)>,
}

impl StageOptimizer {
    fn new(model: &IsacModel, objective: Objective, config: AdamConfig) -> Self {
        let states = objective
            .trainable()
            .iter()
            .map(|n| (*n, AdamState::for_network(model.net(*n), config)))
            .collect();
        Self { states }
    }

    fn step(&mut self, model: &mut IsacModel, grads: &mut ModelGradients, max_norm: f64) -> Result<()> {
        for (net, state) in &mut self.states {
            let g = &mut grads.nets[*net as usize];
            if max_norm > 0.0 {
                g.clip_norm(max_norm);
            }
            state.step(model.net_mut(*net), g)?;
        }
        Ok(())
    }
}

/// Runs one stage of `batches` fresh mini-batches, appending to `log`.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    model: &mut IsacModel,
    geom: &ArrayGeometry,
    cfg: &ScenarioConfig,
    plan: &TrainingPlan,
    stage: usize,
    objective: Objective,
    batches: usize,
    log: &mut TrainingLog,
) -> Result<()> {
    let adam = AdamConfig {
        learning_rate: plan.learning_rate,
        ..AdamConfig::default()
    };
    let mut opt = StageOptimizer::new(model, objective, adam);
    let mut rng = Rng::named(plan.seed, "train-stage", stage as u64);
    for batch_index in 0..batches {
        let scenes = draw_batch(&mut rng, cfg, plan.batch_size);
        let (loss, mut grads) = batch_loss(model, geom, &scenes, objective, plan.omega_r, cfg.target_prior)?;
        if !loss.total.is_finite() {
            return Err(IsacError::Diverged {
                stage,
                batch: batch_index,
                loss: loss.total,
            });
        }
        log.rows.push(LogRow {
            stage,
            batch_index,
            loss_cce: loss.comm,
            loss_radar_term: loss.radar,
            loss_total: loss.total,
        });
        opt.step(model, &mut grads, plan.max_grad_norm)?;
    }
    Ok(())
}

/// Sequential three-stage training from a fresh initialization. Stages are
/// numbered from 1 in the log.
pub fn train(plan: &TrainingPlan, cfg: &ScenarioConfig, geom: &ArrayGeometry) -> Result<(IsacModel, TrainingLog)> {
    plan.validate()?;
    cfg.validate()?;
    if geom.num_elements() != cfg.num_antennas {
        return Err(IsacError::DimensionMismatch {
            expected: cfg.num_antennas,
            actual: geom.num_elements(),
        });
    }
    let mut model = IsacModel::new(&mut Rng::named(plan.seed, "init", 0), cfg, plan.comm_input())?;
    let mut log = TrainingLog::default();
    for (i, (objective, batches)) in Objective::STAGES.iter().zip(plan.batches_per_stage()).enumerate() {
        train_stage(&mut model, geom, cfg, plan, i + 1, *objective, batches, &mut log)?;
    }
    Ok((model, log))
}
