use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::Array2;

use crate::channels::ScenarioConfig;
use crate::error::{IsacError, Result};
use crate::neural::checkpoint::{read_networks, write_networks};
use crate::neural::{Activation, Mlp};
use crate::rng::Rng;
use crate::signal::{ComplexVec, C64};

/// How the communication receiver sees its observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommInput {
    /// `(Re z, Im z, Re κ, Im κ)`.
    Raw,
    /// `(Re z/κ, Im z/κ)`, zero-forcing equalized before the network.
    Equalized,
}

impl CommInput {
    pub fn dim(self) -> usize {
        match self {
            CommInput::Raw => 4,
            CommInput::Equalized => 2,
        }
    }

    /// Receiver features for one observation.
    pub fn features(self, z: C64, csi: C64) -> [f64; 4] {
        match self {
            CommInput::Raw => [z.re, z.im, csi.re, csi.im],
            CommInput::Equalized => {
                let e = z / csi;
                [e.re, e.im, 0.0, 0.0]
            }
        }
    }
}

/// Identifies one of the six networks, in checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Net {
    Encoder,
    Beamformer,
    Presence,
    Angle,
    Uncertainty,
    CommRx,
}

impl Net {
    pub const ALL: [Net; 6] = [
        Net::Encoder,
        Net::Beamformer,
        Net::Presence,
        Net::Angle,
        Net::Uncertainty,
        Net::CommRx,
    ];

    pub fn activation(self) -> Activation {
        match self {
            Net::Encoder | Net::Beamformer => Activation::Linear,
            Net::Presence => Activation::Sigmoid,
            Net::Angle => Activation::ScaledTanh,
            Net::Uncertainty => Activation::ReluFloor,
            Net::CommRx => Activation::Softmax,
        }
    }
}

/// Learned transmitter and receivers.
#[derive(Clone, Debug, PartialEq)]
pub struct IsacModel {
    pub encoder: Mlp,
    pub beamformer: Mlp,
    pub presence: Mlp,
    pub angle: Mlp,
    pub uncertainty: Mlp,
    pub comm_rx: Mlp,
    prior: [f64; 4],
    energy_budget: f64,
    comm_input: CommInput,
}

/// Normalized transmitter state shared by every sample of a batch.
#[derive(Clone, Debug)]
pub struct Transmitter {
    pub constellation: Vec<C64>,
    pub beam: ComplexVec,
}

impl Transmitter {
    pub fn signal(&self, message: usize) -> ComplexVec {
        self.beam.scale(self.constellation[message])
    }
}

pub(crate) fn layer_dims(net: Net, k: usize, m: usize, comm_input: CommInput) -> Vec<usize> {
    match net {
        Net::Encoder => vec![m, k, k, 2 * k, 2],
        Net::Beamformer => vec![4, k, k, 2 * k, 2 * k],
        Net::Presence | Net::Angle | Net::Uncertainty => vec![2 * k, 2 * k, 2 * k, k, 1],
        Net::CommRx => vec![comm_input.dim(), k, 2 * k, 2 * k, m],
    }
}

/// `out = s·r/‖r‖` and the map from dL/d(out) to dL/dr.
pub(crate) fn normalize(r: &[f64], s: f64) -> (Vec<f64>, f64) {
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (r.iter().map(|v| s * v / norm).collect(), norm)
}

pub(crate) fn normalize_backward(out: &[f64], s: f64, norm: f64, grad: &[f64]) -> Vec<f64> {
    // with r̂ = out/s: dL/dr = (s/‖r‖)(g − r̂ (r̂·g))
    let proj: f64 = out.iter().zip(grad).map(|(o, g)| o * g).sum::<f64>() / (s * s);
    out.iter().zip(grad).map(|(o, g)| s / norm * (g - o * proj)).collect()
}

impl IsacModel {
    /// Fresh Glorot-initialized model for the scenario.
    pub fn new(rng: &mut Rng, cfg: &ScenarioConfig, comm_input: CommInput) -> Result<Self> {
        cfg.validate()?;
        let (k, m) = (cfg.num_antennas, cfg.modulation_size);
        let mut make = |net: Net| Mlp::init(rng, &layer_dims(net, k, m, comm_input), net.activation());
        Ok(Self {
            encoder: make(Net::Encoder)?,
            beamformer: make(Net::Beamformer)?,
            presence: make(Net::Presence)?,
            angle: make(Net::Angle)?,
            uncertainty: make(Net::Uncertainty)?,
            comm_rx: make(Net::CommRx)?,
            prior: cfg.angular_prior(),
            energy_budget: cfg.energy_budget,
            comm_input,
        })
    }

    fn from_nets(nets: Vec<Mlp>, cfg: &ScenarioConfig) -> Result<Self> {
        let comm_input = match nets[5].input_dim() {
            4 => CommInput::Raw,
            2 => CommInput::Equalized,
            d => {
                return Err(IsacError::Checkpoint(format!(
                    "comm receiver input dim {d} is neither 2 nor 4"
                )))
            }
        };
        let (k, m) = (cfg.num_antennas, cfg.modulation_size);
        for (net, mlp) in Net::ALL.iter().zip(&nets) {
            let expected = layer_dims(*net, k, m, comm_input);
            if mlp.dims() != expected {
                return Err(IsacError::Checkpoint(format!(
                    "{net:?} has dims {:?}, scenario needs {expected:?}",
                    mlp.dims()
                )));
            }
        }
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("six networks");
        Ok(Self {
            encoder: next(),
            beamformer: next(),
            presence: next(),
            angle: next(),
            uncertainty: next(),
            comm_rx: next(),
            prior: cfg.angular_prior(),
            energy_budget: cfg.energy_budget,
            comm_input,
        })
    }

    pub fn comm_input(&self) -> CommInput {
        self.comm_input
    }

    pub fn prior(&self) -> [f64; 4] {
        self.prior
    }

    pub fn energy_budget(&self) -> f64 {
        self.energy_budget
    }

    pub fn num_messages(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn num_antennas(&self) -> usize {
        self.beamformer.output_dim() / 2
    }

    pub fn net(&self, net: Net) -> &Mlp {
        match net {
            Net::Encoder => &self.encoder,
            Net::Beamformer => &self.beamformer,
            Net::Presence => &self.presence,
            Net::Angle => &self.angle,
            Net::Uncertainty => &self.uncertainty,
            Net::CommRx => &self.comm_rx,
        }
    }

    pub fn net_mut(&mut self, net: Net) -> &mut Mlp {
        match net {
            Net::Encoder => &mut self.encoder,
            Net::Beamformer => &mut self.beamformer,
            Net::Presence => &mut self.presence,
            Net::Angle => &mut self.angle,
            Net::Uncertainty => &mut self.uncertainty,
            Net::CommRx => &mut self.comm_rx,
        }
    }

    pub(crate) fn encoder_input(&self) -> Array2<f64> {
        Array2::eye(self.num_messages())
    }

    pub(crate) fn beamformer_input(&self) -> Array2<f64> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        Array2::from_shape_fn((1, 4), |(_, j)| self.prior[j] / half_pi)
    }

    /// Target norm of the flattened constellation, giving unit average energy.
    pub(crate) fn constellation_scale(&self) -> f64 {
        (self.num_messages() as f64).sqrt()
    }

    /// Normalized constellation with unit average energy and the beam with
    /// `‖v‖² = E_tx`.
    pub fn transmitter(&self) -> Transmitter {
        let raw = self
            .encoder
            .forward_batch(&self.encoder_input())
            .expect("encoder dims fixed at construction");
        let (x, _) = normalize(raw.as_slice().expect("standard layout"), self.constellation_scale());
        let constellation = x.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        let u = self
            .beamformer
            .forward_batch(&self.beamformer_input())
            .expect("beamformer dims fixed at construction");
        let (v, _) = normalize(u.as_slice().expect("standard layout"), self.energy_budget.sqrt());
        Transmitter {
            constellation,
            beam: ComplexVec::from_real_concat(&v),
        }
    }

    /// `(x(m), v, y = v·x(m))`.
    pub fn transmit(&self, message: usize) -> Result<(C64, ComplexVec, ComplexVec)> {
        if message >= self.num_messages() {
            return Err(IsacError::InvalidArgument(format!(
                "message {message} outside alphabet of size {}",
                self.num_messages()
            )));
        }
        let tx = self.transmitter();
        let x = tx.constellation[message];
        let y = tx.beam.scale(x);
        Ok((x, tx.beam, y))
    }

    /// Runs the three radar heads on rows of `[Re z, Im z]`; returns
    /// `(q, θ̂, σ̂)` per row.
    pub fn radar_infer(&self, features: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let col = |a: Array2<f64>| a.column(0).to_vec();
        Ok((
            col(self.presence.forward_batch(features)?),
            col(self.angle.forward_batch(features)?),
            col(self.uncertainty.forward_batch(features)?),
        ))
    }

    /// Message probabilities for rows of receiver features.
    pub fn comm_infer(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        self.comm_rx.forward_batch(features)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let nets: Vec<&Mlp> = Net::ALL.iter().map(|n| self.net(*n)).collect();
        write_networks(BufWriter::new(file), &nets)
    }

    pub fn load(path: &Path, cfg: &ScenarioConfig) -> Result<Self> {
        let file = File::open(path)?;
        let acts: Vec<Activation> = Net::ALL.iter().map(|n| n.activation()).collect();
        Self::from_nets(read_networks(BufReader::new(file), &acts)?, cfg)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let nets: Vec<&Mlp> = Net::ALL.iter().map(|n| self.net(*n)).collect();
        write_networks(&mut out, &nets)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], cfg: &ScenarioConfig) -> Result<Self> {
        let acts: Vec<Activation> = Net::ALL.iter().map(|n| n.activation()).collect();
        Self::from_nets(read_networks(bytes, &acts)?, cfg)
    }
}
