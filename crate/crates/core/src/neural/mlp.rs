use ndarray::{Array1, Array2, Axis};

use crate::error::{IsacError, Result};
use crate::rng::Rng;

/// Floor added to the ReLU output of the uncertainty head.
pub const RELU_FLOOR: f64 = 1e-4;

/// Output nonlinearity of a network. Hidden layers are always ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Sigmoid,
    /// `(π/2)·tanh(s)`, covering the angle range `[-π/2, π/2]`.
    ScaledTanh,
    /// `max(s, 0) + RELU_FLOOR`, strictly positive.
    ReluFloor,
    Softmax,
}

impl Activation {
    fn apply(self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => pre.clone(),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::ScaledTanh => pre.mapv(|s| std::f64::consts::FRAC_PI_2 * s.tanh()),
            Activation::ReluFloor => pre.mapv(|s| s.max(0.0) + RELU_FLOOR),
            Activation::Softmax => {
                let mut out = pre.clone();
                for mut row in out.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                out
            }
        }
    }

    /// Maps dL/d(output) to dL/d(pre-activation).
    fn backprop(self, pre: &Array2<f64>, out: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => grad.clone(),
            Activation::Sigmoid => grad * &out.mapv(|q| q * (1.0 - q)),
            Activation::ScaledTanh => {
                let d = pre.mapv(|s| {
                    let t = s.tanh();
                    std::f64::consts::FRAC_PI_2 * (1.0 - t * t)
                });
                grad * &d
            }
            Activation::ReluFloor => relu_mask(pre, grad),
            Activation::Softmax => {
                let mut g = grad.clone();
                for (mut grow, prow) in g.rows_mut().into_iter().zip(out.rows()) {
                    let dot = grow.dot(&prow);
                    grow.zip_mut_with(&prow, |gv, &p| *gv = p * (*gv - dot));
                }
                g
            }
        }
    }
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn relu_mask(pre: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(pre, |gv, &p| {
        if p <= 0.0 {
            *gv = 0.0
        }
    });
    g
}

/// Fully connected layer computing `W x + b` with `W` of shape `(d_out, d_in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Feed-forward network with ReLU hidden layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: Activation,
}

/// Intermediates of one recorded batch forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

/// Parameter-shaped gradient (or moment) buffers for one [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        let (l, w, i) = locate(&self.layers, index);
        if w {
            self.layers[l].weights.as_slice().unwrap()[i]
        } else {
            self.layers[l].biases[i]
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
    }

    /// Euclidean norm over every entry.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the norm is at most `max_norm`; returns the norm before scaling.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            let s = max_norm / n;
            for l in &mut self.layers {
                l.weights *= s;
                l.biases *= s;
            }
        }
        n
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| *v == 0.0))
    }
}

// flat index → (layer, is_weight, offset); weights row-major then biases per layer
fn locate(layers: &[Dense], mut index: usize) -> (usize, bool, usize) {
    for (l, layer) in layers.iter().enumerate() {
        if index < layer.weights.len() {
            return (l, true, index);
        }
        index -= layer.weights.len();
        if index < layer.biases.len() {
            return (l, false, index);
        }
        index -= layer.biases.len();
    }
    panic!("parameter index out of range");
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(rng: &mut Rng, dims: &[usize], output: Activation) -> Result<Self> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let (d_in, d_out) = (w[0], w[1]);
                let limit = (6.0 / (d_in + d_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((d_out, d_in), |_| rng.uniform_in(-limit, limit));
                Dense {
                    weights,
                    biases: Array1::zeros(d_out),
                }
            })
            .collect();
        Ok(Self { layers, output })
    }

    pub fn zeros(dims: &[usize], output: Activation) -> Result<Self> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[1], w[0])),
                biases: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self { layers, output })
    }

    pub fn from_layers(layers: Vec<Dense>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(IsacError::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(IsacError::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    actual: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.biases.len() != l.output_dim() {
                return Err(IsacError::DimensionMismatch {
                    expected: l.output_dim(),
                    actual: l.biases.len(),
                });
            }
        }
        Ok(Self { layers, output })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::output_dim).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn param(&self, index: usize) -> f64 {
        let (l, w, i) = locate(&self.layers, index);
        if w {
            self.layers[l].weights.as_slice().unwrap()[i]
        } else {
            self.layers[l].biases[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, w, i) = locate(&self.layers, index);
        if w {
            self.layers[l].weights.as_slice_mut().unwrap()[i] = value;
        } else {
            self.layers[l].biases[i] = value;
        }
    }

    /// Single-input evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        Ok(self.forward_batch(&x)?.into_raw_vec_and_offset().0)
    }

    /// Evaluates every row of `x`.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = h.dot(&layer.weights.t());
            pre += &layer.biases;
            h = if l == last {
                self.output.apply(&pre)
            } else {
                pre.mapv_inplace(|v| v.max(0.0));
                pre
            };
        }
        Ok(h)
    }

    /// Batch evaluation that keeps the intermediates needed by [`Mlp::backward`].
    pub fn forward_recorded(&self, x: Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = h.dot(&layer.weights.t());
            pre += &layer.biases;
            let next = if l == last {
                self.output.apply(&pre)
            } else {
                pre.mapv(|v| v.max(0.0))
            };
            inputs.push(h);
            pres.push(pre);
            h = next;
        }
        let tape = Tape {
            inputs,
            pre: pres,
            output: h.clone(),
        };
        Ok((h, tape))
    }

    /// Reverse pass: given dL/d(output) for every recorded row, returns the
    /// parameter gradients and dL/d(input).
    pub fn backward(&self, tape: &Tape, output_grad: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if tape.pre.len() != self.layers.len() {
            return Err(IsacError::DimensionMismatch {
                expected: self.layers.len(),
                actual: tape.pre.len(),
            });
        }
        if output_grad.dim() != tape.output.dim() {
            return Err(IsacError::DimensionMismatch {
                expected: tape.output.len(),
                actual: output_grad.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = self.output.backprop(&tape.pre[last], &tape.output, output_grad);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let weights = g.t().dot(&tape.inputs[l]);
            let biases = g.sum_axis(Axis(0));
            grads.push(Dense { weights, biases });
            let g_in = g.dot(&layer.weights);
            g = if l > 0 {
                relu_mask(&tape.pre[l - 1], &g_in)
            } else {
                g_in
            };
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    fn check_input(&self, n: usize) -> Result<()> {
        if n != self.input_dim() {
            return Err(IsacError::DimensionMismatch {
                expected: self.input_dim(),
                actual: n,
            });
        }
        Ok(())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(IsacError::InvalidArgument(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Activation; 5] = [
        Activation::Linear,
        Activation::Sigmoid,
        Activation::ScaledTanh,
        Activation::ReluFloor,
        Activation::Softmax,
    ];

    #[test]
    fn clip_norm_caps_length() {
        let net = Mlp::init(&mut Rng::new(2, 0), &[2, 3, 1], Activation::Linear).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[[0, 0]] = 3.0;
        g.layers[1].biases[0] = 4.0;
        assert_eq!(g.norm(), 5.0);
        assert_eq!(g.clip_norm(10.0), 5.0);
        assert_eq!(g.norm(), 5.0);
        g.clip_norm(1.0);
        assert!((g.norm() - 1.0).abs() < 1e-15);
        assert!((g.layers[0].weights[[0, 0]] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn parameter_count() {
        let net = Mlp::init(&mut Rng::new(1, 1), &[4, 16, 16, 32, 32], Activation::Linear).unwrap();
        // 4·16+16 + 16·16+16 + 16·32+32 + 32·32+32
        assert_eq!(net.num_params(), 1952);
        assert_eq!(net.dims(), vec![4, 16, 16, 32, 32]);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::init(&mut Rng::new(3, 0), &[4, 8, 2], Activation::Linear).unwrap();
        let b = Mlp::init(&mut Rng::new(3, 0), &[4, 8, 2], Activation::Linear).unwrap();
        assert_eq!(a, b);
        assert!(a.layers()[0].biases.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn init_weight_is_centered() {
        let n = 10_000;
        let limit = (6.0f64 / 20.0).sqrt();
        let mean = (0..n)
            .map(|s| {
                Mlp::init(&mut Rng::new(s, 0), &[4, 16], Activation::Linear)
                    .unwrap()
                    .param(5)
            })
            .sum::<f64>()
            / n as f64;
        // uniform(-l, l) has standard deviation l/√3
        let se = limit / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn zero_network_outputs() {
        let sig = Mlp::zeros(&[3, 5, 2], Activation::Sigmoid).unwrap();
        assert_eq!(sig.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.5, 0.5]);
        let soft = Mlp::zeros(&[3, 5, 4], Activation::Softmax).unwrap();
        assert_eq!(soft.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.25; 4]);
        let floor = Mlp::zeros(&[3, 1], Activation::ReluFloor).unwrap();
        assert_eq!(floor.forward(&[1.0, 1.0, 1.0]).unwrap(), vec![RELU_FLOOR]);
    }

    #[test]
    fn input_dimension_checked() {
        let net = Mlp::zeros(&[3, 2], Activation::Linear).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(Mlp::zeros(&[3], Activation::Linear).is_err());
    }

    #[test]
    fn output_ranges_and_purity() {
        let mut rng = Rng::new(9, 9);
        for act in ALL {
            let net = Mlp::init(&mut rng, &[6, 12, 5], act).unwrap();
            let x = Array2::from_shape_fn((64, 6), |_| 4.0 * rng.normal());
            let y = net.forward_batch(&x).unwrap();
            assert_eq!(y, net.forward_batch(&x).unwrap());
            for row in y.rows() {
                match act {
                    Activation::Softmax => assert!((row.sum() - 1.0).abs() < 1e-12),
                    Activation::Sigmoid => assert!(row.iter().all(|v| *v > 0.0 && *v < 1.0)),
                    Activation::ReluFloor => assert!(row.iter().all(|v| *v >= RELU_FLOOR)),
                    Activation::ScaledTanh => {
                        assert!(row.iter().all(|v| v.abs() <= std::f64::consts::FRAC_PI_2))
                    }
                    Activation::Linear => {}
                }
            }
        }
    }

    // Scalar loss L = Σ c ⊙ f(x) with fixed random weights c.
    fn probe_loss(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
        (net.forward_batch(x).unwrap() * c).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = Rng::new(21, 0);
        for act in ALL {
            let mut net = Mlp::init(&mut rng, &[5, 7, 6, 3], act).unwrap();
            for i in 0..net.num_params() {
                if i % 3 == 0 {
                    let v = net.param(i);
                    net.set_param(i, v + 0.1 * rng.normal());
                }
            }
            let x = Array2::from_shape_fn((4, 5), |_| rng.normal());
            let c = Array2::from_shape_fn((4, 3), |_| rng.normal());
            let (_, tape) = net.forward_recorded(x.clone()).unwrap();
            let (grads, gx) = net.backward(&tape, &c).unwrap();
            let h = 1e-5;
            for i in 0..net.num_params() {
                let mut p = net.clone();
                p.set_param(i, net.param(i) + h);
                let up = probe_loss(&p, &x, &c);
                p.set_param(i, net.param(i) - h);
                let down = probe_loss(&p, &x, &c);
                let fd = (up - down) / (2.0 * h);
                let an = grads.get(i);
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / scale < 1e-5, "{act:?} param {i}: {an} vs {fd}");
            }
            for ((r, col), an) in gx.indexed_iter() {
                let mut xp = x.clone();
                xp[[r, col]] += h;
                let up = probe_loss(&net, &xp, &c);
                xp[[r, col]] -= 2.0 * h;
                let down = probe_loss(&net, &xp, &c);
                let fd = (up - down) / (2.0 * h);
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / scale < 1e-5, "{act:?} input ({r},{col})");
            }
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let net = Mlp::init(&mut Rng::new(2, 2), &[3, 4, 2], Activation::Sigmoid).unwrap();
        let (_, tape) = net.forward_recorded(Array2::ones((5, 3))).unwrap();
        let (g, gx) = net.backward(&tape, &Array2::zeros((5, 2))).unwrap();
        assert!(g.is_zero());
        assert!(gx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_in_parameters() {
        // Identity net (single linear layer, x = 0 contributes only biases):
        // L = ½‖b‖² so dL/db = b.
        let mut net = Mlp::zeros(&[2, 3], Activation::Linear).unwrap();
        net.layers_mut()[0].biases = Array1::from(vec![0.3, -1.2, 2.0]);
        let (out, tape) = net.forward_recorded(Array2::zeros((1, 2))).unwrap();
        let (g, _) = net.backward(&tape, &out).unwrap();
        assert_eq!(g.layers[0].biases, net.layers()[0].biases);
    }
}
