//! Small dense multilayer perceptron with analytic forward/backward passes.
//!
//! Inputs are matrices whose columns are samples: a net mapping `R^n -> R^m`
//! applied to an `n x batch` input yields an `m x batch` output. Hidden
//! layers share one activation; the output layer is always linear so the net
//! can produce unbounded reconstructions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::{Error, Result};

/// Hidden-layer activation. The output layer is always the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    ///
    /// For tanh: `1 - a^2`. For relu: `a > 0` iff `z > 0`, with the usual
    /// zero subgradient at the kink.
    #[inline]
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One dense layer: weight `out_dim x in_dim`, bias `out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Weights, biases, and the hidden activation of a dense feed-forward net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlpParams")]
pub struct MlpParams {
    layers: Vec<Layer>,
    hidden_activation: Activation,
}

#[derive(Deserialize)]
struct RawMlpParams {
    layers: Vec<Layer>,
    hidden_activation: Activation,
}

impl TryFrom<RawMlpParams> for MlpParams {
    type Error = Error;

    fn try_from(raw: RawMlpParams) -> Result<Self> {
        MlpParams::new(raw.layers, raw.hidden_activation)
    }
}

/// Per-layer activations recorded by [`MlpParams::forward`].
///
/// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache never empty")
    }
}

/// Gradient holder with the same layer shapes as an [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| Layer {
                weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        MlpGrads { layers }
    }

    /// Same flat layout as [`MlpParams::append_flat`].
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
    }
}

impl MlpParams {
    /// Validates that adjacent layer dimensions chain and no layer is empty.
    pub fn new(layers: Vec<Layer>, hidden_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("mlp must have at least one layer".into()));
        }
        for (idx, layer) in layers.iter().enumerate() {
            if layer.weight.rows() == 0 || layer.weight.cols() == 0 {
                return Err(Error::Shape(format!("layer {idx} has a zero dimension")));
            }
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::Shape(format!(
                    "layer {idx} bias length {} does not match output dim {}",
                    layer.bias.len(),
                    layer.weight.rows()
                )));
            }
            if idx > 0 && layers[idx - 1].weight.rows() != layer.weight.cols() {
                return Err(Error::Shape(format!(
                    "layer {idx} input dim {} does not chain with previous output dim {}",
                    layer.weight.cols(),
                    layers[idx - 1].weight.rows()
                )));
            }
        }
        Ok(MlpParams {
            layers,
            hidden_activation,
        })
    }

    /// Xavier-uniform weights and zero biases for the dimension chain
    /// `dims = [in, hidden.., out]`, deterministic per generator state.
    pub fn xavier(dims: &[usize], hidden_activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("need at least input and output dims".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight =
                Matrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit));
            layers.push(Layer {
                weight,
                bias: vec![0.0; fan_out],
            });
        }
        MlpParams::new(layers, hidden_activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Appends all parameters (per layer: weight row-major, then bias).
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Reads parameters back in [`append_flat`](Self::append_flat) order.
    /// Returns the number of values consumed.
    pub fn read_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let needed = self.param_count();
        if flat.len() < needed {
            return Err(Error::Shape(format!(
                "flat parameter slice too short: {} < {}",
                flat.len(),
                needed
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let w = layer.weight.data_mut();
            w.copy_from_slice(&flat[off..off + w.len()]);
            off += w.len();
            let b_len = layer.bias.len();
            layer.bias.copy_from_slice(&flat[off..off + b_len]);
            off += b_len;
        }
        Ok(needed)
    }

    /// Batched forward pass: columns of `input` are independent samples.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if input.rows() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} rows, net expects {}",
                input.rows(),
                self.in_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, activations.last().unwrap());
            if idx != last {
                let act = self.hidden_activation;
                for v in z.data_mut() {
                    *v = act.apply(*v);
                }
            }
            activations.push(z);
        }
        let output = activations.last().unwrap().clone();
        Ok((output, ForwardCache { activations }))
    }

    /// Backward pass for the scalar objective whose gradient with respect to
    /// the forward output is `upstream`. Returns parameter gradients and the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let mut grads = MlpGrads::zeros_like(self);
        let input_grad = self.backward_accumulate(cache, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`backward`](Self::backward) but adds parameter gradients into
    /// `grads`, for averaging over repeated samples.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        grads: &mut MlpGrads,
    ) -> Result<Matrix> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Shape(
                "forward cache does not match network depth".into(),
            ));
        }
        let output = cache.output();
        if upstream.rows() != output.rows() || upstream.cols() != output.cols() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                output.rows(),
                output.cols()
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient holder does not match network".into()));
        }

        let last = self.layers.len() - 1;
        let mut d_act = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a_in = &cache.activations[l];
            if a_in.rows() != layer.weight.cols() || a_in.cols() != upstream.cols() {
                return Err(Error::Shape(format!(
                    "cached activation {l} has shape {}x{}, expected {}x{}",
                    a_in.rows(),
                    a_in.cols(),
                    layer.weight.cols(),
                    upstream.cols()
                )));
            }
            // d_z = d_act (output layer is linear) or d_act * act'(a_out).
            let d_z = if l == last {
                d_act
            } else {
                let mut d = d_act;
                let act = self.hidden_activation;
                for (v, &a) in d.data_mut().iter_mut().zip(cache.activations[l + 1].data()) {
                    *v *= act.grad_from_output(a);
                }
                d
            };

            let g = &mut grads.layers[l];
            let out_dim = layer.weight.rows();
            let in_dim = layer.weight.cols();
            for o in 0..out_dim {
                let dz_row = d_z.row(o);
                g.bias[o] += dz_row.iter().sum::<f64>();
                let gw_row = g.weight.row_mut(o);
                for i in 0..in_dim {
                    let mut acc = 0.0;
                    for (&dz, &a) in dz_row.iter().zip(a_in.row(i)) {
                        acc += dz * a;
                    }
                    gw_row[i] += acc;
                }
            }

            let mut d_prev = Matrix::zeros(in_dim, d_z.cols());
            for o in 0..out_dim {
                let w_row = self.layers[l].weight.row(o);
                let dz_row = d_z.row(o);
                for (i, &w) in w_row.iter().enumerate() {
                    for (dp, &dz) in d_prev.row_mut(i).iter_mut().zip(dz_row.iter()) {
                        *dp += w * dz;
                    }
                }
            }
            d_act = d_prev;
        }
        Ok(d_act)
    }
}

/// `W * a + b` with the bias broadcast over columns.
fn affine(layer: &Layer, a: &Matrix) -> Matrix {
    let out_dim = layer.weight.rows();
    let batch = a.cols();
    let mut z = Matrix::zeros(out_dim, batch);
    for o in 0..out_dim {
        let w_row = layer.weight.row(o);
        {
            let z_row = z.row_mut(o);
            z_row.fill(layer.bias[o]);
        }
        for (i, &w) in w_row.iter().enumerate() {
            let a_row = a.row(i);
            let z_row = z.row_mut(o);
            for (zv, &av) in z_row.iter_mut().zip(a_row.iter()) {
                *zv += w * av;
            }
        }
    }
    z
}
