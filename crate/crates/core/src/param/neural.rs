//! Coordinate MLP mapping normalized pupil coordinates to a scalar.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`fan_in x fan_out`, row-major) followed by the bias.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAYERS: [usize; 5] = [2, 128, 128, 128, 1];
pub const OMEGA_0: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `sin(omega_0 z)` hidden units
    Sine,
    /// softplus hidden units
    Softplus,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Softplus => "softplus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sine" => Some(Activation::Sine),
            "softplus" => Some(Activation::Softplus),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sine => (OMEGA_0 * z).sin(),
            Activation::Softplus => softplus(z),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sine => OMEGA_0 * (OMEGA_0 * z).cos(),
            Activation::Softplus => sigmoid(z),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Number of parameters of an MLP with the given widths.
pub fn param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Initial parameters. Sine networks use the frequency-scaled uniform scheme
/// (first layer `U(+-1/fan_in)`, later layers `U(+-sqrt(6/fan_in)/omega_0)`);
/// softplus networks use `U(+-1/sqrt(fan_in))`. Biases are `U(+-1/sqrt(fan_in))`.
pub fn init_params(layers: &[usize], act: Activation, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(param_count(layers));
    for (l, w) in layers.windows(2).enumerate() {
        let fan_in = w[0] as f64;
        let wb = match act {
            Activation::Sine if l == 0 => 1.0 / fan_in,
            Activation::Sine => (6.0 / fan_in).sqrt() / OMEGA_0,
            Activation::Softplus => 1.0 / fan_in.sqrt(),
        };
        for _ in 0..w[0] * w[1] {
            out.push(rng.random_range(-wb..wb));
        }
        let bb = 1.0 / fan_in.sqrt();
        for _ in 0..w[1] {
            out.push(rng.random_range(-bb..bb));
        }
    }
    out
}

/// Borrowed view of a network for evaluation.
pub struct Mlp<'a> {
    pub layers: &'a [usize],
    pub act: Activation,
    pub params: &'a [f64],
}

struct Forward {
    /// inputs to each layer (activations of the previous one)
    inputs: Vec<Array2<f64>>,
    /// pre-activations of the hidden layers
    pre: Vec<Array2<f64>>,
    out: Array1<f64>,
}

impl<'a> Mlp<'a> {
    pub fn new(layers: &'a [usize], act: Activation, params: &'a [f64]) -> Result<Self> {
        if layers.len() < 2 || layers[0] != 2 || *layers.last().unwrap() != 1 {
            return Err(Error::Config("network must map 2 inputs to 1 output".into()));
        }
        if params.len() != param_count(layers) {
            return Err(Error::InvalidInput(format!(
                "network needs {} parameters, got {}",
                param_count(layers),
                params.len()
            )));
        }
        Ok(Mlp { layers, act, params })
    }

    fn layer(&self, l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let off: usize = self.layers[..l + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let (fi, fo) = (self.layers[l], self.layers[l + 1]);
        let w = ArrayView2::from_shape((fi, fo), &self.params[off..off + fi * fo]).unwrap();
        let b = ArrayView1::from(&self.params[off + fi * fo..off + fi * fo + fo]);
        (w, b)
    }

    fn forward_full(&self, coords: &[[f64; 2]]) -> Forward {
        let n = coords.len();
        let x = Array2::from_shape_fn((n, 2), |(i, k)| coords[i][k]);
        let n_layers = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut a = x;
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let z = a.dot(&w) + &b;
            inputs.push(a);
            if l + 1 == n_layers {
                let out = z.index_axis(Axis(1), 0).to_owned();
                return Forward { inputs, pre, out };
            }
            a = z.mapv(|v| self.act.apply(v));
            pre.push(z);
        }
        unreachable!()
    }

    /// Network output (before any mask activation) at each coordinate.
    pub fn forward(&self, coords: &[[f64; 2]]) -> Vec<f64> {
        self.forward_full(coords).out.to_vec()
    }

    /// Gradient with respect to the parameters of `sum_i out_bar[i] * out[i]`.
    pub fn backward(&self, coords: &[[f64; 2]], out_bar: &[f64]) -> Vec<f64> {
        let fwd = self.forward_full(coords);
        let n_layers = self.layers.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut z_bar = Array2::from_shape_vec((out_bar.len(), 1), out_bar.to_vec()).unwrap();
        for l in (0..n_layers).rev() {
            let (w, _) = self.layer(l);
            let off: usize = self.layers[..l + 1]
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum();
            let (fi, fo) = (self.layers[l], self.layers[l + 1]);
            let w_bar = fwd.inputs[l].t().dot(&z_bar);
            grad[off..off + fi * fo].copy_from_slice(w_bar.as_slice().unwrap());
            let b_bar = z_bar.sum_axis(Axis(0));
            grad[off + fi * fo..off + fi * fo + fo].copy_from_slice(b_bar.as_slice().unwrap());
            if l > 0 {
                let a_bar = z_bar.dot(&w.t());
                let act = self.act;
                z_bar = ndarray::Zip::from(&a_bar)
                    .and(&fwd.pre[l - 1])
                    .map_collect(|g, z| g * act.derivative(*z));
            }
        }
        grad
    }
}
