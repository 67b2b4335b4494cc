use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer, `y = x Wᵀ + b` with `W` of shape out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// He-normal weights, zero bias.
    pub fn he(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((outputs, inputs), |_| std * rng.sample::<f64, _>(StandardNormal));
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Feedforward encoder with ReLU between layers and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub layers: Vec<Dense>,
}

/// Gradients matching [`Encoder::layers`].
#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub layers: Vec<Dense>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    /// Input to each layer, post-activation.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Encoder {
    /// `dims = [input, hidden..., output]`; at least one layer.
    pub fn new(rng: &mut impl Rng, dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid encoder dims {dims:?}")));
        }
        let layers = dims.windows(2).map(|w| Dense::he(rng, w[0], w[1])).collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, EncoderCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(h.view());
            inputs.push(h);
            if i < last {
                h = z.mapv(|v| v.max(0.0));
                pre.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, EncoderCache { inputs, pre }))
    }

    /// Output only.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &EncoderCache, d_out: Array2<f64>) -> EncoderGradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let dw = g.t().dot(input);
            let db = g.sum_axis(Axis(0));
            if i > 0 {
                let mut dx = g.dot(&self.layers[i].weight);
                ndarray::Zip::from(&mut dx)
                    .and(&cache.pre[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
                g = dx;
            }
            grads.push(Dense { weight: dw, bias: db });
        }
        grads.reverse();
        EncoderGradients { layers: grads }
    }
}
