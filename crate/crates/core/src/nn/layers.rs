use super::tape::{Tape, Var};
use super::tensor::{matmul, silu, Tensor};
use crate::Result;
use rand::Rng;

/// Anything holding trainable tensors in a fixed declaration order.
pub trait Module {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Fully connected layer `y = x·W + b`, `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Uniform fan-in init: `U(−1/√in, 1/√in)` for weights and bias.
    pub fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w = draw(inputs * outputs);
        let b = draw(outputs);
        Self {
            weight: Tensor::matrix(inputs, outputs, w).expect("shape"),
            bias: Tensor::vector(b),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let (n, k, m) = (x.rows(), self.inputs(), self.outputs());
        let mut out = matmul(x.data(), self.weight.data(), n, k, m);
        for row in out.chunks_exact_mut(m) {
            row.iter_mut()
                .zip(self.bias.data())
                .for_each(|(o, b)| *o += b);
        }
        Tensor::matrix(n, m, out).expect("shape")
    }

    pub fn record<'p>(&'p self, tape: &mut Tape<'p>, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let h = tape.matmul(x, w)?;
        tape.add_bias(h, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Silu,
}

/// Dense layers with SiLU between them (none after the last).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// `widths = [in, h1, …, out]`. The final layer is zeroed when `zero_last`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], zero_last: bool, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let mut layers = Vec::new();
        let last = widths.len() - 2;
        for (i, w) in widths.windows(2).enumerate() {
            if i == last && zero_last {
                layers.push(Layer::Dense(Dense::zeros(w[0], w[1])));
            } else {
                layers.push(Layer::Dense(Dense::uniform(w[0], w[1], rng)));
            }
            if i != last {
                layers.push(Layer::Silu);
            }
        }
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dense().next().map(Dense::inputs).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.dense().last().map(Dense::outputs).unwrap_or(0)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.dense().map(Dense::outputs));
        w
    }

    fn dense(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            Layer::Silu => None,
        })
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.apply(&h),
                Layer::Silu => {
                    let mut t = h;
                    t.data_mut().iter_mut().for_each(|v| *v = silu(*v));
                    t
                }
            };
        }
        h
    }

    pub fn record<'p>(&'p self, tape: &mut Tape<'p>, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.record(tape, h)?,
                Layer::Silu => tape.silu(h),
            };
        }
        Ok(h)
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Dense(d) => vec![&d.weight, &d.bias],
                Layer::Silu => vec![],
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
                Layer::Silu => vec![],
            })
            .collect()
    }
}

/// Sinusoidal embedding of a flow time `t ∈ [0, 1]`.
///
/// `t` is scaled by `scale` and encoded as `[sin(t·fᵢ), cos(t·fᵢ)]` with
/// frequencies `fᵢ = 10000^(−i/half)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub scale: f64,
}

impl TimeEmbedding {
    pub fn new(dim: usize, scale: f64) -> Self {
        assert!(dim.is_multiple_of(2), "time embedding dimension must be even");
        Self { dim, scale }
    }

    pub fn embed_into(&self, t: f64, out: &mut Vec<f64>) {
        let half = self.dim / 2;
        let x = t * self.scale;
        let denom = half.max(1) as f64;
        for i in 0..half {
            let f = (-(10_000f64).ln() * i as f64 / denom).exp();
            out.push((x * f).sin());
        }
        for i in 0..half {
            let f = (-(10_000f64).ln() * i as f64 / denom).exp();
            out.push((x * f).cos());
        }
    }

    pub fn embed(&self, ts: &[f64]) -> Tensor {
        let mut data = Vec::with_capacity(ts.len() * self.dim);
        for &t in ts {
            self.embed_into(t, &mut data);
        }
        Tensor::matrix(ts.len(), self.dim, data).expect("shape")
    }
}
