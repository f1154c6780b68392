use super::layers::{Mlp, Module, TimeEmbedding};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// Width of the flattened state fed to the network.
    pub state_dim: usize,
    /// Width of the conditioning vector (0 for unconditioned fields).
    pub cond_dim: usize,
    /// Width of the predicted velocity or noise.
    pub out_dim: usize,
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    pub time_scale: f64,
    pub zero_final: bool,
}

impl NetworkConfig {
    /// Policy denoiser: 4 × 256 SiLU MLP, 64-d time embedding, zeroed output layer.
    pub fn policy(state_dim: usize, cond_dim: usize, out_dim: usize) -> Self {
        Self {
            state_dim,
            cond_dim,
            out_dim,
            hidden: vec![256; 4],
            time_dim: 64,
            time_scale: 100.0,
            zero_final: true,
        }
    }

    /// Unconditioned toy field: 3 × 128 SiLU MLP.
    pub fn toy(state_dim: usize, out_dim: usize) -> Self {
        Self {
            state_dim,
            cond_dim: 0,
            out_dim,
            hidden: vec![128; 3],
            time_dim: 64,
            time_scale: 100.0,
            zero_final: true,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.time_dim + self.cond_dim
    }

    pub fn descriptor(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        format!(
            "vector_field state_dim={} cond_dim={} out_dim={} hidden={} time_dim={} time_scale={}",
            self.state_dim,
            self.cond_dim,
            self.out_dim,
            hidden.join(","),
            self.time_dim,
            self.time_scale
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Trace {
    z: Tensor,
    t: Vec<f64>,
    cond: Tensor,
}

/// Conditioned vector-field network `v(z_t, t, cond)`.
///
/// Input junction: `[z_t ⊕ embed(t) ⊕ cond]`, followed by the SiLU MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    time: TimeEmbedding,
    mlp: Mlp,
    trace: Option<Trace>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Self {
        let mut widths = vec![config.input_dim()];
        widths.extend(&config.hidden);
        widths.push(config.out_dim);
        let mlp = Mlp::new(&widths, config.zero_final, rng);
        Self {
            time: TimeEmbedding::new(config.time_dim, config.time_scale),
            config,
            mlp,
            trace: None,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    fn check_inputs(&self, z: &Tensor, t: &[f64], cond: &Tensor) -> Result<()> {
        let b = z.rows();
        let checks = [
            ("network state", vec![b, self.config.state_dim], z.shape().to_vec()),
            ("network cond", vec![b, self.config.cond_dim], vec![cond.rows(), cond.cols()]),
            ("network time", vec![b], vec![t.len()]),
        ];
        for (op, expected, got) in checks {
            if expected != got {
                return Err(Error::ShapeMismatch { op, expected, got });
            }
        }
        if z.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "network state",
                expected: vec![b, self.config.state_dim],
                got: z.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Inference without recording.
    pub fn predict(&self, z: &Tensor, t: &[f64], cond: &Tensor) -> Result<Tensor> {
        self.check_inputs(z, t, cond)?;
        let (b, sd, cd, td) = (
            z.rows(),
            self.config.state_dim,
            self.config.cond_dim,
            self.config.time_dim,
        );
        let mut input = Vec::with_capacity(b * self.config.input_dim());
        for i in 0..b {
            input.extend_from_slice(&z.data()[i * sd..(i + 1) * sd]);
            self.time.embed_into(t[i], &mut input);
            input.extend_from_slice(&cond.data()[i * cd..(i + 1) * cd]);
        }
        debug_assert_eq!(input.len(), b * (sd + td + cd));
        Ok(self
            .mlp
            .apply(&Tensor::matrix(b, self.config.input_dim(), input)?))
    }

    /// Records the forward pass on `tape`; `z` and `cond` may carry gradients.
    pub fn record<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        z: Var,
        t: &[f64],
        cond: Var,
    ) -> Result<Var> {
        self.check_inputs(tape.value(z), t, tape.value(cond))?;
        let emb = tape.constant(self.time.embed(t));
        let input = tape.concat(&[z, emb, cond])?;
        self.mlp.record(tape, input)
    }

    /// Forward pass that remembers its inputs for a later [`Network::backward`].
    pub fn forward(&mut self, z: &Tensor, t: &[f64], cond: &Tensor) -> Result<Tensor> {
        let out = self.predict(z, t, cond)?;
        self.trace = Some(Trace {
            z: z.clone(),
            t: t.to_vec(),
            cond: cond.clone(),
        });
        Ok(out)
    }

    /// Parameter gradients of `Σ d_out ⊙ output` for the last [`Network::forward`].
    pub fn backward(&self, d_out: &Tensor) -> Result<Vec<Tensor>> {
        let trace = self.trace.as_ref().ok_or(Error::NoForwardPass)?;
        let mut tape = Tape::new();
        let z = tape.constant_ref(&trace.z);
        let cond = tape.constant_ref(&trace.cond);
        let out = self.record(&mut tape, z, &trace.t, cond)?;
        tape.backward(out, d_out.clone())
    }

    pub fn clear_trace(&mut self) {
        self.trace = None;
    }
}

impl Module for Network {
    fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn small(zero_final: bool) -> NetworkConfig {
        NetworkConfig {
            state_dim: 3,
            cond_dim: 2,
            out_dim: 3,
            hidden: vec![16, 16],
            time_dim: 8,
            time_scale: 100.0,
            zero_final,
        }
    }

    #[test]
    fn zero_final_layer_gives_zero_output() {
        let net = Network::new(small(true), &mut rng::stream(0, rng::INIT, 0));
        let z = Tensor::full(&[4, 3], 0.7);
        let c = Tensor::full(&[4, 2], -0.2);
        let out = net.predict(&z, &[0.0, 0.3, 0.6, 1.0], &c).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = Network::new(small(false), &mut rng::stream(5, rng::INIT, 0));
        let b = Network::new(small(false), &mut rng::stream(5, rng::INIT, 0));
        let z = Tensor::full(&[2, 3], 0.1);
        let c = Tensor::full(&[2, 2], 0.4);
        let ya = a.predict(&z, &[0.2, 0.9], &c).unwrap();
        let yb = b.predict(&z, &[0.2, 0.9], &c).unwrap();
        assert_eq!(ya.data(), yb.data());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Network::new(small(false), &mut rng::stream(0, rng::INIT, 0));
        let z = Tensor::full(&[2, 4], 0.1);
        let c = Tensor::full(&[2, 2], 0.4);
        assert!(matches!(
            net.predict(&z, &[0.0, 0.0], &c),
            Err(Error::ShapeMismatch { .. })
        ));
        let z = Tensor::full(&[2, 3], 0.1);
        assert!(net.predict(&z, &[0.0], &c).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let net = Network::new(small(false), &mut rng::stream(0, rng::INIT, 0));
        assert!(matches!(
            net.backward(&Tensor::zeros(&[1, 3])),
            Err(Error::NoForwardPass)
        ));
    }

    #[test]
    fn backward_is_linear_in_seed() {
        let mut net = Network::new(small(false), &mut rng::stream(1, rng::INIT, 0));
        let z = Tensor::full(&[2, 3], 0.3);
        let c = Tensor::full(&[2, 2], -0.1);
        net.forward(&z, &[0.1, 0.8], &c).unwrap();
        let seed = Tensor::matrix(2, 3, vec![0.5, -1.0, 0.2, 0.3, 0.0, 1.5]).unwrap();
        let g1 = net.backward(&seed).unwrap();
        let mut twice = seed.clone();
        twice.scale_in_place(2.0);
        let g2 = net.backward(&twice).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_output_has_zero_hidden_gradients() {
        // A zeroed output layer makes the output independent of every hidden parameter.
        let mut net = Network::new(small(true), &mut rng::stream(2, rng::INIT, 0));
        let z = Tensor::full(&[2, 3], 0.3);
        let c = Tensor::full(&[2, 2], -0.1);
        net.forward(&z, &[0.1, 0.8], &c).unwrap();
        let grads = net.backward(&Tensor::full(&[2, 3], 1.0)).unwrap();
        let hidden = grads.len() - 2;
        assert!(grads[..hidden]
            .iter()
            .all(|g| g.data().iter().all(|v| *v == 0.0)));
    }
}
