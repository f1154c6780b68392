//! Generative objectives over a shared network: Euclidean and manifold
//! conditional flow matching, and the DDIM diffusion baseline.

mod cfm;
mod ddim;
mod state;

pub use cfm::{Flow, FlowSample};
pub use ddim::{Diffusion, DiffusionSchedule, NoisedSample, DEFAULT_TRAIN_STEPS};
pub use state::{Element, Formulation, Layout, Segment, State};

use crate::nn::{Network, Tape, Tensor, Var};
use crate::{Error, Result};
use rand::Rng;

/// A batched field `f(z, t, cond)`: velocity for CFM, noise for DDIM.
pub trait Field {
    fn eval(&self, z: &Tensor, t: &[f64], cond: &Tensor) -> Result<Tensor>;
}

impl Field for Network {
    fn eval(&self, z: &Tensor, t: &[f64], cond: &Tensor) -> Result<Tensor> {
        self.predict(z, t, cond)
    }
}

impl<F> Field for F
where
    F: Fn(&Tensor, &[f64], &Tensor) -> Result<Tensor>,
{
    fn eval(&self, z: &Tensor, t: &[f64], cond: &Tensor) -> Result<Tensor> {
        self(z, t, cond)
    }
}

/// Network inputs, times and regression targets for one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionBatch {
    pub inputs: Tensor,
    pub t: Vec<f64>,
    pub targets: Tensor,
}

impl RegressionBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn checked_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("training loss ({loss})")))
    }
}

/// Mean squared error between predictions and targets over batch and output dimensions.
pub fn regression_loss<F: Field + ?Sized>(field: &F, batch: &RegressionBatch, cond: &Tensor) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let pred = field.eval(&batch.inputs, &batch.t, cond)?;
    if pred.shape() != batch.targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "regression loss",
            expected: batch.targets.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(batch.targets.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    checked_loss(sum / pred.len() as f64)
}

/// Records the regression loss on `tape` with a conditioning variable that may
/// itself carry gradients.
pub fn record_regression_loss<'p>(
    tape: &mut Tape<'p>,
    net: &'p Network,
    batch: &'p RegressionBatch,
    cond: Var,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let z = tape.constant_ref(&batch.inputs);
    let pred = net.record(tape, z, &batch.t, cond)?;
    let target = tape.constant_ref(&batch.targets);
    tape.mse(pred, target)
}

/// Loss and parameter gradients, in [`crate::nn::Module::params`] order.
pub fn regression_loss_grads(
    net: &Network,
    batch: &RegressionBatch,
    cond: &Tensor,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let c = tape.constant_ref(cond);
    let loss = record_regression_loss(&mut tape, net, batch, c)?;
    let value = checked_loss(tape.value(loss).data()[0])?;
    Ok((value, tape.backward(loss, Tensor::scalar(1.0))?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Cfm,
    Ddim,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Cfm => "cfm",
            Objective::Ddim => "ddim",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfm" => Ok(Objective::Cfm),
            "ddim" => Ok(Objective::Ddim),
            _ => Err(Error::config(format!("unknown objective `{s}` (expected cfm or ddim)"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Objective-agnostic training and sampling front end.
#[derive(Clone, Debug)]
pub enum Generator {
    Cfm(Flow),
    Ddim(Diffusion),
}

impl Generator {
    /// DDIM is defined on the Euclidean embedding only; pairing it with the
    /// manifold formulation is a configuration error.
    pub fn new(objective: Objective, formulation: Formulation, layout: Layout) -> Result<Self> {
        match (objective, formulation) {
            (Objective::Cfm, f) => Ok(Generator::Cfm(Flow::new(layout, f))),
            (Objective::Ddim, Formulation::Euclidean) => Ok(Generator::Ddim(Diffusion::new(
                layout,
                DiffusionSchedule::cosine(DEFAULT_TRAIN_STEPS)?,
            ))),
            (Objective::Ddim, Formulation::Manifold) => Err(Error::config(
                "the DDIM objective supports only the euclidean formulation",
            )),
        }
    }

    /// Sets the DDIM clean-sample clip; flow matching has no such estimate.
    pub fn with_sample_clip(self, c: f64) -> Self {
        match self {
            Generator::Ddim(d) => Generator::Ddim(d.with_clip(c)),
            g => g,
        }
    }

    pub fn objective(&self) -> Objective {
        match self {
            Generator::Cfm(_) => Objective::Cfm,
            Generator::Ddim(_) => Objective::Ddim,
        }
    }

    pub fn formulation(&self) -> Formulation {
        match self {
            Generator::Cfm(f) => f.formulation(),
            Generator::Ddim(_) => Formulation::Euclidean,
        }
    }

    pub fn layout(&self) -> &Layout {
        match self {
            Generator::Cfm(f) => f.layout(),
            Generator::Ddim(d) => d.layout(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Generator::Cfm(f) => f.input_dim(),
            Generator::Ddim(d) => d.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Generator::Cfm(f) => f.velocity_dim(),
            Generator::Ddim(d) => d.dim(),
        }
    }

    pub fn make_batch<R: Rng + ?Sized>(&self, z1s: &[State], rng: &mut R) -> Result<RegressionBatch> {
        match self {
            Generator::Cfm(f) => f.make_batch(z1s, rng),
            Generator::Ddim(d) => d.make_batch(z1s, rng),
        }
    }

    /// Initial sample of the sampler (flow start or diffusion noise).
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Generator::Cfm(f) => f.sample_start(rng),
            Generator::Ddim(d) => d
                .layout()
                .split_flat(&d.sample_start(rng))
                .expect("noise matches layout"),
        }
    }

    /// Runs `k` sampler steps from the given starts; the output follows the layout.
    pub fn integrate<F: Field + ?Sized>(
        &self,
        field: &F,
        starts: Vec<State>,
        cond: &Tensor,
        k: usize,
    ) -> Result<Vec<State>> {
        match self {
            Generator::Cfm(f) => f.integrate(field, starts, cond, k),
            Generator::Ddim(d) => {
                let flat = starts.iter().map(State::euclidean).collect();
                d.integrate(field, flat, cond, k)
            }
        }
    }

    pub fn sample<F: Field + ?Sized, R: Rng + ?Sized>(
        &self,
        field: &F,
        cond: &Tensor,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<State>> {
        let starts = (0..cond.rows()).map(|_| self.sample_start(rng)).collect();
        self.integrate(field, starts, cond, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(pred_offset: f64) -> (RegressionBatch, impl Fn(&Tensor, &[f64], &Tensor) -> Result<Tensor>) {
        let targets = Tensor::matrix(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let b = RegressionBatch {
            inputs: Tensor::zeros(&[2, 2]),
            t: vec![0.1, 0.2],
            targets: targets.clone(),
        };
        let f = move |_: &Tensor, _: &[f64], _: &Tensor| -> Result<Tensor> {
            let mut p = targets.clone();
            p.data_mut().iter_mut().for_each(|x| *x += pred_offset);
            Ok(p)
        };
        (b, f)
    }

    #[test]
    fn loss_examples() {
        let cond = Tensor::zeros(&[2, 0]);
        let (b, exact) = batch(0.0);
        assert_eq!(regression_loss(&exact, &b, &cond).unwrap(), 0.0);
        let (b, shifted) = batch(1.0);
        assert_eq!(regression_loss(&shifted, &b, &cond).unwrap(), 1.0);
        let (b, nan) = batch(f64::NAN);
        assert!(matches!(regression_loss(&nan, &b, &cond), Err(Error::NonFinite(_))));
    }

    #[test]
    fn ddim_with_manifold_is_rejected() {
        let err = Generator::new(Objective::Ddim, Formulation::Manifold, Layout::new([Segment::So2]));
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
