use super::ema::Ema;
use super::layers::Module;
use super::optim::{AdamW, AdamWConfig};
use super::tensor::Tensor;
use crate::Result;

/// AdamW plus an optional EMA shadow, stepped together.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub opt: AdamW,
    pub ema: Option<Ema>,
}

impl Trainer {
    /// The EMA, when enabled, starts averaging once the warmup has ended.
    pub fn new<M: Module + ?Sized>(model: &M, config: AdamWConfig, ema_decay: Option<f64>) -> Self {
        let start = config.warmup_steps;
        let ema = ema_decay.map(|d| Ema::new(d, start, model.params()));
        Self {
            opt: AdamW::new(config, model.params()),
            ema,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.opt.step_count()
    }

    /// One optimizer step followed by the EMA update; returns the learning rate used.
    pub fn step<M: Module + ?Sized>(&mut self, model: &mut M, grads: &[Tensor]) -> Result<f64> {
        let lr = {
            let mut params = model.params_mut();
            self.opt.step(&mut params, grads)?
        };
        if let Some(ema) = &mut self.ema {
            ema.update(self.opt.step_count() - 1, &model.params())?;
        }
        Ok(lr)
    }

    /// Parameters to evaluate with: the EMA shadow when present, else the live weights.
    pub fn eval_params<'a, M: Module + ?Sized>(&'a self, model: &'a M) -> Vec<&'a Tensor> {
        match &self.ema {
            Some(ema) => ema.shadow().iter().collect(),
            None => model.params(),
        }
    }
}
