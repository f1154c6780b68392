//! Behaviour-cloning loop for the reach policy with exact resume.
//!
//! Step `s` draws its mini-batch and generator noise from stream
//! `(seed, train, s)`, so a run resumed from a checkpoint taken after step `s`
//! repeats the uninterrupted run bit for bit.

use super::dataset::Dataset;
use super::policy::{Augment, Policy, PolicyConfig};
use super::reach::ReachConfig;
use crate::nn::{clip_grad_norm, AdamWConfig, Checkpoint, Module, Trainer};
use crate::{rng, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    /// `None` disables the weight average.
    pub ema_decay: Option<f64>,
    /// Joint gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub augment: Augment,
}

impl Default for TrainConfig {
    /// Desk-scale schedule: a few CPU minutes per policy on 100 demos.
    fn default() -> Self {
        Self {
            steps: 5000,
            batch_size: 128,
            lr: 1e-2,
            weight_decay: 1e-6,
            warmup: 500,
            ema_decay: Some(0.99),
            grad_clip: Some(1.0),
            augment: Augment {
                point_jitter: 0.0,
                proprio_pos: 0.05,
                proprio_rot: 10f64.to_radians(),
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("steps and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 {
            return Err(Error::config("lr must be positive and weight_decay non-negative"));
        }
        self.augment.validate()?;
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("grad_clip must be positive"));
            }
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::config("ema_decay must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig::new(self.lr, self.weight_decay, self.warmup as u64, self.steps as u64)
    }
}

/// Everything needed to continue training: live weights, optimizer, EMA, losses.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub policy: Policy,
    pub trainer: Trainer,
    pub config: TrainConfig,
    pub seed: u64,
    pub losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    seed: u64,
    step: u64,
    policy: PolicyConfig,
    task: ReachConfig,
    train: TrainConfig,
    losses: Vec<f64>,
}

impl TrainRun {
    pub fn new(policy_cfg: PolicyConfig, task: ReachConfig, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let policy = Policy::new(policy_cfg, task, seed)?;
        let trainer = Trainer::new(&policy, config.optimizer(), config.ema_decay);
        Ok(Self {
            policy,
            trainer,
            config,
            seed,
            losses: Vec::new(),
        })
    }

    pub fn step_count(&self) -> usize {
        self.trainer.step_count() as usize
    }

    /// One optimizer step; returns the loss. The weights are untouched when
    /// the loss or a gradient is non-finite.
    pub fn step(&mut self, data: &Dataset, index: &[(usize, usize)]) -> Result<f64> {
        let step = self.step_count();
        let p = self.policy.config();
        let (t_obs, t_pred) = (p.t_obs, p.t_pred);
        let mut r = rng::stream(self.seed, rng::TRAIN, step as u64);
        let picks: Vec<(usize, usize)> = (0..self.config.batch_size)
            .map(|_| index[r.random_range(0..index.len())])
            .collect();
        let windows: Vec<_> = picks.iter().map(|&(e, i)| data.episodes[e].window(i, t_obs)).collect();
        let chunks: Vec<_> = picks.iter().map(|&(e, i)| data.episodes[e].chunk(i, t_pred)).collect();
        let (loss, mut grads) = self
            .policy
            .loss_grads(&windows, &chunks, &mut r, &self.config.augment)
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("step {step}: {m}")),
                other => other,
            })?;
        if let Some(c) = self.config.grad_clip {
            clip_grad_norm(&mut grads, c);
        }
        self.trainer.step(&mut self.policy, &grads)?;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Trains until `until` total steps (capped at the configured count).
    pub fn train_until(&mut self, data: &Dataset, until: usize, mut on_step: impl FnMut(usize, f64)) -> Result<()> {
        if data.episodes.is_empty() {
            return Err(Error::EmptyInput("training dataset"));
        }
        let index = data.sample_index();
        while self.step_count() < until.min(self.config.steps) {
            let s = self.step_count();
            let loss = self.step(data, &index)?;
            on_step(s, loss);
        }
        Ok(())
    }

    pub fn train(&mut self, data: &Dataset, on_step: impl FnMut(usize, f64)) -> Result<()> {
        self.train_until(data, self.config.steps, on_step)
    }

    /// Policy with the evaluation weights (EMA shadow when enabled).
    pub fn eval_policy(&self) -> Result<Policy> {
        self.policy.with_params(&self.trainer.eval_params(&self.policy))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = Metadata {
            seed: self.seed,
            step: self.trainer.step_count(),
            policy: self.policy.config().clone(),
            task: self.policy.task().clone(),
            train: self.config.clone(),
            losses: self.losses.clone(),
        };
        Ok(Checkpoint {
            descriptor: self.policy.config().descriptor()?,
            metadata: serde_json::to_string(&meta)?,
            params: self.policy.params().into_iter().cloned().collect(),
            ema: self.trainer.ema.clone(),
            optimizer: Some(self.trainer.opt.clone()),
        })
    }

    /// Rebuilds a run from a checkpoint written by [`TrainRun::to_checkpoint`].
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let meta: Metadata = serde_json::from_str(&ckpt.metadata)?;
        let descriptor = meta.policy.descriptor()?;
        if descriptor != ckpt.descriptor {
            return Err(Error::ArchitectureMismatch {
                expected: descriptor,
                found: ckpt.descriptor,
            });
        }
        let mut run = Self::new(meta.policy, meta.task, meta.train, meta.seed)?;
        Checkpoint::restore_into(&ckpt.params, &mut run.policy.params_mut())?;
        run.trainer.opt = ckpt
            .optimizer
            .ok_or_else(|| Error::config("checkpoint has no optimizer state; cannot resume"))?;
        run.trainer.ema = ckpt.ema;
        if run.trainer.step_count() != meta.step {
            return Err(Error::config("checkpoint step counter disagrees with its metadata"));
        }
        run.losses = meta.losses;
        Ok(run)
    }
}

/// Evaluation policy stored in a checkpoint: EMA weights when present.
pub fn load_policy(ckpt: &Checkpoint) -> Result<Policy> {
    let run = TrainRun::from_checkpoint(ckpt.clone())?;
    run.eval_policy()
}
