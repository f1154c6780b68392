use super::tensor::Tensor;
use crate::{Error, Result};
use std::f64::consts::PI;

/// AdamW hyperparameters and the warmup + cosine learning-rate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl AdamWConfig {
    /// Reference settings for long GPU-scale runs; desk-scale runs use larger rates.
    pub const FULL_SCALE_LR: f64 = 3e-5;
    pub const FULL_SCALE_WEIGHT_DECAY: f64 = 1e-6;
    pub const FULL_SCALE_WARMUP: u64 = 5000;

    pub fn new(lr: f64, weight_decay: f64, warmup_steps: u64, total_steps: u64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps,
            total_steps,
        }
    }

    /// Linear ramp `0 → lr` over the warmup, then cosine decay to 0 at `total_steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let (w, total) = (self.warmup_steps, self.total_steps);
        if step < w {
            return self.lr * step as f64 / w as f64;
        }
        if total <= w {
            return self.lr;
        }
        let progress = ((step - w) as f64 / (total - w) as f64).min(1.0);
        self.lr * 0.5 * (1.0 + (PI * progress).cos())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping; non-finite norms leave the gradients
/// untouched so the optimizer can reject them.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm.is_finite() && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// Bias-corrected Adam moments with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new<'a>(config: AdamWConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let v = m.clone();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }

    /// Rebuilds an optimizer from stored moments.
    pub fn from_state(config: AdamWConfig, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::config("optimizer moment buffers disagree in shape"));
        }
        Ok(Self { config, step, m, v })
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.config.lr_at(step)
    }

    /// Applies one update at the scheduled rate `lr_at(step_count())`.
    ///
    /// Every gradient is checked before any parameter or moment is touched, so
    /// a rejected step leaves the state unchanged.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                expected: vec![self.m.len()],
                got: vec![params.len(), grads.len()],
            });
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adamw_step",
                    expected: m.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} at step {}",
                    self.step
                )));
            }
        }

        let c = &self.config;
        let lr = c.lr_at(self.step);
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powf(self.step as f64);
        let bc2 = 1.0 - c.beta2.powf(self.step as f64);
        let shrink = 1.0 - lr * c.weight_decay;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((pi, gi), (mi, vi)) in it {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi = *pi * shrink - lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamWConfig {
        AdamWConfig::new(lr, wd, 0, 100)
    }

    #[test]
    fn clipping_caps_the_joint_norm() {
        let mut g = vec![Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].data(), &[3.0]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15 && (g[1].data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let mut opt = AdamW::new(cfg(1e-2, 0.0), [&p]);
        let g = Tensor::zeros(&[3]);
        opt.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let (lr, wd) = (1e-2, 0.1);
        let p0 = [0.3, -1.2, 2.0];
        let g = [0.5, -4.0, 1e-3];
        let mut p = Tensor::vector(p0.to_vec());
        let mut opt = AdamW::new(cfg(lr, wd), [&p]);
        opt.step(&mut [&mut p], &[Tensor::vector(g.to_vec())]).unwrap();
        for i in 0..3 {
            // m̂ = g, v̂ = g² after bias correction on the first step.
            let expected = p0[i] * (1.0 - lr * wd) - lr * g[i] / (g[i].abs() + 1e-8);
            assert!((p.data()[i] - expected).abs() < 1e-15, "{i}");
        }
    }

    #[test]
    fn decay_shrinks_parameters() {
        let (lr, wd) = (1e-2, 0.5);
        let mut p = Tensor::vector(vec![2.0, -3.0]);
        let mut opt = AdamW::new(cfg(lr, wd), [&p]);
        opt.step(&mut [&mut p], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p.data(), &[2.0 * (1.0 - lr * wd), -3.0 * (1.0 - lr * wd)]);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut a = Tensor::vector(vec![1.0]);
        let mut b = Tensor::vector(vec![1.0]);
        let mut opt = AdamW::new(cfg(1e-2, 0.0), [&a, &b]);
        let before = opt.clone();
        let grads = [Tensor::vector(vec![1.0]), Tensor::vector(vec![f64::NAN])];
        assert!(matches!(
            opt.step(&mut [&mut a, &mut b], &grads),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(opt, before);
        assert_eq!(a.data(), &[1.0]);
    }

    #[test]
    fn schedule_endpoints_and_junction() {
        let c = AdamWConfig::new(1e-3, 0.0, 50, 1000);
        assert_eq!(c.lr_at(0), 0.0);
        assert_eq!(c.lr_at(50), 1e-3);
        assert!(c.lr_at(1000).abs() < 1e-18);
        assert!((c.lr_at(25) - 5e-4).abs() < 1e-18);
        let left = c.lr_at(49) + (c.lr_at(49) - c.lr_at(48));
        assert!((left - c.lr_at(50)).abs() < 1e-12);
        assert!((c.lr_at(51) - c.lr_at(50)).abs() < 1e-7);
        assert!((1..=1000).all(|s| c.lr_at(s) >= 0.0 && c.lr_at(s) <= 1e-3));
    }
}
