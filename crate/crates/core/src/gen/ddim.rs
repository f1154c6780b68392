//! Noise-prediction diffusion with a cosine schedule and the deterministic
//! DDIM sampler.
//!
//! Step `i ∈ 0..N` has cumulative signal level `ᾱᵢ`; the forward perturbation
//! is `z = √ᾱᵢ·z1 + √(1−ᾱᵢ)·ε`. The network sees time `(i+1)/N` and predicts `ε`.

use super::state::{Layout, State};
use super::{Field, RegressionBatch};
use crate::nn::Tensor;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_PI_2;

pub const DEFAULT_TRAIN_STEPS: usize = 100;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
}

/// A perturbed training sample and the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisedSample {
    pub z_t: Vec<f64>,
    pub step: usize,
    pub eps: Vec<f64>,
}

impl DiffusionSchedule {
    /// Cosine schedule: `βᵢ = min(1 − f(i+1)/f(i), 0.999)` with
    /// `f(s) = cos²(((s/N) + 0.008)/1.008 · π/2)` and `ᾱᵢ = Π_{j≤i}(1 − βⱼ)`.
    pub fn cosine(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("diffusion schedule needs at least one step"));
        }
        let f = |s: f64| {
            let c = ((s / n as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2).cos();
            c * c
        };
        let mut prod = 1.0;
        let alpha_bar = (0..n)
            .map(|i| {
                let beta = (1.0 - f(i as f64 + 1.0) / f(i as f64)).min(MAX_BETA);
                prod *= 1.0 - beta;
                prod
            })
            .collect();
        Ok(Self { alpha_bar })
    }

    /// Builds a schedule from explicit `ᾱ` values, which must decrease strictly inside `(0, 1]`.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        let in_range = alpha_bar.iter().all(|a| *a > 0.0 && *a <= 1.0);
        let decreasing = alpha_bar.windows(2).all(|w| w[1] < w[0]);
        if alpha_bar.is_empty() || !in_range || !decreasing {
            return Err(Error::config("ᾱ must be non-empty, in (0, 1] and strictly decreasing"));
        }
        Ok(Self { alpha_bar })
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Noise scale `√(1 − ᾱᵢ)`.
    pub fn sigma(&self, i: usize) -> f64 {
        (1.0 - self.alpha_bar[i]).sqrt()
    }

    /// Network time input for step `i`.
    pub fn net_time(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.len() as f64
    }

    /// `k` evenly spaced steps `⌊(j+1)·N/k⌋ − 1`, in descending order.
    pub fn timesteps(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::config(format!(
                "DDIM needs 1 ≤ k ≤ {n} inference steps, got {k}"
            )));
        }
        Ok((0..k).rev().map(|j| (j + 1) * n / k - 1).collect())
    }

    pub fn perturb_at(&self, z1: &[f64], step: usize, eps: Vec<f64>) -> NoisedSample {
        let a = self.alpha_bar[step];
        let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
        let z_t = z1.iter().zip(&eps).map(|(x, e)| sa * x + sn * e).collect();
        NoisedSample { z_t, step, eps }
    }

    /// Uniform step, standard normal `ε`.
    pub fn perturb<R: Rng + ?Sized>(&self, z1: &[f64], rng: &mut R) -> NoisedSample {
        let step = rng.random_range(0..self.len());
        let eps = (0..z1.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.perturb_at(z1, step, eps)
    }
}

/// Diffusion baseline over a layout, in the Euclidean embedding.
#[derive(Clone, Debug)]
pub struct Diffusion {
    layout: Layout,
    schedule: DiffusionSchedule,
    clip: Option<f64>,
}

impl Diffusion {
    pub fn new(layout: Layout, schedule: DiffusionSchedule) -> Self {
        Self {
            layout,
            schedule,
            clip: None,
        }
    }

    /// Clamps every clean-sample estimate to `[−c, c]` during sampling. Only
    /// sound when the data is known to live in that box.
    pub fn with_clip(mut self, c: f64) -> Self {
        self.clip = Some(c);
        self
    }

    pub fn clip(&self) -> Option<f64> {
        self.clip
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn dim(&self) -> usize {
        self.layout.euclidean_dim()
    }

    pub fn make_batch<R: Rng + ?Sized>(&self, z1s: &[State], rng: &mut R) -> Result<RegressionBatch> {
        let mut inputs = Vec::with_capacity(z1s.len());
        let mut targets = Vec::with_capacity(z1s.len());
        let mut t = Vec::with_capacity(z1s.len());
        for z1 in z1s {
            self.layout.check(z1)?;
            let s = self.schedule.perturb(&z1.euclidean(), rng);
            t.push(self.schedule.net_time(s.step));
            inputs.push(s.z_t);
            targets.push(s.eps);
        }
        Ok(RegressionBatch {
            inputs: Tensor::from_rows(&inputs, self.dim())?,
            t,
            targets: Tensor::from_rows(&targets, self.dim())?,
        })
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Deterministic DDIM from the given initial noise; returns the final
    /// clean estimate before projection. When the clean estimate is clipped the
    /// update uses the noise it implies, which keeps the iterate bounded.
    pub fn integrate_flat<F: Field + ?Sized>(
        &self,
        field: &F,
        starts: Vec<Vec<f64>>,
        cond: &Tensor,
        k: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let steps = self.schedule.timesteps(k)?;
        let (b, d) = (starts.len(), self.dim());
        let mut z = Tensor::from_rows(&starts, d)?;
        let mut x0 = z.clone();
        for (j, &i) in steps.iter().enumerate() {
            let a = self.schedule.alpha_bar[i];
            let eps = field.eval(&z, &vec![self.schedule.net_time(i); b], cond)?;
            if !eps.all_finite() {
                return Err(Error::NonFinite(format!("noise prediction at DDIM step {i}")));
            }
            let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
            let c = self.clip.unwrap_or(f64::INFINITY);
            for ((x, zi), e) in x0.data_mut().iter_mut().zip(z.data()).zip(eps.data()) {
                *x = ((zi - sn * e) / sa).clamp(-c, c);
            }
            match steps.get(j + 1) {
                Some(&prev) => {
                    let ap = self.schedule.alpha_bar[prev];
                    let (pa, pn) = (ap.sqrt(), (1.0 - ap).sqrt());
                    for (zi, x) in z.data_mut().iter_mut().zip(x0.data()) {
                        // Noise implied by the (possibly clipped) clean estimate.
                        let e = (*zi - sa * x) / sn;
                        *zi = pa * x + pn * e;
                    }
                }
                None => z = x0.clone(),
            }
        }
        Ok((0..b).map(|r| z.row(r).to_vec()).collect())
    }

    /// DDIM followed by Gram–Schmidt projection of rotation segments.
    pub fn integrate<F: Field + ?Sized>(
        &self,
        field: &F,
        starts: Vec<Vec<f64>>,
        cond: &Tensor,
        k: usize,
    ) -> Result<Vec<State>> {
        self.integrate_flat(field, starts, cond, k)?
            .iter()
            .map(|x| self.layout.project(x))
            .collect()
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
