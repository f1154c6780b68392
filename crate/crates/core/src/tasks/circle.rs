//! Unit-circle toy task: generate the rotation of angle 0, i.e. the point (1, 0).
//!
//! The Euclidean formulation flows standard-normal points of the plane and
//! normalises the end point; the manifold formulation flows Haar-uniform SO(2)
//! elements along geodesics. Both are unconditioned.

use crate::eval::{ErrorGrid, GridKind};
use crate::gen::{regression_loss_grads, Element, Flow, Formulation, Layout, Segment, State};
use crate::lie::{LieGroup, Rotation2};
use crate::nn::{AdamWConfig, Network, NetworkConfig, Tensor, Trainer};
use crate::{rng, Error, Result};
use rand::Rng;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct CircleConfig {
    pub formulation: Formulation,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps per epoch, each on a freshly drawn batch. The target
    /// is a single point, so an epoch is a fixed number of noise batches.
    pub batches_per_epoch: usize,
    pub lr: f64,
    pub eval_samples: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub time_scale: f64,
    pub grid_cells: usize,
    pub grid_extent: f64,
    pub angle_bins: usize,
}

impl CircleConfig {
    pub fn new(formulation: Formulation) -> Self {
        Self {
            formulation,
            batch_size: 1000,
            epochs: 2000,
            batches_per_epoch: 4,
            lr: 1e-3,
            eval_samples: 10_000,
            k: 50,
            hidden: vec![128; 3],
            time_scale: 100.0,
            grid_cells: 64,
            grid_extent: 3.0,
            angle_bins: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("eval_samples", self.eval_samples),
            ("k", self.k),
            ("grid_cells", self.grid_cells),
            ("angle_bins", self.angle_bins),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.grid_extent > 0.0) {
            return Err(Error::config("lr and grid_extent must be positive"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }

    pub fn flow(&self) -> Flow {
        Flow::new(Layout::new([Segment::So2]), self.formulation)
    }

    pub fn network_config(&self) -> NetworkConfig {
        let flow = self.flow();
        NetworkConfig {
            hidden: self.hidden.clone(),
            time_scale: self.time_scale,
            ..NetworkConfig::toy(flow.input_dim(), flow.velocity_dim())
        }
    }

    pub fn grid(&self) -> ErrorGrid {
        ErrorGrid::new(match self.formulation {
            Formulation::Euclidean => GridKind::Cartesian {
                cells: self.grid_cells,
                extent: self.grid_extent,
            },
            Formulation::Manifold => GridKind::Angular {
                bins: self.angle_bins,
            },
        })
    }
}

#[derive(Clone, Debug)]
pub struct CircleResult {
    pub formulation: Formulation,
    pub seed: u64,
    /// Angle errors of the random-start evaluation, degrees.
    pub errors_deg: Vec<f64>,
    pub mean_error_deg: f64,
    pub max_error_deg: f64,
    pub losses: Vec<f64>,
    /// Error of the deterministic start grid, degrees.
    pub grid: ErrorGrid,
    pub train_seconds: f64,
    pub network: Network,
}

fn target() -> State {
    State(vec![Element::So2(Rotation2::identity())])
}

fn angle_error_deg(s: &State) -> f64 {
    match &s.0[0] {
        Element::So2(r) => r.angle().to_degrees(),
        _ => unreachable!("circle states hold one SO(2) element"),
    }
}

/// Fresh toy field for `seed`.
pub fn init_circle_network(cfg: &CircleConfig, seed: u64) -> Network {
    Network::new(cfg.network_config(), &mut rng::stream(seed, rng::INIT, 0))
}

/// Trains the toy field with Adam (no weight decay, no warmup, no weight
/// averaging) and a cosine-annealed learning rate; `on_step(step, loss)` sees
/// every loss. Step `s` draws from stream `(seed, train, s)`.
pub fn train_circle(
    cfg: &CircleConfig,
    seed: u64,
    on_step: impl FnMut(usize, f64),
) -> Result<(Network, Vec<f64>)> {
    let mut net = init_circle_network(cfg, seed);
    let losses = train_circle_into(cfg, seed, &mut net, on_step)?;
    Ok((net, losses))
}

/// [`train_circle`] on a caller-owned network. A non-finite loss aborts
/// before the update, so `net` then holds the last good weights.
pub fn train_circle_into(
    cfg: &CircleConfig,
    seed: u64,
    net: &mut Network,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let flow = cfg.flow();
    let steps = cfg.total_steps();
    let opt = AdamWConfig::new(cfg.lr, 0.0, 0, steps as u64);
    let mut trainer = Trainer::new(&*net, opt, None);
    let z1 = vec![target(); cfg.batch_size];
    let cond = Tensor::zeros(&[cfg.batch_size, 0]);
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut r = rng::stream(seed, rng::TRAIN, step as u64);
        let batch = flow.make_batch(&z1, &mut r)?;
        let (loss, grads) = regression_loss_grads(net, &batch, &cond)
            .map_err(|e| Error::NonFinite(format!("circle training step {step}: {e}")))?;
        trainer.step(net, &grads)?;
        losses.push(loss);
        on_step(step, loss);
    }
    Ok(losses)
}

/// Starts at the cell centers of the error grid, in flow coordinates.
fn grid_starts(cfg: &CircleConfig, grid: &ErrorGrid) -> Vec<State> {
    grid.centers()
        .into_iter()
        .map(|(x, y)| match cfg.formulation {
            Formulation::Euclidean => State(vec![Element::Vector(vec![x, y])]),
            Formulation::Manifold => State(vec![Element::So2(Rotation2::from_angle(x))]),
        })
        .collect()
}

const EVAL_CHUNK: usize = 2000;

fn integrate_chunked(flow: &Flow, net: &Network, starts: Vec<State>, k: usize) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(starts.len());
    for chunk in starts.chunks(EVAL_CHUNK) {
        let cond = Tensor::zeros(&[chunk.len(), 0]);
        out.extend(flow.integrate(net, chunk.to_vec(), &cond, k)?);
    }
    Ok(out)
}

/// Angle errors (degrees) from `eval_samples` random starts, and the grid of
/// errors from deterministic starts at every cell center.
pub fn evaluate_circle(cfg: &CircleConfig, net: &Network, seed: u64) -> Result<(Vec<f64>, ErrorGrid)> {
    cfg.validate()?;
    let flow = cfg.flow();
    let mut r = rng::stream(seed, rng::EVAL, 0);
    let starts: Vec<State> = (0..cfg.eval_samples).map(|_| flow.sample_start(&mut r)).collect();
    let errors: Vec<f64> = integrate_chunked(&flow, net, starts, cfg.k)?
        .iter()
        .map(angle_error_deg)
        .collect();

    let mut grid = cfg.grid();
    let starts = grid_starts(cfg, &grid);
    let ends = integrate_chunked(&flow, net, starts, cfg.k)?;
    for (cell, end) in ends.iter().enumerate() {
        grid.add(cell, angle_error_deg(end));
    }
    Ok((errors, grid))
}

pub fn run_circle_experiment(cfg: &CircleConfig, seed: u64) -> Result<CircleResult> {
    let t0 = Instant::now();
    let (network, losses) = train_circle(cfg, seed, |_, _| {})?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let (errors_deg, grid) = evaluate_circle(cfg, &network, seed)?;
    let mean_error_deg = errors_deg.iter().sum::<f64>() / errors_deg.len() as f64;
    let max_error_deg = errors_deg.iter().copied().fold(0.0, f64::max);
    Ok(CircleResult {
        formulation: cfg.formulation,
        seed,
        errors_deg,
        mean_error_deg,
        max_error_deg,
        losses,
        grid,
        train_seconds,
        network,
    })
}

/// Mean angle error of Haar-uniform SO(2) starts left in place, degrees.
pub fn haar_baseline_deg<R: Rng + ?Sized>(n: usize, rng: &mut R) -> f64 {
    (0..n)
        .map(|_| Rotation2::sample_haar(rng).angle().to_degrees())
        .sum::<f64>()
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untrained_manifold_error_is_the_haar_baseline() {
        let cfg = CircleConfig {
            eval_samples: 20_000,
            angle_bins: 16,
            ..CircleConfig::new(Formulation::Manifold)
        };
        let net = Network::new(cfg.network_config(), &mut rng::stream(0, rng::INIT, 0));
        let (errors, grid) = evaluate_circle(&cfg, &net, 0).unwrap();
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        assert!((mean - 90.0).abs() < 2.0, "{mean}");
        let near_pole = grid.angular_region_mean(std::f64::consts::PI, 30f64.to_radians()).unwrap();
        assert!(near_pole > 150.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = CircleConfig {
            epochs: 0,
            ..CircleConfig::new(Formulation::Euclidean)
        };
        assert!(matches!(train_circle(&cfg, 0, |_, _| {}), Err(Error::Config(_))));
    }

    #[test]
    fn short_training_reduces_loss() {
        let cfg = CircleConfig {
            batch_size: 128,
            epochs: 30,
            batches_per_epoch: 1,
            hidden: vec![32, 32],
            ..CircleConfig::new(Formulation::Euclidean)
        };
        let (_, losses) = train_circle(&cfg, 1, |_, _| {}).unwrap();
        let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = losses[25..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "{head} -> {tail}");
    }
}
