//! Experiment environments: the unit-circle toy task and the planar reach task.

pub mod circle;
pub mod dataset;
pub mod pointset;
pub mod policy;
pub mod reach;
pub mod rollout;
pub mod train;

pub use circle::{run_circle_experiment, CircleConfig, CircleResult};
pub use dataset::Dataset;
pub use pointset::{process_pointset, Bounds, Point};
pub use policy::{Augment, Policy, PolicyConfig};
pub use reach::{generate_expert, subsample_trajectory, Episode, Observation, ReachConfig, Scene2D, Waypoint};

/// Worker count: `MFLOW_THREADS` when set to a positive integer, else all cores.
pub fn worker_threads() -> usize {
    std::env::var("MFLOW_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` inside a rayon pool capped at [`worker_threads`].
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_threads()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
