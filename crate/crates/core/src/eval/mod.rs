//! Result emission: error grids, inference-step sweeps, paired formulation
//! comparisons and run manifests.

mod compare;
mod episodes;
mod grid;
mod manifest;
mod sweep;

pub use compare::{compare_formulations, PairedRow, PairedSummary};
pub use episodes::episode_csv;
pub use grid::{emit_grid, parse_grid, ErrorGrid, GridKind};
pub use manifest::{run_manifest, write_json};
pub use sweep::{sweep_k, time_sampler, SweepAggregate, SweepArm, SweepConfig, SweepResult, SweepRow, TimingRow};
