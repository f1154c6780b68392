//! Conditional flow matching (CFM) and DDIM generative policies for action and
//! rotation prediction on Euclidean space and the SO(2)/SO(3) manifolds.
//!
//! The crate is organised bottom-up:
//!
//! - [`lie`]: exact SO(2)/SO(3) group operations, Haar/IGSO(3) sampling and the
//!   truncated rotation representations fed to networks.
//! - [`nn`]: a small deterministic tensor engine with reverse-mode
//!   differentiation, the vector-field network, a max-pool set encoder and the
//!   AdamW/EMA/cosine-schedule training machinery.
//! - [`gen`]: Euclidean and manifold CFM plus the DDIM baseline, sharing one
//!   network interface.
//! - [`tasks`]: the unit-circle toy experiment and a planar reach task with
//!   point-set observations, expert demonstrations and receding-horizon rollouts.
//! - [`eval`]: inference-step sweeps, formulation comparisons and CSV/JSON output.

mod binio;
pub mod error;
pub mod eval;
pub mod gen;
pub mod lie;
pub mod nn;
pub mod rng;
pub mod tasks;

pub use error::{Error, Result};
