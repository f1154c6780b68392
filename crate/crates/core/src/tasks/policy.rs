//! Observation-conditioned action-chunk generator for the reach task.
//!
//! Conditioning is `[enc(cloud₁), …, enc(cloud_T), proprio₁, …, proprio_T]`
//! over the last `T_obs` observations, oldest first. Positions enter the
//! network normalised to `[−1, 1]²`; rotations enter truncated.

use super::reach::{Observation, ReachConfig, Waypoint};
use crate::gen::{record_regression_loss, Element, Formulation, Generator, Layout, Objective, Segment, State};
use crate::nn::{Module, Network, NetworkConfig, SetEncoder, SetEncoderConfig, Tape, Tensor, Var};
use crate::rng::{self, Rng};
use crate::{Error, Result};
use rand::Rng as _;
use rand_distr::StandardNormal;
use std::collections::VecDeque;

/// Width of one proprioceptive vector `(x, y, cos θ, sin θ, gripper)`.
pub const PROPRIO_DIM: usize = 5;
/// Width of one encoder input point `(x, y, tag)`.
pub const POINT_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub objective: Objective,
    pub formulation: Formulation,
    pub encoder_hidden: Vec<usize>,
    pub encoder_out: usize,
    pub hidden: Vec<usize>,
}

impl PolicyConfig {
    pub fn new(objective: Objective, formulation: Formulation) -> Self {
        Self {
            t_obs: 2,
            t_pred: 8,
            objective,
            formulation,
            encoder_hidden: vec![32],
            encoder_out: 32,
            hidden: vec![256; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_obs == 0 || self.t_pred == 0 {
            return Err(Error::config("t_obs and t_pred must be at least 1"));
        }
        if self.encoder_out == 0 || self.hidden.contains(&0) || self.encoder_hidden.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Generator::new(self.objective, self.formulation, self.layout()).map(|_| ())
    }

    /// `(position, rotation, gripper)` repeated over the horizon.
    pub fn layout(&self) -> Layout {
        Layout::new(
            (0..self.t_pred).flat_map(|_| [Segment::Vector(2), Segment::So2, Segment::Vector(1)]),
        )
    }

    pub fn cond_dim(&self) -> usize {
        self.t_obs * (self.encoder_out + PROPRIO_DIM)
    }

    pub fn encoder_config(&self) -> SetEncoderConfig {
        SetEncoderConfig {
            point_dim: POINT_DIM,
            hidden: self.encoder_hidden.clone(),
            out_dim: self.encoder_out,
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        let g = Generator::new(self.objective, self.formulation, self.layout())?;
        Ok(NetworkConfig {
            hidden: self.hidden.clone(),
            ..NetworkConfig::policy(g.input_dim(), self.cond_dim(), g.output_dim())
        })
    }

    /// Architecture string stored in checkpoints.
    pub fn descriptor(&self) -> Result<String> {
        Ok(format!(
            "reach_policy t_obs={} t_pred={} objective={} formulation={} | {} | {}",
            self.t_obs,
            self.t_pred,
            self.objective,
            self.formulation,
            self.encoder_config().descriptor(),
            self.network_config()?.descriptor()
        ))
    }
}

/// Training-time perturbations of the conditioning inputs. Targets are left
/// untouched, so a shifted proprioception still maps to the expert chunk.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Augment {
    /// Independent noise on every observed point, workspace units.
    pub point_jitter: f64,
    /// Offset of the proprioceptive position, shared by a window, workspace units.
    pub proprio_pos: f64,
    /// Rotation of the proprioceptive orientation, shared by a window, radians.
    pub proprio_rot: f64,
}

impl Augment {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.point_jitter) && ok(self.proprio_pos) && ok(self.proprio_rot)) {
            return Err(Error::config("augmentation scales must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Policy {
    config: PolicyConfig,
    task: ReachConfig,
    generator: Generator,
    encoder: SetEncoder,
    net: Network,
}

impl Policy {
    /// Fresh weights from the `init` stream of `seed`.
    pub fn new(config: PolicyConfig, task: ReachConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        // Every action coordinate is normalized into [−1, 1].
        let generator = Generator::new(config.objective, config.formulation, config.layout())?.with_sample_clip(1.0);
        let encoder = SetEncoder::new(config.encoder_config(), &mut rng::stream(seed, rng::INIT, 0));
        let net = Network::new(config.network_config()?, &mut rng::stream(seed, rng::INIT, 1));
        Ok(Self {
            config,
            task,
            generator,
            encoder,
            net,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn task(&self) -> &ReachConfig {
        &self.task
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn encoder(&self) -> &SetEncoder {
        &self.encoder
    }

    /// Copy of this policy with the given parameters (e.g. EMA weights).
    pub fn with_params(&self, params: &[&Tensor]) -> Result<Self> {
        let mut out = self.clone();
        let mut dst = out.params_mut();
        if dst.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "policy parameters",
                expected: vec![dst.len()],
                got: vec![params.len()],
            });
        }
        for (d, s) in dst.iter_mut().zip(params) {
            if d.shape() != s.shape() {
                return Err(Error::ShapeMismatch {
                    op: "policy parameters",
                    expected: d.shape().to_vec(),
                    got: s.shape().to_vec(),
                });
            }
            **d = (*s).clone();
        }
        Ok(out)
    }

    fn proprio_features(&self, w: &Waypoint, offset: [f64; 3]) -> [f64; PROPRIO_DIM] {
        let p = self.task.normalize([w.pos[0] + offset[0], w.pos[1] + offset[1]]);
        let [c, s] = w.rot.column();
        let (so, co) = offset[2].sin_cos();
        [p[0], p[1], c * co - s * so, s * co + c * so, w.gripper]
    }

    /// Stacked encoder input of every window's clouds (window-major, oldest
    /// first) and the row offsets of each cloud.
    fn stack_clouds(&self, windows: &[Vec<&Observation>], jitter: &mut dyn FnMut() -> [f64; 2]) -> Result<(Tensor, Vec<usize>)> {
        let mut data = Vec::new();
        let mut offsets = vec![0];
        for w in windows {
            if w.len() != self.config.t_obs {
                return Err(Error::ShapeMismatch {
                    op: "policy observation window",
                    expected: vec![self.config.t_obs],
                    got: vec![w.len()],
                });
            }
            for o in w {
                if o.cloud.is_empty() {
                    return Err(Error::EmptyScene);
                }
                for p in &o.cloud {
                    let d = jitter();
                    let q = self.task.normalize([p[0] + d[0], p[1] + d[1]]);
                    data.extend_from_slice(&[q[0], q[1], p[2]]);
                }
                offsets.push(offsets.last().unwrap() + o.cloud.len());
            }
        }
        let rows = *offsets.last().unwrap();
        Ok((Tensor::matrix(rows, POINT_DIM, data)?, offsets))
    }

    /// One proprioception row per window; `offsets[i]` shifts every frame of window `i`.
    fn proprio_tensor(&self, windows: &[Vec<&Observation>], offsets: &[[f64; 3]]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(windows.len() * self.config.t_obs * PROPRIO_DIM);
        for (w, off) in windows.iter().zip(offsets) {
            for o in w {
                data.extend_from_slice(&self.proprio_features(&o.proprio, *off));
            }
        }
        Tensor::matrix(windows.len(), self.config.t_obs * PROPRIO_DIM, data)
    }

    /// Records the conditioning of a batch of observation windows, perturbed
    /// by `augment` when given.
    pub fn record_conditioning<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        windows: &[Vec<&Observation>],
        augment: Option<(&Augment, &mut Rng)>,
    ) -> Result<Var> {
        let (points, offsets, proprio_offsets) = match augment {
            None => {
                let (p, o) = self.stack_clouds(windows, &mut || [0.0, 0.0])?;
                (p, o, vec![[0.0; 3]; windows.len()])
            }
            Some((a, rng)) => {
                a.validate()?;
                let mut gauss = |sd: f64| if sd > 0.0 { sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                let proprio: Vec<[f64; 3]> = windows
                    .iter()
                    .map(|_| [gauss(a.proprio_pos), gauss(a.proprio_pos), gauss(a.proprio_rot)])
                    .collect();
                let (p, o) = self.stack_clouds(windows, &mut || [gauss(a.point_jitter), gauss(a.point_jitter)])?;
                (p, o, proprio)
            }
        };
        let pts = tape.constant(points);
        let emb = self.encoder.record(tape, pts, &offsets)?;
        // One row per cloud → one row per window.
        let emb = tape.reshape(emb, vec![windows.len(), self.config.t_obs * self.config.encoder_out])?;
        let proprio = tape.constant(self.proprio_tensor(windows, &proprio_offsets)?);
        tape.concat(&[emb, proprio])
    }

    /// Conditioning without gradients.
    pub fn conditioning(&self, windows: &[Vec<&Observation>]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let c = self.record_conditioning(&mut tape, windows, None)?;
        Ok(tape.value(c).clone())
    }

    /// Generator state of an action chunk.
    pub fn chunk_to_state(&self, chunk: &[Waypoint]) -> State {
        let mut elements = Vec::with_capacity(2 * chunk.len() + 1);
        let mut pending = Vec::new();
        for w in chunk {
            pending.extend(self.task.normalize(w.pos));
            elements.push(Element::Vector(std::mem::take(&mut pending)));
            elements.push(Element::So2(w.rot.clone()));
            pending.push(w.gripper);
        }
        elements.push(Element::Vector(pending));
        State(elements)
    }

    pub fn state_to_chunk(&self, state: &State) -> Result<Vec<Waypoint>> {
        self.generator.layout().check(state)?;
        let mut scalars: VecDeque<f64> = VecDeque::new();
        let mut rots = VecDeque::new();
        for e in state.elements() {
            match e {
                Element::Vector(v) => scalars.extend(v),
                Element::So2(r) => rots.push_back(r.clone()),
                Element::So3(_) => return Err(Error::config("reach actions have no SO(3) part")),
            }
        }
        let mut out = Vec::with_capacity(self.config.t_pred);
        for _ in 0..self.config.t_pred {
            let mut next = || scalars.pop_front().expect("layout checked");
            let q = [next(), next()];
            let gripper = next();
            out.push(Waypoint {
                pos: self.task.denormalize(q),
                rot: rots.pop_front().expect("layout checked"),
                gripper,
            });
        }
        Ok(out)
    }

    /// Training loss and gradients (encoder parameters first) for a batch of
    /// windows and their target chunks.
    pub fn loss_grads(
        &self,
        windows: &[Vec<&Observation>],
        chunks: &[Vec<Waypoint>],
        rng: &mut Rng,
        augment: &Augment,
    ) -> Result<(f64, Vec<Tensor>)> {
        if windows.len() != chunks.len() {
            return Err(Error::ShapeMismatch {
                op: "policy batch",
                expected: vec![windows.len()],
                got: vec![chunks.len()],
            });
        }
        let z1: Vec<State> = chunks.iter().map(|c| self.chunk_to_state(c)).collect();
        let batch = self.generator.make_batch(&z1, rng)?;
        let mut tape = Tape::new();
        let cond = self.record_conditioning(&mut tape, windows, Some((augment, rng)))?;
        let loss = record_regression_loss(&mut tape, &self.net, &batch, cond)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("policy training loss ({value})")));
        }
        Ok((value, tape.backward(loss, Tensor::scalar(1.0))?))
    }

    /// Samples one action chunk per window with `k` sampler steps. Row `i`
    /// draws its start from `rngs[i]`, so results do not depend on batching.
    pub fn sample_chunks(&self, cond: &Tensor, k: usize, rngs: &mut [Rng]) -> Result<Vec<Vec<Waypoint>>> {
        if rngs.len() != cond.rows() {
            return Err(Error::ShapeMismatch {
                op: "policy sampling",
                expected: vec![cond.rows()],
                got: vec![rngs.len()],
            });
        }
        let starts = rngs.iter_mut().map(|r| self.generator.sample_start(r)).collect();
        self.generator
            .integrate(&self.net, starts, cond, k)?
            .iter()
            .map(|s| self.state_to_chunk(s))
            .collect()
    }

    /// Conditioning plus sampling.
    pub fn act(&self, windows: &[Vec<&Observation>], k: usize, rngs: &mut [Rng]) -> Result<Vec<Vec<Waypoint>>> {
        let cond = self.conditioning(windows)?;
        self.sample_chunks(&cond, k, rngs)
    }
}

impl Module for Policy {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        p.extend(self.net.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        p.extend(self.net.params_mut());
        p
    }
}
