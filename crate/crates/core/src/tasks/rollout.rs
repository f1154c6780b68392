//! Closed-loop receding-horizon rollouts.
//!
//! Every control step the controller sees the last `T_obs` observations, a
//! full action chunk is sampled and only its first waypoint is executed. The
//! commanded position is clamped to the workspace before execution and the
//! gripper command saturates at the open and closed values.
//!
//! Episode `i` of evaluation seed `s` draws its scene and camera noise from
//! stream `(s, eval, 2i)` and its sampler noise from `(s, eval, 2i + 1)`.
//! Episodes are stepped in lockstep batches; since every row owns its RNG and
//! network rows are computed independently, results do not depend on batching.

use super::policy::Policy;
use super::reach::{expert_path, subsample_trajectory, Observation, ReachConfig, Scene2D, Waypoint};
use crate::lie::angle_between;
use crate::rng::{self, Rng};
use crate::{Error, Result};
use rayon::prelude::*;

/// Lateral deviation below which a rollout is assigned no detour mode.
pub const MODE_THRESHOLD: f64 = 0.05;

/// Episodes stepped together through one batched controller call.
const LOCKSTEP: usize = 25;

pub struct StepContext<'a> {
    pub scene: &'a Scene2D,
    pub step: usize,
    /// Oldest first, padded by repeating the first observation.
    pub window: Vec<&'a Observation>,
}

pub trait Controller: Sync {
    fn t_obs(&self) -> usize;

    /// One commanded waypoint per context; `rngs[i]` belongs to `contexts[i]`.
    fn act(&self, contexts: &[StepContext<'_>], rngs: &mut [Rng]) -> Result<Vec<Waypoint>>;
}

/// Replays the expert demonstration of the scene (detour to the left on
/// multimodal scenes).
pub struct ExpertReplay {
    pub task: ReachConfig,
}

impl Controller for ExpertReplay {
    fn t_obs(&self) -> usize {
        1
    }

    fn act(&self, contexts: &[StepContext<'_>], _rngs: &mut [Rng]) -> Result<Vec<Waypoint>> {
        let side = if self.task.multimodal { 1.0 } else { 0.0 };
        contexts
            .iter()
            .map(|c| {
                let states = subsample_trajectory(&expert_path(c.scene, &self.task, side), self.task.subsample)?;
                Ok(states[(c.step + 1).min(states.len() - 1)].clone())
            })
            .collect()
    }
}

/// A learned policy sampled with `k` inference steps.
pub struct PolicyController<'a> {
    pub policy: &'a Policy,
    pub k: usize,
}

impl Controller for PolicyController<'_> {
    fn t_obs(&self) -> usize {
        self.policy.config().t_obs
    }

    fn act(&self, contexts: &[StepContext<'_>], rngs: &mut [Rng]) -> Result<Vec<Waypoint>> {
        let windows: Vec<Vec<&Observation>> = contexts.iter().map(|c| c.window.clone()).collect();
        Ok(self
            .policy
            .act(&windows, self.k, rngs)?
            .into_iter()
            .map(|mut chunk| chunk.swap_remove(0))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub episode: usize,
    pub success: bool,
    /// Control steps executed.
    pub steps: usize,
    /// Commands whose position had to be clamped into the workspace.
    pub clamp_events: usize,
    pub final_pos_error: f64,
    pub final_rot_error_deg: f64,
    /// Side of the largest lateral deviation (±1), 0 when below [`MODE_THRESHOLD`].
    pub mode: i8,
    /// End-effector positions, starting with the initial pose.
    pub path: Vec<[f64; 2]>,
}

struct Live {
    episode: usize,
    scene: Scene2D,
    env: Rng,
    policy_rng: Rng,
    observations: Vec<Observation>,
    ee: Waypoint,
    path: Vec<[f64; 2]>,
    clamp_events: usize,
    steps: usize,
    success: bool,
    done: bool,
}

fn window(obs: &[Observation], t_obs: usize) -> Vec<&Observation> {
    let last = obs.len() - 1;
    (0..t_obs)
        .map(|j| &obs[(last + j + 1).saturating_sub(t_obs)])
        .collect()
}

fn detour_mode(scene: &Scene2D, path: &[[f64; 2]]) -> i8 {
    let d = path
        .iter()
        .map(|&p| scene.lateral_offset(p))
        .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    if d.abs() < MODE_THRESHOLD {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

/// Runs the given episodes in lockstep until each succeeds or hits the step limit.
pub fn rollout_lockstep(
    ctrl: &dyn Controller,
    task: &ReachConfig,
    episodes: Vec<(usize, Scene2D, Rng, Rng)>,
) -> Result<Vec<RolloutResult>> {
    task.validate()?;
    if ctrl.t_obs() == 0 {
        return Err(Error::config("controller history length must be at least 1"));
    }
    let mut live = episodes
        .into_iter()
        .map(|(episode, scene, mut env, policy_rng)| {
            let ee = scene.start();
            let cloud = scene.observe(task, &mut env)?;
            Ok(Live {
                episode,
                path: vec![ee.pos],
                observations: vec![Observation {
                    cloud,
                    proprio: ee.clone(),
                }],
                scene,
                env,
                policy_rng,
                ee,
                clamp_events: 0,
                steps: 0,
                success: false,
                done: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for step in 0..task.max_steps {
        let active: Vec<usize> = (0..live.len()).filter(|&j| !live[j].done).collect();
        if active.is_empty() {
            break;
        }
        let mut rngs: Vec<Rng> = active.iter().map(|&j| live[j].policy_rng.clone()).collect();
        let actions = {
            let contexts: Vec<StepContext> = active
                .iter()
                .map(|&j| StepContext {
                    scene: &live[j].scene,
                    step,
                    window: window(&live[j].observations, ctrl.t_obs()),
                })
                .collect();
            ctrl.act(&contexts, &mut rngs)?
        };
        if actions.len() != active.len() {
            return Err(Error::ShapeMismatch {
                op: "controller actions",
                expected: vec![active.len()],
                got: vec![actions.len()],
            });
        }
        for ((&j, mut a), r) in active.iter().zip(actions).zip(rngs) {
            let l = &mut live[j];
            l.policy_rng = r;
            if !a.is_valid() {
                return Err(Error::NonFinite(format!("episode {} step {step}: action", l.episode)));
            }
            if task.bounds.clamp(&mut a.pos) {
                l.clamp_events += 1;
            }
            a.gripper = a.gripper.clamp(super::reach::OPEN, super::reach::CLOSED);
            l.ee = a;
            l.path.push(l.ee.pos);
            l.steps = step + 1;
            if l.scene.is_success(task, &l.ee) {
                l.success = true;
                l.done = true;
            } else if step + 1 == task.max_steps {
                l.done = true;
            } else {
                let cloud = l.scene.observe(task, &mut l.env)?;
                l.observations.push(Observation {
                    cloud,
                    proprio: l.ee.clone(),
                });
            }
        }
    }

    Ok(live
        .into_iter()
        .map(|l| RolloutResult {
            episode: l.episode,
            success: l.success,
            steps: l.steps,
            clamp_events: l.clamp_events,
            final_pos_error: (l.ee.pos[0] - l.scene.object_pos[0]).hypot(l.ee.pos[1] - l.scene.object_pos[1]),
            final_rot_error_deg: angle_between(&l.ee.rot, &l.scene.object_rot).to_degrees(),
            mode: detour_mode(&l.scene, &l.path),
            path: l.path,
        })
        .collect())
}

/// Single rollout on a given scene.
pub fn rollout(ctrl: &dyn Controller, task: &ReachConfig, scene: &Scene2D, env: Rng, policy_rng: Rng) -> Result<RolloutResult> {
    let mut out = rollout_lockstep(ctrl, task, vec![(0, scene.clone(), env, policy_rng)])?;
    Ok(out.remove(0))
}

/// Scene and RNG streams of evaluation episode `i`.
pub fn eval_episode(task: &ReachConfig, eval_seed: u64, i: usize) -> (usize, Scene2D, Rng, Rng) {
    let mut env = rng::stream(eval_seed, rng::EVAL, 2 * i as u64);
    let scene = Scene2D::sample(task, &mut env);
    (i, scene, env, rng::stream(eval_seed, rng::EVAL, 2 * i as u64 + 1))
}

/// Rolls out episodes `0..n` of `eval_seed` on the worker pool; results are in
/// episode order.
pub fn evaluate(ctrl: &dyn Controller, task: &ReachConfig, eval_seed: u64, n: usize) -> Result<Vec<RolloutResult>> {
    if n == 0 {
        return Err(Error::EmptyInput("evaluation: zero episodes requested"));
    }
    let batches: Vec<Vec<usize>> = (0..n)
        .collect::<Vec<_>>()
        .chunks(LOCKSTEP)
        .map(<[usize]>::to_vec)
        .collect();
    let parts = super::with_workers(|| {
        batches
            .par_iter()
            .map(|b| {
                let eps = b.iter().map(|&i| eval_episode(task, eval_seed, i)).collect();
                rollout_lockstep(ctrl, task, eps)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// Sampled rollouts from one fixed scene: environment stream `(seed, eval, 0)`
/// shared by all, sampler stream `(seed, eval, 1 + j)` for rollout `j`.
pub fn rollouts_from_scene(
    ctrl: &dyn Controller,
    task: &ReachConfig,
    scene: &Scene2D,
    seed: u64,
    n: usize,
) -> Result<Vec<RolloutResult>> {
    let eps: Vec<_> = (0..n)
        .map(|j| {
            (
                j,
                scene.clone(),
                rng::stream(seed, rng::EVAL, 0),
                rng::stream(seed, rng::EVAL, 1 + j as u64),
            )
        })
        .collect();
    let parts = super::with_workers(|| {
        eps.chunks(LOCKSTEP)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|c| rollout_lockstep(ctrl, task, c.to_vec()))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSummary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub clamp_events: usize,
}

pub fn summarize(results: &[RolloutResult]) -> RolloutSummary {
    let n = results.len();
    let successes = results.iter().filter(|r| r.success).count();
    RolloutSummary {
        episodes: n,
        successes,
        success_rate: if n == 0 { f64::NAN } else { successes as f64 / n as f64 },
        mean_steps: results.iter().map(|r| r.steps as f64).sum::<f64>() / n.max(1) as f64,
        clamp_events: results.iter().map(|r| r.clamp_events).sum(),
    }
}
