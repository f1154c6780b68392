//! Planar reach task: move the end effector onto a bar-shaped object's grasp
//! pose and close the gripper. Observations are noisy multi-camera point sets
//! of the scene plus proprioception.

use super::pointset::{process_pointset, Bounds, Point};
use crate::lie::{angle_between, geodesic_interp, LieGroup, Rotation2};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{FRAC_PI_3, PI};

/// Tag of object body points; handle points carry [`HANDLE_TAG`].
pub const BODY_TAG: f64 = 0.0;
pub const HANDLE_TAG: f64 = 1.0;
pub const OBSTACLE_TAG: f64 = -1.0;

/// Gripper command values.
pub const OPEN: f64 = -1.0;
pub const CLOSED: f64 = 1.0;

const BAR_COLUMNS: usize = 16;
const BAR_ROWS: usize = 4;
const HANDLE_COLUMNS: usize = 4;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachConfig {
    pub bounds: Bounds,
    pub object_length: f64,
    pub object_width: f64,
    /// Object centers are drawn at least this far inside the workspace.
    pub object_margin: f64,
    pub start_margin: f64,
    /// Orientations are drawn from `[−max_angle, max_angle]`.
    pub max_angle: f64,
    pub cameras: usize,
    /// Probability that a camera sees a given object point.
    pub camera_keep: f64,
    pub camera_noise: f64,
    /// Spurious points per camera, placed outside the workspace.
    pub clutter_points: usize,
    pub voxel: f64,
    /// Central obstacle with a coin-flip detour side in every demo.
    pub multimodal: bool,
    pub obstacle_radius: f64,
    pub obstacle_points: usize,
    /// Peak lateral offset of the detour.
    pub detour: f64,
    /// Expert trajectory length before subsampling.
    pub raw_steps: usize,
    pub subsample: usize,
    pub max_steps: usize,
    pub pos_tol: f64,
    pub rot_tol_deg: f64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            bounds: Bounds::UNIT,
            object_length: 0.2,
            object_width: 0.012,
            object_margin: 0.25,
            start_margin: 0.1,
            max_angle: FRAC_PI_3,
            cameras: 2,
            camera_keep: 0.7,
            camera_noise: 0.003,
            clutter_points: 8,
            voxel: 0.01,
            multimodal: false,
            obstacle_radius: 0.1,
            obstacle_points: 32,
            detour: 0.25,
            raw_steps: 49,
            subsample: 3,
            max_steps: 200,
            pos_tol: 0.02,
            rot_tol_deg: 5.0,
        }
    }
}

impl ReachConfig {
    pub fn multimodal() -> Self {
        Self {
            multimodal: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.max[0] > b.min[0] && b.max[1] > b.min[1]) {
            return Err(Error::config("workspace bounds are empty"));
        }
        let positive = [
            ("object_length", self.object_length),
            ("object_width", self.object_width),
            ("voxel", self.voxel),
            ("pos_tol", self.pos_tol),
            ("rot_tol_deg", self.rot_tol_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.cameras == 0 || self.raw_steps < 2 || self.subsample == 0 || self.max_steps == 0 {
            return Err(Error::config(
                "cameras, subsample and max_steps must be positive and raw_steps at least 2",
            ));
        }
        if !(0.0..=1.0).contains(&self.camera_keep) || self.camera_noise < 0.0 {
            return Err(Error::config("camera_keep must lie in [0, 1] and camera_noise be non-negative"));
        }
        let half = 0.5 * (b.max[0] - b.min[0]).min(b.max[1] - b.min[1]);
        if self.object_margin >= half || self.start_margin >= half {
            return Err(Error::config("sampling margins leave no room in the workspace"));
        }
        Ok(())
    }

    /// States per demo after subsampling.
    pub fn demo_states(&self) -> usize {
        (self.raw_steps - 1) / self.subsample + 1
    }

    fn center(&self) -> [f64; 2] {
        let b = &self.bounds;
        [0.5 * (b.min[0] + b.max[0]), 0.5 * (b.min[1] + b.max[1])]
    }

    /// Maps a workspace position to `[−1, 1]²`.
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        let b = &self.bounds;
        [
            2.0 * (p[0] - b.min[0]) / (b.max[0] - b.min[0]) - 1.0,
            2.0 * (p[1] - b.min[1]) / (b.max[1] - b.min[1]) - 1.0,
        ]
    }

    pub fn denormalize(&self, q: [f64; 2]) -> [f64; 2] {
        let b = &self.bounds;
        [
            b.min[0] + 0.5 * (q[0] + 1.0) * (b.max[0] - b.min[0]),
            b.min[1] + 0.5 * (q[1] + 1.0) * (b.max[1] - b.min[1]),
        ]
    }
}

/// End-effector pose plus gripper; used both as proprioception and as action.
#[derive(Clone, Debug, PartialEq)]
pub struct Waypoint {
    pub pos: [f64; 2],
    pub rot: Rotation2,
    pub gripper: f64,
}

impl Waypoint {
    pub fn new(pos: [f64; 2], angle: f64, gripper: f64) -> Self {
        Self {
            pos,
            rot: Rotation2::from_angle(angle),
            gripper,
        }
    }

    /// `(x, y, cos θ, sin θ, gripper)`.
    pub fn to_array(&self) -> [f64; 5] {
        let [c, s] = self.rot.column();
        [self.pos[0], self.pos[1], c, s, self.gripper]
    }

    pub fn from_array(a: [f64; 5]) -> Result<Self> {
        Ok(Self {
            pos: [a[0], a[1]],
            rot: Rotation2::from_column(a[2], a[3])?,
            gripper: a[4],
        })
    }

    pub fn is_valid(&self) -> bool {
        self.pos.iter().all(|v| v.is_finite()) && self.rot.is_valid() && self.gripper.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// One reach scene: where the object is, where the robot starts.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene2D {
    pub object_pos: [f64; 2],
    pub object_rot: Rotation2,
    pub start_pos: [f64; 2],
    pub start_rot: Rotation2,
    pub obstacle: Option<Obstacle>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl Scene2D {
    pub fn sample<R: Rng + ?Sized>(cfg: &ReachConfig, rng: &mut R) -> Self {
        let b = &cfg.bounds;
        let angle = |rng: &mut R| uniform(rng, -cfg.max_angle, cfg.max_angle);
        if cfg.multimodal {
            // Start on the left, object on the right, obstacle in between.
            let c = cfg.center();
            let w = b.max[0] - b.min[0];
            let h = b.max[1] - b.min[1];
            let band = |rng: &mut R| uniform(rng, c[1] - 0.15 * h, c[1] + 0.15 * h);
            let start_pos = [uniform(rng, b.min[0] + 0.1 * w, b.min[0] + 0.25 * w), band(rng)];
            let start_rot = Rotation2::from_angle(angle(rng));
            let object_pos = [uniform(rng, b.max[0] - 0.25 * w, b.max[0] - 0.1 * w), band(rng)];
            let object_rot = Rotation2::from_angle(angle(rng));
            Self {
                object_pos,
                object_rot,
                start_pos,
                start_rot,
                obstacle: Some(Obstacle {
                    center: c,
                    radius: cfg.obstacle_radius,
                }),
            }
        } else {
            let m = cfg.object_margin;
            let object_pos = [uniform(rng, b.min[0] + m, b.max[0] - m), uniform(rng, b.min[1] + m, b.max[1] - m)];
            let object_rot = Rotation2::from_angle(angle(rng));
            let s = cfg.start_margin;
            let start_pos = [uniform(rng, b.min[0] + s, b.max[0] - s), uniform(rng, b.min[1] + s, b.max[1] - s)];
            let start_rot = Rotation2::from_angle(angle(rng));
            Self {
                object_pos,
                object_rot,
                start_pos,
                start_rot,
                obstacle: None,
            }
        }
    }

    pub fn start(&self) -> Waypoint {
        Waypoint {
            pos: self.start_pos,
            rot: self.start_rot.clone(),
            gripper: OPEN,
        }
    }

    /// The grasp pose with the gripper closed.
    pub fn goal(&self) -> Waypoint {
        Waypoint {
            pos: self.object_pos,
            rot: self.object_rot.clone(),
            gripper: CLOSED,
        }
    }

    /// Noise-free object (and obstacle) points in world coordinates.
    pub fn points(&self, cfg: &ReachConfig) -> Vec<Point> {
        let [c, s] = self.object_rot.column();
        let mut out = Vec::with_capacity(BAR_COLUMNS * BAR_ROWS + cfg.obstacle_points);
        for col in 0..BAR_COLUMNS {
            let lx = cfg.object_length * ((col as f64 + 0.5) / BAR_COLUMNS as f64 - 0.5);
            let tag = if col >= BAR_COLUMNS - HANDLE_COLUMNS { HANDLE_TAG } else { BODY_TAG };
            for row in 0..BAR_ROWS {
                let ly = cfg.object_width * ((row as f64 + 0.5) / BAR_ROWS as f64 - 0.5);
                out.push([
                    self.object_pos[0] + c * lx - s * ly,
                    self.object_pos[1] + s * lx + c * ly,
                    tag,
                ]);
            }
        }
        if let Some(o) = &self.obstacle {
            for i in 0..cfg.obstacle_points {
                let a = 2.0 * PI * i as f64 / cfg.obstacle_points as f64;
                out.push([o.center[0] + o.radius * a.cos(), o.center[1] + o.radius * a.sin(), OBSTACLE_TAG]);
            }
        }
        out
    }

    /// One processed observation: every camera sees a random subset of the
    /// points with additive noise plus clutter outside the workspace; the
    /// clouds are merged, cropped and voxel-downsampled.
    pub fn observe<R: Rng + ?Sized>(&self, cfg: &ReachConfig, rng: &mut R) -> Result<Vec<Point>> {
        let points = self.points(cfg);
        let noise = Normal::new(0.0, cfg.camera_noise).map_err(|e| Error::config(e.to_string()))?;
        let b = &cfg.bounds;
        let (w, h) = (b.max[0] - b.min[0], b.max[1] - b.min[1]);
        let mut clouds = Vec::with_capacity(cfg.cameras);
        for _ in 0..cfg.cameras {
            let mut cloud = Vec::with_capacity(points.len() + cfg.clutter_points);
            for p in &points {
                let keep = rng.random::<f64>() < cfg.camera_keep;
                let (dx, dy) = (noise.sample(rng), noise.sample(rng));
                if keep {
                    cloud.push([p[0] + dx, p[1] + dy, p[2]]);
                }
            }
            for _ in 0..cfg.clutter_points {
                // A point in the frame of width 0.3 around the workspace.
                let side = rng.random_range(0..4u8);
                let along = rng.random::<f64>();
                let depth = uniform(rng, 0.01, 0.3);
                let p = match side {
                    0 => [b.min[0] - depth * w, b.min[1] + along * h],
                    1 => [b.max[0] + depth * w, b.min[1] + along * h],
                    2 => [b.min[0] + along * w, b.min[1] - depth * h],
                    _ => [b.min[0] + along * w, b.max[1] + depth * h],
                };
                cloud.push([p[0], p[1], BODY_TAG]);
            }
            clouds.push(cloud);
        }
        process_pointset(&clouds, cfg.voxel, &cfg.bounds)
    }

    /// Whether `w` completes the task: within tolerance of the grasp pose with
    /// the gripper closed.
    pub fn is_success(&self, cfg: &ReachConfig, w: &Waypoint) -> bool {
        let d = (w.pos[0] - self.object_pos[0]).hypot(w.pos[1] - self.object_pos[1]);
        d <= cfg.pos_tol
            && angle_between(&w.rot, &self.object_rot).to_degrees() <= cfg.rot_tol_deg
            && w.gripper > 0.0
    }

    /// Signed lateral offset of `p` from the start-to-object line, positive to
    /// the left of the direction of travel; zero when the two coincide.
    pub fn lateral_offset(&self, p: [f64; 2]) -> f64 {
        let d = [self.object_pos[0] - self.start_pos[0], self.object_pos[1] - self.start_pos[1]];
        let n = d[0].hypot(d[1]);
        if n < 1e-12 {
            return 0.0;
        }
        (d[0] * (p[1] - self.start_pos[1]) - d[1] * (p[0] - self.start_pos[0])) / n
    }
}

/// Minimum-jerk time scaling `10s³ − 15s⁴ + 6s⁵`.
pub fn min_jerk(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Keeps steps `0, factor, 2·factor, …`.
pub fn subsample_trajectory<T: Clone>(steps: &[T], factor: usize) -> Result<Vec<T>> {
    if factor == 0 {
        return Err(Error::config("subsample factor must be at least 1"));
    }
    Ok(steps.iter().step_by(factor).cloned().collect())
}

/// The expert's raw trajectory, `cfg.raw_steps` waypoints from the start pose to
/// the grasp pose. `side` (±1, or 0 for none) bends the path to one side of the
/// straight line by up to `cfg.detour`. The gripper closes on the last waypoint.
pub fn expert_path(scene: &Scene2D, cfg: &ReachConfig, side: f64) -> Vec<Waypoint> {
    let n = cfg.raw_steps;
    let (p0, p1) = (scene.start_pos, scene.object_pos);
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let len = d[0].hypot(d[1]);
    let normal = if len > 1e-12 { [-d[1] / len, d[0] / len] } else { [0.0, 0.0] };
    let mut out: Vec<Waypoint> = (0..n - 1)
        .map(|i| {
            let h = min_jerk(i as f64 / (n - 1) as f64);
            let bump = side * cfg.detour * (PI * h).sin();
            Waypoint {
                pos: [
                    p0[0] + h * d[0] + bump * normal[0],
                    p0[1] + h * d[1] + bump * normal[1],
                ],
                rot: geodesic_interp(&scene.start_rot, &scene.object_rot, h),
                gripper: OPEN,
            }
        })
        .collect();
    out.push(scene.goal());
    out
}

/// One observation: processed point set plus proprioception.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub cloud: Vec<Point>,
    pub proprio: Waypoint,
}

/// An expert demonstration: `observations[i]` is taken at state `i` and
/// `actions[i]` commands state `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub scene: Scene2D,
    /// Detour side (±1) of multimodal demos, 0 otherwise.
    pub side: f64,
    pub observations: Vec<Observation>,
    pub actions: Vec<Waypoint>,
    pub success: bool,
}

impl Episode {
    /// The `t_pred` actions following observation `i`, padded with the last action.
    pub fn chunk(&self, i: usize, t_pred: usize) -> Vec<Waypoint> {
        let last = self.actions.len() - 1;
        (0..t_pred).map(|j| self.actions[(i + j).min(last)].clone()).collect()
    }

    /// The `t_obs` observations ending at `i`, oldest first, padded by
    /// repeating the first observation.
    pub fn window(&self, i: usize, t_obs: usize) -> Vec<&Observation> {
        (0..t_obs)
            .map(|j| &self.observations[(i + j + 1).saturating_sub(t_obs)])
            .collect()
    }

    /// Checks the structural invariants of a demonstration.
    pub fn validate(&self, cfg: &ReachConfig) -> Result<()> {
        let ok = !self.actions.is_empty()
            && self.observations.len() == self.actions.len() + 1
            && self.actions.iter().all(|a| a.is_valid() && cfg.bounds.contains(a.pos[0], a.pos[1]))
            && self.observations.iter().all(|o| o.proprio.is_valid() && !o.cloud.is_empty());
        if ok {
            Ok(())
        } else {
            Err(Error::config("episode violates demonstration invariants"))
        }
    }
}

/// Demonstration for `scene`: draws the detour side by coin flip when the task
/// is multimodal, subsamples the expert path and observes every kept state.
pub fn generate_expert<R: Rng + ?Sized>(scene: &Scene2D, cfg: &ReachConfig, rng: &mut R) -> Result<Episode> {
    let side = if cfg.multimodal {
        if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    } else {
        0.0
    };
    let states = subsample_trajectory(&expert_path(scene, cfg, side), cfg.subsample)?;
    let observations = states
        .iter()
        .map(|s| {
            Ok(Observation {
                cloud: scene.observe(cfg, rng)?,
                proprio: s.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let actions = states[1..].to_vec();
    let success = actions.last().is_some_and(|a| scene.is_success(cfg, a));
    Ok(Episode {
        scene: scene.clone(),
        side,
        observations,
        actions,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn subsample_examples() {
        let v: Vec<usize> = (0..9).collect();
        assert_eq!(subsample_trajectory(&v, 1).unwrap(), v);
        assert_eq!(subsample_trajectory(&v, 3).unwrap(), vec![0, 3, 6]);
        assert!(subsample_trajectory(&v, 0).is_err());
    }

    #[test]
    fn expert_ends_exactly_on_goal() {
        let cfg = ReachConfig::default();
        let mut r = rng::stream(0, rng::DATA, 0);
        for _ in 0..20 {
            let scene = Scene2D::sample(&cfg, &mut r);
            let ep = generate_expert(&scene, &cfg, &mut r).unwrap();
            assert_eq!(ep.actions.len(), 16);
            assert!(ep.success);
            ep.validate(&cfg).unwrap();
            let last = ep.actions.last().unwrap();
            assert!(last.rot.max_abs_diff(&scene.object_rot) < 1e-6);
            assert_eq!(last.gripper, CLOSED);
            assert!(ep.actions[..15].iter().all(|a| a.gripper == OPEN));
        }
    }

    #[test]
    fn start_at_goal_only_closes_the_gripper() {
        let cfg = ReachConfig::default();
        let mut scene = Scene2D::sample(&cfg, &mut rng::stream(1, rng::DATA, 0));
        scene.start_pos = scene.object_pos;
        scene.start_rot = scene.object_rot.clone();
        let path = expert_path(&scene, &cfg, 0.0);
        for w in &path {
            assert!((w.pos[0] - scene.object_pos[0]).abs() < 1e-15);
            assert!(w.rot.max_abs_diff(&scene.object_rot) < 1e-15);
        }
        assert_eq!(path.last().unwrap().gripper, CLOSED);
    }

    #[test]
    fn observations_stay_inside_the_workspace() {
        let cfg = ReachConfig::multimodal();
        let mut r = rng::stream(2, rng::DATA, 0);
        let scene = Scene2D::sample(&cfg, &mut r);
        let cloud = scene.observe(&cfg, &mut r).unwrap();
        assert!(cloud.iter().all(|p| cfg.bounds.contains(p[0], p[1])));
        assert!(cloud.iter().any(|p| p[2] == OBSTACLE_TAG));
        assert!(cloud.iter().any(|p| p[2] == HANDLE_TAG));
    }

    #[test]
    fn window_pads_with_the_first_observation() {
        let cfg = ReachConfig::default();
        let mut r = rng::stream(3, rng::DATA, 0);
        let scene = Scene2D::sample(&cfg, &mut r);
        let ep = generate_expert(&scene, &cfg, &mut r).unwrap();
        let w = ep.window(0, 2);
        assert_eq!(w[0], w[1]);
        assert_eq!(ep.window(5, 2)[0], &ep.observations[4]);
        let c = ep.chunk(14, 8);
        assert_eq!(c.len(), 8);
        assert_eq!(c[7], ep.actions[15]);
    }
}
