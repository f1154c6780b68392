//! Demonstration datasets: binary episode file plus a JSON manifest.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic          8 bytes  "MFLOWDEM"
//! version        u32      1
//! seed           u64
//! task config    u32 byte length + UTF-8 JSON
//! episodes       u32 count
//! point dim      u32      3   (x, y, tag)
//! waypoint dim   u32      5   (x, y, cos θ, sin θ, gripper)
//! per episode:
//!   object pose    4 × f64 (x, y, cos θ, sin θ)
//!   start pose     4 × f64
//!   obstacle       u8 flag, then center x, center y, radius as f64 when 1
//!   side           f64
//!   success        u8
//!   observations   u32 count, each: u32 point count, points, one waypoint
//!   actions        u32 count, waypoints
//! ```

use super::reach::{generate_expert, Episode, Obstacle, Observation, ReachConfig, Scene2D, Waypoint};
use crate::binio::{Reader, Writer};
use crate::lie::Rotation2;
use crate::nn::content_hash;
use crate::{rng, Error, Result};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 8] = b"MFLOWDEM";
pub const VERSION: u32 = 1;
const POINT_DIM: u32 = 3;
const WAYPOINT_DIM: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: ReachConfig,
    pub seed: u64,
    pub episodes: Vec<Episode>,
}

fn write_waypoint(w: &mut Writer, p: &Waypoint) {
    p.to_array().iter().for_each(|&x| w.f64(x));
}

fn read_waypoint(r: &mut Reader) -> std::result::Result<Waypoint, String> {
    let mut a = [0.0; 5];
    for v in &mut a {
        *v = r.f64()?;
    }
    Waypoint::from_array(a).map_err(|e| e.to_string())
}

fn write_pose(w: &mut Writer, pos: [f64; 2], rot: &Rotation2) {
    let [c, s] = rot.column();
    [pos[0], pos[1], c, s].iter().for_each(|&x| w.f64(x));
}

fn read_pose(r: &mut Reader) -> std::result::Result<([f64; 2], Rotation2), String> {
    let (x, y, c, s) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    Ok(([x, y], Rotation2::from_column(c, s).map_err(|e| e.to_string())?))
}

impl Dataset {
    /// `n` demonstrations; episode `i` uses stream `(seed, data, i)` for its
    /// scene, detour side and camera noise.
    pub fn generate(task: &ReachConfig, n: usize, seed: u64) -> Result<Self> {
        task.validate()?;
        if n == 0 {
            return Err(Error::EmptyInput("dataset: zero episodes requested"));
        }
        let episodes = super::with_workers(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(seed, rng::DATA, i as u64);
                    let scene = Scene2D::sample(task, &mut r);
                    generate_expert(&scene, task, &mut r)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Self {
            task: task.clone(),
            seed,
            episodes,
        })
    }

    /// `(episode, observation)` index pairs usable as training samples.
    pub fn sample_index(&self) -> Vec<(usize, usize)> {
        self.episodes
            .iter()
            .enumerate()
            .flat_map(|(e, ep)| (0..ep.observations.len()).map(move |i| (e, i)))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u64(self.seed);
        w.text(&serde_json::to_string(&self.task)?);
        w.u32(self.episodes.len() as u32);
        w.u32(POINT_DIM);
        w.u32(WAYPOINT_DIM);
        for ep in &self.episodes {
            let s = &ep.scene;
            write_pose(&mut w, s.object_pos, &s.object_rot);
            write_pose(&mut w, s.start_pos, &s.start_rot);
            match &s.obstacle {
                Some(o) => {
                    w.u8(1);
                    [o.center[0], o.center[1], o.radius].iter().for_each(|&x| w.f64(x));
                }
                None => w.u8(0),
            }
            w.f64(ep.side);
            w.u8(u8::from(ep.success));
            w.u32(ep.observations.len() as u32);
            for o in &ep.observations {
                w.u32(o.cloud.len() as u32);
                o.cloud.iter().flatten().for_each(|&x| w.f64(x));
                write_waypoint(&mut w, &o.proprio);
            }
            w.u32(ep.actions.len() as u32);
            ep.actions.iter().for_each(|a| write_waypoint(&mut w, a));
        }
        Ok(w.0)
    }

    fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err("not a demonstration file (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let seed = r.u64()?;
        let task: ReachConfig = serde_json::from_str(&r.text()?).map_err(|e| e.to_string())?;
        let n = r.u32()? as usize;
        let (pd, wd) = (r.u32()?, r.u32()?);
        if pd != POINT_DIM || wd != WAYPOINT_DIM {
            return Err(format!("unexpected dims point={pd} waypoint={wd}"));
        }
        let mut episodes = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let (object_pos, object_rot) = read_pose(&mut r)?;
            let (start_pos, start_rot) = read_pose(&mut r)?;
            let obstacle = match r.u8()? {
                0 => None,
                1 => Some(Obstacle {
                    center: [r.f64()?, r.f64()?],
                    radius: r.f64()?,
                }),
                f => return Err(format!("bad obstacle flag {f}")),
            };
            let side = r.f64()?;
            let success = r.u8()? != 0;
            let n_obs = r.u32()? as usize;
            let mut observations = Vec::with_capacity(n_obs.min(1 << 16));
            for _ in 0..n_obs {
                let m = r.u32()? as usize;
                let mut cloud = Vec::with_capacity(m.min(1 << 16));
                for _ in 0..m {
                    cloud.push([r.f64()?, r.f64()?, r.f64()?]);
                }
                observations.push(Observation {
                    cloud,
                    proprio: read_waypoint(&mut r)?,
                });
            }
            let n_act = r.u32()? as usize;
            let actions = (0..n_act)
                .map(|_| read_waypoint(&mut r))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            episodes.push(Episode {
                scene: Scene2D {
                    object_pos,
                    object_rot,
                    start_pos,
                    start_rot,
                    obstacle,
                },
                side,
                observations,
                actions,
                success,
            });
        }
        if r.remaining() != 0 {
            return Err(format!("{} trailing bytes", r.remaining()));
        }
        Ok(Self { task, seed, episodes })
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let ds = Self::parse(bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })?;
        for (i, ep) in ds.episodes.iter().enumerate() {
            ep.validate(&ds.task).map_err(|_| Error::Format {
                path: path.to_path_buf(),
                reason: format!("episode {i} violates demonstration invariants"),
            })?;
        }
        Ok(ds)
    }

    /// Path of the manifest written next to a dataset file.
    pub fn manifest_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn manifest(&self, bytes: &[u8]) -> serde_json::Value {
        serde_json::json!({
            "kind": "reach2d-demos",
            "format_version": VERSION,
            "seed": self.seed,
            "episodes": self.episodes.len(),
            "samples": self.sample_index().len(),
            "task": self.task,
            "content_hash": content_hash(bytes),
        })
    }

    /// Writes the dataset and its manifest; returns the dataset's content hash.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        let manifest = self.manifest(&bytes);
        std::fs::write(Self::manifest_path(path), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(content_hash(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::config(format!("dataset {} does not exist", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        Self::from_bytes(&bytes, path)
    }
}
