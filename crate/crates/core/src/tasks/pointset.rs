//! Point-set observation processing: merge, crop, voxel-downsample.

use crate::{Error, Result};
use std::collections::BTreeMap;

/// `(x, y, tag)`.
pub type Point = [f64; 3];

/// Axis-aligned rectangle, bounds inclusive.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub const UNIT: Bounds = Bounds {
        min: [0.0, 0.0],
        max: [1.0, 1.0],
    };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    /// Clamps a position into the rectangle; returns whether it moved.
    pub fn clamp(&self, p: &mut [f64; 2]) -> bool {
        let before = *p;
        for i in 0..2 {
            p[i] = p[i].clamp(self.min[i], self.max[i]);
        }
        before != *p
    }
}

/// Merges `clouds`, drops points outside `bounds`, and keeps one centroid per
/// occupied voxel of edge `voxel` (voxels anchored at `bounds.min`). The output
/// is sorted by voxel index `(ix, iy)`.
pub fn process_pointset(clouds: &[Vec<Point>], voxel: f64, bounds: &Bounds) -> Result<Vec<Point>> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::config(format!("voxel size must be positive, got {voxel}")));
    }
    let mut cells: BTreeMap<(i64, i64), ([f64; 3], usize)> = BTreeMap::new();
    for p in clouds.iter().flatten() {
        if !p.iter().all(|v| v.is_finite()) || !bounds.contains(p[0], p[1]) {
            continue;
        }
        let key = (
            ((p[0] - bounds.min[0]) / voxel).floor() as i64,
            ((p[1] - bounds.min[1]) / voxel).floor() as i64,
        );
        let e = cells.entry(key).or_insert(([0.0; 3], 0));
        for (s, v) in e.0.iter_mut().zip(p) {
            *s += v;
        }
        e.1 += 1;
    }
    if cells.is_empty() {
        return Err(Error::EmptyScene);
    }
    Ok(cells
        .into_values()
        .map(|(s, n)| {
            let n = n as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect())
}
