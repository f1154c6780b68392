use crate::{Error, Result};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridKind {
    /// `cells × cells` square cells tiling `[−extent, extent]²`, row-major in `y` then `x`.
    Cartesian { cells: usize, extent: f64 },
    /// Equal angular bins tiling `[−π, π)`.
    Angular { bins: usize },
}

/// Mean error per grid cell, accumulated from samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorGrid {
    kind: GridKind,
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl ErrorGrid {
    pub fn new(kind: GridKind) -> Self {
        let n = match kind {
            GridKind::Cartesian { cells, .. } => cells * cells,
            GridKind::Angular { bins } => bins,
        };
        Self {
            kind,
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    /// Cell containing `(x, y)`, or `None` outside the grid.
    pub fn cell_of_point(&self, x: f64, y: f64) -> Option<usize> {
        let GridKind::Cartesian { cells, extent } = self.kind else {
            return None;
        };
        let w = 2.0 * extent / cells as f64;
        let ix = ((x + extent) / w).floor();
        let iy = ((y + extent) / w).floor();
        let n = cells as f64;
        (ix >= 0.0 && iy >= 0.0 && ix < n && iy < n).then(|| iy as usize * cells + ix as usize)
    }

    /// Bin containing angle `theta` (any real value, wrapped to `[−π, π)`).
    pub fn cell_of_angle(&self, theta: f64) -> Option<usize> {
        let GridKind::Angular { bins } = self.kind else {
            return None;
        };
        let wrapped = (theta + PI).rem_euclid(2.0 * PI);
        Some(((wrapped / (2.0 * PI) * bins as f64) as usize).min(bins - 1))
    }

    /// Cell centers: `(x, y)` for Cartesian grids, `(angle, 0)` in radians for angular ones.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        match self.kind {
            GridKind::Cartesian { cells, extent } => {
                let w = 2.0 * extent / cells as f64;
                let c = |i: usize| -extent + (i as f64 + 0.5) * w;
                (0..cells * cells).map(|k| (c(k % cells), c(k / cells))).collect()
            }
            GridKind::Angular { bins } => (0..bins)
                .map(|b| (-PI + (b as f64 + 0.5) * 2.0 * PI / bins as f64, 0.0))
                .collect(),
        }
    }

    pub fn add(&mut self, cell: usize, error: f64) {
        self.sum[cell] += error;
        self.count[cell] += 1;
    }

    pub fn count(&self, cell: usize) -> u64 {
        self.count[cell]
    }

    /// Mean error per cell, NaN for empty cells.
    pub fn means(&self) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect()
    }

    /// Mean over non-empty angular bins whose centers lie within `half_width`
    /// radians of `center`.
    pub fn angular_region_mean(&self, center: f64, half_width: f64) -> Option<f64> {
        let GridKind::Angular { .. } = self.kind else {
            return None;
        };
        let means = self.means();
        let picked: Vec<f64> = self
            .centers()
            .iter()
            .zip(&means)
            .filter(|((a, _), m)| {
                let d = (a - center + PI).rem_euclid(2.0 * PI) - PI;
                d.abs() <= half_width && !m.is_nan()
            })
            .map(|(_, m)| *m)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

/// CSV with header `x,y,mean_error` (Cartesian) or `angle_bin,mean_error`
/// (angular, bin center in degrees). Empty cells are written as `nan`.
pub fn emit_grid(grid: &ErrorGrid) -> String {
    let mut out = String::new();
    let means = grid.means();
    match grid.kind {
        GridKind::Cartesian { .. } => {
            out.push_str("x,y,mean_error\n");
            for ((x, y), m) in grid.centers().iter().zip(&means) {
                out.push_str(&format!("{},{},{}\n", fmt(*x), fmt(*y), fmt(*m)));
            }
        }
        GridKind::Angular { .. } => {
            out.push_str("angle_bin,mean_error\n");
            for ((a, _), m) in grid.centers().iter().zip(&means) {
                out.push_str(&format!("{},{}\n", fmt(a.to_degrees()), fmt(*m)));
            }
        }
    }
    out
}

/// Reads back the cell means written by [`emit_grid`], checking the header,
/// row count and cell coordinates against `kind`.
pub fn parse_grid(csv: &str, kind: GridKind) -> Result<Vec<f64>> {
    let template = ErrorGrid::new(kind);
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let (expected_header, width) = match kind {
        GridKind::Cartesian { .. } => ("x,y,mean_error", 3),
        GridKind::Angular { .. } => ("angle_bin,mean_error", 2),
    };
    if header != expected_header {
        return Err(Error::config(format!("grid CSV header `{header}`")));
    }
    let centers = template.centers();
    let mut means = Vec::with_capacity(centers.len());
    for (i, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(format!("grid CSV row {i}: {e}")))?;
        if fields.len() != width || i >= centers.len() {
            return Err(Error::config(format!("grid CSV row {i} malformed")));
        }
        let (cx, cy) = centers[i];
        let coords_ok = match kind {
            GridKind::Cartesian { .. } => fields[0] == cx && fields[1] == cy,
            GridKind::Angular { .. } => fields[0] == cx.to_degrees(),
        };
        if !coords_ok {
            return Err(Error::config(format!("grid CSV row {i} has wrong cell coordinates")));
        }
        means.push(fields[width - 1]);
    }
    if means.len() != centers.len() {
        return Err(Error::config(format!(
            "grid CSV has {} rows, expected {}",
            means.len(),
            centers.len()
        )));
    }
    Ok(means)
}
