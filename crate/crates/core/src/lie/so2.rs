use super::{LieGroup, DEGENERATE_EPS};
use crate::{Error, Result};
use nalgebra::Matrix2;
use rand::Rng;
use std::f64::consts::PI;

/// Planar rotation stored as a 2×2 orthonormal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation2 {
    m: Matrix2<f64>,
}

impl Rotation2 {
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: Matrix2::new(c, -s, s, c),
        }
    }

    /// Signed angle in `(-π, π]`.
    pub fn signed_angle(&self) -> f64 {
        let a = self.m[(1, 0)].atan2(self.m[(0, 0)]);
        // atan2(-0, -1) = -π; keep the canonical branch.
        if a == -PI {
            PI
        } else {
            a
        }
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.m
    }

    /// Rebuilds a rotation from a stored first column without renormalising,
    /// so serialised rotations round-trip bit for bit.
    pub fn from_column(c: f64, s: f64) -> Result<Self> {
        let r = Self {
            m: Matrix2::new(c, -s, s, c),
        };
        if r.is_valid() {
            Ok(r)
        } else {
            Err(Error::DegenerateInput("stored 2D column is not unit length"))
        }
    }

    /// First column `(cos θ, sin θ)`.
    pub fn column(&self) -> [f64; 2] {
        [self.m[(0, 0)], self.m[(1, 0)]]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.m - other.m).abs().max()
    }
}

impl LieGroup for Rotation2 {
    const N: usize = 2;
    const DOF: usize = 1;
    const REPR: usize = 2;

    fn identity() -> Self {
        Self {
            m: Matrix2::identity(),
        }
    }

    fn exp(v: &[f64]) -> Self {
        debug_assert_eq!(v.len(), 1);
        Self::from_angle(v[0])
    }

    fn log(&self) -> Vec<f64> {
        vec![self.signed_angle()]
    }

    /// Computed from the first columns so the result keeps the exact
    /// `[c −s; s c]` structure.
    fn compose(&self, rhs: &Self) -> Self {
        let ([a, b], [c, d]) = (self.column(), rhs.column());
        let (cos, sin) = (a * c - b * d, b * c + a * d);
        Self {
            m: Matrix2::new(cos, -sin, sin, cos),
        }
    }

    fn inverse(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    fn sample_haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_angle(-PI + 2.0 * PI * rng.random::<f64>())
    }

    fn truncate(&self) -> Vec<f64> {
        self.column().to_vec()
    }

    /// Normalises the column; the second column is its perpendicular with det = +1.
    fn project(raw: &[f64]) -> Result<Self> {
        if raw.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "Rotation2::project",
                expected: vec![2],
                got: vec![raw.len()],
            });
        }
        let norm = raw[0].hypot(raw[1]);
        if !(norm > DEGENERATE_EPS) {
            return Err(Error::DegenerateInput("2D column norm too small"));
        }
        let (c, s) = (raw[0] / norm, raw[1] / norm);
        Ok(Self {
            m: Matrix2::new(c, -s, s, c),
        })
    }

    fn matrix_entries(&self) -> Vec<f64> {
        vec![self.m[(0, 0)], self.m[(0, 1)], self.m[(1, 0)], self.m[(1, 1)]]
    }

    fn angle(&self) -> f64 {
        self.signed_angle().abs()
    }

    fn orthonormality_error(&self) -> f64 {
        (self.m.transpose() * self.m - Matrix2::identity()).abs().max()
    }

    fn determinant(&self) -> f64 {
        self.m.determinant()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_examples() {
        assert_eq!(Rotation2::exp(&[0.0]), Rotation2::identity());
        let q = Rotation2::exp(&[PI / 2.0]);
        assert!(q.max_abs_diff(&Rotation2 { m: Matrix2::new(0.0, -1.0, 1.0, 0.0) }) < 1e-15);
    }

    #[test]
    fn log_examples() {
        assert_eq!(Rotation2::identity().log(), vec![0.0]);
        let q = Rotation2 {
            m: Matrix2::new(0.0, -1.0, 1.0, 0.0),
        };
        assert!((q.log()[0] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn log_half_turn_is_positive_pi() {
        for m in [
            Matrix2::new(-1.0, 0.0, 0.0, -1.0),
            Matrix2::new(-1.0, -0.0, -0.0, -1.0),
        ] {
            assert_eq!(Rotation2 { m }.log(), vec![PI]);
        }
    }

    #[test]
    fn project_and_truncate() {
        assert_eq!(Rotation2::identity().truncate(), vec![1.0, 0.0]);
        let r = Rotation2::from_angle(0.7);
        let back = Rotation2::project(&r.truncate()).unwrap();
        assert!(back.max_abs_diff(&r) < 1e-12);
        let scaled: Vec<f64> = r.truncate().iter().map(|x| 3.0 * x).collect();
        assert!(Rotation2::project(&scaled).unwrap().max_abs_diff(&r) < 1e-12);
        assert!(matches!(
            Rotation2::project(&[1e-13, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
    }
}
