use super::{LieGroup, DEGENERATE_EPS};
use crate::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

/// Below this angle Rodrigues coefficients use their Taylor expansion.
const SMALL_ANGLE: f64 = 1e-4;

/// Below this `cos θ` the log map reads the axis from the symmetric part.
const NEAR_PI_COS: f64 = -0.99;

/// `|sin θ|` below which the half-turn axis sign is undetermined.
const HALF_TURN_SIN: f64 = 1e-10;

/// 3D rotation stored as a 3×3 orthonormal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation3 {
    m: Matrix3<f64>,
}

pub(crate) fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

impl Rotation3 {
    /// Wraps a matrix without checking it; callers guarantee orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Rotation from a (not necessarily unit) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Self {
            m: Matrix3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ),
        }
    }

    pub fn exp_vec(w: &Vector3<f64>) -> Self {
        let theta2 = w.norm_squared();
        let theta = theta2.sqrt();
        let (a, b) = if theta < SMALL_ANGLE {
            (
                1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
                0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            )
        } else {
            let half = (0.5 * theta).sin();
            (theta.sin() / theta, 2.0 * half * half / theta2)
        };
        let k = hat(w);
        Self {
            m: Matrix3::identity() + k * a + k * k * b,
        }
    }

    pub fn log_vec(&self) -> Vector3<f64> {
        let m = &self.m;
        let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let w = Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        ) * 0.5;
        let sin = w.norm();
        let theta = sin.atan2(cos);

        if cos > NEAR_PI_COS {
            if sin == 0.0 {
                return Vector3::zeros();
            }
            return w * (theta / sin);
        }

        // Near a half turn: (R + Rᵀ)/2 − cos·I = (1 − cos)·a·aᵀ.
        let sym = (m + m.transpose()) * 0.5;
        let one_minus = 1.0 - cos;
        let i = (0..3)
            .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
            .unwrap_or(0);
        let ai = ((sym[(i, i)] - cos) / one_minus).max(0.0).sqrt();
        let mut axis = Vector3::zeros();
        for j in 0..3 {
            axis[j] = if j == i {
                ai
            } else {
                sym[(i, j)] / (one_minus * ai)
            };
        }
        axis /= axis.norm();

        if sin < HALF_TURN_SIN {
            // Axis sign is free at θ = π: take the lexicographically larger of ±a.
            let first = axis.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
            if first < 0.0 {
                axis = -axis;
            }
        } else if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        axis * theta
    }

    /// First two columns flattened `[c0; c1]`.
    pub fn to_6d(&self) -> [f64; 6] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(1, 0)],
            m[(2, 0)],
            m[(0, 1)],
            m[(1, 1)],
            m[(2, 1)],
        ]
    }

    /// Gram–Schmidt on two columns, third column by cross product.
    pub fn from_6d(raw: &[f64; 6]) -> Result<Self> {
        let a1 = Vector3::new(raw[0], raw[1], raw[2]);
        let a2 = Vector3::new(raw[3], raw[4], raw[5]);
        let n1 = a1.norm();
        if !(n1 > DEGENERATE_EPS) {
            return Err(Error::DegenerateInput("first 6D column norm too small"));
        }
        let b1 = a1 / n1;
        let u2 = a2 - b1 * b1.dot(&a2);
        let n2 = u2.norm();
        if !(n2 > DEGENERATE_EPS) {
            return Err(Error::DegenerateInput("6D columns are parallel"));
        }
        let b2 = u2 / n2;
        let b3 = b1.cross(&b2);
        Ok(Self {
            m: Matrix3::from_columns(&[b1, b2, b3]),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.m - other.m).abs().max()
    }
}

impl LieGroup for Rotation3 {
    const N: usize = 3;
    const DOF: usize = 3;
    const REPR: usize = 6;

    fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    fn exp(v: &[f64]) -> Self {
        debug_assert_eq!(v.len(), 3);
        Self::exp_vec(&Vector3::new(v[0], v[1], v[2]))
    }

    fn log(&self) -> Vec<f64> {
        self.log_vec().iter().copied().collect()
    }

    fn compose(&self, rhs: &Self) -> Self {
        Self { m: self.m * rhs.m }
    }

    fn inverse(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    /// Uniform unit quaternion (normalised 4D Gaussian) converted to a matrix.
    fn sample_haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let n2: f64 = q.iter().map(|x| x * x).sum();
            if n2 > 1e-12 {
                return Self::from_quaternion(q[0], q[1], q[2], q[3]);
            }
        }
    }

    fn truncate(&self) -> Vec<f64> {
        self.to_6d().to_vec()
    }

    fn project(raw: &[f64]) -> Result<Self> {
        let arr: &[f64; 6] = raw.try_into().map_err(|_| Error::ShapeMismatch {
            op: "Rotation3::project",
            expected: vec![6],
            got: vec![raw.len()],
        })?;
        Self::from_6d(arr)
    }

    fn matrix_entries(&self) -> Vec<f64> {
        // nalgebra is column-major; emit row-major.
        self.m.transpose().iter().copied().collect()
    }

    fn angle(&self) -> f64 {
        self.log_vec().norm()
    }

    fn orthonormality_error(&self) -> f64 {
        (self.m.transpose() * self.m - Matrix3::identity()).abs().max()
    }

    fn determinant(&self) -> f64 {
        self.m.determinant()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::PI;

    #[test]
    fn exp_examples() {
        assert_eq!(Rotation3::exp(&[0.0, 0.0, 0.0]), Rotation3::identity());
        let half = Rotation3::exp(&[PI, 0.0, 0.0]);
        let expect = Rotation3::from_matrix_unchecked(Matrix3::from_diagonal(&Vector3::new(
            1.0, -1.0, -1.0,
        )));
        assert!(half.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn log_identity_is_zero() {
        assert_eq!(Rotation3::identity().log(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_turn_tie_break_is_deterministic() {
        for axis in [
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, -0.6, 0.8),
            Vector3::new(-0.48, 0.6, 0.64),
        ] {
            let r = Rotation3::exp_vec(&(axis * PI));
            let v = r.log_vec();
            assert!((v.norm() - PI).abs() < 1e-12);
            let first = v.iter().copied().find(|c| c.abs() > 1e-12).unwrap();
            assert!(first > 0.0, "{v:?}");
            assert!(Rotation3::exp_vec(&v).max_abs_diff(&r) < 1e-12);
        }
    }

    #[test]
    fn near_half_turn_keeps_sign() {
        let axis = Vector3::new(0.3, -0.4, 0.5).normalize();
        for delta in [1e-3, 1e-6, 1e-9] {
            for sign in [1.0, -1.0] {
                let v = axis * (sign * (PI - delta));
                let back = Rotation3::exp_vec(&v).log_vec();
                assert!((back - v).abs().max() < 1e-8, "{delta} {sign}");
            }
        }
    }

    #[test]
    fn small_angles() {
        for scale in [1e-12, 1e-8, 1e-5, 1e-3] {
            let v = Vector3::new(0.2, -0.5, 0.7) * scale;
            let r = Rotation3::exp_vec(&v);
            assert!(r.is_valid());
            assert!((r.log_vec() - v).abs().max() < 1e-15_f64.max(scale * 1e-10));
        }
    }

    #[test]
    fn six_d_round_trip_and_scale_invariance() {
        assert_eq!(
            Rotation3::identity().to_6d(),
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        let mut r = rng::stream(5, "so3-test", 0);
        for _ in 0..1000 {
            let g = Rotation3::sample_haar(&mut r);
            assert!(Rotation3::from_6d(&g.to_6d()).unwrap().max_abs_diff(&g) < 1e-12);
            let scaled = g.to_6d().map(|x| 3.0 * x);
            assert!(Rotation3::from_6d(&scaled).unwrap().max_abs_diff(&g) < 1e-12);
        }
    }

    #[test]
    fn six_d_degenerate_inputs() {
        assert!(matches!(
            Rotation3::from_6d(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            Rotation3::from_6d(&[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]),
            Err(Error::DegenerateInput(_))
        ));
    }
}
