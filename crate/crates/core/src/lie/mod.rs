//! SO(2) and SO(3): exponential/logarithm maps, geodesics, Haar sampling and
//! the truncated rotation representations used as network inputs.
//!
//! Tangent vectors are exponential coordinates: one angle for SO(2), an
//! axis-angle vector for SO(3). [`LieGroup::log`] always returns the canonical
//! branch with rotation angle in `[0, π]`.

mod igso3;
mod so2;
mod so3;

pub use igso3::Igso3;
pub use so2::Rotation2;
pub use so3::Rotation3;

use crate::Result;
use rand::Rng;

/// Tolerance used by the orthonormality checks in tests and debug assertions.
pub const ORTHO_TOL: f64 = 1e-9;

/// Norm below which a rotation representation is rejected as degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Operations shared by [`Rotation2`] and [`Rotation3`].
///
/// Slice-based so that flow-matching code can treat both groups uniformly.
pub trait LieGroup: Clone + std::fmt::Debug + PartialEq + Send + Sync + 'static {
    /// Size of the square matrix.
    const N: usize;
    /// Dimension of the tangent space (1 or 3).
    const DOF: usize;
    /// Length of the truncated representation (2 or 6).
    const REPR: usize;

    fn identity() -> Self;

    /// `v.len()` must equal `DOF`.
    fn exp(v: &[f64]) -> Self;

    /// Canonical exponential coordinates, angle in `[0, π]`.
    fn log(&self) -> Vec<f64>;

    fn compose(&self, rhs: &Self) -> Self;

    fn inverse(&self) -> Self;

    fn sample_haar<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Leading columns of the matrix, flattened column after column.
    fn truncate(&self) -> Vec<f64>;

    /// Gram–Schmidt projection of an arbitrary truncated vector back to the group.
    fn project(raw: &[f64]) -> Result<Self>;

    /// Row-major matrix entries.
    fn matrix_entries(&self) -> Vec<f64>;

    /// Rotation angle `|Log(R)|` in radians.
    fn angle(&self) -> f64;

    /// `max |RᵀR − I|`.
    fn orthonormality_error(&self) -> f64;

    fn determinant(&self) -> f64;

    fn is_valid(&self) -> bool {
        self.orthonormality_error() <= ORTHO_TOL && (self.determinant() - 1.0).abs() <= ORTHO_TOL
    }
}

/// `z0 · Exp(t · Log(z0⁻¹ z1))`: the point at fraction `t` of the geodesic.
pub fn geodesic_interp<G: LieGroup>(z0: &G, z1: &G, t: f64) -> G {
    if t == 0.0 {
        return z0.clone();
    }
    let v = z0.inverse().compose(z1).log();
    let scaled: Vec<f64> = v.iter().map(|x| x * t).collect();
    z0.compose(&G::exp(&scaled))
}

/// Absolute angle `|Log(a⁻¹ b)|` in `[0, π]`.
pub fn angle_between<G: LieGroup>(a: &G, b: &G) -> f64 {
    a.inverse().compose(b).angle()
}

/// Target velocity of the geodesic path from `z0` to `z1`: `Log(z0⁻¹ z1)`.
pub fn geodesic_velocity<G: LieGroup>(z0: &G, z1: &G) -> Vec<f64> {
    z0.inverse().compose(z1).log()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::PI;

    fn round_trip_max<G: LieGroup>(n: usize) -> (f64, f64) {
        let mut r = rng::stream(11, "lie-test", G::N as u64);
        let mut exp_log = 0.0f64;
        let mut log_exp = 0.0f64;
        for _ in 0..n {
            let g = G::sample_haar(&mut r);
            let back = G::exp(&g.log());
            let err = g
                .matrix_entries()
                .iter()
                .zip(back.matrix_entries())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            exp_log = exp_log.max(err);

            // Tangent vectors strictly inside the canonical ball.
            let v = g.log();
            let shrunk: Vec<f64> = v.iter().map(|x| x * 0.999).collect();
            let again = G::exp(&shrunk).log();
            let err = shrunk
                .iter()
                .zip(&again)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            log_exp = log_exp.max(err);
        }
        (exp_log, log_exp)
    }

    #[test]
    fn exp_log_round_trips_so2_so3() {
        let (a, b) = round_trip_max::<Rotation2>(10_000);
        assert!(a < 1e-8 && b < 1e-8, "so2 {a} {b}");
        let (a, b) = round_trip_max::<Rotation3>(10_000);
        assert!(a < 1e-8 && b < 1e-8, "so3 {a} {b}");
    }

    #[test]
    fn geodesic_endpoints() {
        let mut r = rng::stream(1, "lie-test", 0);
        for _ in 0..200 {
            let a = Rotation3::sample_haar(&mut r);
            let b = Rotation3::sample_haar(&mut r);
            assert_eq!(geodesic_interp(&a, &b, 0.0), a);
            let end = geodesic_interp(&a, &b, 1.0);
            assert!(end.max_abs_diff(&b) < 1e-8);
            for t in [0.1, 0.5, 0.9] {
                assert!(geodesic_interp(&a, &b, t).is_valid());
            }
        }
    }

    #[test]
    fn so2_geodesic_midpoint() {
        let quarter = Rotation2::exp(&[PI / 2.0]);
        let mid = geodesic_interp(&Rotation2::identity(), &quarter, 0.5);
        assert!(mid.max_abs_diff(&Rotation2::exp(&[PI / 4.0])) < 1e-15);
    }

    #[test]
    fn angle_between_examples() {
        let mut r = rng::stream(2, "lie-test", 0);
        let a = Rotation3::sample_haar(&mut r);
        assert!(angle_between(&a, &a) < 1e-7);
        let q = Rotation2::exp(&[PI / 2.0]);
        assert!((angle_between(&Rotation2::identity(), &q) - PI / 2.0).abs() < 1e-15);
        for _ in 0..1000 {
            let a = Rotation3::sample_haar(&mut r);
            let b = Rotation3::sample_haar(&mut r);
            let (ab, ba) = (angle_between(&a, &b), angle_between(&b, &a));
            assert!((ab - ba).abs() < 1e-9);
            assert!((0.0..=PI).contains(&ab));
        }
    }

    #[test]
    fn group_closure() {
        let mut r = rng::stream(3, "lie-test", 0);
        for _ in 0..1000 {
            let a = Rotation3::sample_haar(&mut r);
            let b = Rotation3::sample_haar(&mut r);
            assert!(a.compose(&b).is_valid());
            let a = Rotation2::sample_haar(&mut r);
            let b = Rotation2::sample_haar(&mut r);
            assert!(a.compose(&b).is_valid());
        }
    }
}
