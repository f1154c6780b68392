use super::Rotation3;
use crate::{Error, Result};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

const GRID: usize = 4096;
const MAX_TERMS: usize = 20_000;

/// Isotropic Gaussian on SO(3) with concentration `eps`, sampled by inverse-CDF
/// lookup over a tabulated rotation-angle density.
///
/// Angle density: `(1 − cos ω)/π · Σₗ (2l+1) exp(−l(l+1)ε²) sin((l+½)ω) / sin(ω/2)`,
/// truncated once the weights fall below 1e-16. Axes are uniform on the sphere.
/// Large `eps` approaches the Haar distribution; small `eps` approaches an
/// isotropic normal in exponential coordinates with per-axis variance `2ε²`.
#[derive(Clone, Debug)]
pub struct Igso3 {
    eps: f64,
    omega: Vec<f64>,
    cdf: Vec<f64>,
}

impl Igso3 {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.05) {
            return Err(Error::config(format!(
                "IGSO(3) concentration must be finite and >= 0.05, got {eps}"
            )));
        }
        let weights: Vec<f64> = (0..MAX_TERMS)
            .map(|l| {
                let l = l as f64;
                (2.0 * l + 1.0) * (-l * (l + 1.0) * eps * eps).exp()
            })
            .take_while(|w| *w > 1e-16)
            .collect();

        let omega: Vec<f64> = (0..=GRID).map(|i| PI * i as f64 / GRID as f64).collect();
        let density: Vec<f64> = omega
            .iter()
            .map(|&w| {
                let half_sin = (0.5 * w).sin();
                let series: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(l, c)| {
                        let l = l as f64;
                        let ratio = if half_sin < 1e-12 {
                            2.0 * l + 1.0
                        } else {
                            ((l + 0.5) * w).sin() / half_sin
                        };
                        c * ratio
                    })
                    .sum();
                ((1.0 - w.cos()) / PI * series).max(0.0)
            })
            .collect();

        let mut cdf = Vec::with_capacity(omega.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..omega.len() {
            acc += 0.5 * (density[i] + density[i - 1]) * (omega[i] - omega[i - 1]);
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        Ok(Self { eps, omega, cdf })
    }

    pub fn concentration(&self) -> f64 {
        self.eps
    }

    /// Rotation angle for a uniform variate `u ∈ [0, 1)`.
    pub fn angle_for(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|c| *c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.omega[j - 1] + frac * (self.omega[j] - self.omega[j - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Rotation3 {
        let angle = self.angle_for(rng.random::<f64>());
        let axis = loop {
            let v: Vector3<f64> = Vector3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        };
        Rotation3::exp_vec(&(axis * angle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LieGroup;
    use crate::rng;

    fn mean_angle(eps: f64, n: usize) -> f64 {
        let s = Igso3::new(eps).unwrap();
        let mut r = rng::stream(4, "igso3", (eps * 1000.0) as u64);
        (0..n).map(|_| s.sample(&mut r).angle()).sum::<f64>() / n as f64
    }

    #[test]
    fn wide_limit_is_haar() {
        // E[θ] under Haar = ∫ θ (1 − cos θ)/π dθ = π/2 + 2/π.
        let m = mean_angle(10.0, 50_000);
        assert!((m - (PI / 2.0 + 2.0 / PI)).abs() < 0.02, "{m}");
    }

    #[test]
    fn narrow_limit_is_gaussian() {
        // Mean norm of N(0, 2ε² I₃) is 2σ√(2/π) with σ = √2·ε, i.e. 4ε/√π.
        let eps = 0.1;
        let m = mean_angle(eps, 50_000);
        let gauss = eps * 4.0 / PI.sqrt();
        assert!((m - gauss).abs() < 0.01 * gauss + 0.002, "{m} vs {gauss}");
    }

    #[test]
    fn rejects_bad_concentration() {
        assert!(Igso3::new(0.0).is_err());
        assert!(Igso3::new(f64::NAN).is_err());
    }

    #[test]
    fn samples_are_rotations() {
        let s = Igso3::new(0.5).unwrap();
        let mut r = rng::stream(0, "igso3", 0);
        for _ in 0..1000 {
            assert!(s.sample(&mut r).is_valid());
        }
    }
}
