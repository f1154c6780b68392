//! Conditional flow matching on a product of vector spaces and rotation groups.
//!
//! Training pairs a start sample `z0` with a data sample `z1` and regresses the
//! constant velocity of the path joining them. Vector components use the
//! straight line `z0 + t·(z1 − z0)`; in the manifold formulation rotation
//! components use the geodesic `z0·Exp(t·Log(z0⁻¹z1))`. Sampling integrates the
//! learned field with forward Euler from `t = 0` to `t = 1`.

use super::state::{Element, Formulation, Layout, Segment, State};
use super::{Field, RegressionBatch};
use crate::lie::{geodesic_velocity, Igso3, LieGroup, Rotation2, Rotation3};
use crate::nn::Tensor;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// A `(z_t, t, target velocity)` training triple.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub z_t: State,
    pub t: f64,
    pub target_velocity: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Flow {
    layout: Layout,
    formulation: Formulation,
    so3_start: Option<Igso3>,
}

fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rotation_step<G: LieGroup>(z: &G, v: &[f64], dt: f64) -> G {
    let scaled: Vec<f64> = v.iter().map(|x| x * dt).collect();
    z.compose(&G::exp(&scaled))
}

impl Flow {
    pub fn new(layout: Layout, formulation: Formulation) -> Self {
        Self {
            layout,
            formulation,
            so3_start: None,
        }
    }

    /// Draws SO(3) start rotations from IGSO(3) instead of the Haar measure
    /// (manifold formulation only).
    pub fn with_igso3(mut self, start: Igso3) -> Self {
        self.so3_start = Some(start);
        self
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim(self.formulation)
    }

    pub fn velocity_dim(&self) -> usize {
        self.layout.velocity_dim(self.formulation)
    }

    /// Maps a data sample into flow coordinates: rotations are truncated in the
    /// Euclidean formulation and kept as group elements otherwise.
    pub fn to_flow_space(&self, z1: &State) -> Result<State> {
        self.layout.check(z1)?;
        Ok(match self.formulation {
            Formulation::Euclidean => State(
                z1.0.iter()
                    .map(|e| Element::Vector(e.euclidean()))
                    .collect(),
            ),
            Formulation::Manifold => z1.clone(),
        })
    }

    /// `z0`: standard normal on vector parts (all parts when Euclidean), Haar or
    /// IGSO(3) on rotations.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let elems = self
            .layout
            .segments()
            .iter()
            .map(|s| match (self.formulation, s) {
                (Formulation::Euclidean, _) | (_, Segment::Vector(_)) => {
                    Element::Vector(gaussian(s.euclidean_dim(), rng))
                }
                (Formulation::Manifold, Segment::So2) => Element::So2(Rotation2::sample_haar(rng)),
                (Formulation::Manifold, Segment::So3) => Element::So3(match &self.so3_start {
                    Some(igso3) => igso3.sample(rng),
                    None => Rotation3::sample_haar(rng),
                }),
            })
            .collect();
        State(elems)
    }

    /// Training triple for given `z0`, flow-space `z1` and `t`.
    pub fn interpolate(&self, z0: &State, z1: &State, t: f64) -> Result<FlowSample> {
        if z0.0.len() != z1.0.len() {
            return Err(Error::config("start and target states differ in length"));
        }
        let mut z_t = Vec::with_capacity(z0.0.len());
        let mut target = Vec::with_capacity(self.velocity_dim());
        for (a, b) in z0.0.iter().zip(&z1.0) {
            match (a, b) {
                (Element::Vector(x0), Element::Vector(x1)) if x0.len() == x1.len() => {
                    let v: Vec<f64> = x1.iter().zip(x0).map(|(p, q)| p - q).collect();
                    z_t.push(Element::Vector(
                        x0.iter().zip(&v).map(|(x, vi)| x + t * vi).collect(),
                    ));
                    target.extend(v);
                }
                (Element::So2(r0), Element::So2(r1)) => {
                    let v = geodesic_velocity(r0, r1);
                    z_t.push(Element::So2(if t == 0.0 {
                        r0.clone()
                    } else {
                        rotation_step(r0, &v, t)
                    }));
                    target.extend(v);
                }
                (Element::So3(r0), Element::So3(r1)) => {
                    let v = geodesic_velocity(r0, r1);
                    z_t.push(Element::So3(if t == 0.0 {
                        r0.clone()
                    } else {
                        rotation_step(r0, &v, t)
                    }));
                    target.extend(v);
                }
                _ => return Err(Error::config("start and target states have different layouts")),
            }
        }
        Ok(FlowSample {
            z_t: State(z_t),
            t,
            target_velocity: target,
        })
    }

    /// Draws `t ~ U[0,1]` and `z0`, then builds the training triple for data sample `z1`.
    pub fn make_sample<R: Rng + ?Sized>(&self, z1: &State, rng: &mut R) -> Result<FlowSample> {
        let z1 = self.to_flow_space(z1)?;
        let t: f64 = rng.random();
        let z0 = self.sample_start(rng);
        self.interpolate(&z0, &z1, t)
    }

    /// Network input for a flow-space state.
    pub fn input(&self, z: &State) -> Vec<f64> {
        z.euclidean()
    }

    pub fn batch(&self, samples: &[FlowSample]) -> Result<RegressionBatch> {
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s| self.input(&s.z_t)).collect();
        let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target_velocity.clone()).collect();
        Ok(RegressionBatch {
            inputs: Tensor::from_rows(&inputs, self.input_dim())?,
            t: samples.iter().map(|s| s.t).collect(),
            targets: Tensor::from_rows(&targets, self.velocity_dim())?,
        })
    }

    pub fn make_batch<R: Rng + ?Sized>(&self, z1s: &[State], rng: &mut R) -> Result<RegressionBatch> {
        let samples = z1s
            .iter()
            .map(|z1| self.make_sample(z1, rng))
            .collect::<Result<Vec<_>>>()?;
        self.batch(&samples)
    }

    /// One Euler step: `z + v·dt` on vectors, `z·Exp(v·dt)` on rotations.
    pub fn advance(&self, z: &State, vel: &[f64], dt: f64) -> Result<State> {
        if vel.len() != self.velocity_dim() {
            return Err(Error::ShapeMismatch {
                op: "flow advance",
                expected: vec![self.velocity_dim()],
                got: vec![vel.len()],
            });
        }
        let mut at = 0;
        let mut out = Vec::with_capacity(z.0.len());
        for e in &z.0 {
            out.push(match e {
                Element::Vector(x) => {
                    let v = &vel[at..at + x.len()];
                    at += x.len();
                    Element::Vector(x.iter().zip(v).map(|(xi, vi)| xi + vi * dt).collect())
                }
                Element::So2(r) => {
                    let v = &vel[at..at + Rotation2::DOF];
                    at += Rotation2::DOF;
                    Element::So2(rotation_step(r, v, dt))
                }
                Element::So3(r) => {
                    let v = &vel[at..at + Rotation3::DOF];
                    at += Rotation3::DOF;
                    Element::So3(rotation_step(r, v, dt))
                }
            });
        }
        Ok(State(out))
    }

    /// Maps a flow-space end point back to the layout, projecting rotations
    /// in the Euclidean formulation.
    pub fn finish(&self, z: &State) -> Result<State> {
        match self.formulation {
            Formulation::Euclidean => self.layout.project(&z.euclidean()),
            Formulation::Manifold => Ok(z.clone()),
        }
    }

    /// Euler integration from the given starts with `dt = 1/k`, evaluating the
    /// field at `t = i/k` for `i = 0..k`. `visit` sees every intermediate batch,
    /// starting with the initial one.
    pub fn integrate_with<F: Field + ?Sized>(
        &self,
        field: &F,
        starts: Vec<State>,
        cond: &Tensor,
        k: usize,
        mut visit: impl FnMut(usize, &[State]),
    ) -> Result<Vec<State>> {
        if k == 0 {
            return Err(Error::config("number of integration steps must be at least 1"));
        }
        let b = starts.len();
        let dt = 1.0 / k as f64;
        let mut z = starts;
        visit(0, &z);
        for i in 0..k {
            let t = i as f64 / k as f64;
            let rows: Vec<Vec<f64>> = z.iter().map(|s| self.input(s)).collect();
            let inputs = Tensor::from_rows(&rows, self.input_dim())?;
            let vel = field.eval(&inputs, &vec![t; b], cond)?;
            if !vel.all_finite() {
                return Err(Error::NonFinite(format!("velocity at integration step {i}")));
            }
            z = z
                .iter()
                .enumerate()
                .map(|(j, s)| self.advance(s, vel.row(j), dt))
                .collect::<Result<_>>()?;
            visit(i + 1, &z);
        }
        z.iter().map(|s| self.finish(s)).collect()
    }

    pub fn integrate<F: Field + ?Sized>(
        &self,
        field: &F,
        starts: Vec<State>,
        cond: &Tensor,
        k: usize,
    ) -> Result<Vec<State>> {
        self.integrate_with(field, starts, cond, k, |_, _| {})
    }

    /// Draws one start per row of `cond` and integrates.
    pub fn sample<F: Field + ?Sized, R: Rng + ?Sized>(
        &self,
        field: &F,
        cond: &Tensor,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<State>> {
        let starts = (0..cond.rows()).map(|_| self.sample_start(rng)).collect();
        self.integrate(field, starts, cond, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn mixed() -> Layout {
        Layout::new([Segment::Vector(2), Segment::So2, Segment::So3])
    }

    fn target(r: &mut rng::Rng) -> State {
        State(vec![
            Element::Vector(vec![0.3, -0.7]),
            Element::So2(Rotation2::sample_haar(r)),
            Element::So3(Rotation3::sample_haar(r)),
        ])
    }

    #[test]
    fn euclidean_endpoints() {
        let flow = Flow::new(Layout::vector(3), Formulation::Euclidean);
        let z0 = State(vec![Element::Vector(vec![1.0, 2.0, 3.0])]);
        let z1 = State(vec![Element::Vector(vec![-0.5, 0.25, 8.0])]);
        let s0 = flow.interpolate(&z0, &z1, 0.0).unwrap();
        assert_eq!(s0.z_t, z0);
        assert_eq!(s0.target_velocity, vec![-1.5, -1.75, 5.0]);
        let s1 = flow.interpolate(&z0, &z1, 1.0).unwrap();
        assert_eq!(s1.z_t, z1);
        let same = flow.interpolate(&z1, &z1, 0.4).unwrap();
        assert!(same.target_velocity.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn manifold_endpoints() {
        let mut r = rng::stream(3, "cfm-test", 0);
        let flow = Flow::new(mixed(), Formulation::Manifold);
        for _ in 0..50 {
            let z1 = target(&mut r);
            let z0 = flow.sample_start(&mut r);
            assert_eq!(flow.interpolate(&z0, &z1, 0.0).unwrap().z_t, z0);
            let end = flow.interpolate(&z0, &z1, 1.0).unwrap().z_t;
            for (a, b) in end.0.iter().zip(&z1.0) {
                let d = a
                    .entries()
                    .iter()
                    .zip(b.entries())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(d < 1e-8);
            }
            let still = flow.interpolate(&z1, &z1, 0.7).unwrap();
            assert!(still.target_velocity.iter().all(|v| v.abs() < 1e-12));
            assert!(still.z_t.is_valid());
        }
    }

    #[test]
    fn zero_field_returns_start() {
        let mut r = rng::stream(4, "cfm-test", 0);
        let zero = |z: &Tensor, _: &[f64], _: &Tensor| -> Result<Tensor> {
            Ok(Tensor::zeros(&[z.rows(), 6]))
        };
        let flow = Flow::new(mixed(), Formulation::Manifold);
        let starts: Vec<State> = (0..4).map(|_| flow.sample_start(&mut r)).collect();
        let out = flow
            .integrate(&zero, starts.clone(), &Tensor::zeros(&[4, 0]), 10)
            .unwrap();
        for (a, b) in out.iter().zip(&starts) {
            for (x, y) in a.0.iter().zip(&b.0) {
                let d = x.entries().iter().zip(y.entries()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn constant_field_translates() {
        let flow = Flow::new(Layout::vector(2), Formulation::Euclidean);
        let c = [0.75, -2.5];
        let field = |z: &Tensor, _: &[f64], _: &Tensor| -> Result<Tensor> {
            Tensor::from_rows(&vec![c.to_vec(); z.rows()], 2)
        };
        let z0 = State(vec![Element::Vector(vec![0.1, 0.2])]);
        for k in [1, 3, 50] {
            let out = flow
                .integrate(&field, vec![z0.clone()], &Tensor::zeros(&[1, 0]), k)
                .unwrap();
            let v = out[0].euclidean();
            assert!((v[0] - 0.85).abs() < 1e-13 && (v[1] + 2.3).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_zero_steps() {
        let flow = Flow::new(Layout::vector(1), Formulation::Euclidean);
        let f = |z: &Tensor, _: &[f64], _: &Tensor| Ok(z.clone());
        assert!(flow
            .integrate(&f, vec![], &Tensor::zeros(&[0, 0]), 0)
            .is_err());
    }
}
