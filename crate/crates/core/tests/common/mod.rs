//! Oracles shared by the generator tests and the acceptance suite. Each
//! returns the measured quantity; callers decide the tolerance.
#![allow(dead_code)]

use mflow::gen::{
    regression_loss_grads, DiffusionSchedule, Diffusion, Element, Flow, Formulation, Layout, State,
    DEFAULT_TRAIN_STEPS,
};
use mflow::lie::{angle_between, geodesic_interp, LieGroup, Rotation3};
use mflow::nn::{AdamWConfig, Module, Network, NetworkConfig, SetEncoder, SetEncoderConfig, Tape, Tensor, Trainer};
use mflow::rng;
use mflow::Result;
use rand::Rng;
use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Largest relative error of the Monte-Carlo variance of `z_t` against
/// `1 − ᾱ`, and largest absolute error of its mean against `√ᾱ·z1`, over a few
/// steps of the cosine schedule with `n` draws each.
pub fn forward_noise_moments(n: usize) -> (f64, f64) {
    let s = DiffusionSchedule::cosine(DEFAULT_TRAIN_STEPS).unwrap();
    let z1 = [0.7, -0.3];
    let mut r = rng::stream(1, "oracle-forward", 0);
    let (mut var_err, mut mean_err) = (0.0f64, 0.0f64);
    for step in [0, 10, 50, 90, 99] {
        let a = s.alpha_bar()[step];
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let eps = (0..2).map(|_| r.sample(StandardNormal)).collect();
            let x = s.perturb_at(&z1, step, eps).z_t;
            for c in 0..2 {
                sum[c] += x[c];
                sq[c] += x[c] * x[c];
            }
        }
        for c in 0..2 {
            let m = sum[c] / n as f64;
            let v = (sq[c] - n as f64 * m * m) / (n - 1) as f64;
            mean_err = mean_err.max((m - a.sqrt() * z1[c]).abs());
            var_err = var_err.max((v - (1.0 - a)).abs() / (1.0 - a));
        }
    }
    (var_err, mean_err)
}

/// Noise predictor that knows the clean targets, one per batch row.
pub fn oracle_noise(schedule: DiffusionSchedule, targets: Vec<Vec<f64>>) -> impl Fn(&Tensor, &[f64], &Tensor) -> Result<Tensor> {
    move |z: &Tensor, t: &[f64], _c: &Tensor| {
        let i = (t[0] * schedule.len() as f64).round() as usize - 1;
        let a = schedule.alpha_bar()[i];
        let rows: Vec<Vec<f64>> = (0..z.rows())
            .map(|r| {
                z.row(r)
                    .iter()
                    .zip(&targets[r])
                    .map(|(zi, x)| (zi - a.sqrt() * x) / (1.0 - a).sqrt())
                    .collect()
            })
            .collect();
        Tensor::from_rows(&rows, z.cols())
    }
}

/// Worst absolute reconstruction error of DDIM driven by the oracle noise,
/// over several step counts.
pub fn ddim_oracle_reconstruction() -> f64 {
    let schedule = DiffusionSchedule::cosine(DEFAULT_TRAIN_STEPS).unwrap();
    let d = Diffusion::new(Layout::vector(3), schedule.clone());
    let mut r = rng::stream(2, "oracle-ddim", 0);
    let targets: Vec<Vec<f64>> = (0..16).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let cond = Tensor::zeros(&[16, 0]);
    let field = oracle_noise(schedule, targets.clone());
    let mut worst = 0.0f64;
    for k in [1, 2, 4, 10, 50, 100] {
        let starts: Vec<Vec<f64>> = (0..16).map(|_| d.sample_start(&mut r)).collect();
        let out = d.integrate_flat(&field, starts, &cond, k).unwrap();
        for (o, t) in out.iter().zip(&targets) {
            for (a, b) in o.iter().zip(t) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Marginal velocity of the straight-path flow from N(0, 1) to the two-point
/// law `½δ₋₁ + ½δ₊₁`: `(E[z1 | z_t = x] − x)/(1 − t)` with
/// `E[z1 | x] = tanh(t·x/(1 − t)²)`.
pub fn two_point_velocity(z: &Tensor, t: &[f64], _c: &Tensor) -> Result<Tensor> {
    let data = z
        .data()
        .iter()
        .zip(t)
        .map(|(x, t)| ((t * x / ((1.0 - t) * (1.0 - t))).tanh() - x) / (1.0 - t))
        .collect();
    Tensor::matrix(z.rows(), 1, data)
}

/// Fraction of end points above zero and mean distance to the nearest mode.
pub fn split_and_spread(ends: &[State]) -> (f64, f64) {
    let xs: Vec<f64> = ends.iter().map(|s| s.euclidean()[0]).collect();
    let pos = xs.iter().filter(|x| **x > 0.0).count() as f64 / xs.len() as f64;
    let dist = xs.iter().map(|x| (x.abs() - 1.0).abs()).sum::<f64>() / xs.len() as f64;
    (pos, dist)
}

/// Integrates `field` from `n` standard-normal starts of a 1-D flow.
pub fn one_dim_ends(field: &dyn mflow::gen::Field, n: usize, k: usize, seed: u64) -> Vec<State> {
    let flow = Flow::new(Layout::vector(1), Formulation::Euclidean);
    let mut r = rng::stream(seed, "oracle-starts", 0);
    let starts: Vec<State> = (0..n).map(|_| flow.sample_start(&mut r)).collect();
    flow.integrate(field, starts, &Tensor::zeros(&[n, 0]), k).unwrap()
}

/// Trains a small field on the two-point law and returns it.
pub fn train_two_point(seed: u64, steps: usize) -> Network {
    let flow = Flow::new(Layout::vector(1), Formulation::Euclidean);
    let cfg = NetworkConfig {
        hidden: vec![64, 64],
        time_dim: 16,
        time_scale: 10.0,
        ..NetworkConfig::toy(1, 1)
    };
    let mut net = Network::new(cfg, &mut rng::stream(seed, rng::INIT, 0));
    let mut trainer = Trainer::new(&net, AdamWConfig::new(3e-3, 0.0, 0, steps as u64), None);
    let batch = 256;
    let cond = Tensor::zeros(&[batch, 0]);
    for step in 0..steps {
        let mut r = rng::stream(seed, rng::TRAIN, step as u64);
        let z1: Vec<State> = (0..batch)
            .map(|_| State(vec![Element::Vector(vec![if r.random::<bool>() { 1.0 } else { -1.0 }])]))
            .collect();
        let b = flow.make_batch(&z1, &mut r).unwrap();
        let (_, grads) = regression_loss_grads(&net, &b, &cond).unwrap();
        trainer.step(&mut net, &grads).unwrap();
    }
    net
}

/// Largest deviation of interpolants and Euler iterates from the straight
/// line through their end points.
pub fn straight_path_deviation() -> f64 {
    let flow = Flow::new(Layout::vector(4), Formulation::Euclidean);
    let mut r = rng::stream(3, "oracle-collinear", 0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let z0 = flow.sample_start(&mut r);
        let z1 = flow.sample_start(&mut r);
        let (a, b) = (z0.euclidean(), z1.euclidean());
        for t in [0.0, 0.13, 0.5, 0.71, 1.0] {
            let s = flow.interpolate(&z0, &z1, t).unwrap();
            for ((x, p), q) in s.z_t.euclidean().iter().zip(&a).zip(&b) {
                worst = worst.max((x - (p + t * (q - p))).abs());
            }
            for ((v, p), q) in s.target_velocity.iter().zip(&a).zip(&b) {
                worst = worst.max((v - (q - p)).abs());
            }
        }
        // The conditional field of this pair is constant, so every Euler
        // iterate stays on the segment.
        let v: Vec<f64> = b.iter().zip(&a).map(|(q, p)| q - p).collect();
        let field = move |z: &Tensor, _t: &[f64], _c: &Tensor| Tensor::from_rows(&[v.clone()], z.cols());
        let k = 7;
        let mut iterates = Vec::new();
        flow.integrate_with(&field, vec![z0.clone()], &Tensor::zeros(&[1, 0]), k, |i, z| {
            iterates.push((i, z[0].euclidean()))
        })
        .unwrap();
        for (i, x) in iterates {
            let t = i as f64 / k as f64;
            for ((xi, p), q) in x.iter().zip(&a).zip(&b) {
                worst = worst.max((xi - (p + t * (q - p))).abs());
            }
        }
    }
    worst
}

/// Unit quaternion `[w, x, y, z]` of a rotation matrix (Shepperd's method).
pub fn quat_of(m: &Matrix3<f64>) -> [f64; 4] {
    let tr = m.trace();
    let q = if tr > m[(0, 0)].max(m[(1, 1)]).max(m[(2, 2)]) {
        let s = 2.0 * (1.0 + tr).sqrt();
        [s / 4.0, (m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s]
    } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
        let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
        [(m[(2, 1)] - m[(1, 2)]) / s, s / 4.0, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s]
    } else if m[(1, 1)] >= m[(2, 2)] {
        let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
        [(m[(0, 2)] - m[(2, 0)]) / s, (m[(0, 1)] + m[(1, 0)]) / s, s / 4.0, (m[(1, 2)] + m[(2, 1)]) / s]
    } else {
        let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
        [(m[(1, 0)] - m[(0, 1)]) / s, (m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, s / 4.0]
    };
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

pub fn matrix_of(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
    )
}

/// Shortest-arc spherical interpolation of unit quaternions.
pub fn slerp(q0: [f64; 4], mut q1: [f64; 4], t: f64) -> [f64; 4] {
    let mut d: f64 = q0.iter().zip(&q1).map(|(a, b)| a * b).sum();
    if d < 0.0 {
        q1 = q1.map(|v| -v);
        d = -d;
    }
    let omega = d.min(1.0).acos();
    if omega < 1e-12 {
        return q0;
    }
    let (a, b) = (((1.0 - t) * omega).sin() / omega.sin(), (t * omega).sin() / omega.sin());
    [0, 1, 2, 3].map(|i| a * q0[i] + b * q1[i])
}

/// Largest entry-wise gap between the SO(3) geodesic and quaternion slerp over
/// `n` Haar pairs, away from the half-turn cut locus.
pub fn slerp_disagreement(n: usize) -> f64 {
    let mut r = rng::stream(23, "lie-props-slerp", 0);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < n {
        let a = Rotation3::sample_haar(&mut r);
        let b = Rotation3::sample_haar(&mut r);
        // The shortest arc is ambiguous at a half turn.
        if angle_between(&a, &b) > PI - 1e-3 {
            continue;
        }
        let (qa, qb) = (quat_of(a.matrix()), quat_of(b.matrix()));
        for t in [0.0, 0.1, 0.25, 0.5, 0.77, 1.0] {
            let ours = geodesic_interp(&a, &b, t);
            let oracle = matrix_of(slerp(qa, qb, t));
            worst = worst.max((ours.matrix() - oracle).abs().max());
        }
        checked += 1;
    }
    worst
}

/// Largest matrix-entry error of `Exp(Log(g))` over `n` Haar samples.
pub fn exp_log_round_trip<G: LieGroup>(n: usize) -> f64 {
    let mut r = rng::stream(5, "lie-props-round-trip", G::N as u64);
    (0..n)
        .map(|_| {
            let g = G::sample_haar(&mut r);
            max_diff(&g.matrix_entries(), &G::exp(&g.log()).matrix_entries())
        })
        .fold(0.0, f64::max)
}


pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest error of `project(truncate(g))` against `g` over `n` Haar samples.
pub fn truncate_project_round_trip<G: LieGroup>(n: usize) -> f64 {
    let mut r = rng::stream(6, "lie-truncate", G::N as u64);
    (0..n)
        .map(|_| {
            let g = G::sample_haar(&mut r);
            max_diff(&G::project(&g.truncate()).unwrap().matrix_entries(), &g.matrix_entries())
        })
        .fold(0.0, f64::max)
}

pub const H: f64 = 1e-5;

pub fn normal_tensor<R: Rng>(shape: &[usize], r: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// `Σ w ⊙ net(z, t, cond)`, evaluated without a tape.
fn objective(net: &Network, z: &Tensor, t: &[f64], cond: &Tensor, w: &Tensor) -> f64 {
    let out = net.predict(z, t, cond).unwrap();
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn random_network(case: u64) -> (Network, Tensor, Vec<f64>, Tensor, Tensor) {
    let mut r = rng::stream(case, "fd-check", 0);
    let batch = r.random_range(1..5);
    let state = r.random_range(1..5);
    let cond = r.random_range(0..4);
    let out = r.random_range(1..4);
    let hidden: Vec<usize> = (0..r.random_range(1..4)).map(|_| r.random_range(2..9)).collect();
    let cfg = NetworkConfig {
        state_dim: state,
        cond_dim: cond,
        out_dim: out,
        hidden,
        time_dim: 2 * r.random_range(1..5),
        time_scale: 10.0,
        zero_final: false,
    };
    let net = Network::new(cfg, &mut r);
    let z = normal_tensor(&[batch, state], &mut r);
    let t: Vec<f64> = (0..batch).map(|_| r.random()).collect();
    let c = normal_tensor(&[batch, cond], &mut r);
    let w = normal_tensor(&[batch, out], &mut r);
    (net, z, t, c, w)
}

/// Worst relative error between tape gradients (inputs and parameters) and
/// central differences over random networks; also checks that the
/// forward/backward pair agrees with the tape.
pub fn network_fd_worst(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let (mut net, z, t, c, w) = random_network(case);

        // Inputs registered ahead of the network come back first.
        let mut tape = Tape::new();
        let zv = tape.param(&z);
        let cv = tape.param(&c);
        let out = net.record(&mut tape, zv, &t, cv).unwrap();
        let grads = tape.backward(out, w.clone()).unwrap();
        assert_eq!(grads.len(), 2 + net.params().len());

        let mut check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * H);
            worst = worst.max(rel_err(analytic, numeric));
        };
        for i in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp.data_mut()[i] += H;
            zm.data_mut()[i] -= H;
            check(grads[0].data()[i], objective(&net, &zp, &t, &c, &w), objective(&net, &zm, &t, &c, &w));
        }
        for i in 0..c.len() {
            let (mut cp, mut cm) = (c.clone(), c.clone());
            cp.data_mut()[i] += H;
            cm.data_mut()[i] -= H;
            check(grads[1].data()[i], objective(&net, &z, &t, &cp, &w), objective(&net, &z, &t, &cm, &w));
        }

        // The forward/backward pair agrees with the tape.
        net.forward(&z, &t, &c).unwrap();
        let param_grads = net.backward(&w).unwrap();
        assert_eq!(param_grads[..], grads[2..]);

        for p in 0..param_grads.len() {
            for i in 0..param_grads[p].len() {
                let base = net.params()[p].data()[i];
                net.params_mut()[p].data_mut()[i] = base + H;
                let plus = objective(&net, &z, &t, &c, &w);
                net.params_mut()[p].data_mut()[i] = base - H;
                let minus = objective(&net, &z, &t, &c, &w);
                net.params_mut()[p].data_mut()[i] = base;
                check(param_grads[p].data()[i], plus, minus);
            }
        }
    }
    worst
}

pub fn permuted(points: &Tensor, perm: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&i| points.row(i).to_vec()).collect();
    Tensor::from_rows(&rows, points.cols()).unwrap()
}

/// The encoding is a feature-wise max over per-point features. Each point's
/// features are bit-identical to evaluating that point alone, and a max of
/// floats involves no rounding, so the result depends only on the multiset of
/// points. Checking the generators of S₁₆ (transpositions `(0 i)` and the
/// 16-cycle) plus random permutations exercises both facts.
/// Returns the number of permutations checked; panics on any mismatch.
pub fn check_permutation_invariance() -> usize {
    let mut r = rng::stream(4, "perm-invariance", 0);
    let enc = SetEncoder::new(
        SetEncoderConfig { point_dim: 4, hidden: vec![32], out_dim: 32 },
        &mut r,
    );
    let points = normal_tensor(&[16, 4], &mut r);

    let feats = enc.point_features(&points).unwrap();
    for i in 0..16 {
        let alone = enc.point_features(&permuted(&points, &[i])).unwrap();
        assert_eq!(alone.data(), feats.row(i), "row {i} depends on its neighbours");
    }

    let reference = enc.encode_set(&points).unwrap();
    let batched = enc.encode_batch(&points, &[0, 16]).unwrap();
    assert_eq!(batched.data(), reference.data());

    let mut perms: Vec<Vec<usize>> = (1..16)
        .map(|i| {
            let mut p: Vec<usize> = (0..16).collect();
            p.swap(0, i);
            p
        })
        .collect();
    perms.push((0..16).map(|i| (i + 1) % 16).collect());
    for _ in 0..500 {
        let mut p: Vec<usize> = (0..16).collect();
        p.shuffle(&mut r);
        perms.push(p);
    }
    for p in &perms {
        let shuffled = permuted(&points, p);
        assert_eq!(enc.encode_set(&shuffled).unwrap().data(), reference.data(), "perm {p:?}");
        assert_eq!(enc.encode_batch(&shuffled, &[0, 16]).unwrap().data(), reference.data());
    }
    perms.len()
}

