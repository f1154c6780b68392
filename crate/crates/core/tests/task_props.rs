//! Point-set processing, demonstration statistics and grid emission.

use mflow::eval::{emit_grid, parse_grid, ErrorGrid, GridKind};
use mflow::rng;
use mflow::tasks::{generate_expert, process_pointset, Bounds, Point, ReachConfig, Scene2D};
use proptest::prelude::*;
use rand::Rng;
use std::collections::HashMap;

fn cloud_strategy() -> impl Strategy<Value = Vec<Vec<Point>>> {
    let point = (-0.2f64..1.2, -0.2f64..1.2, 0u8..2).prop_map(|(x, y, t)| [x, y, t as f64]);
    proptest::collection::vec(proptest::collection::vec(point, 1..200), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn processing_is_idempotent(clouds in cloud_strategy(), voxel in 0.02f64..0.3) {
        let bounds = Bounds::UNIT;
        if let Ok(once) = process_pointset(&clouds, voxel, &bounds) {
            let twice = process_pointset(std::slice::from_ref(&once), voxel, &bounds).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert!(once.iter().all(|p| bounds.contains(p[0], p[1])));
            // At most one point per voxel.
            let mut keys: Vec<(i64, i64)> = once
                .iter()
                .map(|p| ((p[0] / voxel).floor() as i64, (p[1] / voxel).floor() as i64))
                .collect();
            let n = keys.len();
            keys.dedup();
            prop_assert_eq!(keys.len(), n);
        }
    }

    #[test]
    fn merging_order_does_not_change_the_set(clouds in cloud_strategy()) {
        let bounds = Bounds::UNIT;
        let mut reversed = clouds.clone();
        reversed.reverse();
        let a = process_pointset(&clouds, 0.1, &bounds);
        let b = process_pointset(&reversed, 0.1, &bounds);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.len(), b.len());
                for (p, q) in a.iter().zip(&b) {
                    for c in 0..3 {
                        prop_assert!((p[c] - q[c]).abs() < 1e-12);
                    }
                }
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }
}

/// Hash-grid oracle: bucket, average, sort by voxel index.
fn grid_hash(points: &[Point], voxel: f64) -> Vec<Point> {
    let mut cells: HashMap<(i64, i64), Vec<Point>> = HashMap::new();
    for p in points.iter().filter(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])) {
        cells
            .entry(((p[0] / voxel).floor() as i64, (p[1] / voxel).floor() as i64))
            .or_default()
            .push(*p);
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort();
    keys.iter()
        .map(|k| {
            let ps = &cells[k];
            let n = ps.len() as f64;
            [0, 1, 2].map(|c| ps.iter().map(|p| p[c]).sum::<f64>() / n)
        })
        .collect()
}

#[test]
fn downsampling_matches_a_hash_grid() {
    let mut r = rng::stream(7, "pointset-oracle", 0);
    let points: Vec<Point> = (0..1000)
        .map(|_| [r.random_range(-0.1..1.1), r.random_range(-0.1..1.1), r.random_range(0..2) as f64])
        .collect();
    let ours = process_pointset(&[points.clone()], 0.1, &Bounds::UNIT).unwrap();
    let oracle = grid_hash(&points, 0.1);
    assert_eq!(ours.len(), oracle.len());
    assert!(ours.len() <= 100);
    for (p, q) in ours.iter().zip(&oracle) {
        for c in 0..3 {
            assert!((p[c] - q[c]).abs() < 1e-12, "{p:?} vs {q:?}");
        }
    }
}

#[test]
fn multimodal_demos_pick_each_side_half_the_time() {
    let cfg = ReachConfig::multimodal();
    let mut r = rng::stream(8, rng::DATA, 0);
    let mut plus = 0;
    for _ in 0..1000 {
        let scene = Scene2D::sample(&cfg, &mut r);
        let ep = generate_expert(&scene, &cfg, &mut r).unwrap();
        assert!(ep.success);
        ep.validate(&cfg).unwrap();
        assert!(ep.side == 1.0 || ep.side == -1.0);
        // The path bends towards the drawn side.
        let mid = &ep.actions[ep.actions.len() / 2];
        assert_eq!(scene.lateral_offset(mid.pos).signum(), ep.side);
        plus += (ep.side > 0.0) as usize;
    }
    let frac = plus as f64 / 1000.0;
    assert!((frac - 0.5).abs() < 0.05, "positive side fraction {frac}");
}

#[test]
fn unimodal_demos_never_detour() {
    let cfg = ReachConfig::default();
    let mut r = rng::stream(9, rng::DATA, 0);
    for _ in 0..50 {
        let scene = Scene2D::sample(&cfg, &mut r);
        let ep = generate_expert(&scene, &cfg, &mut r).unwrap();
        assert_eq!(ep.side, 0.0);
        assert!(ep.success);
    }
}

#[test]
fn grids_survive_a_csv_round_trip() {
    let mut r = rng::stream(10, "grid-round-trip", 0);
    for kind in [GridKind::Cartesian { cells: 8, extent: 3.0 }, GridKind::Angular { bins: 32 }] {
        let mut g = ErrorGrid::new(kind);
        for cell in 0..g.len() {
            // Leave some cells empty.
            if cell % 5 != 0 {
                for _ in 0..3 {
                    g.add(cell, r.random_range(0.0..180.0));
                }
            }
        }
        let parsed = parse_grid(&emit_grid(&g), kind).unwrap();
        for (a, b) in parsed.iter().zip(g.means()) {
            assert!(a == &b || (a.is_nan() && b.is_nan()));
        }
        let wrong = match kind {
            GridKind::Cartesian { .. } => GridKind::Cartesian { cells: 7, extent: 3.0 },
            GridKind::Angular { .. } => GridKind::Angular { bins: 31 },
        };
        assert!(parse_grid(&emit_grid(&g), wrong).is_err());
    }
}
