mod common;

use common::{corr, pose, ray, FIRE};
use fisheye_motion::constraints::{epipolar_frame, evaluate, fuse, ConstraintDeviations};
use fisheye_motion::pipeline::{evaluate_cell, segment, CellResult, GateReason, LikelihoodGrid};
use fisheye_motion::sim::{classify_oracle, generate, presets, triangulate_oracle, Sampling};
use fisheye_motion::{ConstraintConfig, RoadFrame};
use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;

fn vec3(range: std::ops::Range<f64>) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(range).prop_map(Vector3::from)
}

/// Two camera centers, a point and its displaced position; the road sits at z = 0.
#[derive(Debug, Clone)]
struct Scene {
    c_prev: Vector3<f64>,
    c_curr: Vector3<f64>,
    x_prev: Vector3<f64>,
    x_curr: Vector3<f64>,
}

fn scene() -> impl Strategy<Value = Scene> {
    (
        0.3..3.0f64,
        vec3(-1.0..1.0),
        vec3(-10.0..10.0),
        vec3(-1.5..1.5),
    )
        .prop_filter_map("degenerate geometry", |(eta, step, x, motion)| {
            let c_prev = Vector3::new(0.0, 0.0, eta);
            let c_curr = c_prev + step;
            let x_curr = x + motion;
            let ok = step.norm() > 1e-2
                && (x - c_prev).norm() > 1e-2
                && (x_curr - c_curr).norm() > 1e-2
                && (x - c_prev).normalize().cross(&step.normalize()).norm() > 1e-3;
            ok.then_some(Scene {
                c_prev,
                c_curr,
                x_prev: x,
                x_curr,
            })
        })
}

fn deviations(s: &Scene, road: &RoadFrame, cfg: &ConstraintConfig) -> ConstraintDeviations {
    let c = corr(ray(s.x_prev - s.c_prev), ray(s.x_curr - s.c_curr));
    evaluate(&c, &pose(s.c_prev), &pose(s.c_curr), road, cfg).unwrap()
}

fn all_values(d: &ConstraintDeviations) -> [f64; 5] {
    [d.xi_e, d.xi_d, d.xi_h, d.xi_p, d.xi]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn deviations_stay_in_unit_interval(s in scene()) {
        let road = RoadFrame::level(s.c_prev.z);
        let mut cfg = ConstraintConfig::default();
        for adaptive in [false, true] {
            cfg.adaptive_lambda_p = adaptive;
            let d = deviations(&s, &road, &cfg);
            for v in all_values(&d) {
                prop_assert!((0.0..=1.0).contains(&v), "{d:?}");
            }
        }
    }

    #[test]
    fn global_rotation_invariance(s in scene(), axis in vec3(-1.0..1.0), angle in -3.1..3.1f64) {
        prop_assume!(axis.norm() > 1e-3);
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        let road = RoadFrame::level(s.c_prev.z);
        let rotated = Scene {
            c_prev: r * s.c_prev,
            c_curr: r * s.c_curr,
            x_prev: r * s.x_prev,
            x_curr: r * s.x_curr,
        };
        let rotated_road = RoadFrame { eta_c: road.eta_c, r_c: *r.matrix() };
        let cfg = ConstraintConfig::default();
        let a = deviations(&s, &road, &cfg);
        let b = deviations(&rotated, &rotated_road, &cfg);
        for (x, y) in all_values(&a).iter().zip(all_values(&b)) {
            prop_assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn joint_scale_invariance(s in scene(), scale in 0.01..100.0f64) {
        let road = RoadFrame::level(s.c_prev.z);
        let scaled = Scene {
            c_prev: s.c_prev * scale,
            c_curr: s.c_curr * scale,
            x_prev: s.x_prev * scale,
            x_curr: s.x_curr * scale,
        };
        let cfg = ConstraintConfig::default();
        let a = deviations(&s, &road, &cfg);
        let b = deviations(&scaled, &RoadFrame::level(road.eta_c * scale), &cfg);
        for (x, y) in all_values(&a).iter().zip(all_values(&b)) {
            prop_assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn normal_is_orthogonal(s in scene()) {
        let p = ray(s.x_prev - s.c_prev);
        let f = epipolar_frame(&pose(s.c_prev), &pose(s.c_curr), &p, 1e-4).unwrap();
        let plane = f.plane.unwrap();
        prop_assert!(plane.normal.dot(&p).abs() < 1e-12);
        prop_assert!(plane.normal.dot(&plane.epipole).abs() < 1e-12);
        prop_assert!((plane.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_points_are_exact(s in scene()) {
        // same point seen twice, kept on or above the road
        let x = Vector3::new(s.x_prev.x, s.x_prev.y, s.x_prev.z.abs());
        let road = RoadFrame::level(s.c_prev.z);
        let fixed = Scene { x_curr: x, x_prev: x, ..s.clone() };
        prop_assume!((x - s.c_curr).norm() > 1e-2);
        prop_assume!((x - s.c_prev).normalize().cross(&(s.c_curr - s.c_prev).normalize()).norm() > 1e-3);
        let d = deviations(&fixed, &road, &ConstraintConfig::default());
        prop_assert!(d.xi_e < 1e-9 && d.xi_d < 1e-9, "{d:?}");

        let on_road = Vector3::new(x.x, x.y, 0.0);
        let fixed = Scene { x_curr: on_road, x_prev: on_road, ..s };
        prop_assume!((on_road - fixed.c_prev).normalize().cross(&(fixed.c_curr - fixed.c_prev).normalize()).norm() > 1e-3);
        let d = deviations(&fixed, &road, &ConstraintConfig::default());
        prop_assert!(d.xi < 1e-9, "{d:?}");
    }

    #[test]
    fn oracle_recovers_static_points(s in scene()) {
        let (p, q) = (ray(s.x_prev - s.c_prev), ray(s.x_prev - s.c_curr));
        prop_assume!(p.angle(&q) > 1e-3);
        let rec = triangulate_oracle(&p, &q, &s.c_prev, &s.c_curr);
        prop_assert!(rec.convergent);
        prop_assert!((rec.point - s.x_prev).norm() < 1e-9, "{rec:?}");
    }

    #[test]
    fn fuse_is_monotone_and_weight_scale_invariant(
        devs in prop::array::uniform4(0.0..1.0f64),
        bump in 0.0..0.5f64,
        which in 0usize..4,
        weights in prop::array::uniform4(0.01..2.0f64),
        k in 0.01..100.0f64,
    ) {
        let mut cfg = ConstraintConfig { weights, ..Default::default() };
        let d = ConstraintDeviations { xi_e: devs[0], xi_d: devs[1], xi_h: devs[2], xi_p: devs[3], ..Default::default() };
        let base = fuse(&d, &cfg);
        let mut raised = devs;
        raised[which] = (raised[which] + bump).min(1.0);
        let d2 = ConstraintDeviations { xi_e: raised[0], xi_d: raised[1], xi_h: raised[2], xi_p: raised[3], ..Default::default() };
        prop_assert!(fuse(&d2, &cfg) >= base);
        cfg.weights = weights.map(|w| w * k);
        prop_assert!((fuse(&d, &cfg) - base).abs() < 1e-12);
    }

    #[test]
    fn range_gate_never_drops_depth_detections(s in scene(), max_range in 0.01..5.0f64) {
        let c = corr(ray(s.x_prev - s.c_prev), ray(s.x_curr - s.c_curr));
        let road = RoadFrame::level(s.c_prev.z);
        let cell = evaluate_cell(&c, &pose(s.c_prev), &pose(s.c_curr), &road, &ConstraintConfig::default(), Some(max_range));
        if cell.deviations.xi_d > 0.0 {
            prop_assert!(cell.gate.is_none());
            prop_assert_eq!(cell.xi(), cell.deviations.xi);
        }
    }

    #[test]
    fn segmentation_is_monotone_and_ignores_gated_cells(
        xis in prop::collection::vec(0.0..0.05f64, 48),
        gated in prop::collection::vec(any::<bool>(), 48),
        t1 in 0.001..0.05f64,
        t2 in 0.001..0.05f64,
        min_region in 1usize..4,
    ) {
        let cells = xis.iter().zip(&gated).map(|(&xi, &g)| {
            let mut c = if g { CellResult::gated(GateReason::OutOfRange) } else { CellResult::default() };
            c.deviations.xi = xi;
            c
        }).collect();
        let grid = LikelihoodGrid { rows: 6, cols: 8, cell_size: 5, cells };
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let a = segment(&grid, lo, min_region);
        let b = segment(&grid, hi, min_region);
        for ((&lo_set, &hi_set), &g) in a.mask.iter().zip(&b.mask).zip(&gated) {
            prop_assert!(!hi_set || lo_set);
            prop_assert!(!(g && lo_set));
        }
        prop_assert_eq!(&segment(&grid, lo, min_region), &a);
    }
}

#[test]
fn simulated_rays_match_world_geometry_and_oracle() {
    for name in presets::PRESET_NAMES {
        let scene = generate(&presets::preset(name).unwrap()).unwrap();
        for f in &scene.frames {
            for s in f.samples.iter().filter(|s| !s.is_moving) {
                let rec =
                    triangulate_oracle(&s.corr.p, &s.corr.p_curr, &f.prev.center, &f.curr.center);
                if f.ego_static(1e-4) || s.corr.p.angle(&s.corr.p_curr) < 1e-3 {
                    continue;
                }
                assert!(
                    (rec.point - s.world_prev).norm() < 1e-9,
                    "{name}: {rec:?} vs {:?}",
                    s.world_prev
                );
            }
        }
    }
}

/// Noise-free scenes: the constraints fire where the reconstruction says they should.
#[test]
fn constraints_agree_with_oracle_on_simulated_scenes() {
    let cfg = ConstraintConfig::default();
    for name in [
        "crossing",
        "overtaking",
        "preceding",
        "approaching",
        "static_ground",
    ] {
        let mut spec = presets::preset(name).unwrap();
        spec.sampling = Sampling::Pixel;
        spec.frames = 3;
        let scene = generate(&spec).unwrap();
        let (mut total, mut agree) = (0usize, 0usize);
        for f in &scene.frames {
            for s in &f.samples {
                let Ok(d) = evaluate(&s.corr, &f.prev, &f.curr, &scene.road, &cfg) else {
                    continue;
                };
                let v = classify_oracle(
                    &s.corr.p,
                    &s.corr.p_curr,
                    &f.prev.center,
                    &f.curr.center,
                    &scene.road,
                    1e-9,
                    1e-6,
                );
                let expected = [
                    v.expected.epipolar,
                    v.expected.depth,
                    v.expected.height,
                    v.expected.antiparallel,
                ];
                let ok = expected.iter().zip(d.as_array()).all(|(&e, dev)| {
                    if e {
                        dev > FIRE
                    } else {
                        dev < FIRE * 10.0
                    }
                });
                total += 1;
                agree += ok as usize;
            }
        }
        let rate = agree as f64 / total as f64;
        assert!(rate >= 0.99, "{name}: agreement {rate} over {total}");
    }
}

#[test]
fn known_false_positive_point() {
    // camera 2.5 m above the road, static point 2 m up and 2.5 m ahead
    let c_prev = Vector3::new(0.0, 0.0, 2.5);
    let c_curr = Vector3::new(0.5, 0.0, 2.5);
    let x = Vector3::new(2.5, 0.5, 2.0);
    let cfg = ConstraintConfig::default();
    let d = evaluate(
        &corr(ray(x - c_prev), ray(x - c_curr)),
        &pose(c_prev),
        &pose(c_curr),
        &RoadFrame::level(2.5),
        &cfg,
    )
    .unwrap();
    assert!(d.xi_p > cfg.lambda_p, "{d:?}");
    assert!(d.xi_e < 1e-12 && d.xi_d == 0.0);
}
