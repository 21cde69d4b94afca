//! Bundled scenes, one per motion category plus static references.

use super::{CameraSpec, EgoSpec, MountSpec, ObjectCategory, ObjectSpec, Sampling, SceneSpec};
use crate::camera::{ModelKind, DEFAULT_THETA_MAX_DEG};

pub const PRESET_NAMES: [&str; 7] = [
    "crossing",
    "overtaking",
    "preceding",
    "approaching",
    "static_ego",
    "static_obstacle",
    "static_ground",
];

fn base(name: &str) -> SceneSpec {
    SceneSpec {
        name: name.to_string(),
        seed: 7,
        frames: 5,
        camera: CameraSpec {
            model: ModelKind::Equidistant,
            f: 100.0,
            cu: 160.0,
            cv: 120.0,
            theta_max_deg: DEFAULT_THETA_MAX_DEG,
            width: 320,
            height: 240,
        },
        mount: MountSpec {
            height: 1.0,
            pitch_deg: 15.0,
            yaw_deg: 0.0,
        },
        ego: EgoSpec {
            start: [0.0, 0.0],
            heading_deg: 0.0,
            speed: 0.5,
            yaw_rate_deg: 0.0,
        },
        objects: Vec::new(),
        ground_range: 30.0,
        noise_sigma: 0.0,
        sampling: Sampling::Cell,
        cell_size: 5,
    }
}

fn object(
    category: ObjectCategory,
    min: [f64; 3],
    max: [f64; 3],
    velocity: [f64; 3],
) -> ObjectSpec {
    ObjectSpec {
        category,
        min,
        max,
        velocity,
    }
}

/// Looks up a bundled scene by name.
pub fn preset(name: &str) -> Option<SceneSpec> {
    let mut spec = base(name);
    match name {
        "crossing" => spec.objects.push(object(
            ObjectCategory::Crossing,
            [4.0, 1.0, 0.0],
            [4.5, 1.6, 0.8],
            [0.0, -0.2, 0.0],
        )),
        "overtaking" => spec.objects.push(object(
            ObjectCategory::Overtaking,
            [-0.5, 1.5, 0.0],
            [1.5, 2.2, 1.2],
            [1.0, 0.0, 0.0],
        )),
        "preceding" => spec.objects.push(object(
            ObjectCategory::Preceding,
            [1.6, -0.8, 0.0],
            [2.4, 0.8, 0.5],
            [0.3, 0.0, 0.0],
        )),
        "approaching" => spec.objects.push(object(
            ObjectCategory::Approaching,
            [5.0, -2.5, 0.0],
            [7.0, -1.5, 0.8],
            [-0.5, 0.0, 0.0],
        )),
        "static_ego" => {
            spec.ego.speed = 0.0;
            spec.objects.push(object(
                ObjectCategory::Crossing,
                [3.0, 1.0, 0.0],
                [3.5, 1.6, 0.8],
                [0.0, -0.2, 0.0],
            ));
        }
        "static_obstacle" => {
            spec.mount.height = 1.0;
            spec.objects.push(object(
                ObjectCategory::StaticObstacle,
                [2.5, -0.4, 0.0],
                [2.8, 0.4, 2.0],
                [0.0, 0.0, 0.0],
            ));
        }
        "static_ground" => {}
        _ => return None,
    }
    Some(spec)
}
