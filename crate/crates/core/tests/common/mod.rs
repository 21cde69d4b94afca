#![allow(dead_code)]

use fisheye_motion::constraints::{CameraPose, Correspondence};
use fisheye_motion::{PixelPoint, UnitRay};
use nalgebra::{Matrix3, Unit, Vector3};
use rand::Rng;

/// Any deviation above this counts as firing.
pub const FIRE: f64 = 1e-6;

pub fn pose(c: Vector3<f64>) -> CameraPose {
    CameraPose::new(c, Matrix3::identity())
}

pub fn corr(p: UnitRay, p_curr: UnitRay) -> Correspondence {
    Correspondence {
        u_prev: PixelPoint::new(0.0, 0.0),
        u_curr: PixelPoint::new(0.0, 0.0),
        p,
        p_curr,
    }
}

pub fn unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let axis = Unit::new_normalize(unit_vector(rng));
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
}

pub fn ray(v: Vector3<f64>) -> UnitRay {
    Unit::new_normalize(v)
}
