//! Reconstruction oracle used to validate the constraints.
//!
//! Solves the two-ray least squares problem through its normal equations and
//! classifies the reconstruction by where it lands (behind the camera, under
//! or above the road). Shares no code with the constraint evaluation.

use crate::camera::{RoadFrame, UnitRay};
use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};

/// Rays closer than this in angle do not define a point.
pub const MIN_RAY_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    /// Midpoint of the shortest segment between the two rays.
    pub point: Vector3<f64>,
    /// Parameter along the previous ray.
    pub s_prev: f64,
    /// Parameter along the current ray.
    pub s_curr: f64,
    /// Length of the shortest segment between the two lines.
    pub gap: f64,
    pub convergent: bool,
}

/// Midpoint triangulation of `c_prev + s p` and `c_curr + s' p'`.
pub fn triangulate_oracle(
    p: &UnitRay,
    p_curr: &UnitRay,
    c_prev: &Vector3<f64>,
    c_curr: &Vector3<f64>,
) -> Reconstruction {
    let angle = p.angle(p_curr);
    if angle < MIN_RAY_ANGLE {
        return Reconstruction {
            point: Vector3::repeat(f64::NAN),
            s_prev: f64::NAN,
            s_curr: f64::NAN,
            gap: f64::NAN,
            convergent: false,
        };
    }
    // [p, -p'] [s, s']^T ~= c_curr - c_prev
    let a = Matrix3x2::from_columns(&[p.into_inner(), -p_curr.into_inner()]);
    let rhs = c_curr - c_prev;
    let normal: Matrix2<f64> = a.transpose() * a;
    let params: Vector2<f64> = normal
        .lu()
        .solve(&(a.transpose() * rhs))
        .unwrap_or_else(|| Vector2::repeat(f64::NAN));
    let x_prev = c_prev + p.into_inner() * params[0];
    let x_curr = c_curr + p_curr.into_inner() * params[1];
    Reconstruction {
        point: (x_prev + x_curr) * 0.5,
        s_prev: params[0],
        s_curr: params[1],
        gap: (x_prev - x_curr).norm(),
        convergent: params.iter().all(|v| v.is_finite()),
    }
}

/// Constraints expected to fire for a correspondence, from the reconstruction alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FiringSet {
    pub epipolar: bool,
    pub depth: bool,
    pub height: bool,
    pub antiparallel: bool,
}

impl FiringSet {
    pub fn is_empty(&self) -> bool {
        !(self.epipolar || self.depth || self.height || self.antiparallel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleVerdict {
    pub expected: FiringSet,
    /// Sine of the angle between the current ray and the plane through both centers and `p`.
    pub off_plane: f64,
    /// Height above the road of the in-plane reconstruction (when it converges).
    pub height: Option<f64>,
    pub reconstruction: Reconstruction,
}

/// Predicts which constraints a correspondence should trigger.
///
/// The current ray is split into its component in the plane spanned by the
/// baseline and `p` (Gram-Schmidt basis) and the remainder. A remainder above
/// `plane_tol` predicts the epipolar constraint. The in-plane part is
/// triangulated against `p`: a negative current-ray parameter predicts the depth
/// constraint; otherwise, for rays below the horizon, a reconstruction under the
/// road predicts the height constraint and one above it the anti-parallel
/// constraint (`height_tol` meters of slack either way).
pub fn classify_oracle(
    p: &UnitRay,
    p_curr: &UnitRay,
    c_prev: &Vector3<f64>,
    c_curr: &Vector3<f64>,
    road: &RoadFrame,
    plane_tol: f64,
    height_tol: f64,
) -> OracleVerdict {
    let baseline = c_prev - c_curr;
    let e1 = baseline.normalize();
    let e2 = (p.into_inner() - e1 * p.dot(&e1)).normalize();
    let e3 = e1.cross(&e2);
    let off = p_curr.dot(&e3);
    let in_plane = UnitRay::new_normalize(p_curr.into_inner() - e3 * off);

    let rec = triangulate_oracle(p, &in_plane, c_prev, c_curr);
    let mut expected = FiringSet {
        epipolar: off.abs() > plane_tol,
        ..Default::default()
    };
    let down = road.r_c * Vector3::new(0.0, 0.0, -1.0);
    let mut height = None;
    if rec.convergent {
        let h = road.eta_c - (rec.point - c_prev).dot(&down);
        height = Some(h);
        if rec.s_curr < 0.0 {
            expected.depth = true;
        } else if p.dot(&down) > 0.0 && p_curr.dot(&down) > 0.0 {
            expected.height = h < -height_tol;
            expected.antiparallel = h > height_tol;
        }
    }
    OracleVerdict {
        expected,
        off_plane: off.abs(),
        height,
        reconstruction: rec,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Unit;

    fn ray(x: f64, y: f64, z: f64) -> UnitRay {
        Unit::new_normalize(Vector3::new(x, y, z))
    }

    #[test]
    fn static_point_is_recovered() {
        let c0 = Vector3::zeros();
        let c1 = Vector3::new(1.0, 0.0, 0.0);
        let r = triangulate_oracle(&ray(2., 0., 1.), &ray(1., 0., 1.), &c0, &c1);
        assert!(r.convergent);
        assert_abs_diff_eq!(r.point, Vector3::new(2.0, 0.0, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_prev, 5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_curr, 2f64.sqrt(), epsilon = 1e-12);
        assert!(r.gap < 1e-12);
    }

    #[test]
    fn overtaking_point_lands_behind() {
        let c0 = Vector3::zeros();
        let c1 = Vector3::new(1.0, 0.0, 0.0);
        let r = triangulate_oracle(&ray(2., 0., 1.), &ray(3., 0., 1.), &c0, &c1);
        assert_abs_diff_eq!(r.s_prev, -5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_curr, -10f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn parallel_rays_do_not_converge() {
        let p = ray(0., 0., 1.);
        let r = triangulate_oracle(&p, &p, &Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0));
        assert!(!r.convergent);
        let r = triangulate_oracle(&p, &p, &Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0));
        assert!(!r.convergent);
    }

    #[test]
    fn classification_examples() {
        let road = RoadFrame::level(1.0);
        let c0 = Vector3::new(0.0, 0.0, 1.0);
        let c1 = Vector3::new(1.0, 0.0, 1.0);
        // static road point (3,0,0)
        let v = classify_oracle(
            &ray(3., 0., -1.),
            &ray(2., 0., -1.),
            &c0,
            &c1,
            &road,
            1e-9,
            1e-9,
        );
        assert!(v.expected.is_empty());
        // preceding: triangulates at (6,0,-1)
        let v = classify_oracle(
            &ray(3., 0., -1.),
            &ray(2.5, 0., -1.),
            &c0,
            &c1,
            &road,
            1e-9,
            1e-9,
        );
        assert_eq!(
            v.expected,
            FiringSet {
                height: true,
                ..Default::default()
            }
        );
        assert_abs_diff_eq!(v.height.unwrap(), -1.0, epsilon = 1e-12);
        // approaching: ghost at (2.5,0,0.5)
        let v = classify_oracle(
            &ray(5., 0., -1.),
            &ray(3., 0., -1.),
            &c0,
            &c1,
            &road,
            1e-9,
            1e-9,
        );
        assert_eq!(
            v.expected,
            FiringSet {
                antiparallel: true,
                ..Default::default()
            }
        );
        assert_abs_diff_eq!(v.height.unwrap(), 0.5, epsilon = 1e-12);
        // crossing: lateral motion of a point below the camera, off the epipolar plane
        let p0 = Vector3::new(4.0, 1.0, 0.4);
        let p1 = p0 + Vector3::new(0.0, -0.3, 0.0);
        let v = classify_oracle(
            &Unit::new_normalize(p0 - c0),
            &Unit::new_normalize(p1 - c1),
            &c0,
            &c1,
            &road,
            1e-9,
            1e-9,
        );
        assert!(v.expected.epipolar);
        // overtaking
        let v = classify_oracle(
            &ray(2., 0., 1.),
            &ray(3., 0., 1.),
            &Vector3::zeros(),
            &Vector3::new(1.0, 0.0, 0.0),
            &road,
            1e-9,
            1e-9,
        );
        assert_eq!(
            v.expected,
            FiringSet {
                depth: true,
                ..Default::default()
            }
        );
    }
}
