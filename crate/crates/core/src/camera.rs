//! Mapping between fisheye pixel coordinates and rays on the unit projection sphere.
//!
//! Pixel centers sit at integer coordinates; the valid image domain is
//! `[0, W) x [0, H)`. Camera-frame rays use the optical axis as `+z`, `x` to the
//! right and `y` down the image.
//!
//! Two models are provided: the equidistant fisheye (`r = f * theta`) which is the
//! default, and a pinhole model used for cross-checks. Anything implementing
//! [`SphereMapping`] can be plugged into the rest of the crate.

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A direction on the unit sphere.
pub type UnitRay = Unit<Vector3<f64>>;

/// Default fisheye half field-of-view: 95 degrees (190 degree lens).
pub const DEFAULT_THETA_MAX_DEG: f64 = 95.0;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum CameraError {
    #[error("pixel ({u:.3}, {v:.3}) is outside the camera domain")]
    OutOfDomain { u: f64, v: f64 },
    #[error("ray incidence angle {theta:.6} rad exceeds the field of view")]
    OutsideFov { theta: f64 },
    #[error("projected pixel ({u:.3}, {v:.3}) falls outside the image")]
    OutOfImage { u: f64, v: f64 },
    #[error("invalid camera parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "fisheye", alias = "equidistant-fisheye")]
    Equidistant,
    Pinhole,
}

/// Interface between the image domain and the projection sphere.
pub trait SphereMapping {
    /// Image pixel to camera-frame unit ray.
    fn unproject(&self, pt: PixelPoint) -> Result<UnitRay, CameraError>;
    /// Camera-frame unit ray to image pixel; inverse of [`SphereMapping::unproject`].
    fn project(&self, ray: &UnitRay) -> Result<PixelPoint, CameraError>;
}

/// Intrinsic calibration of a central camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub model: ModelKind,
    /// Focal length in pixels.
    pub f: f64,
    pub cu: f64,
    pub cv: f64,
    /// Maximum incidence angle (radians) accepted by the mapping.
    pub theta_max: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn equidistant(f: f64, cu: f64, cv: f64, width: u32, height: u32) -> Self {
        Self {
            model: ModelKind::Equidistant,
            f,
            cu,
            cv,
            theta_max: DEFAULT_THETA_MAX_DEG.to_radians(),
            width,
            height,
        }
    }

    pub fn pinhole(f: f64, cu: f64, cv: f64, theta_max: f64, width: u32, height: u32) -> Self {
        Self {
            model: ModelKind::Pinhole,
            f,
            cu,
            cv,
            theta_max,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(CameraError::InvalidParams(format!(
                "focal length must be positive, got {}",
                self.f
            )));
        }
        if !(self.theta_max > 0.0 && self.theta_max <= PI) {
            return Err(CameraError::InvalidParams(format!(
                "theta_max must lie in (0, pi], got {}",
                self.theta_max
            )));
        }
        if self.model == ModelKind::Pinhole && self.theta_max >= PI / 2.0 {
            return Err(CameraError::InvalidParams(
                "pinhole theta_max must be below 90 degrees".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::InvalidParams(
                "image size must be non-zero".into(),
            ));
        }
        if !self.in_bounds(PixelPoint::new(self.cu, self.cv)) {
            return Err(CameraError::InvalidParams(format!(
                "principal point ({}, {}) lies outside the image",
                self.cu, self.cv
            )));
        }
        Ok(())
    }

    pub fn in_bounds(&self, pt: PixelPoint) -> bool {
        pt.u >= 0.0 && pt.v >= 0.0 && pt.u < self.width as f64 && pt.v < self.height as f64
    }
}

fn incidence_angle(ray: &UnitRay) -> f64 {
    let lateral = (ray.x * ray.x + ray.y * ray.y).sqrt();
    lateral.atan2(ray.z)
}

impl SphereMapping for CameraIntrinsics {
    fn unproject(&self, pt: PixelPoint) -> Result<UnitRay, CameraError> {
        if !self.in_bounds(pt) {
            return Err(CameraError::OutOfDomain { u: pt.u, v: pt.v });
        }
        let du = pt.u - self.cu;
        let dv = pt.v - self.cv;
        let r = du.hypot(dv);
        match self.model {
            ModelKind::Equidistant => {
                let theta = r / self.f;
                if theta > self.theta_max {
                    return Err(CameraError::OutOfDomain { u: pt.u, v: pt.v });
                }
                let phi = dv.atan2(du);
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                Ok(Unit::new_normalize(Vector3::new(st * cp, st * sp, ct)))
            }
            ModelKind::Pinhole => {
                if (r / self.f).atan() > self.theta_max {
                    return Err(CameraError::OutOfDomain { u: pt.u, v: pt.v });
                }
                Ok(Unit::new_normalize(Vector3::new(
                    du / self.f,
                    dv / self.f,
                    1.0,
                )))
            }
        }
    }

    fn project(&self, ray: &UnitRay) -> Result<PixelPoint, CameraError> {
        let theta = incidence_angle(ray);
        if theta > self.theta_max {
            return Err(CameraError::OutsideFov { theta });
        }
        let (du, dv) = match self.model {
            ModelKind::Equidistant => {
                let phi = ray.y.atan2(ray.x);
                let r = self.f * theta;
                (r * phi.cos(), r * phi.sin())
            }
            ModelKind::Pinhole => (self.f * ray.x / ray.z, self.f * ray.y / ray.z),
        };
        let pt = PixelPoint::new(self.cu + du, self.cv + dv);
        if !self.in_bounds(pt) {
            return Err(CameraError::OutOfImage { u: pt.u, v: pt.v });
        }
        Ok(pt)
    }
}

/// Camera placement relative to the road plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadFrame {
    /// Height of the camera center above the road (meters).
    pub eta_c: f64,
    /// Rotation taking road-frame vectors into the frame where rays are evaluated.
    pub r_c: Matrix3<f64>,
}

impl RoadFrame {
    pub fn level(eta_c: f64) -> Self {
        Self {
            eta_c,
            r_c: Matrix3::identity(),
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.eta_c.is_finite() && self.eta_c > 0.0) {
            return Err(CameraError::InvalidParams(format!(
                "camera height must be positive, got {}",
                self.eta_c
            )));
        }
        if !is_rotation(&self.r_c, 1e-9) {
            return Err(CameraError::InvalidParams(
                "road rotation is not orthonormal with determinant +1".into(),
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> UnitRay {
        horizon_direction(self)
    }
}

/// True when `m` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    err <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// Downward road normal, `R_C * (0, 0, -1)`.
pub fn horizon_direction(rf: &RoadFrame) -> UnitRay {
    Unit::new_unchecked(rf.r_c * Vector3::new(0.0, 0.0, -1.0))
}

/// Strictly below the horizon: `p . h > 0`. Rays on the horizon are excluded.
pub fn below_horizon(p: &UnitRay, h: &UnitRay) -> bool {
    p.dot(h) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::equidistant(100.0, 320.0, 240.0, 640, 480)
    }

    #[test]
    fn principal_point_is_optical_axis() {
        let r = cam().unproject(PixelPoint::new(320.0, 240.0)).unwrap();
        assert_abs_diff_eq!(r.into_inner(), Vector3::z(), epsilon = 1e-15);
        let back = cam().project(&Vector3::z_axis()).unwrap();
        assert_eq!(back, PixelPoint::new(320.0, 240.0));
    }

    #[test]
    fn equidistant_quarter_and_half_pi() {
        let k = cam();
        let r = k
            .unproject(PixelPoint::new(320.0 + 100.0 * PI / 2.0, 240.0))
            .unwrap();
        assert_abs_diff_eq!(r.into_inner(), Vector3::x(), epsilon = 1e-12);
        let r = k
            .unproject(PixelPoint::new(320.0 + 100.0 * PI / 4.0, 240.0))
            .unwrap();
        assert_abs_diff_eq!(
            r.into_inner(),
            Vector3::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2),
            epsilon = 1e-12
        );
        let px = k
            .project(&Unit::new_normalize(Vector3::new(1.0, 0.0, 1.0)))
            .unwrap();
        assert_abs_diff_eq!(px.u, 320.0 + 100.0 * PI / 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(px.v, 240.0, epsilon = 1e-9);
    }

    #[test]
    fn domain_errors() {
        let k = cam();
        assert!(matches!(
            k.unproject(PixelPoint::new(-0.5, 10.0)),
            Err(CameraError::OutOfDomain { .. })
        ));
        assert!(matches!(
            k.unproject(PixelPoint::new(640.0, 10.0)),
            Err(CameraError::OutOfDomain { .. })
        ));
        // r/f = 2.0 rad > 95 deg
        let tight = CameraIntrinsics::equidistant(100.0, 320.0, 240.0, 1000, 1000);
        assert!(matches!(
            tight.unproject(PixelPoint::new(520.0, 240.0)),
            Err(CameraError::OutOfDomain { .. })
        ));
        assert!(matches!(
            k.project(&-Vector3::z_axis()),
            Err(CameraError::OutsideFov { .. })
        ));
        // 90 deg incidence lands 157 px right of center: inside the FOV, outside a narrow image
        let narrow = CameraIntrinsics::equidistant(100.0, 50.0, 50.0, 100, 100);
        assert!(matches!(
            narrow.project(&Vector3::x_axis()),
            Err(CameraError::OutOfImage { .. })
        ));
    }

    #[test]
    fn pinhole_agrees_with_direction() {
        let k = CameraIntrinsics::pinhole(200.0, 160.0, 120.0, 1.2, 320, 240);
        let r = k.unproject(PixelPoint::new(260.0, 20.0)).unwrap();
        let expected = Unit::new_normalize(Vector3::new(0.5, -0.5, 1.0));
        assert_abs_diff_eq!(r.into_inner(), expected.into_inner(), epsilon = 1e-15);
        let px = k.project(&r).unwrap();
        assert_abs_diff_eq!(px.u, 260.0, epsilon = 1e-9);
        assert_abs_diff_eq!(px.v, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn validation() {
        let mut k = cam();
        assert!(k.validate().is_ok());
        k.f = 0.0;
        assert!(k.validate().is_err());
        let mut k = cam();
        k.cu = 700.0;
        assert!(k.validate().is_err());
        let k = CameraIntrinsics::pinhole(100.0, 10.0, 10.0, PI / 2.0, 20, 20);
        assert!(k.validate().is_err());
        assert!(RoadFrame::level(0.0).validate().is_err());
        let mut rf = RoadFrame::level(1.0);
        rf.r_c[(0, 0)] = -1.0;
        assert!(rf.validate().is_err());
    }

    #[test]
    fn horizon_examples() {
        let h = horizon_direction(&RoadFrame::level(1.0));
        assert_eq!(h.into_inner(), Vector3::new(0.0, 0.0, -1.0));

        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), PI);
        let h = horizon_direction(&RoadFrame {
            eta_c: 1.0,
            r_c: *rx.matrix(),
        });
        assert_abs_diff_eq!(h.into_inner(), Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);

        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), PI / 2.0);
        let h = horizon_direction(&RoadFrame {
            eta_c: 1.0,
            r_c: *ry.matrix(),
        });
        assert_abs_diff_eq!(
            h.into_inner(),
            Vector3::new(-1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn below_horizon_is_strict() {
        let h = Unit::new_normalize(Vector3::new(0.0, 0.0, -1.0));
        assert!(below_horizon(&h, &h));
        assert!(!below_horizon(&-h, &h));
        assert!(!below_horizon(&Vector3::x_axis(), &h));
    }

    #[test]
    fn unproject_injective_on_grid() {
        let k = cam();
        let mut rays = Vec::new();
        for v in (0..480).step_by(37) {
            for u in (0..640).step_by(41) {
                if let Ok(r) = k.unproject(PixelPoint::new(u as f64, v as f64)) {
                    rays.push(r);
                }
            }
        }
        for (i, a) in rays.iter().enumerate() {
            for b in &rays[i + 1..] {
                assert!(a.angle(b) > 0.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip_and_unit_norm(u in 0.0f64..640.0, v in 0.0f64..480.0) {
            let k = cam();
            if let Ok(ray) = k.unproject(PixelPoint::new(u, v)) {
                prop_assert!((ray.norm() - 1.0).abs() < 1e-12);
                let px = k.project(&ray).unwrap();
                prop_assert!((px.u - u).abs() < 1e-6 && (px.v - v).abs() < 1e-6);
            }
        }

        #[test]
        fn horizon_matches_rotation(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, ang in -3.0f64..3.0) {
            let axis = Vector3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), ang);
            let rf = RoadFrame { eta_c: 1.0, r_c: *rot.matrix() };
            let h = horizon_direction(&rf);
            prop_assert!((h.norm() - 1.0).abs() < 1e-12);
            prop_assert_eq!(h.into_inner(), rot.matrix() * Vector3::new(0.0, 0.0, -1.0));
        }
    }
}
