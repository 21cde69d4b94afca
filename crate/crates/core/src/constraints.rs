//! Spherical motion constraints for a moving monocular camera.
//!
//! Every quantity here is expressed in world orientation: camera-frame rays are
//! rotated by their pose before any constraint is evaluated, so camera rotation
//! between the two frames is compensated implicitly.
//!
//! For a feature observed along `p` (previous frame) and `p'` (current frame):
//!
//! * epipolar deviation `xi_e`: distance of `p'` from the epipolar plane through
//!   both camera centers and `p`;
//! * depth deviation `xi_d`: the rays converge behind the camera;
//! * height deviation `xi_h`: the rays converge below the road plane;
//! * anti-parallel deviation `xi_p`: the rays converge above the road, which is
//!   where objects mirroring the ego-motion end up.
//!
//! The deviations are combined by a weighted mean into a motion likelihood.

use crate::camera::{
    below_horizon, horizon_direction, CameraError, PixelPoint, RoadFrame, SphereMapping, UnitRay,
};
use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

/// Cross products shorter than this are treated as zero.
const PARALLEL_EPS: f64 = 1e-12;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("feature lies along the baseline; epipolar plane is undefined")]
    DegenerateEpipolarPlane,
    #[error("ray is parallel to the epipolar normal; projection is undefined")]
    UndefinedProjection,
    #[error("ray does not point below the horizon")]
    AboveHorizon,
    #[error("feature skipped: {0}")]
    SkippedFeature(String),
    #[error("invalid constraint configuration: {0}")]
    InvalidConfig(String),
}

/// World-frame pose of the camera at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    /// Camera center in world coordinates (meters).
    pub center: Vector3<f64>,
    /// Camera-to-world rotation.
    pub rotation: Matrix3<f64>,
}

impl CameraPose {
    pub fn new(center: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        Self { center, rotation }
    }

    pub fn to_world(&self, ray: &UnitRay) -> UnitRay {
        Unit::new_normalize(self.rotation * ray.into_inner())
    }

    pub fn to_camera(&self, ray: &UnitRay) -> UnitRay {
        Unit::new_normalize(self.rotation.transpose() * ray.into_inner())
    }
}

/// A tracked image point pair and its world-oriented rays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub u_prev: PixelPoint,
    pub u_curr: PixelPoint,
    /// Previous-frame ray, world orientation.
    pub p: UnitRay,
    /// Current-frame ray, world orientation.
    pub p_curr: UnitRay,
}

impl Correspondence {
    pub fn from_pixels<M: SphereMapping + ?Sized>(
        u_prev: PixelPoint,
        u_curr: PixelPoint,
        camera: &M,
        prev: &CameraPose,
        curr: &CameraPose,
    ) -> Result<Self, CameraError> {
        let p = prev.to_world(&camera.unproject(u_prev)?);
        let p_curr = curr.to_world(&camera.unproject(u_curr)?);
        Ok(Self {
            u_prev,
            u_curr,
            p,
            p_curr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarPlane {
    /// Unit direction from the current camera center towards the previous one.
    pub epipole: UnitRay,
    /// Unit normal of the plane through both centers and the previous ray.
    pub normal: UnitRay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarFrame {
    /// `C_prev - C_curr`.
    pub baseline: Vector3<f64>,
    /// `None` when the baseline is shorter than the configured minimum.
    pub plane: Option<EpipolarPlane>,
}

impl EpipolarFrame {
    pub fn is_degenerate(&self) -> bool {
        self.plane.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub lambda_h: f64,
    pub lambda_p: f64,
    /// Fusion weights for (epipolar, depth, height, anti-parallel).
    pub weights: [f64; 4],
    /// Baselines shorter than this (meters) count as a static camera.
    pub min_baseline: f64,
    pub adaptive_lambda_p: bool,
    pub adaptive_gain: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            lambda_h: 0.001,
            lambda_p: 0.001,
            weights: [1.0, 1.0, 0.2, 0.2],
            min_baseline: 1e-4,
            adaptive_lambda_p: false,
            adaptive_gain: 0.25,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        let bad = |msg: String| Err(ConstraintError::InvalidConfig(msg));
        if !(self.lambda_h >= 0.0 && self.lambda_p >= 0.0) {
            return bad(format!(
                "thresholds must be non-negative (lambda_h={}, lambda_p={})",
                self.lambda_h, self.lambda_p
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad(format!(
                "weights must be non-negative, got {:?}",
                self.weights
            ));
        }
        if self.weights.iter().sum::<f64>() <= 0.0 {
            return bad("weights must not all be zero".into());
        }
        if !(self.min_baseline > 0.0) {
            return bad(format!(
                "min_baseline must be positive, got {}",
                self.min_baseline
            ));
        }
        if !(self.adaptive_gain >= 0.0) {
            return bad(format!(
                "adaptive_gain must be non-negative, got {}",
                self.adaptive_gain
            ));
        }
        Ok(())
    }
}

/// Per-feature constraint deviations and the fused likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintDeviations {
    pub xi_e: f64,
    pub xi_d: f64,
    pub xi_h: f64,
    pub xi_p: f64,
    pub applied_h: bool,
    pub applied_p: bool,
    /// Fused motion likelihood.
    pub xi: f64,
    /// The camera did not move; `xi` is the projected optical flow.
    pub static_case: bool,
}

impl ConstraintDeviations {
    pub fn as_array(&self) -> [f64; 4] {
        [self.xi_e, self.xi_d, self.xi_h, self.xi_p]
    }
}

/// Where the previous ray and the in-plane current ray meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    InFront,
    Behind,
    Parallel,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Signed angle from `a` to `b` measured about `axis`.
fn signed_angle(a: &UnitRay, b: &UnitRay, axis: &UnitRay) -> f64 {
    a.cross(b).dot(axis).atan2(a.dot(b))
}

pub fn epipolar_frame(
    prev: &CameraPose,
    curr: &CameraPose,
    p: &UnitRay,
    min_baseline: f64,
) -> Result<EpipolarFrame, ConstraintError> {
    let baseline = prev.center - curr.center;
    let length = baseline.norm();
    if length < min_baseline {
        return Ok(EpipolarFrame {
            baseline,
            plane: None,
        });
    }
    let epipole = Unit::new_unchecked(baseline / length);
    let normal = p.cross(&epipole);
    let len = normal.norm();
    if len < PARALLEL_EPS {
        return Err(ConstraintError::DegenerateEpipolarPlane);
    }
    Ok(EpipolarFrame {
        baseline,
        plane: Some(EpipolarPlane {
            epipole,
            normal: Unit::new_unchecked(normal / len),
        }),
    })
}

/// `|n' . p'|`: zero for a ray in the epipolar plane.
pub fn epipolar_deviation(p_curr: &UnitRay, normal: &UnitRay) -> f64 {
    clamp01(normal.dot(p_curr).abs())
}

/// Unit vector of `p'` projected onto the epipolar plane.
pub fn project_onto_epipolar_plane(
    p_curr: &UnitRay,
    normal: &UnitRay,
) -> Result<UnitRay, ConstraintError> {
    let residual = p_curr.into_inner() - normal.into_inner() * p_curr.dot(normal);
    let len = residual.norm();
    if len < PARALLEL_EPS {
        return Err(ConstraintError::UndefinedProjection);
    }
    let v = residual / len;
    // one re-orthogonalisation pass keeps the in-plane residual at rounding level
    let v = v - normal.into_inner() * v.dot(normal);
    Ok(Unit::new_normalize(v))
}

/// `p_n = p'_Pi x p` together with its orientation relative to `n'`.
fn depth_vector(p: &UnitRay, p_pi: &UnitRay, normal: &UnitRay) -> (Vector3<f64>, Convergence) {
    let pn = p_pi.cross(p);
    let s = normal.dot(&pn);
    let conv = if s > 0.0 {
        Convergence::Behind
    } else if s < 0.0 {
        Convergence::InFront
    } else {
        Convergence::Parallel
    };
    (pn, conv)
}

pub fn convergence(p: &UnitRay, p_pi: &UnitRay, normal: &UnitRay) -> Convergence {
    depth_vector(p, p_pi, normal).1
}

/// Sine of the angle between `p` and `p'_Pi` when the rays meet behind the camera, else 0.
pub fn depth_deviation(p: &UnitRay, p_pi: &UnitRay, normal: &UnitRay) -> f64 {
    match depth_vector(p, p_pi, normal) {
        (pn, Convergence::Behind) => clamp01(pn.norm()),
        _ => 0.0,
    }
}

/// Direction from the current camera center to where `p` meets the road plane.
///
/// `baseline` is `C_prev - C_curr` and `horizon` the downward road normal.
pub fn road_ray(
    p: &UnitRay,
    baseline: &Vector3<f64>,
    horizon: &UnitRay,
    eta_c: f64,
) -> Result<UnitRay, ConstraintError> {
    let cos = p.dot(horizon);
    if cos <= 0.0 {
        return Err(ConstraintError::AboveHorizon);
    }
    let distance = eta_c / cos;
    Ok(Unit::new_normalize(p.into_inner() * distance + baseline))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoadDeviations {
    pub xi_h: f64,
    pub xi_p: f64,
    pub applied_h: bool,
    pub applied_p: bool,
}

/// Positive height and anti-parallel deviations.
///
/// Both compare the observed in-plane ray `p'_Pi` with the road ray `p'_r` by
/// rotating from `p` about `n'`. An observed ray between `p` and `p'_r`
/// triangulates below the road (height constraint); one past `p'_r`
/// triangulates above it (anti-parallel constraint). Callers must ensure both
/// rays are below the horizon and converge in front of the camera.
pub fn height_and_antiparallel(
    p: &UnitRay,
    p_pi: &UnitRay,
    p_road: &UnitRay,
    normal: &UnitRay,
    cfg: &ConstraintConfig,
    lambda_p_local: f64,
) -> RoadDeviations {
    let theta_obs = signed_angle(p, p_pi, normal);
    let theta_road = signed_angle(p, p_road, normal);
    let v = p_pi.cross(p_road).norm();
    let between = theta_obs.signum() == theta_road.signum() && theta_obs.abs() <= theta_road.abs();
    if between {
        RoadDeviations {
            xi_h: clamp01(v - cfg.lambda_h),
            applied_h: true,
            ..Default::default()
        }
    } else {
        RoadDeviations {
            xi_p: clamp01(v - lambda_p_local),
            applied_p: true,
            ..Default::default()
        }
    }
}

/// Anti-parallel threshold at this image location.
pub fn adaptive_lambda_p(p: &UnitRay, p_road: &UnitRay, cfg: &ConstraintConfig) -> f64 {
    if !cfg.adaptive_lambda_p {
        return cfg.lambda_p;
    }
    (cfg.adaptive_gain * p.cross(p_road).norm()).max(cfg.lambda_p)
}

/// Deviation used when both camera centers coincide: `|p' x p|`.
pub fn static_camera_deviation(p: &UnitRay, p_curr: &UnitRay) -> f64 {
    clamp01(p_curr.cross(p).norm())
}

/// Weighted mean of the four deviations with the full weight sum as denominator.
pub fn fuse(d: &ConstraintDeviations, cfg: &ConstraintConfig) -> f64 {
    let total: f64 = cfg.weights.iter().sum();
    let num: f64 = cfg
        .weights
        .iter()
        .zip(d.as_array())
        .map(|(w, x)| w * x)
        .sum();
    clamp01(num / total)
}

/// Runs every applicable constraint on one correspondence.
///
/// Routing: a static camera yields the projected-flow deviation only. Otherwise
/// the epipolar and depth deviations are always computed; the road constraints
/// are added when both rays are below the horizon and converge in front.
pub fn evaluate(
    corr: &Correspondence,
    prev: &CameraPose,
    curr: &CameraPose,
    road: &RoadFrame,
    cfg: &ConstraintConfig,
) -> Result<ConstraintDeviations, ConstraintError> {
    let p = &corr.p;
    let p_curr = &corr.p_curr;
    let frame = match epipolar_frame(prev, curr, p, cfg.min_baseline) {
        Ok(f) => f,
        Err(ConstraintError::DegenerateEpipolarPlane) => {
            return Err(ConstraintError::SkippedFeature(
                "feature lies along the baseline".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    let Some(plane) = frame.plane else {
        let xi = static_camera_deviation(p, p_curr);
        return Ok(ConstraintDeviations {
            xi,
            static_case: true,
            ..Default::default()
        });
    };
    let n = &plane.normal;

    let mut d = ConstraintDeviations {
        xi_e: epipolar_deviation(p_curr, n),
        ..Default::default()
    };
    // p' parallel to n' already gives xi_e = 1; nothing else is defined
    if let Ok(p_pi) = project_onto_epipolar_plane(p_curr, n) {
        let (pn, conv) = depth_vector(p, &p_pi, n);
        if conv == Convergence::Behind {
            d.xi_d = clamp01(pn.norm());
        }
        let h = horizon_direction(road);
        if conv == Convergence::InFront && below_horizon(p, &h) && below_horizon(p_curr, &h) {
            let p_road = road_ray(p, &frame.baseline, &h, road.eta_c)?;
            let lambda_p = adaptive_lambda_p(p, &p_road, cfg);
            let r = height_and_antiparallel(p, &p_pi, &p_road, n, cfg, lambda_p);
            d.xi_h = r.xi_h;
            d.xi_p = r.xi_p;
            d.applied_h = r.applied_h;
            d.applied_p = r.applied_p;
        }
    }
    d.xi = fuse(&d, cfg);
    Ok(d)
}
