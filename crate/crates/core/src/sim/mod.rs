//! Synthetic two-view scenes with ground truth.
//!
//! A flat road (`z = 0`, world `z` up) is observed by a fisheye camera mounted on
//! an ego vehicle. Moving boxes stand in for vehicles and pedestrians. Each
//! sampled pixel of the previous frame is ray cast into the scene; the hit
//! point is advanced by its object's velocity and projected into the current
//! frame, giving an exact (or noisy) correspondence with full labels.

mod oracle;
pub mod presets;

pub use oracle::{
    classify_oracle, triangulate_oracle, FiringSet, OracleVerdict, Reconstruction, MIN_RAY_ANGLE,
};

use crate::camera::{
    CameraIntrinsics, ModelKind, PixelPoint, RoadFrame, SphereMapping, DEFAULT_THETA_MAX_DEG,
};
use crate::constraints::{CameraPose, Correspondence};
use crate::pipeline::{CellGrid, EvalCategory, FlowField, FrameLabels, ObjectLabel};
use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("frame {frame}: no point projects into both frames")]
    EmptyScene { frame: usize },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SimError {
    SimError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectCategory {
    Crossing,
    Overtaking,
    Preceding,
    Approaching,
    #[serde(alias = "static-obstacle")]
    StaticObstacle,
}

impl ObjectCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectCategory::Crossing => "crossing",
            ObjectCategory::Overtaking => "overtaking",
            ObjectCategory::Preceding => "preceding",
            ObjectCategory::Approaching => "approaching",
            ObjectCategory::StaticObstacle => "static_obstacle",
        }
    }

    /// Scoring category while the ego vehicle moves; static obstacles are not scored.
    pub fn eval_category(&self) -> Option<EvalCategory> {
        match self {
            ObjectCategory::Crossing => Some(EvalCategory::Crossing),
            ObjectCategory::Overtaking => Some(EvalCategory::Overtaking),
            ObjectCategory::Preceding => Some(EvalCategory::Preceding),
            ObjectCategory::Approaching => Some(EvalCategory::Approaching),
            ObjectCategory::StaticObstacle => None,
        }
    }
}

impl fmt::Display for ObjectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Camera intrinsics as stored in scene files and camera configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub model: ModelKind,
    pub f: f64,
    pub cu: f64,
    pub cv: f64,
    #[serde(default = "default_theta_max_deg")]
    pub theta_max_deg: f64,
    pub width: u32,
    pub height: u32,
}

fn default_theta_max_deg() -> f64 {
    DEFAULT_THETA_MAX_DEG
}

impl CameraSpec {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            model: self.model,
            f: self.f,
            cu: self.cu,
            cv: self.cv,
            theta_max: self.theta_max_deg.to_radians(),
            width: self.width,
            height: self.height,
        }
    }

    pub fn from_intrinsics(k: &CameraIntrinsics) -> Self {
        Self {
            model: k.model,
            f: k.f,
            cu: k.cu,
            cv: k.cv,
            theta_max_deg: k.theta_max.to_degrees(),
            width: k.width,
            height: k.height,
        }
    }
}

/// Camera placement on the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountSpec {
    /// Height above the road (meters).
    pub height: f64,
    /// Downward tilt of the optical axis (degrees).
    #[serde(default)]
    pub pitch_deg: f64,
    /// Mount yaw relative to the vehicle heading (degrees, left positive).
    #[serde(default)]
    pub yaw_deg: f64,
}

/// Planar ego motion: constant speed along a heading that turns at a constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    #[serde(default)]
    pub start: [f64; 2],
    #[serde(default)]
    pub heading_deg: f64,
    /// Meters per frame.
    pub speed: f64,
    /// Degrees per frame.
    #[serde(default)]
    pub yaw_rate_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: ObjectCategory,
    /// Box corner with the smallest coordinates at frame 0 (world, meters).
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// World velocity in meters per frame.
    #[serde(default)]
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// One ray per cell center; the whole cell shares its displacement.
    Cell,
    /// One ray per pixel.
    Pixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Number of images; frame pairs are `(k-1, k)` for `k = 1..frames`.
    pub frames: usize,
    pub camera: CameraSpec,
    pub mount: MountSpec,
    pub ego: EgoSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Ground is visible up to this horizontal distance from the camera (meters).
    #[serde(default = "default_ground_range")]
    pub ground_range: f64,
    /// Standard deviation of the Gaussian added to current-frame positions (pixels).
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
    #[serde(default = "default_cell_size")]
    pub cell_size: usize,
}

fn default_ground_range() -> f64 {
    30.0
}

fn default_sampling() -> Sampling {
    Sampling::Cell
}

fn default_cell_size() -> usize {
    5
}

/// Maximum angle (degrees) between an object's velocity and its category's nominal direction.
const DIRECTION_TOLERANCE_DEG: f64 = 10.0;

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.frames < 2 {
            return Err(invalid("frames", "at least two frames are required"));
        }
        self.camera
            .intrinsics()
            .validate()
            .map_err(|e| invalid("camera", e.to_string()))?;
        if !(self.mount.height > 0.0) {
            return Err(invalid("mount.height", "must be positive"));
        }
        if !(self.ego.speed >= 0.0) {
            return Err(invalid("ego.speed", "must be non-negative"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma", "must be non-negative"));
        }
        if self.cell_size == 0 {
            return Err(invalid("cell_size", "must be positive"));
        }
        if !(self.ground_range > 0.0) {
            return Err(invalid("ground_range", "must be positive"));
        }
        let heading = self.ego.heading_deg.to_radians();
        let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
        for (i, obj) in self.objects.iter().enumerate() {
            let field = |name: &str| format!("objects[{i}].{name}");
            if (0..3).any(|k| !(obj.min[k] < obj.max[k])) {
                return Err(invalid(
                    field("min"),
                    "box min must be below max on every axis",
                ));
            }
            let v = Vector3::from(obj.velocity);
            let speed = v.norm();
            if obj.category == ObjectCategory::StaticObstacle {
                if speed > 0.0 {
                    return Err(invalid(field("velocity"), "static obstacles cannot move"));
                }
                continue;
            }
            if speed == 0.0 {
                return Err(invalid(
                    field("velocity"),
                    format!("{} objects must move", obj.category),
                ));
            }
            if self.ego.speed == 0.0 {
                continue;
            }
            let angle = v.angle(&forward).to_degrees();
            let along = v.dot(&forward);
            let ok = match obj.category {
                ObjectCategory::Approaching => 180.0 - angle <= DIRECTION_TOLERANCE_DEG,
                ObjectCategory::Overtaking => {
                    angle <= DIRECTION_TOLERANCE_DEG && along > self.ego.speed
                }
                ObjectCategory::Preceding => {
                    angle <= DIRECTION_TOLERANCE_DEG && along < self.ego.speed
                }
                ObjectCategory::Crossing => (45.0..=135.0).contains(&angle),
                ObjectCategory::StaticObstacle => true,
            };
            if !ok {
                return Err(invalid(
                    field("velocity"),
                    format!(
                        "velocity {:?} does not match category {} for ego speed {}",
                        obj.velocity, obj.category, self.ego.speed
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn road_frame(&self) -> RoadFrame {
        RoadFrame::level(self.mount.height)
    }

    /// Camera pose at every frame.
    pub fn poses(&self) -> Vec<CameraPose> {
        let mut out = Vec::with_capacity(self.frames);
        let mut pos = Vector3::new(self.ego.start[0], self.ego.start[1], self.mount.height);
        let mut heading = self.ego.heading_deg.to_radians();
        for _ in 0..self.frames {
            out.push(CameraPose::new(pos, mount_rotation(heading, &self.mount)));
            pos += Vector3::new(heading.cos(), heading.sin(), 0.0) * self.ego.speed;
            heading += self.ego.yaw_rate_deg.to_radians();
        }
        out
    }
}

/// Camera-to-world rotation for a vehicle heading and a camera mount.
pub fn mount_rotation(heading: f64, mount: &MountSpec) -> Matrix3<f64> {
    // camera x right, y down, z forward  ->  world x forward, y left, z up
    let base = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let pitch = Rotation3::from_axis_angle(&Vector3::y_axis(), mount.pitch_deg.to_radians());
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), heading + mount.yaw_deg.to_radians());
    yaw.matrix() * pitch.matrix() * base
}

/// A correspondence with its generating world geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledCorrespondence {
    pub corr: Correspondence,
    pub world_prev: Vector3<f64>,
    pub world_curr: Vector3<f64>,
    pub is_moving: bool,
    /// Index into the scene's objects; `None` for the road.
    pub object: Option<usize>,
    pub category: Option<ObjectCategory>,
    /// Distance from the current camera center to the point (meters).
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    /// Index of the current image; the previous one is `frame - 1`.
    pub frame: usize,
    pub prev: CameraPose,
    pub curr: CameraPose,
    pub samples: Vec<LabelledCorrespondence>,
}

impl SimFrame {
    pub fn ego_static(&self, min_baseline: f64) -> bool {
        (self.prev.center - self.curr.center).norm() < min_baseline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub camera: CameraIntrinsics,
    pub road: RoadFrame,
    pub poses: Vec<CameraPose>,
    pub frames: Vec<SimFrame>,
}

struct Hit {
    point: Vector3<f64>,
    object: Option<usize>,
}

fn ray_box(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> Option<f64> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if dir[k].abs() < 1e-15 {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - origin[k]) / dir[k];
        let b = (hi[k] - origin[k]) / dir[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

impl SceneSpec {
    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, frame: usize) -> Option<Hit> {
        let mut best: Option<(f64, Option<usize>)> = None;
        for (i, obj) in self.objects.iter().enumerate() {
            let shift = Vector3::from(obj.velocity) * frame as f64;
            let lo = Vector3::from(obj.min) + shift;
            let hi = Vector3::from(obj.max) + shift;
            if let Some(t) = ray_box(origin, dir, &lo, &hi) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, Some(i)));
                }
            }
        }
        if dir.z < 0.0 {
            let t = -origin.z / dir.z;
            let point = origin + dir * t;
            let horizontal = ((point.x - origin.x).powi(2) + (point.y - origin.y).powi(2)).sqrt();
            if horizontal <= self.ground_range && best.is_none_or(|(b, _)| t < b) {
                best = Some((t, None));
            }
        }
        best.map(|(t, object)| Hit {
            point: origin + dir * t,
            object,
        })
    }

    fn sample_pixels(&self) -> Vec<PixelPoint> {
        let (w, h) = (self.camera.width as usize, self.camera.height as usize);
        match self.sampling {
            Sampling::Pixel => (0..h)
                .flat_map(|y| (0..w).map(move |x| PixelPoint::new(x as f64, y as f64)))
                .collect(),
            Sampling::Cell => {
                let grid = CellGrid::new(w, h, self.cell_size);
                (0..grid.rows)
                    .flat_map(|r| (0..grid.cols).map(move |c| (r, c)))
                    .map(|(r, c)| grid.center(r, c))
                    .collect()
            }
        }
    }

    fn simulate_pair(
        &self,
        camera: &CameraIntrinsics,
        pixels: &[PixelPoint],
        frame: usize,
        prev: &CameraPose,
        curr: &CameraPose,
    ) -> Vec<LabelledCorrespondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame as u64);
        let noise = (self.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, self.noise_sigma).expect("sigma checked"));
        let mut out = Vec::new();
        for &u in pixels {
            let Ok(ray_cam) = camera.unproject(u) else {
                continue;
            };
            let p = prev.to_world(&ray_cam);
            let Some(hit) = self.cast(&prev.center, &p, frame - 1) else {
                continue;
            };
            let velocity = hit
                .object
                .map(|i| Vector3::from(self.objects[i].velocity))
                .unwrap_or_else(Vector3::zeros);
            let moved = hit.point + velocity;
            let offset = moved - curr.center;
            let range = offset.norm();
            if range == 0.0 {
                continue;
            }
            let Ok(mut u_curr) =
                camera.project(&curr.to_camera(&Unit::new_unchecked(offset / range)))
            else {
                continue;
            };
            if let Some(n) = &noise {
                u_curr.u += n.sample(&mut rng);
                u_curr.v += n.sample(&mut rng);
            }
            let Ok(ray_curr) = camera.unproject(u_curr) else {
                continue;
            };
            let category = hit.object.map(|i| self.objects[i].category);
            out.push(LabelledCorrespondence {
                corr: Correspondence {
                    u_prev: u,
                    u_curr,
                    p,
                    p_curr: curr.to_world(&ray_curr),
                },
                world_prev: hit.point,
                world_curr: moved,
                is_moving: velocity != Vector3::zeros(),
                object: hit.object,
                category,
                range,
            });
        }
        out
    }
}

/// Generates every frame pair of a scene. Deterministic for a given spec and seed.
pub fn generate(spec: &SceneSpec) -> Result<Scene, SimError> {
    spec.validate()?;
    let camera = spec.camera.intrinsics();
    let poses = spec.poses();
    let pixels = spec.sample_pixels();
    let frames: Vec<SimFrame> = (1..spec.frames)
        .into_par_iter()
        .map(|k| SimFrame {
            frame: k,
            prev: poses[k - 1],
            curr: poses[k],
            samples: spec.simulate_pair(&camera, &pixels, k, &poses[k - 1], &poses[k]),
        })
        .collect();
    if let Some(empty) = frames.iter().find(|f| f.samples.is_empty()) {
        return Err(SimError::EmptyScene { frame: empty.frame });
    }
    Ok(Scene {
        road: spec.road_frame(),
        spec: spec.clone(),
        camera,
        poses,
        frames,
    })
}

impl Scene {
    pub fn grid(&self) -> CellGrid {
        CellGrid::new(
            self.camera.width as usize,
            self.camera.height as usize,
            self.spec.cell_size,
        )
    }

    /// Dense flow field of one frame pair. With cell sampling every pixel of a
    /// cell carries the displacement of the cell center.
    pub fn flow_field(&self, frame: &SimFrame) -> FlowField {
        let (w, h) = (self.camera.width as usize, self.camera.height as usize);
        let mut flow = FlowField::new(w, h);
        let grid = self.grid();
        for s in &frame.samples {
            let du = s.corr.u_curr.u - s.corr.u_prev.u;
            let dv = s.corr.u_curr.v - s.corr.u_prev.v;
            let (x, y) = (s.corr.u_prev.u as usize, s.corr.u_prev.v as usize);
            match self.spec.sampling {
                Sampling::Pixel => flow.set(x, y, du, dv),
                Sampling::Cell => {
                    let (row, col) = grid.cell_of(x, y);
                    let (xs, ys) = grid.span(row, col);
                    for yy in ys {
                        for xx in xs.clone() {
                            flow.set(xx, yy, du, dv);
                        }
                    }
                }
            }
        }
        flow
    }

    /// Moving-object labels at grid resolution. A cell belongs to an object when
    /// at least half of its samples hit that object.
    pub fn labels(&self, frame: &SimFrame, min_baseline: f64) -> FrameLabels {
        let grid = self.grid();
        let ego_static = frame.ego_static(min_baseline);
        let mut per_cell: BTreeMap<(usize, usize), (usize, BTreeMap<usize, usize>)> =
            BTreeMap::new();
        for s in &frame.samples {
            let cell = grid.cell_of(s.corr.u_prev.u as usize, s.corr.u_prev.v as usize);
            let entry = per_cell.entry(cell).or_default();
            entry.0 += 1;
            if let (Some(i), true) = (s.object, s.is_moving) {
                *entry.1.entry(i).or_default() += 1;
            }
        }
        let mut objects: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (cell, (total, hits)) in per_cell {
            if let Some((&obj, &n)) = hits.iter().max_by_key(|(_, &n)| n) {
                if 2 * n >= total {
                    objects.entry(obj).or_default().push(cell);
                }
            }
        }
        FrameLabels {
            frame: frame.frame,
            rows: grid.rows,
            cols: grid.cols,
            objects: objects
                .into_iter()
                .filter_map(|(id, cells)| {
                    let category = if ego_static {
                        EvalCategory::StaticEgo
                    } else {
                        self.spec.objects[id].category.eval_category()?
                    };
                    Some(ObjectLabel {
                        id,
                        category,
                        cells,
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_spec() -> SceneSpec {
        presets::preset("static_ground").unwrap()
    }

    #[test]
    fn mount_rotation_axes() {
        let r = mount_rotation(
            0.0,
            &MountSpec {
                height: 1.0,
                pitch_deg: 0.0,
                yaw_deg: 0.0,
            },
        );
        assert_abs_diff_eq!(r * Vector3::z(), Vector3::x(), epsilon = 1e-15);
        assert_abs_diff_eq!(r * Vector3::x(), -Vector3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!(r * Vector3::y(), -Vector3::z(), epsilon = 1e-15);
        let r = mount_rotation(
            0.0,
            &MountSpec {
                height: 1.0,
                pitch_deg: 30.0,
                yaw_deg: 0.0,
            },
        );
        let axis = r * Vector3::z();
        assert!(axis.z < 0.0 && axis.x > 0.0);
        assert!(crate::camera::is_rotation(&r, 1e-12));
    }

    #[test]
    fn ray_box_hits() {
        let o = Vector3::zeros();
        let lo = Vector3::new(2.0, -1.0, -1.0);
        let hi = Vector3::new(3.0, 1.0, 1.0);
        assert_eq!(ray_box(&o, &Vector3::x(), &lo, &hi), Some(2.0));
        assert_eq!(ray_box(&o, &-Vector3::x(), &lo, &hi), None);
        assert_eq!(ray_box(&o, &Vector3::y(), &lo, &hi), None);
    }

    #[test]
    fn static_world_labels() {
        let scene = generate(&base_spec()).unwrap();
        for f in &scene.frames {
            assert!(f.samples.iter().all(|s| !s.is_moving && s.object.is_none()));
            assert!(scene.labels(f, 1e-4).objects.is_empty());
        }
    }

    #[test]
    fn approaching_labels() {
        let scene = generate(&presets::preset("approaching").unwrap()).unwrap();
        let moving: Vec<_> = scene.frames[0]
            .samples
            .iter()
            .filter(|s| s.is_moving)
            .collect();
        assert!(!moving.is_empty());
        assert!(moving
            .iter()
            .all(|s| s.category == Some(ObjectCategory::Approaching)));
        let labels = scene.labels(&scene.frames[0], 1e-4);
        assert_eq!(labels.objects.len(), 1);
        assert_eq!(labels.objects[0].category, EvalCategory::Approaching);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut spec = presets::preset("crossing").unwrap();
        spec.noise_sigma = 0.5;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed += 1;
        let c = generate(&spec).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn stored_rays_match_world_points() {
        let scene = generate(&presets::preset("overtaking").unwrap()).unwrap();
        for f in &scene.frames {
            for s in &f.samples {
                let p = (s.world_prev - f.prev.center).normalize();
                let q = (s.world_curr - f.curr.center).normalize();
                assert!((p - s.corr.p.into_inner()).norm() < 1e-12);
                assert!((q - s.corr.p_curr.into_inner()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn validation_errors_name_fields() {
        let mut spec = presets::preset("approaching").unwrap();
        spec.objects[0].velocity = [0.5, 0.0, 0.0];
        match spec.validate() {
            Err(SimError::Invalid { field, .. }) => assert_eq!(field, "objects[0].velocity"),
            other => panic!("unexpected {other:?}"),
        }
        let mut spec = base_spec();
        spec.frames = 1;
        assert!(
            matches!(spec.validate(), Err(SimError::Invalid { field, .. }) if field == "frames")
        );
    }

    #[test]
    fn empty_scene() {
        let mut spec = base_spec();
        spec.ground_range = 1e-3;
        assert!(matches!(
            generate(&spec),
            Err(SimError::EmptyScene { frame: 1 })
        ));
    }

    #[test]
    fn cell_flow_is_constant_per_cell() {
        let scene = generate(&base_spec()).unwrap();
        let flow = scene.flow_field(&scene.frames[0]);
        let grid = scene.grid();
        let (xs, ys) = grid.span(28, 20);
        let first = flow.get(xs.start, ys.start);
        assert!(first.is_some());
        for y in ys {
            for x in xs.clone() {
                assert_eq!(flow.get(x, y), first);
            }
        }
    }
}
