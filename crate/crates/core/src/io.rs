//! On-disk formats shared by the simulator and the detection pipeline.
//!
//! | file                  | format                                             |
//! |-----------------------|----------------------------------------------------|
//! | `camera.json`         | intrinsics plus road frame                         |
//! | `poses.csv`           | `frame,cx,cy,cz,r00..r22` (camera-to-world)        |
//! | `correspondences.csv` | `frame,u_prev,v_prev,u_curr,v_curr`                |
//! | `labels.json`         | per-frame moving-object cells                      |
//! | `likelihood_NNNN.csv` | `row,col,xi_e,xi_d,xi_h,xi_p,xi,gated`             |
//! | `segmentation_NNNN.json` | mask and regions                                |
//! | `map_NNNN.pgm`        | rendered likelihood                                |
//!
//! A correspondence row with frame `k` pairs image `k - 1` with image `k`.

use crate::camera::{CameraIntrinsics, ModelKind, PixelPoint, RoadFrame, DEFAULT_THETA_MAX_DEG};
use crate::constraints::{CameraPose, ConstraintConfig, ConstraintDeviations};
use crate::pipeline::{CellResult, FrameLabels, GateReason, LikelihoodGrid, PipelineConfig};
use crate::sim::{CameraSpec, Scene};
use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const CAMERA_FILE: &str = "camera.json";
pub const POSES_FILE: &str = "poses.csv";
pub const CORRESPONDENCES_FILE: &str = "correspondences.csv";
pub const LABELS_FILE: &str = "labels.json";
pub const SCENE_FILE: &str = "scene.json";

const POSE_HEADER: [&str; 13] = [
    "frame", "cx", "cy", "cz", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22",
];
const CORRESPONDENCE_HEADER: [&str; 5] = ["frame", "u_prev", "v_prev", "u_curr", "v_curr"];
const LIKELIHOOD_HEADER: [&str; 8] = ["row", "col", "xi_e", "xi_d", "xi_h", "xi_p", "xi", "gated"];

/// Tolerance on orthonormality of rotations read from disk.
const ROTATION_TOL: f64 = 1e-6;

#[derive(thiserror::Error, Debug)]
pub enum IoError {
    #[error("cannot open {}: {source}", path.display())]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("invalid configuration in {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
}

impl IoError {
    fn parse(path: &Path, line: u64, msg: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn write(path: &Path, source: impl Into<std::io::Error>) -> Self {
        IoError::Write {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IoError::Open {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IoError::write(path, e))
}

/// Reads a JSON document; syntax and schema errors carry the line number.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| IoError::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| IoError::write(path, e))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| IoError::write(path, e))
}

/// Intrinsics and road frame in one document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub model: ModelKind,
    pub f: f64,
    pub cu: f64,
    pub cv: f64,
    #[serde(default = "default_theta_max_deg")]
    pub theta_max_deg: f64,
    pub width: u32,
    pub height: u32,
    pub eta_c: f64,
    /// Road-to-world rotation, row-major.
    pub r_c: [f64; 9],
}

fn default_theta_max_deg() -> f64 {
    DEFAULT_THETA_MAX_DEG
}

impl CameraConfig {
    pub fn new(camera: &CameraIntrinsics, road: &RoadFrame) -> Self {
        let spec = CameraSpec::from_intrinsics(camera);
        let mut r_c = [0.0; 9];
        for (i, v) in r_c.iter_mut().enumerate() {
            *v = road.r_c[(i / 3, i % 3)];
        }
        Self {
            model: spec.model,
            f: spec.f,
            cu: spec.cu,
            cv: spec.cv,
            theta_max_deg: spec.theta_max_deg,
            width: spec.width,
            height: spec.height,
            eta_c: road.eta_c,
            r_c,
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraSpec {
            model: self.model,
            f: self.f,
            cu: self.cu,
            cv: self.cv,
            theta_max_deg: self.theta_max_deg,
            width: self.width,
            height: self.height,
        }
        .intrinsics()
    }

    pub fn road(&self) -> RoadFrame {
        RoadFrame {
            eta_c: self.eta_c,
            r_c: Matrix3::from_row_slice(&self.r_c),
        }
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let cfg: Self = read_json(path)?;
        let config_err = |msg: String| IoError::Config {
            path: path.to_path_buf(),
            msg,
        };
        cfg.intrinsics()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        cfg.road()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }
}

fn csv_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<BufReader<File>>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let found = rdr
        .headers()
        .map_err(|e| IoError::parse(path, 1, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(IoError::parse(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(rdr)
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::parse(path, line, e.to_string())
}

/// Reads every row of a CSV with a fixed header into `T`, keeping the line number.
fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>, IoError> {
    let mut rdr = csv_reader(path, header)?;
    let mut record = csv::StringRecord::new();
    let mut rows = Vec::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = record
                    .deserialize::<T>(None)
                    .map_err(|e| IoError::parse(path, line, e.to_string()))?;
                rows.push((line, row));
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct PoseRow {
    frame: usize,
    c: [f64; 3],
    r: [f64; 9],
}

pub fn read_poses(path: &Path) -> Result<BTreeMap<usize, CameraPose>, IoError> {
    let mut out = BTreeMap::new();
    for (line, row) in read_rows::<PoseRow>(path, &POSE_HEADER)? {
        let rotation = Matrix3::from_row_slice(&row.r);
        if row.c.iter().chain(&row.r).any(|v| !v.is_finite()) {
            return Err(IoError::parse(path, line, "non-finite pose value"));
        }
        if !crate::camera::is_rotation(&rotation, ROTATION_TOL) {
            return Err(IoError::parse(path, line, "rotation is not orthonormal"));
        }
        if out
            .insert(row.frame, CameraPose::new(Vector3::from(row.c), rotation))
            .is_some()
        {
            return Err(IoError::parse(
                path,
                line,
                format!("duplicate pose for frame {}", row.frame),
            ));
        }
    }
    Ok(out)
}

pub fn write_poses(path: &Path, poses: &[CameraPose]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(POSE_HEADER)
        .map_err(|e| IoError::write(path, e))?;
    for (frame, pose) in poses.iter().enumerate() {
        let mut rec = vec![frame.to_string()];
        rec.extend(pose.center.iter().map(|v| v.to_string()));
        for r in 0..3 {
            rec.extend((0..3).map(|c| pose.rotation[(r, c)].to_string()));
        }
        w.write_record(&rec).map_err(|e| IoError::write(path, e))?;
    }
    w.flush().map_err(|e| IoError::write(path, e))
}

pub type PixelPair = (PixelPoint, PixelPoint);

#[derive(Deserialize)]
struct CorrespondenceRow {
    frame: usize,
    u_prev: f64,
    v_prev: f64,
    u_curr: f64,
    v_curr: f64,
}

/// Correspondences grouped by current frame index.
pub fn read_correspondences(path: &Path) -> Result<BTreeMap<usize, Vec<PixelPair>>, IoError> {
    let mut out: BTreeMap<usize, Vec<PixelPair>> = BTreeMap::new();
    for (line, row) in read_rows::<CorrespondenceRow>(path, &CORRESPONDENCE_HEADER)? {
        if [row.u_prev, row.v_prev, row.u_curr, row.v_curr]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(IoError::parse(path, line, "non-finite pixel coordinate"));
        }
        if row.frame == 0 {
            return Err(IoError::parse(path, line, "frame 0 has no previous image"));
        }
        out.entry(row.frame).or_default().push((
            PixelPoint::new(row.u_prev, row.v_prev),
            PixelPoint::new(row.u_curr, row.v_curr),
        ));
    }
    Ok(out)
}

pub fn write_correspondences<'a, I>(path: &Path, rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = (usize, &'a [PixelPair])>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(CORRESPONDENCE_HEADER)
        .map_err(|e| IoError::write(path, e))?;
    for (frame, pairs) in rows {
        for (a, b) in pairs {
            w.write_record([
                frame.to_string(),
                format!("{:.6}", a.u),
                format!("{:.6}", a.v),
                format!("{:.6}", b.u),
                format!("{:.6}", b.v),
            ])
            .map_err(|e| IoError::write(path, e))?;
        }
    }
    w.flush().map_err(|e| IoError::write(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub cell_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub frames: Vec<FrameLabels>,
}

pub fn write_likelihood(path: &Path, grid: &LikelihoodGrid) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(LIKELIHOOD_HEADER)
        .map_err(|e| IoError::write(path, e))?;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let cell = grid.cell(r, c);
            let d = &cell.deviations;
            let gate = cell.gate.map_or("none", |g| g.as_str());
            let mut rec = vec![r.to_string(), c.to_string()];
            rec.extend(
                [d.xi_e, d.xi_d, d.xi_h, d.xi_p, cell.xi()]
                    .iter()
                    .map(|v| v.to_string()),
            );
            rec.push(gate.to_string());
            w.write_record(&rec).map_err(|e| IoError::write(path, e))?;
        }
    }
    w.flush().map_err(|e| IoError::write(path, e))
}

#[derive(Deserialize)]
struct LikelihoodRow {
    row: usize,
    col: usize,
    xi_e: f64,
    xi_d: f64,
    xi_h: f64,
    xi_p: f64,
    xi: f64,
    gated: String,
}

/// Reads a likelihood CSV back into a grid; every cell must appear exactly once.
pub fn read_likelihood(path: &Path, cell_size: usize) -> Result<LikelihoodGrid, IoError> {
    let rows = read_rows::<LikelihoodRow>(path, &LIKELIHOOD_HEADER)?;
    let n_rows = rows.iter().map(|(_, r)| r.row + 1).max().unwrap_or(0);
    let n_cols = rows.iter().map(|(_, r)| r.col + 1).max().unwrap_or(0);
    let mut cells = vec![None; n_rows * n_cols];
    for (line, r) in rows {
        let gate = match r.gated.as_str() {
            "none" => None,
            s => Some(
                GateReason::parse(s)
                    .ok_or_else(|| IoError::parse(path, line, format!("unknown gate `{s}`")))?,
            ),
        };
        let cell = CellResult {
            deviations: ConstraintDeviations {
                xi_e: r.xi_e,
                xi_d: r.xi_d,
                xi_h: r.xi_h,
                xi_p: r.xi_p,
                xi: r.xi,
                ..Default::default()
            },
            gate,
            range: None,
        };
        let slot = &mut cells[r.row * n_cols + r.col];
        if slot.replace(cell).is_some() {
            return Err(IoError::parse(
                path,
                line,
                format!("duplicate cell ({}, {})", r.row, r.col),
            ));
        }
    }
    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| {
                IoError::parse(
                    path,
                    0,
                    format!("missing cell ({}, {})", i / n_cols, i % n_cols),
                )
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LikelihoodGrid {
        rows: n_rows,
        cols: n_cols,
        cell_size,
        cells,
    })
}

/// Detection settings. Every field is optional in the file and can be overridden on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub camera: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub correspondences: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub constraints: ConstraintConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        read_json(path)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.constraints.validate().map_err(|e| e.to_string())?;
        self.pipeline.validate()
    }
}

/// Writes a simulated scene in the detection input formats.
pub fn write_scene(dir: &Path, scene: &Scene, min_baseline: f64) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::write(dir, e))?;
    write_json(&dir.join(SCENE_FILE), &scene.spec)?;
    write_json(
        &dir.join(CAMERA_FILE),
        &CameraConfig::new(&scene.camera, &scene.road),
    )?;
    write_poses(&dir.join(POSES_FILE), &scene.poses)?;

    let dense: Vec<(usize, Vec<PixelPair>)> = scene
        .frames
        .iter()
        .map(|f| {
            let pairs = scene.flow_field(f).pairs().collect::<Vec<_>>();
            (f.frame, pairs)
        })
        .collect();
    write_correspondences(
        &dir.join(CORRESPONDENCES_FILE),
        dense.iter().map(|(k, p)| (*k, p.as_slice())),
    )?;

    let grid = scene.grid();
    let labels = LabelsFile {
        cell_size: grid.cell,
        rows: grid.rows,
        cols: grid.cols,
        frames: scene
            .frames
            .iter()
            .map(|f| scene.labels(f, min_baseline))
            .collect(),
    };
    write_json(&dir.join(LABELS_FILE), &labels)
}
