//! Per-frame likelihood pipeline: cell averaging, range gating, constraint
//! evaluation, segmentation, rendering and detection metrics.

mod flow;
mod metrics;
mod render;
mod segment;

pub use flow::{cell_means, grid_average, CellFlow, CellGrid, FlowField};
pub use metrics::{
    evaluate_detection, CategoryMetrics, DetectionReport, EvalCategory, FalsePositiveMetrics,
    FrameLabels, MetricsError, ObjectLabel,
};
pub use render::{saturate_for_render, write_pgm, PgmImage};
pub use segment::{segment, Region, SegmentationResult};

use crate::camera::{RoadFrame, SphereMapping};
use crate::constraints::{
    evaluate, CameraPose, ConstraintConfig, ConstraintDeviations, Correspondence,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Rays closer than this angle (radians) give no usable range.
pub const MIN_PARALLAX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    /// Fewer than half of the cell's pixels carry flow.
    InsufficientFlow,
    /// Cell center or its displaced position cannot be unprojected.
    OutOfDomain,
    /// Rays are too close to parallel for a range estimate.
    UnresolvableRange,
    /// Triangulated point beyond the maximum range.
    OutOfRange,
    /// Feature lies along the baseline.
    DegenerateEpipolar,
}

impl GateReason {
    pub const ALL: [GateReason; 5] = [
        GateReason::InsufficientFlow,
        GateReason::OutOfDomain,
        GateReason::UnresolvableRange,
        GateReason::OutOfRange,
        GateReason::DegenerateEpipolar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GateReason::InsufficientFlow => "insufficient_flow",
            GateReason::OutOfDomain => "out_of_domain",
            GateReason::UnresolvableRange => "unresolvable_range",
            GateReason::OutOfRange => "out_of_range",
            GateReason::DegenerateEpipolar => "degenerate_epipolar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for GateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Cell edge in pixels.
    pub cell_size: usize,
    /// Maximum triangulated range in meters; `None` disables range gating.
    pub max_range: Option<f64>,
    /// Segmentation threshold on the fused likelihood.
    pub threshold: f64,
    /// Connected regions with fewer cells are discarded.
    pub min_region: usize,
    /// Likelihood mapped to full intensity in rendered maps.
    pub render_cap: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cell_size: 5,
            max_range: Some(8.0),
            threshold: 0.005,
            min_region: 2,
            render_cap: 0.02,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.cell_size == 0 {
            return Err("cell_size must be positive".into());
        }
        if let Some(r) = self.max_range {
            if !(r > 0.0) {
                return Err(format!("max_range must be positive, got {r}"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        if !(self.render_cap > 0.0) {
            return Err(format!(
                "render_cap must be positive, got {}",
                self.render_cap
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellResult {
    pub deviations: ConstraintDeviations,
    pub gate: Option<GateReason>,
    /// Triangulated distance from the current camera when it was computed.
    pub range: Option<f64>,
}

impl CellResult {
    pub fn gated(reason: GateReason) -> Self {
        Self {
            gate: Some(reason),
            ..Default::default()
        }
    }

    pub fn xi(&self) -> f64 {
        if self.gate.is_some() {
            0.0
        } else {
            self.deviations.xi
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGrid {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: usize,
    /// Row-major cells.
    pub cells: Vec<CellResult>,
}

impl LikelihoodGrid {
    pub fn cell(&self, row: usize, col: usize) -> &CellResult {
        &self.cells[row * self.cols + col]
    }

    pub fn xi(&self, row: usize, col: usize) -> f64 {
        self.cell(row, col).xi()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeVerdict {
    Keep { range: f64 },
    Gate(GateReason),
}

impl RangeVerdict {
    pub fn keep(&self) -> bool {
        matches!(self, RangeVerdict::Keep { .. })
    }
}

/// Keeps a correspondence whose midpoint triangulation lies within `max_range`
/// of the current camera. Points reconstructed behind either camera are always kept.
pub fn range_gate(
    corr: &Correspondence,
    prev: &CameraPose,
    curr: &CameraPose,
    max_range: Option<f64>,
) -> RangeVerdict {
    let (p, q) = (corr.p.into_inner(), corr.p_curr.into_inner());
    let w = prev.center - curr.center;
    let b = p.dot(&q);
    let denom = 1.0 - b * b;
    if corr.p.angle(&corr.p_curr) < MIN_PARALLAX || denom <= 0.0 {
        return match max_range {
            None => RangeVerdict::Keep {
                range: f64::INFINITY,
            },
            Some(_) => RangeVerdict::Gate(GateReason::UnresolvableRange),
        };
    }
    let (d, e) = (p.dot(&w), q.dot(&w));
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let mid = (prev.center + p * s + curr.center + q * t) * 0.5;
    let range = (mid - curr.center).norm();
    if s < 0.0 || t < 0.0 {
        return RangeVerdict::Keep { range };
    }
    match max_range {
        Some(limit) if range > limit => RangeVerdict::Gate(GateReason::OutOfRange),
        _ => RangeVerdict::Keep { range },
    }
}

/// Evaluates one correspondence as a grid cell would.
pub fn evaluate_cell(
    corr: &Correspondence,
    prev: &CameraPose,
    curr: &CameraPose,
    road: &RoadFrame,
    cfg: &ConstraintConfig,
    max_range: Option<f64>,
) -> CellResult {
    let deviations = match evaluate(corr, prev, curr, road, cfg) {
        Ok(d) => d,
        Err(_) => return CellResult::gated(GateReason::DegenerateEpipolar),
    };
    if deviations.static_case {
        return CellResult {
            deviations,
            gate: None,
            range: None,
        };
    }
    match range_gate(corr, prev, curr, max_range) {
        RangeVerdict::Keep { range } => CellResult {
            deviations,
            gate: None,
            range: Some(range),
        },
        // depth detections are never range gated
        RangeVerdict::Gate(_) if deviations.xi_d > 0.0 => CellResult {
            deviations,
            gate: None,
            range: None,
        },
        RangeVerdict::Gate(reason) => CellResult::gated(reason),
    }
}

/// Full per-frame evaluation. Cells are processed in parallel; the result is deterministic.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_frame<M: SphereMapping + Sync + ?Sized>(
    flow: &FlowField,
    camera: &M,
    prev: &CameraPose,
    curr: &CameraPose,
    road: &RoadFrame,
    cfg: &ConstraintConfig,
    pipeline: &PipelineConfig,
) -> LikelihoodGrid {
    let grid = CellGrid::new(flow.width(), flow.height(), pipeline.cell_size);
    let cells = grid_average(flow, &grid, camera, prev, curr)
        .into_par_iter()
        .map(|c| match c {
            Ok(corr) => evaluate_cell(&corr, prev, curr, road, cfg, pipeline.max_range),
            Err(reason) => CellResult::gated(reason),
        })
        .collect();
    LikelihoodGrid {
        rows: grid.rows,
        cols: grid.cols,
        cell_size: grid.cell,
        cells,
    }
}
