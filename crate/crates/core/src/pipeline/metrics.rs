//! Detection, coverage and false-positive rates against ground-truth cell labels.

use super::SegmentationResult;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;

/// Category under which detections are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalCategory {
    Crossing,
    Overtaking,
    Preceding,
    Approaching,
    /// Any moving object seen while the ego camera stands still.
    StaticEgo,
}

impl EvalCategory {
    pub const ALL: [EvalCategory; 5] = [
        EvalCategory::Crossing,
        EvalCategory::Overtaking,
        EvalCategory::Preceding,
        EvalCategory::Approaching,
        EvalCategory::StaticEgo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EvalCategory::Crossing => "crossing",
            EvalCategory::Overtaking => "overtaking",
            EvalCategory::Preceding => "preceding",
            EvalCategory::Approaching => "approaching",
            EvalCategory::StaticEgo => "static_ego",
        }
    }
}

impl fmt::Display for EvalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLabel {
    pub id: usize,
    pub category: EvalCategory,
    /// `(row, col)` cells covered by the object.
    pub cells: Vec<(usize, usize)>,
}

/// Moving-object ground truth for one frame, at grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub frame: usize,
    pub rows: usize,
    pub cols: usize,
    pub objects: Vec<ObjectLabel>,
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction/label frame mismatch: {0}")]
    MismatchedFrames(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    /// Object-frames in which the object is visible.
    pub frames: usize,
    /// Object-frames with at least one detected cell on the object.
    pub detected: usize,
    pub detection_rate: f64,
    /// Mean fraction of the object's cells covered, over all visible object-frames.
    pub coverage_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FalsePositiveMetrics {
    pub frames: usize,
    /// Frames with at least one detected cell outside every label.
    pub frames_with_fp: usize,
    pub frame_rate: f64,
    /// Mean over frames of detected unlabelled cells / unlabelled cells.
    pub mean_spurious_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub categories: BTreeMap<EvalCategory, CategoryMetrics>,
    pub false_positives: FalsePositiveMetrics,
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>8} {:>10} {:>10}",
            "type", "frames", "detection", "coverage"
        )?;
        for (cat, m) in &self.categories {
            writeln!(
                f,
                "{:<16} {:>8} {:>9.1}% {:>9.1}%",
                cat.as_str(),
                m.frames,
                100.0 * m.detection_rate,
                100.0 * m.coverage_rate
            )?;
        }
        let fp = &self.false_positives;
        write!(
            f,
            "{:<16} {:>8} {:>9.1}% {:>9.1}%",
            "false_positives",
            fp.frames,
            100.0 * fp.frame_rate,
            100.0 * fp.mean_spurious_fraction
        )
    }
}

/// Scores per-frame segmentations against labels; both slices are frame-aligned.
pub fn evaluate_detection(
    predictions: &[SegmentationResult],
    labels: &[FrameLabels],
) -> Result<DetectionReport, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::MismatchedFrames(format!(
            "{} predicted frames vs {} labelled frames",
            predictions.len(),
            labels.len()
        )));
    }
    let mut sums: BTreeMap<EvalCategory, (usize, usize, f64)> = BTreeMap::new();
    let mut fp = FalsePositiveMetrics::default();
    let mut spurious_sum = 0.0;

    for (pred, lab) in predictions.iter().zip(labels) {
        if (pred.rows, pred.cols) != (lab.rows, lab.cols) {
            return Err(MetricsError::MismatchedFrames(format!(
                "frame {}: prediction grid {}x{} vs label grid {}x{}",
                lab.frame, pred.rows, pred.cols, lab.rows, lab.cols
            )));
        }
        let mut labelled = HashSet::new();
        for obj in &lab.objects {
            if obj.cells.is_empty() {
                continue;
            }
            let covered = obj
                .cells
                .iter()
                .filter(|&&(r, c)| pred.is_set(r, c))
                .count();
            let entry = sums.entry(obj.category).or_default();
            entry.0 += 1;
            if covered > 0 {
                entry.1 += 1;
            }
            entry.2 += covered as f64 / obj.cells.len() as f64;
            labelled.extend(obj.cells.iter().map(|&(r, c)| r * lab.cols + c));
        }
        let background = pred.rows * pred.cols - labelled.len();
        let spurious = (0..pred.mask.len())
            .filter(|i| pred.mask[*i] && !labelled.contains(i))
            .count();
        fp.frames += 1;
        if spurious > 0 {
            fp.frames_with_fp += 1;
        }
        if background > 0 {
            spurious_sum += spurious as f64 / background as f64;
        }
    }
    if fp.frames > 0 {
        fp.frame_rate = fp.frames_with_fp as f64 / fp.frames as f64;
        fp.mean_spurious_fraction = spurious_sum / fp.frames as f64;
    }
    let categories = sums
        .into_iter()
        .map(|(cat, (frames, detected, coverage))| {
            let m = CategoryMetrics {
                frames,
                detected,
                detection_rate: detected as f64 / frames as f64,
                coverage_rate: coverage / frames as f64,
            };
            (cat, m)
        })
        .collect();
    Ok(DetectionReport {
        categories,
        false_positives: fp,
    })
}
