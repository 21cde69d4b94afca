//! Thresholding and 4-connected region labelling on the likelihood grid.

use super::LikelihoodGrid;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub cells: usize,
    /// `[row_min, col_min, row_max, col_max]`, inclusive.
    pub bbox: [usize; 4],
    pub mean_xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: usize,
    pub threshold: f64,
    /// Row-major mask of cells belonging to a kept region.
    pub mask: Vec<bool>,
    pub regions: Vec<Region>,
}

impl SegmentationResult {
    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    pub fn detected_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Cells with `xi >= threshold` grouped into 4-connected regions; regions
/// smaller than `min_region` cells are dropped from both the list and the mask.
/// Gated cells never enter the mask.
pub fn segment(grid: &LikelihoodGrid, threshold: f64, min_region: usize) -> SegmentationResult {
    let (rows, cols) = (grid.rows, grid.cols);
    let above: Vec<bool> = grid
        .cells
        .iter()
        .map(|c| c.gate.is_none() && c.xi() >= threshold)
        .collect();
    let mut label = vec![0usize; rows * cols];
    let mut mask = vec![false; rows * cols];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    let mut members = Vec::new();

    for start in 0..rows * cols {
        if !above[start] || label[start] != 0 {
            continue;
        }
        let id = regions.len() + 1;
        label[start] = usize::MAX;
        queue.push_back(start);
        members.clear();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (r, c) = (i / cols, i % cols);
            let mut visit = |j: usize| {
                if above[j] && label[j] == 0 {
                    label[j] = usize::MAX;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - cols);
            }
            if r + 1 < rows {
                visit(i + cols);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < cols {
                visit(i + 1);
            }
        }
        if members.len() < min_region {
            continue;
        }
        let mut bbox = [usize::MAX, usize::MAX, 0, 0];
        let mut sum = 0.0;
        for &i in &members {
            let (r, c) = (i / cols, i % cols);
            bbox[0] = bbox[0].min(r);
            bbox[1] = bbox[1].min(c);
            bbox[2] = bbox[2].max(r);
            bbox[3] = bbox[3].max(c);
            sum += grid.cells[i].xi();
            label[i] = id;
            mask[i] = true;
        }
        regions.push(Region {
            id,
            cells: members.len(),
            bbox,
            mean_xi: sum / members.len() as f64,
        });
    }

    SegmentationResult {
        rows,
        cols,
        cell_size: grid.cell_size,
        threshold,
        mask,
        regions,
    }
}
