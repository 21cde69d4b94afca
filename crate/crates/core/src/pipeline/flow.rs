//! Dense displacement fields and their reduction to one correspondence per grid cell.

use crate::camera::{PixelPoint, SphereMapping};
use crate::constraints::{CameraPose, Correspondence};

use super::GateReason;

/// Per-pixel displacement `(du, dv)` with a validity mask. Pixel `(x, y)` is centered at `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    du: Vec<f64>,
    dv: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    /// A field with every pixel invalid.
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            du: vec![0.0; n],
            dv: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn uniform(width: usize, height: usize, du: f64, dv: f64) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            du: vec![du; n],
            dv: vec![dv; n],
            valid: vec![true; n],
        }
    }

    /// Builds a field from point correspondences, each assigned to the pixel
    /// nearest its previous-frame position. Several correspondences on one pixel are averaged.
    pub fn from_correspondences<I>(width: usize, height: usize, pairs: I) -> Self
    where
        I: IntoIterator<Item = (PixelPoint, PixelPoint)>,
    {
        let mut field = Self::new(width, height);
        let mut count = vec![0u32; width * height];
        for (a, b) in pairs {
            let (x, y) = (a.u.round(), a.v.round());
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                continue;
            }
            let i = y as usize * width + x as usize;
            field.du[i] += b.u - a.u;
            field.dv[i] += b.v - a.v;
            count[i] += 1;
        }
        for (i, &c) in count.iter().enumerate() {
            if c > 0 {
                field.du[i] /= c as f64;
                field.dv[i] /= c as f64;
                field.valid[i] = true;
            }
        }
        field
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn set(&mut self, x: usize, y: usize, du: f64, dv: f64) {
        let i = y * self.width + x;
        self.du[i] = du;
        self.dv[i] = dv;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.du[i], self.dv[i]))
    }

    /// Valid pixels as `(u_prev, u_curr)` pairs, row-major.
    pub fn pairs(&self) -> impl Iterator<Item = (PixelPoint, PixelPoint)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| {
                self.get(x, y).map(|(du, dv)| {
                    let (u, v) = (x as f64, y as f64);
                    (PixelPoint::new(u, v), PixelPoint::new(u + du, v + dv))
                })
            })
        })
    }
}

/// Grid of square cells laid over an image; edge cells may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellGrid {
    pub cell: usize,
    pub rows: usize,
    pub cols: usize,
    width: usize,
    height: usize,
}

impl CellGrid {
    pub fn new(width: usize, height: usize, cell: usize) -> Self {
        assert!(cell > 0, "cell size must be positive");
        Self {
            cell,
            rows: height.div_ceil(cell),
            cols: width.div_ceil(cell),
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel ranges `(x0..x1, y0..y1)` covered by a cell.
    pub fn span(&self, row: usize, col: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let x0 = col * self.cell;
        let y0 = row * self.cell;
        (
            x0..(x0 + self.cell).min(self.width),
            y0..(y0 + self.cell).min(self.height),
        )
    }

    pub fn center(&self, row: usize, col: usize) -> PixelPoint {
        let (xs, ys) = self.span(row, col);
        PixelPoint::new(
            (xs.start + xs.end - 1) as f64 / 2.0,
            (ys.start + ys.end - 1) as f64 / 2.0,
        )
    }

    pub fn cell_of(&self, x: usize, y: usize) -> (usize, usize) {
        (y / self.cell, x / self.cell)
    }
}

/// Mean displacement of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFlow {
    pub center: PixelPoint,
    pub du: f64,
    pub dv: f64,
    pub valid_fraction: f64,
}

/// Mean displacement per cell, row-major; `None` when fewer than half the pixels are valid.
pub fn cell_means(flow: &FlowField, grid: &CellGrid) -> Vec<Option<CellFlow>> {
    let mut out = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (xs, ys) = grid.span(row, col);
            let total = xs.len() * ys.len();
            let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
            for y in ys.clone() {
                for x in xs.clone() {
                    if let Some((du, dv)) = flow.get(x, y) {
                        su += du;
                        sv += dv;
                        n += 1;
                    }
                }
            }
            // at least 50% of the cell must carry flow
            if n == 0 || 2 * n < total {
                out.push(None);
            } else {
                out.push(Some(CellFlow {
                    center: grid.center(row, col),
                    du: su / n as f64,
                    dv: sv / n as f64,
                    valid_fraction: n as f64 / total as f64,
                }));
            }
        }
    }
    out
}

/// One correspondence per cell: the cell center and the center displaced by the mean flow.
pub fn grid_average<M: SphereMapping + ?Sized>(
    flow: &FlowField,
    grid: &CellGrid,
    camera: &M,
    prev: &CameraPose,
    curr: &CameraPose,
) -> Vec<Result<Correspondence, GateReason>> {
    cell_means(flow, grid)
        .into_iter()
        .map(|cell| {
            let cell = cell.ok_or(GateReason::InsufficientFlow)?;
            let target = PixelPoint::new(cell.center.u + cell.du, cell.center.v + cell.dv);
            Correspondence::from_pixels(cell.center, target, camera, prev, curr)
                .map_err(|_| GateReason::OutOfDomain)
        })
        .collect()
}
