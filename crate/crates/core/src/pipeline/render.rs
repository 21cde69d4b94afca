//! Saturated likelihood maps written as 8-bit binary PGM.

use super::LikelihoodGrid;
use std::io::{self, Write};

/// `min(xi, cap) / cap` per cell, row-major. Gated cells map to 0.
pub fn saturate_for_render(grid: &LikelihoodGrid, cap: f64) -> Vec<f64> {
    assert!(cap > 0.0, "render cap must be positive");
    grid.cells.iter().map(|c| c.xi().min(cap) / cap).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl PgmImage {
    /// Upscales a row-major map in `[0, 1]` by `scale` pixels per cell.
    pub fn from_normalized(values: &[f64], rows: usize, cols: usize, scale: usize) -> Self {
        assert_eq!(values.len(), rows * cols);
        let scale = scale.max(1);
        let (width, height) = (cols * scale, rows * scale);
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = values[(y / scale) * cols + x / scale].clamp(0.0, 1.0);
                pixels.push((v * 255.0).round() as u8);
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    /// Parses a binary 8-bit PGM as written by [`PgmImage::write_to`].
    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PGM header".into());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
        }
        if fields[0] != "P5" {
            return Err(format!("expected P5 magic, found {}", fields[0]));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| format!("bad PGM header value {s}: {e}"))
        };
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(format!("only 8-bit PGM supported, maxval {maxval}"));
        }
        // single whitespace byte separates header and raster
        let data = &bytes[pos + 1..];
        if data.len() != width * height {
            return Err(format!(
                "raster has {} bytes, expected {}",
                data.len(),
                width * height
            ));
        }
        Ok(Self {
            width,
            height,
            pixels: data.to_vec(),
        })
    }
}

/// Renders the saturated likelihood map of `grid` as PGM, one `cell_size` block per cell.
pub fn write_pgm<W: Write>(grid: &LikelihoodGrid, cap: f64, out: W) -> io::Result<()> {
    let values = saturate_for_render(grid, cap);
    PgmImage::from_normalized(&values, grid.rows, grid.cols, grid.cell_size).write_to(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::CellResult;

    fn grid(xis: &[f64]) -> LikelihoodGrid {
        LikelihoodGrid {
            rows: 1,
            cols: xis.len(),
            cell_size: 2,
            cells: xis
                .iter()
                .map(|&x| {
                    let mut c = CellResult::default();
                    c.deviations.xi = x;
                    c
                })
                .collect(),
        }
    }

    #[test]
    fn saturation_examples() {
        let v = saturate_for_render(&grid(&[0.02, 0.0, 0.01, 0.5]), 0.02);
        assert_eq!(v, vec![1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn pgm_layout() {
        let mut buf = Vec::new();
        write_pgm(&grid(&[0.02, 0.0, 0.01]), 0.02, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n6 2\n255\n"));
        let img = PgmImage::parse(&buf).unwrap();
        assert_eq!((img.width, img.height), (6, 2));
        assert_eq!(&img.pixels[..6], &[255, 255, 0, 0, 128, 128]);
        assert_eq!(&img.pixels[..6], &img.pixels[6..]);
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(PgmImage::parse(b"P2\n1 1\n255\n\x00").is_err());
        assert!(PgmImage::parse(b"P5\n2 2\n255\n\x00").is_err());
    }
}
