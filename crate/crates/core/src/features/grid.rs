use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MIN_TARGETS;
use crate::trajectory::FrenetTarget;

const SUPPORT_SIGMAS: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// (tangential, orthogonal) cell edge, meters.
    pub cell_size: (f64, f64),
    /// Orthogonal bins.
    pub rows: usize,
    /// Tangential bins.
    pub cols: usize,
    /// Points further than this from the path are ignored, meters.
    pub n_limit: f64,
    pub smooth_sigma: f64,
    /// Cells with less total kernel weight stay empty.
    pub min_weight: f64,
    pub min_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cell_size: (0.1, 0.1),
            rows: 16,
            cols: 64,
            n_limit: 1.0,
            smooth_sigma: 0.05,
            min_weight: 1e-6,
            min_points: MIN_TARGETS,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<(), GridError> {
        let (cd, cn) = self.cell_size;
        if !(cd > 0.0 && cn > 0.0 && self.smooth_sigma > 0.0 && self.rows > 0 && self.cols > 0) {
            return Err(GridError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Raster of Doppler deviation from the pedestrian speed, normalized to
/// [-1, 1] with zero meaning "equal to the pedestrian speed" or "empty".
///
/// Row `r` covers orthogonal offsets `n_min + r * cell_n ..`, column `c`
/// tangential distances `d_min + c * cell_d ..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub cells: Vec<f64>,
    pub occupancy: Vec<bool>,
    pub cell_size: (f64, f64),
    /// (d_min, d_max, n_min, n_max).
    pub extent: (f64, f64, f64, f64),
}

impl DopplerGrid {
    /// Grid with unit cells and every non-zero cell marked occupied.
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<f64>) -> Self {
        assert_eq!(rows * cols, cells.len());
        let occupancy = cells.iter().map(|&v| v != 0.0).collect();
        DopplerGrid {
            rows,
            cols,
            cells,
            occupancy,
            cell_size: (1.0, 1.0),
            extent: (0.0, cols as f64, 0.0, rows as f64),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.cols + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.cells.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Gaussian-smoothed, rasterized and normalized Doppler deviation field.
pub fn grid_transform(
    points: &[FrenetTarget],
    speed: f64,
    cfg: &GridConfig,
) -> Result<DopplerGrid, GridError> {
    cfg.validate()?;
    if points.len() < cfg.min_points.max(1) {
        return Err(GridError::TooFewPoints { needed: cfg.min_points.max(1), got: points.len() });
    }
    let (cell_d, cell_n) = cfg.cell_size;
    let width = cfg.cols as f64 * cell_d;
    let height = cfg.rows as f64 * cell_n;

    let mut samples: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.n.abs() <= cfg.n_limit)
        .map(|p| (p.d, p.n, p.v - speed))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.0), hi.max(s.0)));
    // Short paths are zero-padded at the far end, long ones cropped around
    // their centre.
    let d_min = if samples.is_empty() {
        0.0
    } else if hi - lo <= width {
        lo
    } else {
        0.5 * (lo + hi) - 0.5 * width
    };
    let n_min = -0.5 * height;

    let reach = SUPPORT_SIGMAS * cfg.smooth_sigma;
    let two_sigma_sq = 2.0 * cfg.smooth_sigma * cfg.smooth_sigma;
    let mut cells = vec![0.0; cfg.rows * cfg.cols];
    let mut occupancy = vec![false; cfg.rows * cfg.cols];
    for c in 0..cfg.cols {
        let dc = d_min + (c as f64 + 0.5) * cell_d;
        let a = samples.partition_point(|s| s.0 < dc - reach);
        let b = samples.partition_point(|s| s.0 <= dc + reach);
        let near = &samples[a..b];
        if near.is_empty() {
            continue;
        }
        for r in 0..cfg.rows {
            let nc = n_min + (r as f64 + 0.5) * cell_n;
            let (mut num, mut den) = (0.0, 0.0);
            for &(d, n, dev) in near {
                let dist_sq = (d - dc).powi(2) + (n - nc).powi(2);
                if dist_sq <= reach * reach {
                    let w = (-dist_sq / two_sigma_sq).exp();
                    num += w * dev;
                    den += w;
                }
            }
            if den >= cfg.min_weight {
                cells[r * cfg.cols + c] = num / den;
                occupancy[r * cfg.cols + c] = true;
            }
        }
    }

    let scale = cells.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale > 0.0 {
        for v in &mut cells {
            *v /= scale;
        }
    }
    Ok(DopplerGrid {
        rows: cfg.rows,
        cols: cfg.cols,
        cells,
        occupancy,
        cell_size: cfg.cell_size,
        extent: (d_min, d_min + width, n_min, n_min + height),
    })
}

/// Binary PGM with [-1, 1] mapped to [0, 255]; the top image row is the
/// largest orthogonal offset.
pub fn write_pgm<W: Write>(grid: &DopplerGrid, mut out: W) -> io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", grid.cols, grid.rows)?;
    let mut bytes = Vec::with_capacity(grid.cells.len());
    for r in (0..grid.rows).rev() {
        for c in 0..grid.cols {
            let v = grid.get(r, c).clamp(-1.0, 1.0);
            bytes.push(((v + 1.0) * 127.5).round() as u8);
        }
    }
    out.write_all(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(d: f64, n: f64, v: f64) -> FrenetTarget {
        FrenetTarget { d, n, v, t: 0.0 }
    }

    #[test]
    fn no_deviation_gives_zero_grid() {
        let pts: Vec<_> = (0..100).map(|i| pt(i as f64 * 0.03, 0.1, 1.4)).collect();
        let g = grid_transform(&pts, 1.4, &GridConfig::default()).unwrap();
        assert!(g.cells.iter().all(|&v| v == 0.0));
        assert!(g.occupancy.iter().any(|&o| o));
    }

    #[test]
    fn single_sample_normalizes_to_one() {
        let cfg = GridConfig { smooth_sigma: 0.015, min_points: 1, ..Default::default() };
        // Sits inside cell (row 8, col 0).
        let g = grid_transform(&[pt(0.0, 0.05, 3.0)], 1.0, &cfg).unwrap();
        assert_eq!(g.extent.0, 0.0);
        for r in 0..g.rows {
            for c in 0..g.cols {
                let expected = if (r, c) == (8, 0) { 1.0 } else { 0.0 };
                assert_eq!(g.get(r, c), expected, "cell ({r}, {c})");
            }
        }
        let occupied = g.occupancy.iter().filter(|&&o| o).count();
        assert_eq!(occupied, 1);
    }

    #[test]
    fn values_stay_in_unit_range_and_empty_cells_are_zero() {
        let pts: Vec<_> = (0..200)
            .map(|i| pt(i as f64 * 0.02, ((i * 13 % 7) as f64 - 3.0) * 0.1, (i as f64 * 0.7).sin() * 2.0))
            .collect();
        let g = grid_transform(&pts, 0.3, &GridConfig::default()).unwrap();
        assert!(g.cells.iter().all(|v| v.abs() <= 1.0));
        assert!((g.max_abs() - 1.0).abs() < 1e-15);
        for (v, o) in g.cells.iter().zip(&g.occupancy) {
            if !o {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn long_paths_are_centre_cropped() {
        let pts: Vec<_> = (0..300).map(|i| pt(i as f64 * 0.05, 0.0, 1.0)).collect();
        let g = grid_transform(&pts, 0.5, &GridConfig::default()).unwrap();
        let centre = 0.5 * (g.extent.0 + g.extent.1);
        assert!((centre - 299.0 * 0.05 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn pgm_has_header_and_payload() {
        let g = DopplerGrid::from_cells(2, 3, vec![-1.0, 0.0, 1.0, 0.5, 0.5, 0.5]);
        let mut buf = Vec::new();
        write_pgm(&g, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&buf[buf.len() - 6..], &[191, 191, 191, 0, 128, 255]);
    }
}
