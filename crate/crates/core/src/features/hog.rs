use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::DopplerGrid;

pub const DEFAULT_BINS: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HogError {
    #[error("grid must be at least 3x3, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("bin count must be positive")]
    NoBins,
}

/// Single global histogram of unsigned gradient orientations, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HogDescriptor {
    pub bins: Vec<f64>,
}

/// Gradients use the `[-1, 0, 1]` mask along both axes with replicated
/// borders. Each cell splits its gradient magnitude linearly between the two
/// nearest bin centres; orientation is circular modulo 180 degrees, so the
/// last bin wraps onto the first. An all-zero gradient field gives the
/// uniform histogram.
pub fn hog(grid: &DopplerGrid, bins: usize) -> Result<HogDescriptor, HogError> {
    if bins == 0 {
        return Err(HogError::NoBins);
    }
    let (rows, cols) = (grid.rows, grid.cols);
    if rows < 3 || cols < 3 {
        return Err(HogError::GridTooSmall { rows, cols });
    }
    let bin_width = PI / bins as f64;
    let mut hist = vec![0.0; bins];
    for r in 0..rows {
        let (up, down) = ((r + 1).min(rows - 1), r.saturating_sub(1));
        for c in 0..cols {
            let (right, left) = ((c + 1).min(cols - 1), c.saturating_sub(1));
            let gx = grid.get(r, right) - grid.get(r, left);
            let gy = grid.get(up, c) - grid.get(down, c);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let pos = theta / bin_width - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let lo = (lower as isize).rem_euclid(bins as isize) as usize;
            let hi = (lo + 1) % bins;
            hist[lo] += mag * (1.0 - frac);
            hist[hi] += mag * frac;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        for b in &mut hist {
            *b /= total;
        }
    } else {
        hist.fill(1.0 / bins as f64);
    }
    Ok(HogDescriptor { bins: hist })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_gives_uniform_fallback() {
        let g = DopplerGrid::from_cells(4, 5, vec![0.3; 20]);
        let h = hog(&g, 9).unwrap();
        assert!(h.bins.iter().all(|&b| (b - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn ramp_along_d_votes_horizontal() {
        let cells = (0..4 * 6).map(|i| (i % 6) as f64 * 0.1).collect();
        let h = hog(&DopplerGrid::from_cells(4, 6, cells), 9).unwrap();
        // 0 deg sits halfway between the centres of the first and last bin.
        assert!((h.bins[0] - 0.5).abs() < 1e-12);
        assert!((h.bins[8] - 0.5).abs() < 1e-12);
        assert!(h.bins[1..8].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn ramp_along_n_votes_vertical() {
        let cells = (0..5 * 4).map(|i| (i / 4) as f64).collect();
        let h = hog(&DopplerGrid::from_cells(5, 4, cells), 9).unwrap();
        // 90 deg is the centre of bin 4.
        assert!((h.bins[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_grids() {
        let g = DopplerGrid::from_cells(2, 5, vec![0.0; 10]);
        assert_eq!(hog(&g, 9), Err(HogError::GridTooSmall { rows: 2, cols: 5 }));
        let g = DopplerGrid::from_cells(3, 3, vec![0.0; 9]);
        assert_eq!(hog(&g, 0), Err(HogError::NoBins));
    }

    #[test]
    fn negated_grid_has_same_descriptor() {
        let cells: Vec<f64> = (0..8 * 8).map(|i| (i * 31 % 13) as f64 / 6.5 - 1.0).collect();
        let neg: Vec<f64> = cells.iter().map(|v| -v).collect();
        let a = hog(&DopplerGrid::from_cells(8, 8, cells), 9).unwrap();
        let b = hog(&DopplerGrid::from_cells(8, 8, neg), 9).unwrap();
        for (x, y) in a.bins.iter().zip(&b.bins) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.bins.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
