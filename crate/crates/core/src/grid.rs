//! Geometric radial grids.

use crate::error::{Error, Result};

pub const DEFAULT_R_MIN: f64 = 1e-8;
pub const DEFAULT_R_MAX: f64 = 1e4;
pub const DEFAULT_POINTS: usize = 4096;

/// Radii `r_j = r_min * rho^j`, `j = 0..points`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    r: Vec<f64>,
}

impl Grid {
    pub fn geometric(r_min: f64, r_max: f64, points: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && points >= 8) || !r_max.is_finite() {
            return Err(Error::Profile(format!(
                "grid needs 0 < r_min < r_max and at least 8 points (got {r_min}, {r_max}, {points})"
            )));
        }
        let step = (r_max / r_min).ln() / (points - 1) as f64;
        let mut r: Vec<f64> = (0..points).map(|j| r_min * (step * j as f64).exp()).collect();
        r[points - 1] = r_max;
        Ok(Grid { r })
    }

    pub fn default_grid() -> Self {
        Grid::geometric(DEFAULT_R_MIN, DEFAULT_R_MAX, DEFAULT_POINTS).expect("default grid")
    }

    pub fn from_points(r: Vec<f64>) -> Result<Self> {
        if r.len() < 4 || r[0] <= 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Profile("grid must be positive and strictly increasing".into()));
        }
        Ok(Grid { r })
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.r[0]
    }

    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    /// Constant log-spacing `ln(r_{j+1}/r_j)` (approximate for non-geometric grids).
    pub fn log_step(&self) -> f64 {
        (self.r_max() / self.r_min()).ln() / (self.len() - 1) as f64
    }

    /// Index of the last grid point not exceeding `x`, clamped to the grid.
    pub fn locate(&self, x: f64) -> usize {
        match self.r.partition_point(|v| *v <= x) {
            0 => 0,
            k => (k - 1).min(self.r.len() - 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_endpoints_and_ratio() {
        let g = Grid::geometric(1e-8, 1e4, 4096).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.r_min(), 1e-8);
        assert_eq!(g.r_max(), 1e4);
        let r = g.radii();
        let q0 = r[1] / r[0];
        let q1 = r[3000] / r[2999];
        assert!((q0 - q1).abs() < 1e-12);
        assert_eq!(g.locate(r[17] * 1.0001), 17);
        assert_eq!(g.locate(1e9), 4094);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid::geometric(0.0, 1.0, 100).is_err());
        assert!(Grid::from_points(vec![1.0, 0.5, 2.0, 3.0]).is_err());
    }
}
