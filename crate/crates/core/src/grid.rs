//! Uniform MAC grid on the unit square with a uniform time partition.

use crate::error::{Error, Result};

/// Space-time grid: `nx * ny` cells on `(0,1)^2`, `nt` time steps on `(0, t_final)`.
///
/// Velocity components live on cell faces (marker-and-cell layout), scalars at
/// cell centers. Time level `k` is `k * dt` for `k = 0..=nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub t_final: f64,
    pub nt: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, t_final: f64, nt: usize) -> Result<Grid> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidConfig(format!(
                "grid needs nx, ny >= 4 (got {nx} x {ny})"
            )));
        }
        if nt < 1 {
            return Err(Error::InvalidConfig("grid needs nt >= 1".into()));
        }
        if !(t_final > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_final must be positive (got {t_final})"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            hx: 1.0 / nx as f64,
            hy: 1.0 / ny as f64,
            t_final,
            nt,
        })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Cell area, the quadrature weight for every cell and interior face.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Same spatial discretization (time partitions may differ).
    #[inline]
    pub fn spatial_eq(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn check_spatial(&self, other: &Grid, what: &str) -> Result<()> {
        if self.spatial_eq(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )))
        }
    }

    /// Trapezoid weight for time level `k`: 1/2 at the ends, 1 inside.
    #[inline]
    pub fn time_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.nt {
            0.5
        } else {
            1.0
        }
    }
}
