//! Box-constrained force controls.
//!
//! Controls are cell-centered two-component fields, piecewise constant in
//! time: level `k` (0-based, `nt` levels) acts on the step from `t_k` to
//! `t_{k+1}`, matching the backward-Euler evaluation point. Norms over the
//! cylinder are therefore exact sums, no trapezoid weights.

use crate::error::{Error, Result};
use crate::field::CellField2;
use crate::grid::Grid;

/// Lower/upper bound fields; either one pair (constant in time) or one per level.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub grid: Grid,
    lower: Vec<CellField2>,
    upper: Vec<CellField2>,
}

impl ControlBounds {
    pub fn new(grid: &Grid, lower: Vec<CellField2>, upper: Vec<CellField2>) -> Result<ControlBounds> {
        if lower.len() != upper.len() || (lower.len() != 1 && lower.len() != grid.nt) {
            return Err(Error::InvalidConfig(format!(
                "bounds need 1 or nt = {} levels, got {} / {}",
                grid.nt,
                lower.len(),
                upper.len()
            )));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            grid.check_spatial(&lo.grid, "control lower bound")?;
            grid.check_spatial(&hi.grid, "control upper bound")?;
            let ok = lo.x.iter().zip(&hi.x).all(|(a, b)| a <= b)
                && lo.y.iter().zip(&hi.y).all(|(a, b)| a <= b);
            if !ok {
                return Err(Error::InvalidConfig("lower bound exceeds upper bound".into()));
            }
        }
        Ok(ControlBounds { grid: *grid, lower, upper })
    }

    pub fn constant(grid: &Grid, lo: f64, hi: f64) -> Result<ControlBounds> {
        ControlBounds::new(
            grid,
            vec![CellField2::constant(grid, lo, lo)],
            vec![CellField2::constant(grid, hi, hi)],
        )
    }

    #[inline]
    pub fn lower_at(&self, level: usize) -> &CellField2 {
        &self.lower[if self.lower.len() == 1 { 0 } else { level }]
    }

    #[inline]
    pub fn upper_at(&self, level: usize) -> &CellField2 {
        &self.upper[if self.upper.len() == 1 { 0 } else { level }]
    }

    /// Midpoint control (ua + ub) / 2.
    pub fn midpoint(&self) -> Control {
        let levels = (0..self.grid.nt)
            .map(|k| {
                let mut m = self.lower_at(k).clone();
                m.axpy(1.0, self.upper_at(k));
                m.scale(0.5);
                m
            })
            .collect();
        Control {
            grid: self.grid,
            levels,
            bounds: self.clone(),
        }
    }

    /// L1 volume of the box: `||ub - ua||_{L1(Q)}`.
    pub fn width_l1(&self) -> f64 {
        let dt = self.grid.dt();
        (0..self.grid.nt)
            .map(|k| {
                let mut w = self.upper_at(k).clone();
                w.axpy(-1.0, self.lower_at(k));
                dt * w.norm_l1()
            })
            .sum()
    }
}

/// Feasible control: `ua <= u <= ub` componentwise, enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub grid: Grid,
    pub levels: Vec<CellField2>,
    pub bounds: ControlBounds,
}

impl Control {
    pub fn new(grid: &Grid, levels: Vec<CellField2>, bounds: ControlBounds) -> Result<Control> {
        if levels.len() != grid.nt {
            return Err(Error::InvalidConfig(format!(
                "control needs nt = {} levels, got {}",
                grid.nt,
                levels.len()
            )));
        }
        for (k, lv) in levels.iter().enumerate() {
            grid.check_spatial(&lv.grid, "control level")?;
            let lo = bounds.lower_at(k);
            let hi = bounds.upper_at(k);
            let ok = lv.x.iter().zip(&lo.x).all(|(v, a)| v >= a)
                && lv.x.iter().zip(&hi.x).all(|(v, b)| v <= b)
                && lv.y.iter().zip(&lo.y).all(|(v, a)| v >= a)
                && lv.y.iter().zip(&hi.y).all(|(v, b)| v <= b);
            if !ok {
                return Err(Error::Infeasible(format!("control level {k} violates its box")));
            }
        }
        Ok(Control {
            grid: *grid,
            levels,
            bounds,
        })
    }

    /// Clamp the given levels into the box, then construct.
    pub fn new_clamped(grid: &Grid, mut levels: Vec<CellField2>, bounds: ControlBounds) -> Result<Control> {
        for (k, lv) in levels.iter_mut().enumerate() {
            let lo = bounds.lower_at(k);
            let hi = bounds.upper_at(k);
            for ((v, a), b) in lv.x.iter_mut().zip(&lo.x).zip(&hi.x) {
                *v = v.max(*a).min(*b);
            }
            for ((v, a), b) in lv.y.iter_mut().zip(&lo.y).zip(&hi.y) {
                *v = v.max(*a).min(*b);
            }
        }
        Control::new(grid, levels, bounds)
    }

    pub fn zeros_in(bounds: &ControlBounds) -> Result<Control> {
        let grid = bounds.grid;
        Control::new(
            &grid,
            vec![CellField2::zeros(&grid); grid.nt],
            bounds.clone(),
        )
    }

    /// `sum_k dt <a_k, b_k>`: the L2(Q) pairing for piecewise-constant series.
    pub fn dot(&self, other: &Control) -> f64 {
        let dt = self.grid.dt();
        self.levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| dt * a.dot(b))
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Componentwise L1(Q) norm (sum of both component norms).
    pub fn norm_l1(&self) -> f64 {
        let dt = self.grid.dt();
        self.levels.iter().map(|l| dt * l.norm_l1()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().fold(0.0f64, |m, l| m.max(l.max_abs()))
    }

    pub fn dist_l1(&self, other: &Control) -> f64 {
        let dt = self.grid.dt();
        self.levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| {
                let mut d = a.clone();
                d.axpy(-1.0, b);
                dt * d.norm_l1()
            })
            .sum()
    }

    /// `self + t * (other - self)`, clamped against roundoff.
    pub fn blend(&self, other: &Control, t: f64) -> Result<Control> {
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| {
                let mut l = a.clone();
                l.scale(1.0 - t);
                l.axpy(t, b);
                l
            })
            .collect();
        Control::new_clamped(&self.grid, levels, self.bounds.clone())
    }
}

/// Plain cell-centered time series without box constraints (gradients,
/// directions, residuals). Same level convention as [`Control`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellSeries {
    pub grid: Grid,
    pub levels: Vec<CellField2>,
}

impl CellSeries {
    pub fn zeros(grid: &Grid) -> CellSeries {
        CellSeries {
            grid: *grid,
            levels: vec![CellField2::zeros(grid); grid.nt],
        }
    }

    pub fn from_control(u: &Control) -> CellSeries {
        CellSeries {
            grid: u.grid,
            levels: u.levels.clone(),
        }
    }

    pub fn diff(a: &Control, b: &Control) -> CellSeries {
        let levels = a
            .levels
            .iter()
            .zip(&b.levels)
            .map(|(x, y)| {
                let mut d = x.clone();
                d.axpy(-1.0, y);
                d
            })
            .collect();
        CellSeries {
            grid: a.grid,
            levels,
        }
    }

    pub fn dot(&self, other: &CellSeries) -> f64 {
        let dt = self.grid.dt();
        self.levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| dt * a.dot(b))
            .sum()
    }

    pub fn dot_control(&self, other: &Control) -> f64 {
        let dt = self.grid.dt();
        self.levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| dt * a.dot(b))
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        let dt = self.grid.dt();
        self.levels.iter().map(|l| dt * l.norm_l1()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().fold(0.0f64, |m, l| m.max(l.max_abs()))
    }

    pub fn axpy(&mut self, c: f64, other: &CellSeries) {
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.axpy(c, b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.levels {
            l.scale(c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_validate_order() {
        let g = Grid::new(6, 6, 1.0, 4).unwrap();
        assert!(ControlBounds::constant(&g, 1.0, -1.0).is_err());
        assert!(ControlBounds::constant(&g, -1.0, 1.0).is_ok());
    }

    #[test]
    fn control_enforces_box() {
        let g = Grid::new(6, 6, 1.0, 4).unwrap();
        let b = ControlBounds::constant(&g, -1.0, 1.0).unwrap();
        let bad = vec![CellField2::constant(&g, 2.0, 0.0); g.nt];
        assert!(Control::new(&g, bad.clone(), b.clone()).is_err());
        let clamped = Control::new_clamped(&g, bad, b).unwrap();
        assert!((clamped.max_abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l1_norm_is_componentwise_and_exact() {
        let g = Grid::new(8, 8, 2.0, 4).unwrap();
        let b = ControlBounds::constant(&g, -2.0, 2.0).unwrap();
        let u = Control::new(
            &g,
            vec![CellField2::constant(&g, 1.0, -0.5); g.nt],
            b,
        )
        .unwrap();
        // |1| + |-0.5| over unit area times T = 2
        assert!((u.norm_l1() - 2.0 * 1.5).abs() < 1e-12);
    }
}
