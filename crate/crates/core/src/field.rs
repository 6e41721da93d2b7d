//! Discrete fields on the MAC grid: cell scalars, staggered velocities,
//! cell-centered two-component fields, and time-indexed trajectories.
//!
//! Layout conventions (row = x index, column = y index, row-major):
//! - cell scalars: `vals[i * ny + j]`, `i = 0..nx`, `j = 0..ny`
//! - x-velocity on vertical faces: `u[iu * ny + j]`, `iu = 0..=nx`
//! - y-velocity on horizontal faces: `v[i * (ny + 1) + jv]`, `jv = 0..=ny`
//!
//! Boundary-normal faces (`iu = 0`, `iu = nx`, `jv = 0`, `jv = ny`) are not
//! degrees of freedom: they are stored, but pinned to exactly zero.

use crate::error::Result;
use crate::grid::Grid;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub vals: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> ScalarField {
        ScalarField {
            grid: *grid,
            vals: vec![0.0; grid.nx * grid.ny],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.vals[i * self.grid.ny + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.vals[i * self.grid.ny + j]
    }

    pub fn mean(&self) -> f64 {
        self.vals.iter().sum::<f64>() / self.vals.len() as f64
    }

    pub fn subtract_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.vals {
            *v -= m;
        }
    }

    /// Cell-weighted L2 norm.
    pub fn norm_l2(&self) -> f64 {
        let w = self.grid.cell_area();
        (self.vals.iter().map(|x| x * x).sum::<f64>() * w).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Velocity field on the staggered grid. Boundary-normal entries stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(grid: &Grid) -> StaggeredField {
        StaggeredField {
            grid: *grid,
            u: vec![0.0; (grid.nx + 1) * grid.ny],
            v: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    pub fn from_raw(grid: &Grid, u: Vec<f64>, v: Vec<f64>) -> Result<StaggeredField> {
        if u.len() != (grid.nx + 1) * grid.ny || v.len() != grid.nx * (grid.ny + 1) {
            return Err(crate::error::Error::GridMismatch(format!(
                "face array lengths {} / {} do not match {}x{} grid",
                u.len(),
                v.len(),
                grid.nx,
                grid.ny
            )));
        }
        let mut f = StaggeredField { grid: *grid, u, v };
        f.enforce_boundary();
        Ok(f)
    }

    #[inline]
    pub fn iu(&self, iu: usize, j: usize) -> usize {
        iu * self.grid.ny + j
    }

    #[inline]
    pub fn iv(&self, i: usize, jv: usize) -> usize {
        i * (self.grid.ny + 1) + jv
    }

    /// Zero the boundary-normal faces (no-penetration invariant).
    pub fn enforce_boundary(&mut self) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            self.u[j] = 0.0; // iu = 0
            self.u[nx * ny + j] = 0.0; // iu = nx
        }
        for i in 0..nx {
            self.v[i * (ny + 1)] = 0.0; // jv = 0
            self.v[i * (ny + 1) + ny] = 0.0; // jv = ny
        }
    }

    pub fn boundary_is_zero(&self) -> bool {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        (0..ny).all(|j| self.u[j] == 0.0 && self.u[nx * ny + j] == 0.0)
            && (0..nx).all(|i| self.v[i * (ny + 1)] == 0.0 && self.v[i * (ny + 1) + ny] == 0.0)
    }

    pub fn scale(&mut self, c: f64) {
        for x in &mut self.u {
            *x *= c;
        }
        for x in &mut self.v {
            *x *= c;
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &StaggeredField) {
        debug_assert!(self.grid.spatial_eq(&other.grid));
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += c * b;
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &StaggeredField) -> StaggeredField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &StaggeredField) -> StaggeredField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn fill(&mut self, c: f64) {
        self.u.iter_mut().for_each(|x| *x = c);
        self.v.iter_mut().for_each(|x| *x = c);
        self.enforce_boundary();
    }

    /// Face-weighted L2 inner product (boundary faces carry zeros).
    pub fn dot(&self, other: &StaggeredField) -> f64 {
        debug_assert!(self.grid.spatial_eq(&other.grid));
        let w = self.grid.cell_area();
        let su: f64 = self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum();
        let sv: f64 = self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum();
        w * (su + sv)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mu = self.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mv = self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        mu.max(mv)
    }

    /// Filled with uniform random values on interior faces.
    pub fn random(grid: &Grid, rng: &mut impl Rng, amplitude: f64) -> StaggeredField {
        let mut f = StaggeredField::zeros(grid);
        for x in &mut f.u {
            *x = amplitude * (2.0 * rng.gen::<f64>() - 1.0);
        }
        for x in &mut f.v {
            *x = amplitude * (2.0 * rng.gen::<f64>() - 1.0);
        }
        f.enforce_boundary();
        f
    }

    /// Sample a smooth function pair at face centers. `fu`, `fv` take (x, y).
    pub fn from_functions(
        grid: &Grid,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> StaggeredField {
        let mut f = StaggeredField::zeros(grid);
        let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
        for iu in 0..=nx {
            for j in 0..ny {
                f.u[iu * ny + j] = fu(iu as f64 * hx, (j as f64 + 0.5) * hy);
            }
        }
        for i in 0..nx {
            for jv in 0..=ny {
                f.v[i * (ny + 1) + jv] = fv((i as f64 + 0.5) * hx, jv as f64 * hy);
            }
        }
        f.enforce_boundary();
        f
    }
}

/// Cell-centered two-component field (controls, control gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField2 {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl CellField2 {
    pub fn zeros(grid: &Grid) -> CellField2 {
        CellField2 {
            grid: *grid,
            x: vec![0.0; grid.n_cells()],
            y: vec![0.0; grid.n_cells()],
        }
    }

    pub fn constant(grid: &Grid, cx: f64, cy: f64) -> CellField2 {
        CellField2 {
            grid: *grid,
            x: vec![cx; grid.n_cells()],
            y: vec![cy; grid.n_cells()],
        }
    }

    pub fn from_functions(
        grid: &Grid,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> CellField2 {
        let mut f = CellField2::zeros(grid);
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let (xc, yc) = ((i as f64 + 0.5) * grid.hx, (j as f64 + 0.5) * grid.hy);
                f.x[i * grid.ny + j] = fx(xc, yc);
                f.y[i * grid.ny + j] = fy(xc, yc);
            }
        }
        f
    }

    pub fn scale(&mut self, c: f64) {
        self.x.iter_mut().for_each(|v| *v *= c);
        self.y.iter_mut().for_each(|v| *v *= c);
    }

    pub fn axpy(&mut self, c: f64, other: &CellField2) {
        debug_assert!(self.grid.spatial_eq(&other.grid));
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += c * b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += c * b;
        }
    }

    /// Cell-weighted L2 inner product over both components.
    pub fn dot(&self, other: &CellField2) -> f64 {
        let w = self.grid.cell_area();
        let sx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum();
        let sy: f64 = self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum();
        w * (sx + sy)
    }

    /// Componentwise L1 norm: cell-weighted sum of |x| + |y|.
    pub fn norm_l1(&self) -> f64 {
        let w = self.grid.cell_area();
        w * (self.x.iter().map(|v| v.abs()).sum::<f64>()
            + self.y.iter().map(|v| v.abs()).sum::<f64>())
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mx = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let my = self.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        mx.max(my)
    }
}

/// Time-indexed sequence of staggered fields: snapshot `k` is time `k * dt`,
/// `k = 0..=nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub snaps: Vec<StaggeredField>,
}

impl Trajectory {
    pub fn zeros(grid: &Grid) -> Trajectory {
        Trajectory {
            grid: *grid,
            snaps: vec![StaggeredField::zeros(grid); grid.nt + 1],
        }
    }

    pub fn from_snaps(grid: &Grid, snaps: Vec<StaggeredField>) -> Result<Trajectory> {
        if snaps.len() != grid.nt + 1 {
            return Err(crate::error::Error::GridMismatch(format!(
                "trajectory needs nt+1 = {} snapshots, got {}",
                grid.nt + 1,
                snaps.len()
            )));
        }
        for s in &snaps {
            grid.check_spatial(&s.grid, "trajectory snapshot")?;
        }
        Ok(Trajectory { grid: *grid, snaps })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn axpy(&mut self, c: f64, other: &Trajectory) {
        debug_assert_eq!(self.snaps.len(), other.snaps.len());
        for (a, b) in self.snaps.iter_mut().zip(&other.snaps) {
            a.axpy(c, b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for s in &mut self.snaps {
            s.scale(c);
        }
    }

    pub fn sub(&self, other: &Trajectory) -> Trajectory {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Trapezoid-in-time L2(Q) inner product.
    pub fn dot_q(&self, other: &Trajectory) -> f64 {
        debug_assert_eq!(self.snaps.len(), other.snaps.len());
        let dt = self.grid.dt();
        self.snaps
            .iter()
            .zip(&other.snaps)
            .enumerate()
            .map(|(k, (a, b))| self.grid.time_weight(k) * dt * a.dot(b))
            .sum()
    }

    pub fn norm_l2_q(&self) -> f64 {
        self.dot_q(self).sqrt()
    }

    /// sup-norm over space and time (the discrete C(Q̄) norm).
    pub fn max_abs(&self) -> f64 {
        self.snaps.iter().fold(0.0f64, |m, s| m.max(s.max_abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn boundary_faces_stay_zero() {
        let g = Grid::new(8, 6, 1.0, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f = StaggeredField::random(&g, &mut rng, 1.0);
        assert!(f.boundary_is_zero());
    }

    #[test]
    fn from_raw_rejects_wrong_lengths() {
        let g = Grid::new(8, 6, 1.0, 2).unwrap();
        assert!(StaggeredField::from_raw(&g, vec![0.0; 10], vec![0.0; 10]).is_err());
    }

    #[test]
    fn dot_is_symmetric_and_weighted() {
        let g = Grid::new(6, 6, 1.0, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = StaggeredField::random(&g, &mut rng, 1.0);
        let b = StaggeredField::random(&g, &mut rng, 1.0);
        assert!((a.dot(&b) - b.dot(&a)).abs() < 1e-15);
        let mut one = StaggeredField::zeros(&g);
        one.fill(1.0);
        // interior u faces: (nx-1)*ny, interior v faces: nx*(ny-1)
        let expect = g.cell_area() * ((6 - 1) * 6 + 6 * (6 - 1)) as f64;
        assert!((one.dot(&one) - expect).abs() < 1e-13);
    }
}
