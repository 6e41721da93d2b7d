//! Direct separable solvers for the constant-coefficient operators on the
//! MAC grid: the cell-centered Neumann Laplacian and the face Helmholtz
//! operators `I + c * (-laplace)`.
//!
//! Each 1-D second-difference stencil is diagonalized by an explicit sine or
//! cosine basis:
//! - cells (Neumann both ends): `cos(pi m (i + 1/2) / n)`
//! - interior faces (Dirichlet ends): `sin(pi m i / n)`
//! - faces with ghost reflection: `sin(pi m (j + 1/2) / n)`
//!
//! The bases are stored densely and applied as matrix passes; at desk scale
//! this is fast enough and keeps the eigenstructure auditable. Basis vectors
//! are orthogonal, so the inverse pass is the transpose with diagonal scaling.

use crate::field::{ScalarField, StaggeredField};
use crate::grid::Grid;

use std::f64::consts::PI;

/// One 1-D eigenbasis: `basis[i * len + m]` is mode `m` at physical index `i`.
#[derive(Debug, Clone)]
pub struct Basis1d {
    pub len: usize,
    basis: Vec<f64>,
    /// Eigenvalues of the negative second difference, including the 1/h^2.
    pub lambda: Vec<f64>,
    /// Inverse squared norms of the basis vectors.
    dinv: Vec<f64>,
}

impl Basis1d {
    /// Interior-face modes with zero Dirichlet values at both walls
    /// (`n - 1` degrees of freedom on a span of `n` cells).
    pub fn dirichlet_interior(n: usize, h: f64) -> Basis1d {
        let len = n - 1;
        let mut basis = vec![0.0; len * len];
        let mut lambda = vec![0.0; len];
        for m in 0..len {
            let freq = PI * (m + 1) as f64 / n as f64;
            lambda[m] = (2.0 - 2.0 * freq.cos()) / (h * h);
            for i in 0..len {
                basis[i * len + m] = (freq * (i + 1) as f64).sin();
            }
        }
        let dinv = vec![2.0 / n as f64; len];
        Basis1d {
            len,
            basis,
            lambda,
            dinv,
        }
    }

    /// Face modes with ghost reflection across both walls (`n` degrees of
    /// freedom at half-integer offsets).
    pub fn reflect(n: usize, h: f64) -> Basis1d {
        let len = n;
        let mut basis = vec![0.0; len * len];
        let mut lambda = vec![0.0; len];
        let mut dinv = vec![0.0; len];
        for m in 0..len {
            let freq = PI * (m + 1) as f64 / n as f64;
            lambda[m] = (2.0 - 2.0 * freq.cos()) / (h * h);
            dinv[m] = if m + 1 == n {
                1.0 / n as f64
            } else {
                2.0 / n as f64
            };
            for i in 0..len {
                basis[i * len + m] = (freq * (i as f64 + 0.5)).sin();
            }
        }
        Basis1d {
            len,
            basis,
            lambda,
            dinv,
        }
    }

    /// Cell modes with homogeneous Neumann ends; mode 0 is the constant.
    pub fn neumann(n: usize, h: f64) -> Basis1d {
        let len = n;
        let mut basis = vec![0.0; len * len];
        let mut lambda = vec![0.0; len];
        let mut dinv = vec![0.0; len];
        for m in 0..len {
            let freq = PI * m as f64 / n as f64;
            lambda[m] = (2.0 - 2.0 * freq.cos()) / (h * h);
            dinv[m] = if m == 0 {
                1.0 / n as f64
            } else {
                2.0 / n as f64
            };
            for i in 0..len {
                basis[i * len + m] = (freq * (i as f64 + 0.5)).cos();
            }
        }
        Basis1d {
            len,
            basis,
            lambda,
            dinv,
        }
    }
}

/// `out[m][j] = sum_i basis[i][m] * x[i][j]`, then scaled by `dinv[m]`:
/// the forward transform along the row (x) index.
fn forward_x(b: &Basis1d, x: &[f64], ncols: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..b.len {
        let row = &x[i * ncols..(i + 1) * ncols];
        for m in 0..b.len {
            let c = b.basis[i * b.len + m];
            let orow = &mut out[m * ncols..(m + 1) * ncols];
            for (o, xv) in orow.iter_mut().zip(row) {
                *o += c * xv;
            }
        }
    }
    for m in 0..b.len {
        let s = b.dinv[m];
        for o in &mut out[m * ncols..(m + 1) * ncols] {
            *o *= s;
        }
    }
}

/// Inverse along the row index: `out[i][j] = sum_m basis[i][m] * x[m][j]`.
fn inverse_x(b: &Basis1d, x: &[f64], ncols: usize, out: &mut [f64]) {
    for i in 0..b.len {
        let orow = &mut out[i * ncols..(i + 1) * ncols];
        orow.iter_mut().for_each(|v| *v = 0.0);
        for m in 0..b.len {
            let c = b.basis[i * b.len + m];
            let row = &x[m * ncols..(m + 1) * ncols];
            for (o, xv) in orow.iter_mut().zip(row) {
                *o += c * xv;
            }
        }
    }
}

/// Forward transform along the column (y) index with `dinv` scaling.
fn forward_y(b: &Basis1d, x: &[f64], nrows: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..nrows {
        let row = &x[r * b.len..(r + 1) * b.len];
        let orow = &mut out[r * b.len..(r + 1) * b.len];
        for j in 0..b.len {
            let xv = row[j];
            let brow = &b.basis[j * b.len..(j + 1) * b.len];
            for (o, c) in orow.iter_mut().zip(brow) {
                *o += c * xv;
            }
        }
        for (o, s) in orow.iter_mut().zip(&b.dinv) {
            *o *= s;
        }
    }
}

fn inverse_y(b: &Basis1d, x: &[f64], nrows: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..nrows {
        let row = &x[r * b.len..(r + 1) * b.len];
        let orow = &mut out[r * b.len..(r + 1) * b.len];
        for m in 0..b.len {
            let xv = row[m];
            if xv == 0.0 {
                continue;
            }
            for i in 0..b.len {
                orow[i] += b.basis[i * b.len + m] * xv;
            }
        }
    }
}

/// Solve `(shift * I + scale * (-laplace)) z = f` for one separable block.
struct SeparableSolver {
    bx: Basis1d,
    by: Basis1d,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl SeparableSolver {
    fn new(bx: Basis1d, by: Basis1d) -> SeparableSolver {
        let n = bx.len * by.len;
        SeparableSolver {
            bx,
            by,
            scratch_a: vec![0.0; n],
            scratch_b: vec![0.0; n],
        }
    }

    /// `zero_mode_to_zero` drops the (0,0) coefficient (singular Neumann case).
    fn solve(&mut self, rhs: &[f64], shift: f64, scale: f64, zero_mode_to_zero: bool, out: &mut [f64]) {
        let (px, py) = (self.bx.len, self.by.len);
        forward_x(&self.bx, rhs, py, &mut self.scratch_a);
        forward_y(&self.by, &self.scratch_a, px, &mut self.scratch_b);
        for m in 0..px {
            for l in 0..py {
                let denom = shift + scale * (self.bx.lambda[m] + self.by.lambda[l]);
                let c = &mut self.scratch_b[m * py + l];
                if zero_mode_to_zero && m == 0 && l == 0 {
                    *c = 0.0;
                } else {
                    *c /= denom;
                }
            }
        }
        inverse_y(&self.by, &self.scratch_b, px, &mut self.scratch_a);
        inverse_x(&self.bx, &self.scratch_a, py, out);
    }
}

/// Direct solver for the cell-centered Neumann Laplacian `-div grad`.
/// Solutions are returned with zero mean.
pub struct PoissonDirect {
    grid: Grid,
    solver: SeparableSolver,
}

impl PoissonDirect {
    pub fn new(grid: &Grid) -> PoissonDirect {
        PoissonDirect {
            grid: *grid,
            solver: SeparableSolver::new(
                Basis1d::neumann(grid.nx, grid.hx),
                Basis1d::neumann(grid.ny, grid.hy),
            ),
        }
    }

    /// Solve `-div grad phi = rhs` modulo constants. The compatible part of
    /// `rhs` (zero mean) is solved exactly; the mean is projected out.
    pub fn solve(&mut self, rhs: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(&self.grid);
        self.solver.solve(&rhs.vals, 0.0, 1.0, true, &mut out.vals);
        out.subtract_mean();
        out
    }
}

/// Direct solver for `(I + coeff * (-laplace)) z = f` on the velocity faces,
/// with the same wall treatment as [`crate::ops::neg_laplace`].
pub struct HelmholtzDirect {
    grid: Grid,
    u_solver: SeparableSolver,
    v_solver: SeparableSolver,
    u_in: Vec<f64>,
    u_out: Vec<f64>,
    v_in: Vec<f64>,
    v_out: Vec<f64>,
}

impl HelmholtzDirect {
    pub fn new(grid: &Grid) -> HelmholtzDirect {
        let (nx, ny) = (grid.nx, grid.ny);
        HelmholtzDirect {
            grid: *grid,
            u_solver: SeparableSolver::new(
                Basis1d::dirichlet_interior(nx, grid.hx),
                Basis1d::reflect(ny, grid.hy),
            ),
            v_solver: SeparableSolver::new(
                Basis1d::reflect(nx, grid.hx),
                Basis1d::dirichlet_interior(ny, grid.hy),
            ),
            u_in: vec![0.0; (nx - 1) * ny],
            u_out: vec![0.0; (nx - 1) * ny],
            v_in: vec![0.0; nx * (ny - 1)],
            v_out: vec![0.0; nx * (ny - 1)],
        }
    }

    pub fn solve(&mut self, rhs: &StaggeredField, coeff: f64) -> StaggeredField {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        // gather interior u faces (iu = 1..nx)
        for iu in 1..nx {
            self.u_in[(iu - 1) * ny..iu * ny].copy_from_slice(&rhs.u[iu * ny..(iu + 1) * ny]);
        }
        self.u_solver.solve(&self.u_in, 1.0, coeff, false, &mut self.u_out);
        for i in 0..nx {
            for jv in 1..ny {
                self.v_in[i * (ny - 1) + jv - 1] = rhs.v[i * (ny + 1) + jv];
            }
        }
        self.v_solver.solve(&self.v_in, 1.0, coeff, false, &mut self.v_out);

        let mut out = StaggeredField::zeros(&self.grid);
        for iu in 1..nx {
            out.u[iu * ny..(iu + 1) * ny].copy_from_slice(&self.u_out[(iu - 1) * ny..iu * ny]);
        }
        for i in 0..nx {
            for jv in 1..ny {
                out.v[i * (ny + 1) + jv] = self.v_out[i * (ny - 1) + jv - 1];
            }
        }
        out
    }
}
