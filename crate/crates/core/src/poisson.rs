//! Leray projection via a preconditioned conjugate-gradient pressure solve.
//!
//! The Neumann system `-div grad phi = -div f` is solved by CG with the
//! zero-mean constraint enforced by mean subtraction every iteration. The
//! separable direct solver acts as preconditioner, so the iteration converges
//! in a couple of steps while the CG wrapper still enforces the residual
//! tolerance and iteration cap.

use crate::error::{Error, Result};
use crate::field::{ScalarField, StaggeredField};
use crate::grid::Grid;
use crate::ops::{divergence, gradient};
use crate::spectral::PoissonDirect;

pub const DEFAULT_POISSON_TOL: f64 = 1e-10;

pub struct ProjectionSolver {
    grid: Grid,
    pub tol: f64,
    pub max_iters: usize,
    precond: PoissonDirect,
}

impl ProjectionSolver {
    pub fn new(grid: &Grid) -> ProjectionSolver {
        ProjectionSolver {
            grid: *grid,
            tol: DEFAULT_POISSON_TOL,
            max_iters: 20 * (grid.nx + grid.ny),
            precond: PoissonDirect::new(grid),
        }
    }

    /// `-div grad` on zero-mean cell fields.
    fn apply(&self, p: &ScalarField) -> ScalarField {
        let mut out = divergence(&gradient(p));
        for v in &mut out.vals {
            *v = -*v;
        }
        out
    }

    /// Solve `-div grad phi = b` (zero-mean data) to relative tolerance.
    pub fn solve_pressure(&mut self, b: &ScalarField) -> Result<ScalarField> {
        let mut rhs = b.clone();
        rhs.subtract_mean();
        let b_norm = rhs.norm_l2();
        let mut phi = ScalarField::zeros(&self.grid);
        if b_norm == 0.0 {
            return Ok(phi);
        }

        let mut r = rhs.clone();
        let mut z = self.precond.solve(&r);
        let mut p = z.clone();
        let mut rz = dot_cells(&r, &z);
        let area = self.grid.cell_area();
        for it in 0..self.max_iters {
            let ap = self.apply(&p);
            let pap = dot_cells(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::PoissonSolveFailure {
                    residual: r.norm_l2() / b_norm,
                    iterations: it,
                    tol: self.tol,
                });
            }
            let alpha = rz / pap;
            for (x, d) in phi.vals.iter_mut().zip(&p.vals) {
                *x += alpha * d;
            }
            for (x, d) in r.vals.iter_mut().zip(&ap.vals) {
                *x -= alpha * d;
            }
            phi.subtract_mean();
            r.subtract_mean();
            if r.norm_l2() <= self.tol * b_norm {
                return Ok(phi);
            }
            z = self.precond.solve(&r);
            let rz_new = dot_cells(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (d, zv) in p.vals.iter_mut().zip(&z.vals) {
                *d = zv + beta * *d;
            }
        }
        let _ = area;
        Err(Error::PoissonSolveFailure {
            residual: r.norm_l2() / b_norm,
            iterations: self.max_iters,
            tol: self.tol,
        })
    }

    /// Helmholtz--Leray projection: returns `(P f, phi)` with
    /// `f = P f + grad phi`, `div(P f)` at solver tolerance, `mean(phi) = 0`.
    pub fn project(&mut self, f: &StaggeredField) -> Result<(StaggeredField, ScalarField)> {
        let mut b = divergence(f);
        for v in &mut b.vals {
            *v = -*v;
        }
        // -div grad phi = -div f  =>  div(f - grad phi) = 0
        let phi = self.solve_pressure(&b)?;
        let mut pf = f.clone();
        pf.axpy(-1.0, &gradient(&phi));
        pf.enforce_boundary();
        Ok((pf, phi))
    }
}

fn dot_cells(a: &ScalarField, b: &ScalarField) -> f64 {
    a.vals.iter().zip(&b.vals).map(|(x, y)| x * y).sum()
}
