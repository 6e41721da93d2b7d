//! Discrete spatial operators on the MAC grid.
//!
//! Divergence and gradient satisfy exact summation by parts against the
//! uniform face/cell weights: `<grad p, w> = -<p, div w>` for any velocity `w`
//! with zero boundary-normal faces. The convective operators come in gather
//! (`advect`) and scatter (`advect_t_field`, `advect_t_carrier`) forms; the
//! scatter forms are the exact matrix transposes of the gather form in its
//! field and carrier arguments, so the skew-symmetrized convection below is
//! antisymmetric to machine precision and the downstream adjoint solvers can
//! transpose the full step operators exactly.
//!
//! Tangential velocities use ghost reflection across walls (`u_ghost = -u_1`),
//! which keeps wall values at zero to second order.

use crate::field::{CellField2, ScalarField, StaggeredField};

/// Central MAC divergence at cell centers. Exact for linear fields.
pub fn divergence(f: &StaggeredField) -> ScalarField {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut d = ScalarField::zeros(&g);
    for i in 0..nx {
        for j in 0..ny {
            let du = (f.u[(i + 1) * ny + j] - f.u[i * ny + j]) / g.hx;
            let dv = (f.v[i * (ny + 1) + j + 1] - f.v[i * (ny + 1) + j]) / g.hy;
            d.vals[i * ny + j] = du + dv;
        }
    }
    d
}

/// Cell-to-face gradient; boundary-normal faces get zero.
pub fn gradient(p: &ScalarField) -> StaggeredField {
    let g = p.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut out = StaggeredField::zeros(&g);
    for iu in 1..nx {
        for j in 0..ny {
            out.u[iu * ny + j] = (p.vals[iu * ny + j] - p.vals[(iu - 1) * ny + j]) / g.hx;
        }
    }
    for i in 0..nx {
        for jv in 1..ny {
            out.v[i * (ny + 1) + jv] = (p.vals[i * ny + jv] - p.vals[i * ny + jv - 1]) / g.hy;
        }
    }
    out
}

/// Negative Laplacian on faces with no-slip walls (Dirichlet for the normal
/// direction via the stored zero boundary faces, ghost reflection for the
/// tangential direction). Symmetric positive definite on the face DOFs.
pub fn neg_laplace(f: &StaggeredField) -> StaggeredField {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let mut out = StaggeredField::zeros(&g);
    for iu in 1..nx {
        for j in 0..ny {
            let c = f.u[iu * ny + j];
            let xm = f.u[(iu - 1) * ny + j];
            let xp = f.u[(iu + 1) * ny + j];
            let ym = if j > 0 { f.u[iu * ny + j - 1] } else { -c };
            let yp = if j + 1 < ny { f.u[iu * ny + j + 1] } else { -c };
            out.u[iu * ny + j] = -((xp - 2.0 * c + xm) * ihx2 + (yp - 2.0 * c + ym) * ihy2);
        }
    }
    for i in 0..nx {
        for jv in 1..ny {
            let c = f.v[i * (ny + 1) + jv];
            let ym = f.v[i * (ny + 1) + jv - 1];
            let yp = f.v[i * (ny + 1) + jv + 1];
            let xm = if i > 0 { f.v[(i - 1) * (ny + 1) + jv] } else { -c };
            let xp = if i + 1 < nx {
                f.v[(i + 1) * (ny + 1) + jv]
            } else {
                -c
            };
            out.v[i * (ny + 1) + jv] = -((xp - 2.0 * c + xm) * ihx2 + (yp - 2.0 * c + ym) * ihy2);
        }
    }
    out
}

#[inline]
fn du_dy(f: &StaggeredField, iu: usize, j: usize, ny: usize, hy: f64) -> f64 {
    let c = f.u[iu * ny + j];
    let ym = if j > 0 { f.u[iu * ny + j - 1] } else { -c };
    let yp = if j + 1 < ny { f.u[iu * ny + j + 1] } else { -c };
    (yp - ym) / (2.0 * hy)
}

#[inline]
fn dv_dx(f: &StaggeredField, i: usize, jv: usize, ny: usize, nx: usize, hx: f64) -> f64 {
    let c = f.v[i * (ny + 1) + jv];
    let xm = if i > 0 { f.v[(i - 1) * (ny + 1) + jv] } else { -c };
    let xp = if i + 1 < nx {
        f.v[(i + 1) * (ny + 1) + jv]
    } else {
        -c
    };
    (xp - xm) / (2.0 * hx)
}

/// Centered advection `(a . grad) f` evaluated on interior faces.
pub fn advect(a: &StaggeredField, f: &StaggeredField) -> StaggeredField {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut out = StaggeredField::zeros(&g);
    for iu in 1..nx {
        for j in 0..ny {
            let ax = a.u[iu * ny + j];
            let ay = 0.25
                * (a.v[(iu - 1) * (ny + 1) + j]
                    + a.v[iu * (ny + 1) + j]
                    + a.v[(iu - 1) * (ny + 1) + j + 1]
                    + a.v[iu * (ny + 1) + j + 1]);
            let dfdx = (f.u[(iu + 1) * ny + j] - f.u[(iu - 1) * ny + j]) / (2.0 * g.hx);
            let dfdy = du_dy(f, iu, j, ny, g.hy);
            out.u[iu * ny + j] = ax * dfdx + ay * dfdy;
        }
    }
    for i in 0..nx {
        for jv in 1..ny {
            let ay = a.v[i * (ny + 1) + jv];
            let ax = 0.25
                * (a.u[i * ny + jv - 1]
                    + a.u[(i + 1) * ny + jv - 1]
                    + a.u[i * ny + jv]
                    + a.u[(i + 1) * ny + jv]);
            let dfdy = (f.v[i * (ny + 1) + jv + 1] - f.v[i * (ny + 1) + jv - 1]) / (2.0 * g.hy);
            let dfdx = dv_dx(f, i, jv, ny, nx, g.hx);
            out.v[i * (ny + 1) + jv] = ax * dfdx + ay * dfdy;
        }
    }
    out
}

/// Transpose of `advect(a, .)` in its field argument: the scatter form of the
/// same stencil, with ghost-reflection contributions folded back with sign.
pub fn advect_t_field(a: &StaggeredField, w: &StaggeredField) -> StaggeredField {
    let g = w.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (i2hx, i2hy) = (1.0 / (2.0 * g.hx), 1.0 / (2.0 * g.hy));
    let mut out = StaggeredField::zeros(&g);
    for iu in 1..nx {
        for j in 0..ny {
            let wb = w.u[iu * ny + j];
            if wb == 0.0 {
                continue;
            }
            let ax = a.u[iu * ny + j];
            let ay = 0.25
                * (a.v[(iu - 1) * (ny + 1) + j]
                    + a.v[iu * (ny + 1) + j]
                    + a.v[(iu - 1) * (ny + 1) + j + 1]
                    + a.v[iu * (ny + 1) + j + 1]);
            out.u[(iu + 1) * ny + j] += wb * ax * i2hx;
            out.u[(iu - 1) * ny + j] -= wb * ax * i2hx;
            if j + 1 < ny {
                out.u[iu * ny + j + 1] += wb * ay * i2hy;
            } else {
                out.u[iu * ny + j] -= wb * ay * i2hy;
            }
            if j > 0 {
                out.u[iu * ny + j - 1] -= wb * ay * i2hy;
            } else {
                out.u[iu * ny + j] += wb * ay * i2hy;
            }
        }
    }
    for i in 0..nx {
        for jv in 1..ny {
            let wb = w.v[i * (ny + 1) + jv];
            if wb == 0.0 {
                continue;
            }
            let ay = a.v[i * (ny + 1) + jv];
            let ax = 0.25
                * (a.u[i * ny + jv - 1]
                    + a.u[(i + 1) * ny + jv - 1]
                    + a.u[i * ny + jv]
                    + a.u[(i + 1) * ny + jv]);
            out.v[i * (ny + 1) + jv + 1] += wb * ay * i2hy;
            out.v[i * (ny + 1) + jv - 1] -= wb * ay * i2hy;
            if i + 1 < nx {
                out.v[(i + 1) * (ny + 1) + jv] += wb * ax * i2hx;
            } else {
                out.v[i * (ny + 1) + jv] -= wb * ax * i2hx;
            }
            if i > 0 {
                out.v[(i - 1) * (ny + 1) + jv] -= wb * ax * i2hx;
            } else {
                out.v[i * (ny + 1) + jv] += wb * ax * i2hx;
            }
        }
    }
    out.enforce_boundary();
    out
}

/// Transpose of `advect(., f)` in its carrier argument, paired against `w`:
/// returns the field `c` with `<advect(a, f), w> = <a, c>` for every `a`.
pub fn advect_t_carrier(f: &StaggeredField, w: &StaggeredField) -> StaggeredField {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut out = StaggeredField::zeros(&g);
    for iu in 1..nx {
        for j in 0..ny {
            let wb = w.u[iu * ny + j];
            if wb == 0.0 {
                continue;
            }
            let dfdx = (f.u[(iu + 1) * ny + j] - f.u[(iu - 1) * ny + j]) / (2.0 * g.hx);
            let dfdy = du_dy(f, iu, j, ny, g.hy);
            out.u[iu * ny + j] += wb * dfdx;
            let q = 0.25 * wb * dfdy;
            out.v[(iu - 1) * (ny + 1) + j] += q;
            out.v[iu * (ny + 1) + j] += q;
            out.v[(iu - 1) * (ny + 1) + j + 1] += q;
            out.v[iu * (ny + 1) + j + 1] += q;
        }
    }
    for i in 0..nx {
        for jv in 1..ny {
            let wb = w.v[i * (ny + 1) + jv];
            if wb == 0.0 {
                continue;
            }
            let dfdy = (f.v[i * (ny + 1) + jv + 1] - f.v[i * (ny + 1) + jv - 1]) / (2.0 * g.hy);
            let dfdx = dv_dx(f, i, jv, ny, nx, g.hx);
            out.v[i * (ny + 1) + jv] += wb * dfdy;
            let q = 0.25 * wb * dfdx;
            out.u[i * ny + jv - 1] += q;
            out.u[(i + 1) * ny + jv - 1] += q;
            out.u[i * ny + jv] += q;
            out.u[(i + 1) * ny + jv] += q;
        }
    }
    out.enforce_boundary();
    out
}

/// Skew-symmetrized convection of `f` by the carrier `a`:
/// `C_a f = ((a.grad) f - (a.grad)^T f) / 2`, exactly antisymmetric in the
/// face inner product.
pub fn conv_skew(a: &StaggeredField, f: &StaggeredField) -> StaggeredField {
    let mut out = advect(a, f);
    out.axpy(-1.0, &advect_t_field(a, f));
    out.scale(0.5);
    out
}

/// Linearization of `C_z z` in the carrier slot: `z -> C_z ybar`, linear in `z`.
pub fn conv_carrier(z: &StaggeredField, ybar: &StaggeredField) -> StaggeredField {
    let mut out = advect(z, ybar);
    out.axpy(-1.0, &advect_t_field(z, ybar));
    out.scale(0.5);
    out
}

/// Transpose of `conv_carrier(., ybar)`.
pub fn conv_carrier_t(ybar: &StaggeredField, w: &StaggeredField) -> StaggeredField {
    let mut out = advect_t_carrier(ybar, w);
    out.axpy(-1.0, &advect_t_carrier(w, ybar));
    out.scale(0.5);
    out
}

/// Full Oseen convection around `ybar`: `z -> C_ybar z + C_z ybar`.
pub fn oseen_conv(ybar: &StaggeredField, z: &StaggeredField) -> StaggeredField {
    let mut out = conv_skew(ybar, z);
    out.axpy(1.0, &conv_carrier(z, ybar));
    out
}

/// Transpose of `oseen_conv(ybar, .)`: `w -> -C_ybar w + (C_. ybar)^T w`.
pub fn oseen_conv_t(ybar: &StaggeredField, w: &StaggeredField) -> StaggeredField {
    let mut out = conv_skew(ybar, w);
    out.scale(-1.0);
    out.axpy(1.0, &conv_carrier_t(ybar, w));
    out
}

/// Skew-form trilinear value `b(f1, f2, f3) = <C_{f1} f2, f3>`, computed as
/// `(<(f1.grad) f2, f3> - <(f1.grad) f3, f2>) / 2` so that
/// `b(f1, f2, f3) = -b(f1, f3, f2)` holds exactly.
pub fn trilinear(f1: &StaggeredField, f2: &StaggeredField, f3: &StaggeredField) -> f64 {
    0.5 * (advect(f1, f2).dot(f3) - advect(f1, f3).dot(f2))
}

/// Lift a cell-centered two-component field to faces by averaging the two
/// adjacent cells; boundary-normal faces stay zero.
pub fn cells_to_faces(c: &CellField2) -> StaggeredField {
    let g = c.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut out = StaggeredField::zeros(&g);
    for iu in 1..nx {
        for j in 0..ny {
            out.u[iu * ny + j] = 0.5 * (c.x[(iu - 1) * ny + j] + c.x[iu * ny + j]);
        }
    }
    for i in 0..nx {
        for jv in 1..ny {
            out.v[i * (ny + 1) + jv] = 0.5 * (c.y[i * ny + jv - 1] + c.y[i * ny + jv]);
        }
    }
    out
}

/// Transpose of [`cells_to_faces`]; also the face-to-center averaging used by
/// the pointwise norms.
pub fn faces_to_cells(f: &StaggeredField) -> CellField2 {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut out = CellField2::zeros(&g);
    for i in 0..nx {
        for j in 0..ny {
            out.x[i * ny + j] = 0.5 * (f.u[i * ny + j] + f.u[(i + 1) * ny + j]);
            out.y[i * ny + j] = 0.5 * (f.v[i * (ny + 1) + j] + f.v[i * (ny + 1) + j + 1]);
        }
    }
    out
}
