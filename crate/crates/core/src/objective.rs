//! The tracking objective, its first and second variations, stationarity
//! residuals, and bang-bang structure extraction.
//!
//! `J(u) = 1/2 ||S_xi(u) - (yd + eta)||^2_{L2(Q)} + eps/2 ||u||^2_{L2(Q)}`,
//! with the tracking term integrated by the trapezoid rule over snapshots and
//! the Tikhonov term summed exactly over the piecewise-constant control.
//!
//! The gradient is the exact derivative of this discrete value: the adjoint
//! solver transposes the linearized step maps, and the control-space
//! representer is `g_k = R^T w_{k+1} + eps u_k`. The quadratic form uses the
//! identity `J''(u) v^2 = ||z||^2 - 2 integral (z . grad) z . w + eps ||v||^2`
//! evaluated with the same costate, so no extra adjoint solve is needed.

use crate::control::{CellSeries, Control};
use crate::error::{Error, Result};
use crate::field::{StaggeredField, Trajectory};
use crate::ns::{solve_ns, solve_ns_perturbed, NsConfig, NsSolution};
use crate::ops::{faces_to_cells, trilinear};
use crate::oseen::{solve_adjoint, solve_oseen_control, LinearizationPoint};

#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    pub cfg: NsConfig,
    pub y0: StaggeredField,
    pub yd: Trajectory,
    pub eta: Option<Trajectory>,
    pub xi: Option<StaggeredField>,
    pub eps: f64,
}

impl ObjectiveContext {
    pub fn new(cfg: NsConfig, y0: StaggeredField, yd: Trajectory) -> Result<ObjectiveContext> {
        cfg.grid.check_spatial(&y0.grid, "initial datum")?;
        cfg.grid.check_spatial(&yd.grid, "tracking target")?;
        if yd.snaps.len() != cfg.grid.nt + 1 {
            return Err(Error::GridMismatch(format!(
                "tracking target has {} snapshots, grid wants {}",
                yd.snaps.len(),
                cfg.grid.nt + 1
            )));
        }
        Ok(ObjectiveContext {
            cfg,
            y0,
            yd,
            eta: None,
            xi: None,
            eps: 0.0,
        })
    }

    pub fn with_perturbation(
        mut self,
        xi: Option<StaggeredField>,
        eta: Option<Trajectory>,
        eps: f64,
    ) -> Result<ObjectiveContext> {
        if eps < 0.0 {
            return Err(Error::InvalidConfig(format!("eps must be >= 0 (got {eps})")));
        }
        if let Some(x) = &xi {
            self.cfg.grid.check_spatial(&x.grid, "xi")?;
        }
        if let Some(e) = &eta {
            self.cfg.grid.check_spatial(&e.grid, "eta")?;
        }
        self.xi = xi;
        self.eta = eta;
        self.eps = eps;
        Ok(self)
    }

    fn solve_state(&self, u: &Control) -> Result<NsSolution> {
        match &self.xi {
            Some(xi) => solve_ns_perturbed(&self.cfg, u, &self.y0, xi),
            None => solve_ns(&self.cfg, u, &self.y0),
        }
    }

    /// Tracking residual trajectory `y - yd - eta`.
    fn residual(&self, y: &Trajectory) -> Trajectory {
        let mut r = y.clone();
        r.axpy(-1.0, &self.yd);
        if let Some(eta) = &self.eta {
            r.axpy(-1.0, eta);
        }
        r
    }

    fn value_from(&self, r: &Trajectory, u: &Control) -> f64 {
        0.5 * r.dot_q(r) + 0.5 * self.eps * u.dot(u)
    }
}

/// Objective value together with the state solution.
pub fn evaluate(ctx: &ObjectiveContext, u: &Control) -> Result<(f64, NsSolution)> {
    let sol = ctx.solve_state(u)?;
    let r = ctx.residual(&sol.y);
    Ok((ctx.value_from(&r, u), sol))
}

/// Everything the optimizer needs at one control: value, state, costate,
/// control-space gradient, and the linearization point for curvature probes.
pub struct ObjectiveState {
    pub j: f64,
    pub y: Trajectory,
    pub w: Trajectory,
    pub g: CellSeries,
    pub lp: LinearizationPoint,
}

/// Exact discrete gradient of [`evaluate`] under the control pairing
/// `sum_k dt <g_k, v_k>`.
pub fn gradient(ctx: &ObjectiveContext, u: &Control) -> Result<ObjectiveState> {
    let sol = ctx.solve_state(u)?;
    let r = ctx.residual(&sol.y);
    let j = ctx.value_from(&r, u);
    let lp = LinearizationPoint::new(ctx.cfg, sol.y.clone())?;
    let w = solve_adjoint(&lp, &r)?;
    let grid = ctx.cfg.grid;
    let levels = (0..grid.nt)
        .map(|s| {
            let mut c = faces_to_cells(&w.snaps[s + 1]);
            if ctx.eps != 0.0 {
                c.axpy(ctx.eps, &u.levels[s]);
            }
            c
        })
        .collect();
    Ok(ObjectiveState {
        j,
        y: sol.y,
        w,
        g: CellSeries { grid, levels },
        lp,
    })
}

/// Quadratic form `J''(u)(v, v)` at a precomputed state.
pub fn hessian_quadratic_at(
    ctx: &ObjectiveContext,
    state: &ObjectiveState,
    v: &CellSeries,
) -> Result<f64> {
    let grid = ctx.cfg.grid;
    let z = solve_oseen_control(&state.lp, v, &StaggeredField::zeros(&grid))?;
    let dt = grid.dt();
    let mut quad = 0.0;
    for (k, zk) in z.snaps.iter().enumerate() {
        quad += grid.time_weight(k) * dt * zk.dot(zk);
    }
    let mut tri = 0.0;
    for s in 0..grid.nt {
        tri += dt * trilinear(&z.snaps[s + 1], &z.snaps[s + 1], &state.w.snaps[s + 1]);
    }
    let tikh = if ctx.eps != 0.0 {
        ctx.eps * v.dot(v)
    } else {
        0.0
    };
    Ok(quad - 2.0 * tri + tikh)
}

/// `J''(u)(v, v)` from scratch (solves state and adjoint first).
pub fn hessian_quadratic(ctx: &ObjectiveContext, u: &Control, v: &CellSeries) -> Result<f64> {
    let state = gradient(ctx, u)?;
    hessian_quadratic_at(ctx, &state, v)
}

/// Stationarity measures for a gradient `g` at the feasible `u`:
/// `sigma` is the conditional-gradient gap `-min_{v in U} <g, v - u>`;
/// `rho_inf` is the sup norm of the pointwise minimal-norm residual
/// `rho in g + N_U(u)` (0 at a bound whose gradient sign pushes outward,
/// `|g|` strictly inside).
pub fn stationarity_from(g: &CellSeries, u: &Control) -> (f64, f64) {
    let grid = u.grid;
    let dt = grid.dt();
    let area = grid.cell_area();
    let mut sigma = 0.0;
    let mut rho_inf = 0.0f64;
    for (k, gl) in g.levels.iter().enumerate() {
        let lo = u.bounds.lower_at(k);
        let hi = u.bounds.upper_at(k);
        let ul = &u.levels[k];
        let mut acc = 0.0;
        for ((((gv, uv), lov), hiv), _) in gl
            .x
            .iter()
            .zip(&ul.x)
            .zip(&lo.x)
            .zip(&hi.x)
            .map(|x| (x, ()))
        {
            acc += component_gap(*gv, *uv, *lov, *hiv);
            rho_inf = rho_inf.max(component_rho(*gv, *uv, *lov, *hiv).abs());
        }
        for ((((gv, uv), lov), hiv), _) in gl
            .y
            .iter()
            .zip(&ul.y)
            .zip(&lo.y)
            .zip(&hi.y)
            .map(|x| (x, ()))
        {
            acc += component_gap(*gv, *uv, *lov, *hiv);
            rho_inf = rho_inf.max(component_rho(*gv, *uv, *lov, *hiv).abs());
        }
        sigma += dt * area * acc;
    }
    (sigma, rho_inf)
}

#[inline]
fn component_gap(g: f64, u: f64, lo: f64, hi: f64) -> f64 {
    // g * (u - argmin_{v in [lo, hi]} g v)
    if g > 0.0 {
        g * (u - lo)
    } else {
        g * (u - hi)
    }
}

#[inline]
fn component_rho(g: f64, u: f64, lo: f64, hi: f64) -> f64 {
    let at_lo = u <= lo;
    let at_hi = u >= hi;
    match (at_lo, at_hi) {
        (true, true) => 0.0,
        (true, false) => g.min(0.0),
        (false, true) => g.max(0.0),
        (false, false) => g,
    }
}

/// First-order residuals at `u`, computing the gradient internally.
pub fn stationarity_residual(ctx: &ObjectiveContext, u: &Control) -> Result<(f64, f64)> {
    let state = gradient(ctx, u)?;
    Ok(stationarity_from(&state.g, u))
}

/// Snap `u` to the bang-bang control indicated by `g` wherever `|g| > tau`,
/// keep `u` on the near-singular set. Returns the snapped control and the
/// fraction of `Q x {1, 2}` with `|g| <= tau`.
pub fn extract_bang_bang_from(g: &CellSeries, u: &Control, tau: f64) -> Result<(Control, f64)> {
    let grid = u.grid;
    let mut levels = Vec::with_capacity(grid.nt);
    let mut singular = 0usize;
    let mut total = 0usize;
    for (k, gl) in g.levels.iter().enumerate() {
        let lo = u.bounds.lower_at(k);
        let hi = u.bounds.upper_at(k);
        let mut lv = u.levels[k].clone();
        for i in 0..lv.x.len() {
            total += 2;
            if gl.x[i].abs() > tau {
                lv.x[i] = if gl.x[i] > 0.0 { lo.x[i] } else { hi.x[i] };
            } else {
                singular += 1;
            }
            if gl.y[i].abs() > tau {
                lv.y[i] = if gl.y[i] > 0.0 { lo.y[i] } else { hi.y[i] };
            } else {
                singular += 1;
            }
        }
        levels.push(lv);
    }
    let u_bb = Control::new(&grid, levels, u.bounds.clone())?;
    Ok((u_bb, singular as f64 / total as f64))
}

/// Scale-aware default threshold for bang-bang extraction.
pub fn default_bang_bang_tau(g: &CellSeries) -> f64 {
    1e-6 * g.max_abs()
}

pub fn extract_bang_bang(
    ctx: &ObjectiveContext,
    u: &Control,
    tau: f64,
) -> Result<(Control, f64)> {
    let state = gradient(ctx, u)?;
    extract_bang_bang_from(&state.g, u, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlBounds;
    use crate::field::CellField2;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_ctx(nx: usize, nt: usize, seed: u64) -> (ObjectiveContext, Control) {
        let grid = Grid::new(nx, nx, 0.5, nt).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-12, 100).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels: Vec<CellField2> = (0..grid.nt)
            .map(|_| {
                let mut c = CellField2::zeros(&grid);
                for v in c.x.iter_mut().chain(c.y.iter_mut()) {
                    *v = 0.8 * (2.0 * rng.gen::<f64>() - 1.0);
                }
                c
            })
            .collect();
        let u = Control::new(&grid, levels, bounds).unwrap();
        let y0 = StaggeredField::random(&grid, &mut rng, 0.2);
        let sol = solve_ns(&cfg, &u, &y0).unwrap();
        // target: a different control's trajectory, so the residual is nonzero
        let u2 = u.blend(&u.bounds.midpoint(), 0.5).unwrap();
        let sol2 = solve_ns(&cfg, &u2, &y0).unwrap();
        let _ = sol;
        let ctx = ObjectiveContext::new(cfg, y0, sol2.y).unwrap();
        (ctx, u)
    }

    #[test]
    fn perfect_tracking_gives_zero_value_and_gradient() {
        let grid = Grid::new(8, 8, 0.5, 4).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-12, 100).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let u = bounds.midpoint();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y0 = StaggeredField::random(&grid, &mut rng, 0.2);
        let sol = solve_ns(&cfg, &u, &y0).unwrap();
        let ctx = ObjectiveContext::new(cfg, y0, sol.y).unwrap();
        let (j, _) = evaluate(&ctx, &u).unwrap();
        assert!(j <= 1e-18, "J = {j:.3e}");
        let st = gradient(&ctx, &u).unwrap();
        assert!(st.g.max_abs() <= 1e-10, "|g| = {:.3e}", st.g.max_abs());
    }

    #[test]
    fn zero_state_value_is_half_target_norm() {
        let grid = Grid::new(8, 8, 0.5, 4).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-12, 100).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let u = Control::zeros_in(&bounds).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut yd = Trajectory::zeros(&grid);
        for s in &mut yd.snaps {
            *s = StaggeredField::random(&grid, &mut rng, 1.0);
        }
        let ctx = ObjectiveContext::new(cfg, StaggeredField::zeros(&grid), yd.clone()).unwrap();
        let (j, _) = evaluate(&ctx, &u).unwrap();
        let expect = 0.5 * yd.dot_q(&yd);
        assert!((j - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn tikhonov_shift_is_algebraic() {
        let (ctx, u) = test_ctx(8, 3, 11);
        let ctx1 = ctx.clone().with_perturbation(None, None, 0.25).unwrap();
        let ctx2 = ctx.clone().with_perturbation(None, None, 0.75).unwrap();
        let (j1, _) = evaluate(&ctx1, &u).unwrap();
        let (j2, _) = evaluate(&ctx2, &u).unwrap();
        let expect = 0.25 * u.dot(&u);
        assert!(((j2 - j1) - expect).abs() <= 1e-12 * (1.0 + j2.abs()));
        // gradient shift: g(eps) = g(0) + eps u
        let g0 = gradient(&ctx1, &u).unwrap().g;
        let g1 = gradient(&ctx2, &u).unwrap().g;
        let mut shifted = g0.clone();
        for (lvl, ul) in shifted.levels.iter_mut().zip(&u.levels) {
            lvl.axpy(0.5, ul);
        }
        let mut diff = shifted;
        diff.axpy(-1.0, &g1);
        assert!(diff.max_abs() <= 1e-12 * (1.0 + g1.max_abs()));
    }

    #[test]
    fn central_difference_matches_gradient() {
        let (ctx, u) = test_ctx(10, 4, 12);
        let st = gradient(&ctx, &u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        // feasible two-sided direction: shrink toward the interior
        let mut v = CellSeries::zeros(&ctx.cfg.grid);
        for lvl in &mut v.levels {
            for x in lvl.x.iter_mut().chain(lvl.y.iter_mut()) {
                *x = 0.1 * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        let directional = v.dot(&st.g);
        let t = 1e-3;
        let up = perturb(&u, &v, t);
        let um = perturb(&u, &v, -t);
        let (jp, _) = evaluate(&ctx, &up).unwrap();
        let (jm, _) = evaluate(&ctx, &um).unwrap();
        let fd = (jp - jm) / (2.0 * t);
        let rel = (fd - directional).abs() / directional.abs();
        assert!(rel <= 1e-4, "fd {fd:.8e} vs J'v {directional:.8e} (rel {rel:.2e})");
    }

    fn perturb(u: &Control, v: &CellSeries, t: f64) -> Control {
        let levels = u
            .levels
            .iter()
            .zip(&v.levels)
            .map(|(a, b)| {
                let mut l = a.clone();
                l.axpy(t, b);
                l
            })
            .collect();
        Control::new_clamped(&u.grid, levels, u.bounds.clone()).unwrap()
    }

    #[test]
    fn second_order_taylor_remainder_shrinks_cubically() {
        let (ctx, u) = test_ctx(8, 3, 13);
        let st = gradient(&ctx, &u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut v = CellSeries::zeros(&ctx.cfg.grid);
        for lvl in &mut v.levels {
            for x in lvl.x.iter_mut().chain(lvl.y.iter_mut()) {
                *x = 0.15 * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        let jpv = v.dot(&st.g);
        let jq = hessian_quadratic_at(&ctx, &st, &v).unwrap();
        let mut remainders = Vec::new();
        for &t in &[0.2, 0.1, 0.05] {
            let (jp, _) = evaluate(&ctx, &perturb(&u, &v, t)).unwrap();
            let r = (jp - st.j - t * jpv - 0.5 * t * t * jq).abs();
            remainders.push(r);
        }
        // halving t should cut the remainder ~8x; accept anything above 6x
        assert!(
            remainders[0] / remainders[1] > 6.0 && remainders[1] / remainders[2] > 6.0,
            "remainders {remainders:?}"
        );
    }

    #[test]
    fn hessian_of_zero_direction_is_zero() {
        let (ctx, u) = test_ctx(8, 3, 14);
        let st = gradient(&ctx, &u).unwrap();
        let v = CellSeries::zeros(&ctx.cfg.grid);
        let q = hessian_quadratic_at(&ctx, &st, &v).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn stationarity_pointwise_cases() {
        let grid = Grid::new(6, 6, 1.0, 2).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 2.0).unwrap();
        // u at the correct bounds for the sign of g: sigma = 0, rho = 0
        let mut g = CellSeries::zeros(&grid);
        let mut lv = Vec::new();
        for k in 0..grid.nt {
            let mut c = CellField2::zeros(&grid);
            for (i, x) in c.x.iter_mut().enumerate() {
                *x = if i % 2 == 0 { -1.0 } else { 2.0 };
            }
            lv.push(c);
            for (i, x) in g.levels[k].x.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        let u = Control::new(&grid, lv, bounds).unwrap();
        let (sigma, rho) = stationarity_from(&g, &u);
        assert_eq!(sigma, 0.0);
        assert_eq!(rho, 0.0);

        // one interior-cell violation: g = +1 at upper bound
        let mut g2 = CellSeries::zeros(&grid);
        let mut lv2 = vec![CellField2::zeros(&grid); grid.nt];
        g2.levels[0].x[7] = 1.0;
        lv2[0].x[7] = 2.0; // upper bound
        let u2 = Control::new(&grid, lv2, ControlBounds::constant(&grid, -1.0, 2.0).unwrap()).unwrap();
        let (sigma2, rho2) = stationarity_from(&g2, &u2);
        let cellweight = grid.dt() * grid.cell_area();
        assert!((sigma2 - 3.0 * cellweight).abs() < 1e-15);
        assert!((rho2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bang_bang_extraction_counts_singular_set() {
        let grid = Grid::new(6, 6, 1.0, 2).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let u = bounds.midpoint();
        let mut g = CellSeries::zeros(&grid);
        for lvl in &mut g.levels {
            for (i, x) in lvl.x.iter_mut().enumerate() {
                *x = if i % 3 == 0 { 0.0 } else { 1.0 };
            }
            for y in lvl.y.iter_mut() {
                *y = -2.0;
            }
        }
        let (ubb, singular) = extract_bang_bang_from(&g, &u, 0.0).unwrap();
        // x: g > 0 -> lower bound except the zero entries; y: g < 0 -> upper
        let zeros = grid.n_cells().div_ceil(3);
        let expect = (zeros * grid.nt) as f64 / (2 * grid.nt * grid.n_cells()) as f64;
        assert!((singular - expect).abs() < 1e-15);
        assert_eq!(ubb.levels[0].y[0], 1.0);
        // g == 0 keeps u's value
        assert_eq!(ubb.levels[0].x[0], 0.0);
        assert_eq!(ubb.levels[0].x[1], -1.0);

        let g0 = CellSeries::zeros(&grid);
        let (same, s) = extract_bang_bang_from(&g0, &u, 0.0).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(same.levels[0].x, u.levels[0].x);
    }
}
