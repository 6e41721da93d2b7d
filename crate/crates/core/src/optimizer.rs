//! Optimizers for the tracking problem: conditional gradient for the
//! unregularized bang-bang case, projected gradient for positive Tikhonov
//! weight, and a warm-started continuation path in the weight.
//!
//! The conditional-gradient step minimizes the quadratic model
//! `J + t J'd + t^2/2 J''d^2` over `t in (0, 1]` (using the exact discrete
//! quadratic form) with an Armijo backtracking safeguard, so iterates stay
//! convex combinations of bang-bang vertices and `J` never increases.

use crate::control::{CellSeries, Control, ControlBounds};
use crate::error::{Error, Result};
use crate::objective::{
    default_bang_bang_tau, evaluate, gradient, hessian_quadratic_at, stationarity_from,
    ObjectiveContext, ObjectiveState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ConditionalGradient,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    /// Minimize the exact quadratic model over the segment, Armijo fallback.
    QuadModel,
    Armijo { c1: f64, backtrack: f64 },
}

#[derive(Debug, Clone, Copy)]
pub enum StationarityTol {
    Absolute(f64),
    /// `factor * J(u0) + floor`, fixed at the first iterate.
    ScaledToInitial { factor: f64, floor: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_iters: usize,
    pub sigma_tol: StationarityTol,
    pub step_rule: StepRule,
    /// Carried into reports for provenance; the provided rules are deterministic.
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn conditional_gradient(max_iters: usize) -> OptimizerConfig {
        OptimizerConfig {
            method: Method::ConditionalGradient,
            max_iters,
            sigma_tol: StationarityTol::ScaledToInitial {
                factor: 1e-8,
                floor: 1e-12,
            },
            step_rule: StepRule::QuadModel,
            seed: 0,
        }
    }

    pub fn projected_gradient(max_iters: usize) -> OptimizerConfig {
        OptimizerConfig {
            method: Method::ProjectedGradient,
            ..OptimizerConfig::conditional_gradient(max_iters)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        match self.sigma_tol {
            StationarityTol::Absolute(t) if !(t > 0.0) => {
                Err(Error::InvalidConfig("sigma_tol must be positive".into()))
            }
            StationarityTol::ScaledToInitial { factor, floor } if !(factor > 0.0 && floor > 0.0) => {
                Err(Error::InvalidConfig("sigma_tol scale parts must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub j: f64,
    pub sigma: f64,
    pub step: f64,
    pub singular_measure: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u_star: Control,
    pub j_star: f64,
    pub sigma_final: f64,
    pub iterations: usize,
    pub cap_hit: bool,
    pub singular_measure: f64,
    /// `||u - Pi(-w/eps)||_inf`, reported by projected gradient when eps > 0.
    pub fixed_point_residual: Option<f64>,
    pub history: Vec<IterRecord>,
    pub seed: u64,
}

/// Result of the linear minimization oracle over the box.
pub struct LmoResult {
    pub control: Control,
    /// Fraction of components with exactly zero gradient (resolved to the
    /// box midpoint).
    pub tie_fraction: f64,
}

/// Minimize `<g, .>` over the box exactly: lower bound where `g > 0`, upper
/// where `g < 0`, midpoint on ties.
pub fn lmo(g: &CellSeries, bounds: &ControlBounds) -> Result<LmoResult> {
    let grid = bounds.grid;
    let mut ties = 0usize;
    let mut total = 0usize;
    let mut levels = Vec::with_capacity(grid.nt);
    for (k, gl) in g.levels.iter().enumerate() {
        let lo = bounds.lower_at(k);
        let hi = bounds.upper_at(k);
        let mut c = lo.clone();
        for i in 0..c.x.len() {
            total += 2;
            c.x[i] = pick(gl.x[i], lo.x[i], hi.x[i], &mut ties);
            c.y[i] = pick(gl.y[i], lo.y[i], hi.y[i], &mut ties);
        }
        levels.push(c);
    }
    Ok(LmoResult {
        control: Control::new(&grid, levels, bounds.clone())?,
        tie_fraction: ties as f64 / total as f64,
    })
}

#[inline]
fn pick(g: f64, lo: f64, hi: f64, ties: &mut usize) -> f64 {
    if g > 0.0 {
        lo
    } else if g < 0.0 {
        hi
    } else {
        *ties += 1;
        0.5 * (lo + hi)
    }
}

fn resolve_tol(tol: StationarityTol, j0: f64) -> f64 {
    match tol {
        StationarityTol::Absolute(t) => t,
        StationarityTol::ScaledToInitial { factor, floor } => factor * j0 + floor,
    }
}

/// Run the configured method from the feasible `u0`.
pub fn solve(ctx: &ObjectiveContext, cfg: &OptimizerConfig, u0: &Control) -> Result<SolveReport> {
    cfg.validate()?;
    match cfg.method {
        Method::ConditionalGradient => solve_cg(ctx, cfg, u0),
        Method::ProjectedGradient => solve_pg(ctx, cfg, u0),
    }
}

fn singular_fraction(g: &CellSeries) -> f64 {
    let tau = default_bang_bang_tau(g);
    let mut singular = 0usize;
    let mut total = 0usize;
    for lvl in &g.levels {
        for v in lvl.x.iter().chain(lvl.y.iter()) {
            total += 1;
            if v.abs() <= tau {
                singular += 1;
            }
        }
    }
    singular as f64 / total as f64
}

fn solve_cg(ctx: &ObjectiveContext, cfg: &OptimizerConfig, u0: &Control) -> Result<SolveReport> {
    let mut u = u0.clone();
    let mut state = gradient(ctx, &u)?;
    let sigma_tol = resolve_tol(cfg.sigma_tol, state.j);
    let mut history = Vec::new();
    let mut cap_hit = false;
    let mut iterations = 0;

    loop {
        let vertex = lmo(&state.g, &u.bounds)?;
        let (sigma, _) = stationarity_from(&state.g, &u);
        let singular = singular_fraction(&state.g);
        if sigma <= sigma_tol {
            history.push(IterRecord {
                iter: iterations,
                j: state.j,
                sigma,
                step: 0.0,
                singular_measure: singular,
            });
            break;
        }
        if iterations >= cfg.max_iters {
            cap_hit = true;
            history.push(IterRecord {
                iter: iterations,
                j: state.j,
                sigma,
                step: 0.0,
                singular_measure: singular,
            });
            break;
        }
        iterations += 1;

        let d = CellSeries::diff(&vertex.control, &u);
        let gd = d.dot(&state.g); // = -sigma
        let mut t = match cfg.step_rule {
            StepRule::QuadModel => {
                let q = hessian_quadratic_at(ctx, &state, &d)?;
                if q > 0.0 {
                    (-gd / q).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
            StepRule::Armijo { .. } => 1.0,
        };
        if t == 0.0 {
            t = 1.0;
        }
        let (c1, backtrack) = match cfg.step_rule {
            StepRule::Armijo { c1, backtrack } => (c1, backtrack),
            StepRule::QuadModel => (1e-4, 0.5),
        };

        let mut accepted = None;
        for _ in 0..40 {
            let cand = u.blend(&vertex.control, t)?;
            let (j_new, sol) = evaluate(ctx, &cand)?;
            if j_new <= state.j + c1 * t * gd {
                accepted = Some((cand, j_new, sol, t));
                break;
            }
            t *= backtrack;
        }
        let Some((cand, j_new, sol, t_used)) = accepted else {
            return Err(Error::LineSearchFailure(format!(
                "no decrease along the conditional-gradient segment at iteration {iterations}"
            )));
        };

        history.push(IterRecord {
            iter: iterations,
            j: state.j,
            sigma,
            step: t_used,
            singular_measure: singular,
        });
        u = cand;
        state = gradient_reusing(ctx, &u, j_new, sol)?;
    }

    let (sigma_final, _) = stationarity_from(&state.g, &u);
    Ok(SolveReport {
        singular_measure: singular_fraction(&state.g),
        j_star: state.j,
        sigma_final,
        iterations,
        cap_hit,
        fixed_point_residual: None,
        history,
        u_star: u,
        seed: cfg.seed,
    })
}

/// Build the gradient state from an already-solved trajectory (saves the
/// forward solve that the accepting line-search evaluation just did).
fn gradient_reusing(
    ctx: &ObjectiveContext,
    u: &Control,
    j: f64,
    sol: crate::ns::NsSolution,
) -> Result<ObjectiveState> {
    use crate::ops::faces_to_cells;
    use crate::oseen::{solve_adjoint, LinearizationPoint};
    let grid = ctx.cfg.grid;
    let mut r = sol.y.clone();
    r.axpy(-1.0, &ctx.yd);
    if let Some(eta) = &ctx.eta {
        r.axpy(-1.0, eta);
    }
    let lp = LinearizationPoint::new(ctx.cfg, sol.y.clone())?;
    let w = solve_adjoint(&lp, &r)?;
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

fn solve_pg(ctx: &ObjectiveContext, cfg: &OptimizerConfig, u0: &Control) -> Result<SolveReport> {
    let mut u = u0.clone();
    let mut state = gradient(ctx, &u)?;
    let sigma_tol = resolve_tol(cfg.sigma_tol, state.j);
    let mut history = Vec::new();
    let mut cap_hit = false;
    let mut iterations = 0;
    let mut alpha = if ctx.eps > 0.0 { 1.0 / ctx.eps } else { 1.0 };

    loop {
        let (sigma, _) = stationarity_from(&state.g, &u);
        let singular = singular_fraction(&state.g);
        if sigma <= sigma_tol || iterations >= cfg.max_iters {
            cap_hit = iterations >= cfg.max_iters && sigma > sigma_tol;
            history.push(IterRecord {
                iter: iterations,
                j: state.j,
                sigma,
                step: 0.0,
                singular_measure: singular,
            });
            break;
        }
        iterations += 1;

        let c1 = 1e-4;
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..60 {
            let cand = project_step(&u, &state.g, a)?;
            let d = CellSeries::diff(&cand, &u);
            let gd = d.dot(&state.g);
            if gd >= 0.0 {
                // projected step is no longer a descent direction: converged
                a *= 0.5;
                if a < 1e-14 * alpha {
                    break;
                }
                continue;
            }
            let (j_new, sol) = evaluate(ctx, &cand)?;
            if j_new <= state.j + c1 * gd {
                accepted = Some((cand, j_new, sol, a));
                break;
            }
            a *= 0.5;
        }
        let Some((cand, j_new, sol, a_used)) = accepted else {
            // no descent: treat the current point as stationary for this tol
            history.push(IterRecord {
                iter: iterations,
                j: state.j,
                sigma,
                step: 0.0,
                singular_measure: singular,
            });
            break;
        };
        history.push(IterRecord {
            iter: iterations,
            j: state.j,
            sigma,
            step: a_used,
            singular_measure: singular,
        });
        alpha = a_used * 2.0;
        u = cand;
        state = gradient_reusing(ctx, &u, j_new, sol)?;
    }

    let (sigma_final, _) = stationarity_from(&state.g, &u);
    let fixed_point_residual = if ctx.eps > 0.0 {
        // w-part of the gradient is g - eps u; the fixed point is
        // u = Pi(-w / eps)
        let mut target_levels = Vec::with_capacity(u.grid.nt);
        for (k, gl) in state.g.levels.iter().enumerate() {
            let mut t = gl.clone();
            t.axpy(-ctx.eps, &u.levels[k]);
            t.scale(-1.0 / ctx.eps);
            target_levels.push(t);
        }
        let target = Control::new_clamped(&u.grid, target_levels, u.bounds.clone())?;
        let mut worst = 0.0f64;
        for (a, b) in u.levels.iter().zip(&target.levels) {
            let mut d = a.clone();
            d.axpy(-1.0, b);
            worst = worst.max(d.max_abs());
        }
        Some(worst)
    } else {
        None
    };

    Ok(SolveReport {
        singular_measure: singular_fraction(&state.g),
        j_star: state.j,
        sigma_final,
        iterations,
        cap_hit,
        fixed_point_residual,
        history,
        u_star: u,
        seed: cfg.seed,
    })
}

fn project_step(u: &Control, g: &CellSeries, alpha: f64) -> Result<Control> {
    let levels = u
        .levels
        .iter()
        .zip(&g.levels)
        .map(|(ul, gl)| {
            let mut c = ul.clone();
            c.axpy(-alpha, gl);
            c
        })
        .collect();
    Control::new_clamped(&u.grid, levels, u.bounds.clone())
}

/// Warm-started Tikhonov continuation. `eps_list` must be strictly
/// decreasing and nonnegative; a trailing zero switches the method to
/// conditional gradient for that leg.
pub fn continuation_path(
    ctx: &ObjectiveContext,
    eps_list: &[f64],
    cfg: &OptimizerConfig,
    u0: &Control,
) -> Result<Vec<SolveReport>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("continuation needs at least one eps".into()));
    }
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidConfig("eps_list must be strictly decreasing".into()));
        }
    }
    if eps_list.iter().any(|&e| e < 0.0) {
        return Err(Error::InvalidConfig("eps values must be >= 0".into()));
    }
    let mut reports = Vec::with_capacity(eps_list.len());
    let mut warm = u0.clone();
    for &eps in eps_list {
        let ctx_e = ctx
            .clone()
            .with_perturbation(ctx.xi.clone(), ctx.eta.clone(), eps)?;
        let mut cfg_e = *cfg;
        if eps == 0.0 {
            cfg_e.method = Method::ConditionalGradient;
        }
        let report = solve(&ctx_e, &cfg_e, &warm)?;
        warm = report.u_star.clone();
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CellField2, StaggeredField};
    use crate::grid::Grid;
    use crate::ns::{solve_ns, NsConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lmo_handles_signs_and_ties() {
        let grid = Grid::new(6, 6, 1.0, 2).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 3.0).unwrap();
        let mut g = CellSeries::zeros(&grid);
        g.levels[0].x[0] = 2.0;
        g.levels[0].x[1] = -2.0;
        let r = lmo(&g, &bounds).unwrap();
        assert_eq!(r.control.levels[0].x[0], -1.0);
        assert_eq!(r.control.levels[0].x[1], 3.0);
        assert_eq!(r.control.levels[0].x[2], 1.0); // midpoint tie
        assert!(r.tie_fraction > 0.9);

        let all_pos = {
            let mut s = CellSeries::zeros(&grid);
            for l in &mut s.levels {
                for v in l.x.iter_mut().chain(l.y.iter_mut()) {
                    *v = 1.0;
                }
            }
            s
        };
        let r2 = lmo(&all_pos, &bounds).unwrap();
        assert!(r2.control.levels.iter().all(|l| l.x.iter().all(|&v| v == -1.0)));
    }

    #[test]
    fn lmo_beats_random_feasible_points() {
        let grid = Grid::new(6, 6, 1.0, 2).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = CellSeries::zeros(&grid);
        for l in &mut g.levels {
            for v in l.x.iter_mut().chain(l.y.iter_mut()) {
                *v = 2.0 * rng.gen::<f64>() - 1.0;
            }
        }
        let best = lmo(&g, &bounds).unwrap().control;
        let best_val = g.dot_control(&best);
        for _ in 0..100 {
            let levels: Vec<CellField2> = (0..grid.nt)
                .map(|_| {
                    let mut c = CellField2::zeros(&grid);
                    for v in c.x.iter_mut().chain(c.y.iter_mut()) {
                        *v = 2.0 * rng.gen::<f64>() - 1.0;
                    }
                    c
                })
                .collect();
            let v = Control::new(&grid, levels, bounds.clone()).unwrap();
            assert!(best_val <= g.dot_control(&v) + 1e-12);
        }
    }

    #[test]
    fn degenerate_box_returns_immediately() {
        let grid = Grid::new(8, 8, 0.5, 3).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-10, 60).unwrap();
        let bounds = ControlBounds::constant(&grid, 0.3, 0.3).unwrap();
        let u0 = bounds.midpoint();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y0 = StaggeredField::random(&grid, &mut rng, 0.2);
        let mut yd = crate::field::Trajectory::zeros(&grid);
        for s in &mut yd.snaps {
            *s = StaggeredField::random(&grid, &mut rng, 0.5);
        }
        let ctx = crate::objective::ObjectiveContext::new(cfg, y0, yd).unwrap();
        let rep = solve(&ctx, &OptimizerConfig::conditional_gradient(10), &u0).unwrap();
        assert!(rep.iterations <= 1);
        assert_eq!(rep.sigma_final, 0.0);
    }

    #[test]
    fn tikhonov_dominant_instance_hits_fixed_point() {
        let grid = Grid::new(8, 8, 0.5, 4).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-11, 80).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y0 = StaggeredField::random(&grid, &mut rng, 0.2);
        let mut yd = crate::field::Trajectory::zeros(&grid);
        for s in &mut yd.snaps {
            *s = StaggeredField::random(&grid, &mut rng, 0.5);
        }
        let ctx = crate::objective::ObjectiveContext::new(cfg, y0, yd)
            .unwrap()
            .with_perturbation(None, None, 50.0)
            .unwrap();
        let mut ocfg = OptimizerConfig::projected_gradient(60);
        ocfg.sigma_tol = StationarityTol::Absolute(1e-12);
        let rep = solve(&ctx, &ocfg, &bounds.midpoint()).unwrap();
        let fp = rep.fixed_point_residual.unwrap();
        assert!(fp <= 1e-6, "fixed point residual {fp:.3e}");
    }

    #[test]
    fn recovers_bang_bang_control_at_small_scale() {
        // Coarse smoke test of the recovery pipeline; the acceptance suite
        // runs the demanding version at 64x64. Recovery accuracy here is
        // limited by the adjoint smoothing width of a 12-cell grid, so the
        // distance threshold is loose.
        let grid = Grid::new(12, 12, 0.5, 8).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-10, 60).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let u_dag = crate::verify::bang_bang_target(&bounds);
        let y0 = StaggeredField::zeros(&grid);
        let yd = solve_ns(&cfg, &u_dag, &y0).unwrap().y;
        let ctx = crate::objective::ObjectiveContext::new(cfg, y0, yd).unwrap();

        let u0 = bounds.midpoint();
        let (j0, _) = crate::objective::evaluate(&ctx, &u0).unwrap();
        let mut ocfg = OptimizerConfig::conditional_gradient(80);
        ocfg.sigma_tol = StationarityTol::ScaledToInitial {
            factor: 1e-8,
            floor: 1e-14,
        };
        let rep = solve(&ctx, &ocfg, &u0).unwrap();
        assert!(rep.j_star <= 0.1 * j0, "J fell from {j0:.3e} to {:.3e}", rep.j_star);
        // descent is monotone
        for w in rep.history.windows(2) {
            assert!(w[1].j <= w[0].j + 1e-14);
        }
        let dist = rep.u_star.dist_l1(&u_dag);
        let width = bounds.width_l1();
        assert!(
            dist <= 0.35 * width,
            "recovered control L1 distance {dist:.3e} vs box width {width:.3e}"
        );
    }
}
