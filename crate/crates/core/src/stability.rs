//! Empirical stability experiments: growth-exponent probe, perturbation
//! sweeps with log-log rate fits, gap diagnostics, and the curvature probe.
//!
//! The probes sample feasible controls at prescribed L1 distances from a
//! reference control by flipping large coherent patches toward the far box
//! bound (the displacement structure that perturbed minimizers actually
//! exhibit), then measure the linear-plus-quadratic model growth
//! `G(u) = J'(ub)(u - ub) + J''(ub)(u - ub)^2`.

use crate::control::{CellSeries, Control};
use crate::error::{Error, Result};
use crate::norms::{h1_surrogate, trajectory_norm, NormKind};
use crate::objective::{
    gradient, hessian_quadratic_at, stationarity_from, ObjectiveContext, ObjectiveState,
};
use crate::optimizer::{solve, OptimizerConfig, SolveReport};
use crate::oseen::solve_oseen_control;
use crate::perturb::{make_perturbation, PerturbationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

// ---------------------------------------------------------------------------
// log-log regression

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    fit_line(xs, ys).0
}

/// Returns (slope, intercept, r2).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Power-law fit `distance ~ exp(intercept) * size^slope` in log-log space.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub mu_hat: Option<f64>,
    pub excluded_ids: Vec<usize>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(s, d)| !(s > 0.0) || !(d > 0.0)) {
        return Err(Error::InvalidConfig(
            "rate fit needs strictly positive sizes and distances".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r2) = fit_line(&xs, &ys);
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept,
        r2,
        mu_hat: None,
        excluded_ids: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// growth-exponent probe

/// Produces the model-growth value `G` at a feasible point at the given L1
/// distance from the reference, or `None` when that distance is not
/// reachable for the drawn shape.
pub trait GrowthSampler {
    fn sample(&mut self, distance: f64, seed: u64) -> Result<Option<f64>>;
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GrowthRow {
    pub distance: f64,
    /// Smallest positive sample of `G`; NaN when no positive sample exists.
    pub g_min: f64,
    pub samples: usize,
    /// Count of nonpositive `G` values (logged, never asserted away).
    pub violations: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GrowthProbe {
    pub mu_hat: f64,
    pub rows: Vec<GrowthRow>,
}

pub fn growth_exponent_probe(
    sampler: &mut dyn GrowthSampler,
    distances: &[f64],
    samples_per_distance: usize,
    seed: u64,
) -> Result<GrowthProbe> {
    if distances.len() < 3 {
        return Err(Error::InvalidConfig(
            "growth probe needs at least 3 distances".into(),
        ));
    }
    let dmin = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = distances.iter().cloned().fold(0.0f64, f64::max);
    if !(dmin > 0.0) || dmax / dmin < 10f64.powf(1.5) {
        return Err(Error::InvalidConfig(format!(
            "growth probe distances must span at least 1.5 decades (got {dmin:.3e}..{dmax:.3e})"
        )));
    }
    let mut rows = Vec::new();
    for (di, &d) in distances.iter().enumerate() {
        let mut g_min = f64::INFINITY;
        let mut produced = 0usize;
        let mut violations = 0usize;
        for s in 0..samples_per_distance {
            let draw = sampler.sample(d, seed ^ ((di as u64) << 32) ^ s as u64)?;
            if let Some(g) = draw {
                produced += 1;
                if g > 0.0 {
                    g_min = g_min.min(g);
                } else {
                    violations += 1;
                }
            }
        }
        if produced == 0 {
            return Err(Error::InsufficientFeasibleSamples(format!(
                "no feasible sample at distance {d:.3e}"
            )));
        }
        rows.push(GrowthRow {
            distance: d,
            g_min: if g_min.is_finite() { g_min } else { f64::NAN },
            samples: produced,
            violations,
        });
    }
    let usable: Vec<&GrowthRow> = rows.iter().filter(|r| r.g_min.is_finite()).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientFeasibleSamples(
            "fewer than 3 distances with positive growth samples".into(),
        ));
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.distance.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.g_min.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(GrowthProbe {
        mu_hat: slope - 1.0,
        rows,
    })
}

/// Closure-backed sampler, mainly for oracles and toy objectives.
pub struct FnGrowthSampler<F: FnMut(f64, u64) -> Result<Option<f64>>>(pub F);

impl<F: FnMut(f64, u64) -> Result<Option<f64>>> GrowthSampler for FnGrowthSampler<F> {
    fn sample(&mut self, distance: f64, seed: u64) -> Result<Option<f64>> {
        (self.0)(distance, seed)
    }
}

// ---------------------------------------------------------------------------
// coherent patch displacement sampling

/// Feasible control at exact L1 distance `d` from `u_bar`: flip a smooth
/// random level-set patch toward the far bound and scale the flip.
pub fn coherent_flip_sample(u_bar: &Control, d: f64, seed: u64) -> Option<Control> {
    let grid = u_bar.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                (1 + rng.gen_range(0..2)) as f64,
                (1 + rng.gen_range(0..2)) as f64,
                2.0 * rng.gen::<f64>() - 1.0,
                2.0 * PI * rng.gen::<f64>(),
            )
        })
        .collect();
    let field = |x: f64, y: f64| -> f64 {
        coeffs
            .iter()
            .map(|(m, l, a, p)| a * (m * PI * x + p).sin() * (l * PI * y).cos())
            .sum()
    };
    let mut svals = Vec::with_capacity(grid.n_cells());
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            svals.push(field((i as f64 + 0.5) * grid.hx, (j as f64 + 0.5) * grid.hy));
        }
    }
    let mut sorted = svals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let frac = 0.15 + 0.35 * rng.gen::<f64>();
    let q = sorted[((1.0 - frac) * (sorted.len() - 1) as f64) as usize];

    // full-flip direction on the selected patch
    let dt = grid.dt();
    let area = grid.cell_area();
    let mut dir_levels = Vec::with_capacity(grid.nt);
    let mut mass = 0.0;
    for k in 0..grid.nt {
        let lo = u_bar.bounds.lower_at(k);
        let hi = u_bar.bounds.upper_at(k);
        let ul = &u_bar.levels[k];
        let mut dlv = crate::field::CellField2::zeros(&grid);
        for (idx, &s) in svals.iter().enumerate() {
            if s > q {
                let dx = far_gap(ul.x[idx], lo.x[idx], hi.x[idx]);
                let dy = far_gap(ul.y[idx], lo.y[idx], hi.y[idx]);
                dlv.x[idx] = dx;
                dlv.y[idx] = dy;
                mass += dt * area * (dx.abs() + dy.abs());
            }
        }
        dir_levels.push(dlv);
    }
    if mass <= 0.0 || d > mass {
        return None;
    }
    let t = d / mass;
    let levels = u_bar
        .levels
        .iter()
        .zip(&dir_levels)
        .map(|(u, dl)| {
            let mut l = u.clone();
            l.axpy(t, dl);
            l
        })
        .collect();
    Control::new_clamped(&grid, levels, u_bar.bounds.clone()).ok()
}

#[inline]
fn far_gap(u: f64, lo: f64, hi: f64) -> f64 {
    if hi - u >= u - lo {
        hi - u
    } else {
        lo - u
    }
}

/// Growth sampler for the tracking objective at a precomputed base state.
pub struct PdeGrowthSampler<'a> {
    pub ctx: &'a ObjectiveContext,
    pub state: &'a ObjectiveState,
    pub u_bar: &'a Control,
}

impl GrowthSampler for PdeGrowthSampler<'_> {
    fn sample(&mut self, distance: f64, seed: u64) -> Result<Option<f64>> {
        let Some(u) = coherent_flip_sample(self.u_bar, distance, seed) else {
            return Ok(None);
        };
        let dir = CellSeries::diff(&u, self.u_bar);
        let first = dir.dot(&self.state.g);
        let second = hessian_quadratic_at(self.ctx, self.state, &dir)?;
        Ok(Some(first + second))
    }
}

// ---------------------------------------------------------------------------
// perturbation sweep / rate experiment

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub spec_id: usize,
    pub xi_norm: f64,
    pub eta_norm: f64,
    pub eps: f64,
    pub total_size: f64,
    pub l1_distance: f64,
    pub j_hat: f64,
    pub sigma_final: f64,
    pub singular_measure: f64,
    pub wall_seconds: f64,
    pub excluded: bool,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct RateExperiment {
    pub fit: RateFit,
    pub rows: Vec<SweepRow>,
}

/// Solve the perturbed problem for every spec (warm-started from `u_bar`),
/// record L1 displacements, and fit the log-log rate. Specs run concurrently
/// on `workers` threads; aggregation is keyed by spec id, so the result does
/// not depend on scheduling.
pub fn rate_experiment(
    ctx_base: &ObjectiveContext,
    u_bar: &Control,
    specs: &[PerturbationSpec],
    opt_cfg: &OptimizerConfig,
    workers: usize,
) -> Result<RateExperiment> {
    let n = specs.len();
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; n]);
    let workers = workers.clamp(1, n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let row = run_one_spec(ctx_base, u_bar, &specs[i], opt_cfg, i);
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });

    let rows: Vec<SweepRow> = rows.into_inner().unwrap().into_iter().flatten().collect();
    let mut points = Vec::new();
    let mut excluded_ids = Vec::new();
    for r in &rows {
        if r.excluded {
            excluded_ids.push(r.spec_id);
        } else {
            points.push((r.total_size, r.l1_distance));
        }
    }
    let mut fit = fit_rate(&points)?;
    fit.excluded_ids = excluded_ids;
    Ok(RateExperiment { fit, rows })
}

fn run_one_spec(
    ctx_base: &ObjectiveContext,
    u_bar: &Control,
    spec: &PerturbationSpec,
    opt_cfg: &OptimizerConfig,
    id: usize,
) -> SweepRow {
    let start = std::time::Instant::now();
    let mut row = SweepRow {
        spec_id: id,
        xi_norm: spec.xi_magnitude,
        eta_norm: spec.eta_magnitude,
        eps: spec.eps,
        total_size: spec.total_size(),
        l1_distance: f64::NAN,
        j_hat: f64::NAN,
        sigma_final: f64::NAN,
        singular_measure: f64::NAN,
        wall_seconds: 0.0,
        excluded: false,
        note: String::new(),
    };
    if !(spec.total_size() > 0.0) {
        row.excluded = true;
        row.note = "zero total size".into();
        return row;
    }
    let solved = (|| -> Result<SolveReport> {
        let (xi, eta) = make_perturbation(&ctx_base.cfg.grid, spec)?;
        let ctx = ctx_base
            .clone()
            .with_perturbation(Some(xi), Some(eta), spec.eps)?;
        solve(&ctx, opt_cfg, u_bar)
    })();
    row.wall_seconds = start.elapsed().as_secs_f64();
    match solved {
        Ok(rep) => {
            row.l1_distance = rep.u_star.dist_l1(u_bar);
            row.j_hat = rep.j_star;
            row.sigma_final = rep.sigma_final;
            row.singular_measure = rep.singular_measure;
            if rep.cap_hit {
                row.note = "iteration cap hit".into();
            }
            if !(row.l1_distance > 0.0) {
                row.excluded = true;
                row.note = "zero displacement".into();
            }
        }
        Err(e) => {
            row.excluded = true;
            row.note = format!("solve failed: {e}");
        }
    }
    row
}

// ---------------------------------------------------------------------------
// gap diagnostics

#[derive(Debug, Clone, serde::Serialize)]
pub struct GapRecord {
    /// `||z^xi - z||_{L2(Q)}`
    pub lin_gap_numerator: f64,
    /// `... / (||y^xi - y||_C ||v||_{L2})`
    pub lin_gap_ratio: f64,
    /// `||w^eta - w||_{L2(Q)}`
    pub adj_gap_numerator: f64,
    /// `... / (||xi|| + ||eta||)`
    pub adj_gap_ratio: f64,
    pub state_gap_c: f64,
    pub rho_linf: f64,
    pub dist_l1: f64,
    /// Conditional-gradient gap of the shifted gradient; small iff
    /// `rho` lies in `w_u + N(u)` discretely.
    pub inclusion_sigma: f64,
}

pub fn gap_diagnostics(
    ctx: &ObjectiveContext,
    u: &Control,
    u_bar: &Control,
    spec: &PerturbationSpec,
) -> Result<GapRecord> {
    let grid = ctx.cfg.grid;
    let (xi, eta) = make_perturbation(&grid, spec)?;
    let xi_norm = h1_surrogate(&xi);
    let eta_norm = trajectory_norm(&eta, NormKind::L2)?;

    let ctx0 = ctx.clone().with_perturbation(None, None, 0.0)?;
    let ctxp = ctx
        .clone()
        .with_perturbation(Some(xi), Some(eta), spec.eps)?;

    let st0 = gradient(&ctx0, u)?;
    let stp = gradient(&ctxp, u)?;

    // linear gap with a normalized smooth direction
    let mut rng = ChaCha8Rng::seed_from_u64(spec.shape_seed ^ 0xabcdef);
    let mut v = CellSeries::zeros(&grid);
    for lvl in &mut v.levels {
        for x in lvl.x.iter_mut().chain(lvl.y.iter_mut()) {
            *x = 2.0 * rng.gen::<f64>() - 1.0;
        }
    }
    let vn = v.norm_l2();
    v.scale(1.0 / vn);
    let z0 = solve_oseen_control(&st0.lp, &v, &crate::field::StaggeredField::zeros(&grid))?;
    let zp = solve_oseen_control(&stp.lp, &v, &crate::field::StaggeredField::zeros(&grid))?;
    let lin_gap_numerator = zp.sub(&z0).norm_l2_q();
    let state_gap_c = stp.y.sub(&st0.y).max_abs();

    let adj_gap_numerator = stp.w.sub(&st0.w).norm_l2_q();
    let denom = xi_norm + eta_norm;

    // rho = w_u - eps u - w^eta_u in the control-space representation
    let mut rho = st0.g.clone();
    rho.axpy(-1.0, &stp.g);
    let rho_linf = rho.max_abs();
    let inclusion_sigma = stationarity_from(&stp.g, u).0;

    Ok(GapRecord {
        lin_gap_numerator,
        lin_gap_ratio: lin_gap_numerator / (state_gap_c * 1.0).max(1e-300),
        adj_gap_numerator,
        adj_gap_ratio: adj_gap_numerator / denom.max(1e-300),
        state_gap_c,
        rho_linf,
        dist_l1: u.dist_l1(u_bar),
        inclusion_sigma,
    })
}

// ---------------------------------------------------------------------------
// curvature probe

#[derive(Debug, Clone, serde::Serialize)]
pub struct CurvatureRow {
    pub distance: f64,
    pub theta: f64,
    pub delta_j2: f64,
    /// `|J''(u_theta) d^2 - J''(ub) d^2| / d^{mu+1}`
    pub ratio: f64,
    pub degenerate: bool,
}

pub fn curvature_probe(
    ctx: &ObjectiveContext,
    u_bar: &Control,
    base_state: &ObjectiveState,
    distances: &[f64],
    samples: usize,
    mu: f64,
    seed: u64,
) -> Result<Vec<CurvatureRow>> {
    let mut rows = Vec::new();
    for (di, &d) in distances.iter().enumerate() {
        if !(d > 0.0) {
            rows.push(CurvatureRow {
                distance: d,
                theta: f64::NAN,
                delta_j2: f64::NAN,
                ratio: f64::NAN,
                degenerate: true,
            });
            continue;
        }
        for s in 0..samples {
            let Some(u) = coherent_flip_sample(u_bar, d, seed ^ ((di as u64) << 24) ^ s as u64)
            else {
                continue;
            };
            let dir = CellSeries::diff(&u, u_bar);
            let q0 = hessian_quadratic_at(ctx, base_state, &dir)?;
            for theta in [0.25, 0.5, 1.0] {
                let u_theta = u_bar.blend(&u, theta)?;
                let st = gradient(ctx, &u_theta)?;
                let qt = hessian_quadratic_at(ctx, &st, &dir)?;
                rows.push(CurvatureRow {
                    distance: d,
                    theta,
                    delta_j2: (qt - q0).abs(),
                    ratio: (qt - q0).abs() / d.powf(mu + 1.0),
                    degenerate: false,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlBounds;
    use crate::grid::Grid;

    #[test]
    fn synthetic_power_law_is_recovered_exactly() {
        let sizes: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
        let points: Vec<(f64, f64)> = sizes.iter().map(|&s| (s, 2.0 * s.sqrt())).collect();
        let fit = fit_rate(&points).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 2.0f64.ln()).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_requires_three_points() {
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_rate(&[(0.0, 1.0), (2.0, 2.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn quadratic_toy_probe_recovers_mu_one() {
        // G(u) = ||u - ub||^2_{L2} for flips of coherent patches: the probe
        // slope in log-log is 2, so mu_hat must be close to 1.
        let grid = Grid::new(16, 16, 1.0, 4).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let u_bar = bounds.midpoint();
        let mut sampler = FnGrowthSampler(|d: f64, seed: u64| {
            let u = coherent_flip_sample(&u_bar, d, seed);
            Ok(u.map(|u| {
                let dir = CellSeries::diff(&u, &u_bar);
                dir.dot(&dir)
            }))
        });
        let distances = [0.002, 0.01, 0.05, 0.2];
        let probe = growth_exponent_probe(&mut sampler, &distances, 6, 99).unwrap();
        assert!(
            (probe.mu_hat - 1.0).abs() <= 0.1,
            "mu_hat = {:.3}",
            probe.mu_hat
        );
        for r in &probe.rows {
            assert_eq!(r.violations, 0);
        }
    }

    #[test]
    fn probe_rejects_narrow_distance_spans() {
        let mut sampler = FnGrowthSampler(|d: f64, _| Ok(Some(d * d)));
        assert!(growth_exponent_probe(&mut sampler, &[0.1, 0.2], 2, 0).is_err());
        assert!(growth_exponent_probe(&mut sampler, &[0.1, 0.2, 0.3], 2, 0).is_err());
    }

    #[test]
    fn coherent_samples_hit_exact_distance() {
        let grid = Grid::new(12, 12, 1.0, 6).unwrap();
        let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
        let u_bar = bounds.midpoint();
        for seed in 0..5 {
            let d = 0.07;
            let u = coherent_flip_sample(&u_bar, d, seed).unwrap();
            let got = u.dist_l1(&u_bar);
            assert!(((got - d) / d).abs() < 1e-10, "distance {got}");
        }
        // unreachable distances are rejected
        assert!(coherent_flip_sample(&u_bar, 1e9, 0).is_none());
    }

    #[test]
    fn spec_size_is_monotone_in_components() {
        let base = PerturbationSpec {
            xi_magnitude: 0.1,
            eta_magnitude: 0.2,
            eps: 0.05,
            shape_seed: 1,
            xi_mode: crate::perturb::XiMode::SmoothRandom,
            eta_mode: crate::perturb::EtaMode::SmoothRandom,
        };
        let mut bigger = base;
        bigger.xi_magnitude += 0.3;
        bigger.eps += 0.1;
        assert!(bigger.total_size() > base.total_size());
    }
}
