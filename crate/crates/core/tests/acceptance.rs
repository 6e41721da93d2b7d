//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured quantities and its runtime.

use bbtrack::control::{CellSeries, Control, ControlBounds};
use bbtrack::field::{StaggeredField, Trajectory};
use bbtrack::grid::Grid;
use bbtrack::norms::{trajectory_norm, NormKind};
use bbtrack::ns::{solve_ns_faces, NsConfig};
use bbtrack::objective::{evaluate, gradient, hessian_quadratic_at, ObjectiveContext};
use bbtrack::optimizer::{solve, OptimizerConfig, StationarityTol};
use bbtrack::oseen::{force_pairing, ls_l1_diagnostic, solve_adjoint, solve_oseen, LinearizationPoint};
use bbtrack::perturb::{EtaMode, PerturbationSpec, XiMode};
use bbtrack::stability::{growth_exponent_probe, rate_experiment, PdeGrowthSampler};
use bbtrack::verify;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(criterion: &str, passed: bool, detail: &str, secs: f64) {
    println!(
        "criterion {criterion}: {} ({detail}) [{secs:.1}s]",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_discrete_operator_suite() {
    let t0 = Instant::now();
    let results = verify::suite_operators(64, 20260809).unwrap();
    let tri = results.iter().find(|r| r.name.contains("antisymmetry")).unwrap();
    let div = results.iter().find(|r| r.name.contains("divergence")).unwrap();
    let idem = results.iter().find(|r| r.name.contains("idempotence")).unwrap();
    let all = results.iter().all(|r| r.passed);
    let secs = t0.elapsed().as_secs_f64();
    report(
        "1 (operator suite)",
        all && tri.measured <= 1e-13 && div.measured <= 1e-9 && idem.measured <= 1e-9 && secs < 10.0,
        &format!(
            "antisymmetry {:.2e} <= 1e-13, div {:.2e} <= 1e-9, idempotence {:.2e} <= 1e-9",
            tri.measured, div.measured, idem.measured
        ),
        secs,
    );
    print!("{}", verify::render_table(&results));
}

#[test]
fn criterion_2_manufactured_solution_order() {
    let t0 = Instant::now();
    let (errs, slope) = verify::mms::observed_order(&[32, 64, 128], 0.1, 4.0, 0.25).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    report(
        "2 (manufactured-solution convergence)",
        slope >= 1.8 && secs < 300.0,
        &format!("errors {errs:?}, observed spatial order {slope:.2} >= 1.8"),
        secs,
    );
}

#[test]
fn criterion_3_adjoint_identity() {
    let t0 = Instant::now();
    let results = verify::suite_adjoint(32, 32, 5, 77).unwrap();
    let worst = results[0].measured;
    let secs = t0.elapsed().as_secs_f64();
    report(
        "3 (adjoint identity)",
        worst <= 1e-9 && secs < 60.0,
        &format!("worst relative error {worst:.2e} <= 1e-9 over 5 pairs at 32x32, nt=32"),
        secs,
    );
}

#[test]
fn criterion_4_gradient_exactness() {
    let t0 = Instant::now();
    let results = verify::suite_gradient(16, 12, 5, 99).unwrap();
    let fd = results.iter().find(|r| r.name.contains("central")).unwrap();
    let taylor = results.iter().find(|r| r.name.contains("taylor")).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    report(
        "4 (gradient exactness)",
        fd.passed && taylor.passed,
        &format!(
            "central-difference rel err {:.2e} <= 1e-4 (5 pairs, t = 1e-4); cubic-remainder factor ok ({:.2} <= 1)",
            fd.measured, taylor.measured
        ),
        secs,
    );
}

fn acceptance_instance() -> (ObjectiveContext, Control) {
    let cfg = NsConfig::desk_default();
    verify::recovery_instance(cfg, -1.0, 1.0).unwrap()
}

#[test]
fn criterion_5_bang_bang_recovery() {
    let t0 = Instant::now();
    let (ctx, u_dag) = acceptance_instance();
    let bounds = u_dag.bounds.clone();
    let u0 = bounds.midpoint();
    let (j0, _) = evaluate(&ctx, &u0).unwrap();

    let mut cfg = OptimizerConfig::conditional_gradient(400);
    cfg.sigma_tol = StationarityTol::ScaledToInitial {
        factor: 1e-8,
        floor: 1e-16,
    };
    let rep = solve(&ctx, &cfg, &u0).unwrap();
    let dist = rep.u_star.dist_l1(&u_dag);
    let width = bounds.width_l1();
    let secs = t0.elapsed().as_secs_f64();
    report(
        "5 (bang-bang recovery)",
        rep.sigma_final <= 1e-8 * j0
            && rep.singular_measure <= 0.05
            && dist <= 0.05 * width
            && secs < 600.0,
        &format!(
            "sigma {:.2e} <= {:.2e}, singular {:.3} <= 0.05, L1 dist {:.4} <= {:.4}, {} iterations",
            rep.sigma_final,
            1e-8 * j0,
            rep.singular_measure,
            dist,
            0.05 * width,
            rep.iterations
        ),
        secs,
    );
}

#[test]
fn criterion_6_holder_rate_experiment() {
    let t0 = Instant::now();
    let (ctx, u_dag) = acceptance_instance();
    let u0 = u_dag.bounds.midpoint();

    // reference solution of the unperturbed problem
    let mut cfg = OptimizerConfig::conditional_gradient(400);
    cfg.sigma_tol = StationarityTol::ScaledToInitial {
        factor: 1e-8,
        floor: 1e-16,
    };
    let base = solve(&ctx, &cfg, &u0).unwrap();
    let u_bar = base.u_star.clone();

    // growth exponent at the reference point
    let state = gradient(&ctx, &u_bar).unwrap();
    let mut sampler = PdeGrowthSampler {
        ctx: &ctx,
        state: &state,
        u_bar: &u_bar,
    };
    let distances = [0.02, 0.05, 0.1, 0.25, 0.7];
    let probe = growth_exponent_probe(&mut sampler, &distances, 6, 4242).unwrap();

    // 12 specs spanning two decades, mixing xi, eta, eps
    let mut specs = Vec::new();
    for k in 0..12 {
        let scale = 1e-3 * 10f64.powf(2.0 * (k as f64) / 11.0);
        let (xi_m, eta_m, eps) = match k % 3 {
            0 => (0.5 * scale, 0.3 * scale, 0.2 * scale),
            1 => (0.0, 0.6 * scale, 0.4 * scale),
            _ => (0.3 * scale, 0.0, 0.7 * scale),
        };
        specs.push(PerturbationSpec {
            xi_magnitude: xi_m,
            eta_magnitude: eta_m,
            eps,
            shape_seed: 1000 + k as u64,
            xi_mode: if k % 2 == 0 { XiMode::SmoothRandom } else { XiMode::SingleVortex },
            eta_mode: if k % 4 < 2 { EtaMode::SmoothRandom } else { EtaMode::Checker },
        });
    }
    let mut sweep_cfg = OptimizerConfig::conditional_gradient(200);
    sweep_cfg.sigma_tol = StationarityTol::ScaledToInitial {
        factor: 1e-8,
        floor: 1e-16,
    };
    let exp = rate_experiment(&ctx, &u_bar, &specs, &sweep_cfg, 4).unwrap();
    let fit = &exp.fit;

    // one-sided envelope with 50% slack
    let envelope_ok = fit
        .points
        .iter()
        .all(|&(s, d)| d <= 1.5 * fit.intercept.exp() * s.powf(fit.slope));
    let slope_match = (fit.slope - 1.0 / probe.mu_hat).abs() <= 0.2;
    let secs = t0.elapsed().as_secs_f64();
    for row in &exp.rows {
        println!(
            "  spec {}: size {:.3e} -> dist {:.3e} (sigma {:.1e}, {:.1}s) {}",
            row.spec_id, row.total_size, row.l1_distance, row.sigma_final, row.wall_seconds, row.note
        );
    }
    report(
        "6 (Hoelder rate experiment)",
        fit.slope > 0.0 && fit.r2 >= 0.9 && slope_match && envelope_ok && secs < 3600.0,
        &format!(
            "slope {:.3} > 0, r2 {:.3} >= 0.9, |slope - 1/mu_hat| = |{:.3} - {:.3}| <= 0.2, envelope {}",
            fit.slope,
            fit.r2,
            fit.slope,
            1.0 / probe.mu_hat,
            envelope_ok
        ),
        secs,
    );
}

#[test]
fn criterion_7_appendix_roundtrip() {
    let t0 = Instant::now();
    let results = verify::suite_appendix(100, 314159).unwrap();
    let all = results.iter().all(|r| r.passed);
    let secs = t0.elapsed().as_secs_f64();
    print!("{}", verify::render_table(&results));
    report(
        "7 (appendix roundtrip)",
        all && secs < 300.0,
        "zero falsifications, VI/grid agreement, ekeland re-verified",
        secs,
    );
}

#[test]
fn criterion_8_ls_l1_diagnostic() {
    let t0 = Instant::now();
    let grid = Grid::new(32, 32, 0.5, 32).unwrap();
    let cfg = NsConfig::new(0.1, grid, 1e-11, 120).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let forces: Vec<StaggeredField> = (0..grid.nt)
        .map(|_| StaggeredField::random(&grid, &mut rng, 0.5))
        .collect();
    let y0 = StaggeredField::zeros(&grid);
    let base = solve_ns_faces(&cfg, &forces, &y0, None).unwrap();
    let lp = LinearizationPoint::new(cfg, base.y).unwrap();

    // indicator forces on squares of side 2^-k, normalized to unit L1
    let mut family = Vec::new();
    for k in 1..=4 {
        let side = 0.5f64.powi(k);
        let mut series = CellSeries::zeros(&grid);
        let area = side * side;
        for lvl in &mut series.levels {
            for i in 0..grid.nx {
                for j in 0..grid.ny {
                    let x = (i as f64 + 0.5) * grid.hx;
                    let y = (j as f64 + 0.5) * grid.hy;
                    if (x - 0.5).abs() <= side / 2.0 && (y - 0.5).abs() <= side / 2.0 {
                        lvl.x[i * grid.ny + j] = 1.0 / (area * grid.t_final);
                    }
                }
            }
        }
        family.push(series);
    }
    // normalize exactly in the discrete L1 norm
    for f in &mut family {
        let n = f.norm_l1();
        f.scale(1.0 / n);
    }
    let rows = ls_l1_diagnostic(&lp, &family, 1.5).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio_z).collect();
    let rmax = ratios.iter().cloned().fold(0.0f64, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let secs = t0.elapsed().as_secs_f64();
    for r in &rows {
        println!(
            "  |v|_L1 {:.3e} -> |z|_L1.5 {:.3e}, |w|_L1.5 {:.3e} (ratios {:.3e}, {:.3e})",
            r.v_l1, r.z_ls, r.w_ls, r.ratio_z, r.ratio_w
        );
    }
    report(
        "8 (L^s-L^1 diagnostic)",
        rmax / rmin <= 10.0 && secs < 300.0,
        &format!("z-ratio max/min = {:.2} <= 10 across 4 support scales", rmax / rmin),
        secs,
    );
}

// Supplementary: linearity consistency of the derivative solver against the
// nonlinear solver, and scaled-family homogeneity of the diagnostic.
#[test]
fn directional_derivative_consistency() {
    let grid = Grid::new(16, 16, 0.5, 10).unwrap();
    let cfg = NsConfig::new(0.1, grid, 1e-12, 200).unwrap();
    let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut levels = Vec::new();
    for _ in 0..grid.nt {
        let mut c = bbtrack::field::CellField2::zeros(&grid);
        for v in c.x.iter_mut().chain(c.y.iter_mut()) {
            *v = 0.5 * (2.0 * rng.gen::<f64>() - 1.0);
        }
        levels.push(c);
    }
    let u = Control::new(&grid, levels, bounds).unwrap();
    let y0 = StaggeredField::random(&grid, &mut rng, 0.2);
    let base = bbtrack::ns::solve_ns(&cfg, &u, &y0).unwrap();
    let lp = LinearizationPoint::new(cfg, base.y.clone()).unwrap();

    let mut v = CellSeries::zeros(&grid);
    for lvl in &mut v.levels {
        for x in lvl.x.iter_mut().chain(lvl.y.iter_mut()) {
            *x = 0.3 * (2.0 * rng.gen::<f64>() - 1.0);
        }
    }
    let z = bbtrack::oseen::solve_oseen_control(&lp, &v, &StaggeredField::zeros(&grid)).unwrap();

    let mut prev_err = f64::INFINITY;
    for &t in &[1e-1, 1e-2, 1e-3] {
        let mut ut_levels = u.levels.clone();
        for (a, b) in ut_levels.iter_mut().zip(&v.levels) {
            a.axpy(t, b);
        }
        let ut = Control::new_clamped(&grid, ut_levels, u.bounds.clone()).unwrap();
        let yt = bbtrack::ns::solve_ns(&cfg, &ut, &y0).unwrap();
        let mut diff = yt.y.sub(&base.y);
        diff.axpy(-t, &z);
        let err = diff.norm_l2_q();
        // O(t^2): each decade should shrink ~100x; require 30x
        assert!(
            err < prev_err / 30.0 || prev_err == f64::INFINITY,
            "t = {t}: remainder {err:.3e}, previous {prev_err:.3e}"
        );
        prev_err = err;
    }
}

#[test]
fn energy_bound_is_stable_across_instances() {
    // boundedness of the discrete energy ratio over random data and a
    // refinement step
    let mut worst: f64 = 0.0;
    for (n, nt) in [(16, 8), (32, 16)] {
        let grid = Grid::new(n, n, 0.5, nt).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-9, 60).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let forces: Vec<StaggeredField> = (0..nt)
                .map(|_| StaggeredField::random(&grid, &mut rng, 1.0))
                .collect();
            let y0 = StaggeredField::random(&grid, &mut rng, 1.0);
            let sol = solve_ns_faces(&cfg, &forces, &y0, None).unwrap();
            worst = worst.max(sol.energy_ratio);
        }
    }
    println!("worst energy ratio: {worst:.3}");
    assert!(worst.is_finite() && worst < 50.0, "energy ratio {worst}");
}

#[test]
fn perturbed_state_gap_scales_with_xi() {
    // contraction of the state gap as the initial-datum perturbation shrinks
    let grid = Grid::new(16, 16, 0.5, 10).unwrap();
    let cfg = NsConfig::new(0.1, grid, 1e-11, 120).unwrap();
    let bounds = ControlBounds::constant(&grid, -1.0, 1.0).unwrap();
    let u = bounds.midpoint();
    let y0 = StaggeredField::zeros(&grid);
    let base = bbtrack::ns::solve_ns(&cfg, &u, &y0).unwrap();
    let spec = PerturbationSpec {
        xi_magnitude: 1.0,
        eta_magnitude: 0.0,
        eps: 0.0,
        shape_seed: 7,
        xi_mode: XiMode::SmoothRandom,
        eta_mode: EtaMode::SmoothRandom,
    };
    let (xi_unit, _) = bbtrack::perturb::make_perturbation(&grid, &spec).unwrap();
    let mut ratios = Vec::new();
    for &m in &[0.2, 0.1, 0.05, 0.025] {
        let mut xi = xi_unit.clone();
        xi.scale(m);
        let sol = bbtrack::ns::solve_ns_perturbed(&cfg, &u, &y0, &xi).unwrap();
        let gap = sol.y.sub(&base.y).max_abs();
        ratios.push(gap / m);
    }
    println!("state gap / xi ratios: {ratios:?}");
    let rmax = ratios.iter().cloned().fold(0.0f64, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(rmax / rmin < 3.0, "gap ratio drift: {ratios:?}");
}

#[test]
fn oseen_and_adjoint_pair_on_acceptance_shapes() {
    // same identity as criterion 3 but exercising the trapezoid weights on a
    // non-square time horizon
    let grid = Grid::new(12, 16, 0.7, 9).unwrap();
    let cfg = NsConfig::new(0.12, grid, 1e-11, 120).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let forces: Vec<StaggeredField> = (0..grid.nt)
        .map(|_| StaggeredField::random(&grid, &mut rng, 1.0))
        .collect();
    let y0 = StaggeredField::random(&grid, &mut rng, 0.3);
    let sol = solve_ns_faces(&cfg, &forces, &y0, None).unwrap();
    let lp = LinearizationPoint::new(cfg, sol.y).unwrap();
    let v: Vec<StaggeredField> = (0..grid.nt)
        .map(|_| StaggeredField::random(&grid, &mut rng, 1.0))
        .collect();
    let mut data = Trajectory::zeros(&grid);
    for k in 0..=grid.nt {
        data.snaps[k] = StaggeredField::random(&grid, &mut rng, 1.0);
    }
    let z = solve_oseen(&lp, &v, &StaggeredField::zeros(&grid)).unwrap();
    let w = solve_adjoint(&lp, &data).unwrap();
    let lhs = z.dot_q(&data);
    let rhs = force_pairing(&v, &w);
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    assert!(rel <= 1e-9, "adjoint identity on rectangular grid: {rel:.3e}");
    let _ = trajectory_norm(&z, NormKind::L2).unwrap();
}
