//! Linearized forward solver, second-order linearized solver, and the
//! backward-in-time adjoint around a frozen trajectory.
//!
//! One forward step of the state solver, differentiated at the converged
//! state `ybar`, is the affine map `z_k = A_k (z_{k-1} + dt f_k)` with
//!
//! ```text
//! A_k = (I + K dt O_k)^{-1} K,   K = P H^{-1} P,   O_k z = C_ybar z + C_z ybar
//! ```
//!
//! (`H = I + nu dt (-lap)`, `P` the Leray projection, both self-adjoint in the
//! face inner product, hence `K` self-adjoint). The adjoint solver applies the
//! exact transpose `A_k^* = K (I + dt O_k^* K)^{-1}` with `O^*` assembled from
//! the transposed convection kernels, so the discrete adjoint identity is an
//! algebraic statement, not an asymptotic one, and the Stokes step (`O = 0`)
//! is literally self-adjoint. Both inverses are evaluated by a Richardson
//! iteration that contracts at the advective CFL scale; tolerances are far
//! below every downstream test threshold.
//!
//! Trajectory data pairs with trapezoid weights in time; force series pair
//! with plain `dt` weights (piecewise-constant in time). The adjoint output
//! `w` is the force-space representer: `<S'(u) v, g>_Q = sum_k dt <v_k, w_k>`.
//! Snapshot 0 of the returned trajectory holds the initial-datum sensitivity
//! `P w_1`.

use crate::control::CellSeries;
use crate::error::{Error, Result};
use crate::field::{StaggeredField, Trajectory};
use crate::norms::{trajectory_norm, NormKind};
use crate::ns::{NsConfig, StepWorkspace};
use crate::ops::{cells_to_faces, conv_skew, divergence, oseen_conv, oseen_conv_t};

/// Frozen state around which the Oseen/adjoint systems are assembled.
/// Step `k` (0-based) freezes `y_bar.snaps[k + 1]`, the backward-Euler
/// evaluation level.
pub struct LinearizationPoint {
    pub cfg: NsConfig,
    pub y_bar: Trajectory,
    /// Relative increment tolerance of the per-step inner iteration.
    pub lin_tol: f64,
    pub lin_max: usize,
}

impl LinearizationPoint {
    pub fn new(cfg: NsConfig, y_bar: Trajectory) -> Result<LinearizationPoint> {
        cfg.grid.check_spatial(&y_bar.grid, "linearization trajectory")?;
        if y_bar.snaps.len() != cfg.grid.nt + 1 {
            return Err(Error::GridMismatch(format!(
                "linearization trajectory has {} snapshots, grid wants {}",
                y_bar.snaps.len(),
                cfg.grid.nt + 1
            )));
        }
        for (k, s) in y_bar.snaps.iter().enumerate() {
            let d = divergence(s).max_abs();
            if d > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "linearization snapshot {k} is not divergence-free (max |div| = {d:.3e})"
                )));
            }
        }
        Ok(LinearizationPoint {
            cfg,
            y_bar,
            lin_tol: 1e-12,
            lin_max: 800,
        })
    }
}

struct Stepper {
    ws: StepWorkspace,
    dt: f64,
    tol: f64,
    max: usize,
}

impl Stepper {
    fn new(lp: &LinearizationPoint) -> Stepper {
        Stepper {
            ws: StepWorkspace::new(&lp.cfg),
            dt: lp.cfg.grid.dt(),
            tol: lp.lin_tol,
            max: lp.lin_max,
        }
    }

    /// Solve `z = A (b)`: fixed point of `z = P H^{-1} (b - dt O z)`.
    fn forward_step(
        &mut self,
        ybar: &StaggeredField,
        b: &StaggeredField,
        guess: &StaggeredField,
    ) -> Result<StaggeredField> {
        let mut z = guess.clone();
        for _ in 0..self.max {
            let mut rhs = b.clone();
            rhs.axpy(-self.dt, &oseen_conv(ybar, &z));
            let (z_new, _) = self.ws.momentum_project(&rhs)?;
            let incr = z_new.sub(&z).norm_l2();
            let scale = z_new.norm_l2();
            z = z_new;
            if incr <= self.tol * scale || incr == 0.0 {
                return Ok(z);
            }
        }
        Err(Error::LinearSolveFailure(format!(
            "oseen step iteration exceeded {} sweeps (tol {:.1e})",
            self.max, self.tol
        )))
    }

    /// Solve `w = A^* (phi)`: `s = phi - dt O^* K s`, then `w = K s`.
    fn adjoint_step(
        &mut self,
        ybar: &StaggeredField,
        phi: &StaggeredField,
        guess: &StaggeredField,
    ) -> Result<StaggeredField> {
        let mut s = guess.clone();
        for _ in 0..self.max {
            let (ks, _) = self.ws.momentum_project(&s)?;
            let mut s_new = phi.clone();
            s_new.axpy(-self.dt, &oseen_conv_t(ybar, &ks));
            let incr = s_new.sub(&s).norm_l2();
            let scale = s_new.norm_l2();
            s = s_new;
            if incr <= self.tol * scale || incr == 0.0 {
                let (w, _) = self.ws.momentum_project(&s)?;
                return Ok(w);
            }
        }
        Err(Error::LinearSolveFailure(format!(
            "adjoint step iteration exceeded {} sweeps (tol {:.1e})",
            self.max, self.tol
        )))
    }
}

/// Linearized (Oseen) solve driven by face forces, `forces[k]` acting on step
/// `k`. Linear in `(forces, z0)` to solver tolerance.
pub fn solve_oseen(
    lp: &LinearizationPoint,
    forces: &[StaggeredField],
    z0: &StaggeredField,
) -> Result<Trajectory> {
    let grid = lp.cfg.grid;
    if forces.len() != grid.nt {
        return Err(Error::InvalidConfig(format!(
            "need {} force levels, got {}",
            grid.nt,
            forces.len()
        )));
    }
    let mut st = Stepper::new(lp);
    let (z_start, _) = st.ws.proj.project(z0)?;
    let mut snaps = Vec::with_capacity(grid.nt + 1);
    snaps.push(z_start);
    for k in 0..grid.nt {
        let prev = snaps.last().unwrap();
        let mut b = prev.clone();
        b.axpy(st.dt, &forces[k]);
        let z = st.forward_step(&lp.y_bar.snaps[k + 1], &b, prev)?;
        snaps.push(z);
    }
    Trajectory::from_snaps(&grid, snaps)
}

/// Oseen solve for a cell-centered force series (control direction).
pub fn solve_oseen_control(
    lp: &LinearizationPoint,
    v: &CellSeries,
    z0: &StaggeredField,
) -> Result<Trajectory> {
    let forces: Vec<StaggeredField> = v.levels.iter().map(cells_to_faces).collect();
    solve_oseen(lp, &forces, z0)
}

/// Second-order linearized solve: same step operator with force
/// `-(C_{z1} z2 + C_{z2} z1)` at the new level and zero initial datum.
pub fn solve_second_linearized(
    lp: &LinearizationPoint,
    z1: &Trajectory,
    z2: &Trajectory,
) -> Result<Trajectory> {
    let grid = lp.cfg.grid;
    let mut st = Stepper::new(lp);
    let mut snaps = Vec::with_capacity(grid.nt + 1);
    snaps.push(StaggeredField::zeros(&grid));
    for k in 0..grid.nt {
        let prev = snaps.last().unwrap();
        let mut f = conv_skew(&z1.snaps[k + 1], &z2.snaps[k + 1]);
        f.axpy(1.0, &conv_skew(&z2.snaps[k + 1], &z1.snaps[k + 1]));
        let mut b = prev.clone();
        b.axpy(-st.dt, &f);
        let z = st.forward_step(&lp.y_bar.snaps[k + 1], &b, prev)?;
        snaps.push(z);
    }
    Trajectory::from_snaps(&grid, snaps)
}

/// Exact transpose of the force-to-trajectory map. `data` pairs with
/// trapezoid weights; the result pairs with plain `dt` weights:
///
/// `<solve_oseen(lp, f, 0), data>_Q = sum_k dt <f_k, w_k>`.
///
/// Snapshot `0` carries the initial-datum sensitivity `P w_1`.
pub fn solve_adjoint(lp: &LinearizationPoint, data: &Trajectory) -> Result<Trajectory> {
    let grid = lp.cfg.grid;
    if data.snaps.len() != grid.nt + 1 {
        return Err(Error::GridMismatch(format!(
            "adjoint data has {} snapshots, grid wants {}",
            data.snaps.len(),
            grid.nt + 1
        )));
    }
    let mut st = Stepper::new(lp);
    let dt = grid.dt();
    let mut w_snaps = vec![StaggeredField::zeros(&grid); grid.nt + 1];
    let mut w_next = StaggeredField::zeros(&grid);
    for k in (1..=grid.nt).rev() {
        let mut phi = data.snaps[k].clone();
        phi.scale(grid.time_weight(k) * dt);
        phi.axpy(1.0, &w_next);
        let w_k = st.adjoint_step(&lp.y_bar.snaps[k], &phi, &phi)?;
        w_next = w_k.clone();
        w_snaps[k] = w_k;
    }
    let (sens, _) = st.ws.proj.project(&w_snaps[1])?;
    w_snaps[0] = sens;
    Trajectory::from_snaps(&grid, w_snaps)
}

/// Pairing of a face-force series against the adjoint output:
/// `sum_k dt <f_k, w_{k+1}>`.
pub fn force_pairing(forces: &[StaggeredField], w: &Trajectory) -> f64 {
    let dt = w.grid.dt();
    forces
        .iter()
        .enumerate()
        .map(|(k, f)| dt * f.dot(&w.snaps[k + 1]))
        .sum()
}

#[derive(Debug, Clone)]
pub struct LsL1Row {
    pub v_l1: f64,
    pub z_ls: f64,
    pub w_ls: f64,
    pub ratio_z: f64,
    pub ratio_w: f64,
    pub degenerate: bool,
}

/// Run a family of forces through the linearized and adjoint solvers and
/// report the `L^s~ / L^1` ratios. The constant is reported, not asserted.
pub fn ls_l1_diagnostic(
    lp: &LinearizationPoint,
    family: &[CellSeries],
    s_tilde: f64,
) -> Result<Vec<LsL1Row>> {
    if !(1.0..2.0).contains(&s_tilde) {
        return Err(Error::InvalidExponent(s_tilde));
    }
    let grid = lp.cfg.grid;
    let mut rows = Vec::with_capacity(family.len());
    for v in family {
        let v_l1 = v.norm_l1();
        if v_l1 == 0.0 {
            rows.push(LsL1Row {
                v_l1,
                z_ls: 0.0,
                w_ls: 0.0,
                ratio_z: f64::NAN,
                ratio_w: f64::NAN,
                degenerate: true,
            });
            continue;
        }
        let lifted: Vec<StaggeredField> = v.levels.iter().map(cells_to_faces).collect();
        let z = solve_oseen(lp, &lifted, &StaggeredField::zeros(&grid))?;
        let mut data = Trajectory::zeros(&grid);
        for k in 0..grid.nt {
            data.snaps[k + 1] = lifted[k].clone();
        }
        let w = solve_adjoint(lp, &data)?;
        let z_ls = trajectory_norm(&z, NormKind::Ls(s_tilde))?;
        let w_ls = trajectory_norm(&w, NormKind::Ls(s_tilde))?;
        rows.push(LsL1Row {
            v_l1,
            z_ls,
            w_ls,
            ratio_z: z_ls / v_l1,
            ratio_w: w_ls / v_l1,
            degenerate: false,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lp_random(nx: usize, nt: usize, seed: u64) -> LinearizationPoint {
        let grid = Grid::new(nx, nx, 0.5, nt).unwrap();
        let cfg = NsConfig::new(0.1, grid, 1e-11, 80).unwrap();
        // a genuine solver trajectory so snapshots are divergence-free
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forces: Vec<StaggeredField> = (0..nt)
            .map(|_| StaggeredField::random(&grid, &mut rng, 1.0))
            .collect();
        let y0 = StaggeredField::random(&grid, &mut rng, 0.3);
        let sol = crate::ns::solve_ns_faces(&cfg, &forces, &y0, None).unwrap();
        LinearizationPoint::new(cfg, sol.y).unwrap()
    }

    fn random_forces(lp: &LinearizationPoint, seed: u64, amp: f64) -> Vec<StaggeredField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..lp.cfg.grid.nt)
            .map(|_| StaggeredField::random(&lp.cfg.grid, &mut rng, amp))
            .collect()
    }

    #[test]
    fn zero_force_zero_state() {
        let lp = lp_random(8, 3, 1);
        let z = solve_oseen(
            &lp,
            &vec![StaggeredField::zeros(&lp.cfg.grid); 3],
            &StaggeredField::zeros(&lp.cfg.grid),
        )
        .unwrap();
        for s in &z.snaps {
            assert_eq!(s.max_abs(), 0.0);
        }
        let w = solve_adjoint(&lp, &Trajectory::zeros(&lp.cfg.grid)).unwrap();
        for s in &w.snaps {
            assert_eq!(s.max_abs(), 0.0);
        }
    }

    #[test]
    fn superposition_holds() {
        let lp = lp_random(8, 4, 2);
        let g = lp.cfg.grid;
        let f1 = random_forces(&lp, 10, 1.0);
        let f2 = random_forces(&lp, 11, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z0a = StaggeredField::random(&g, &mut rng, 0.5);
        let z0b = StaggeredField::random(&g, &mut rng, 0.5);
        let (a, b) = (0.7, -1.3);

        let za = solve_oseen(&lp, &f1, &z0a).unwrap();
        let zb = solve_oseen(&lp, &f2, &z0b).unwrap();
        let mut fc: Vec<StaggeredField> = Vec::new();
        for (x, y) in f1.iter().zip(&f2) {
            let mut f = x.clone();
            f.scale(a);
            f.axpy(b, y);
            fc.push(f);
        }
        let mut z0c = z0a.clone();
        z0c.scale(a);
        z0c.axpy(b, &z0b);
        let zc = solve_oseen(&lp, &fc, &z0c).unwrap();

        let mut expect = za.clone();
        expect.scale(a);
        expect.axpy(b, &zb);
        let err = zc.sub(&expect).norm_l2_q() / zc.norm_l2_q();
        assert!(err <= 1e-9, "superposition error {err:.3e}");
    }

    #[test]
    fn adjoint_identity_holds_to_solver_tolerance() {
        let lp = lp_random(10, 5, 3);
        let g = lp.cfg.grid;
        let forces = random_forces(&lp, 20, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut data = Trajectory::zeros(&g);
        for k in 0..=g.nt {
            data.snaps[k] = StaggeredField::random(&g, &mut rng, 1.0);
        }
        let z = solve_oseen(&lp, &forces, &StaggeredField::zeros(&g)).unwrap();
        let w = solve_adjoint(&lp, &data).unwrap();
        let lhs = z.dot_q(&data);
        let rhs = force_pairing(&forces, &w);
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
        assert!(rel <= 1e-9, "adjoint identity relative error {rel:.3e}");
    }

    #[test]
    fn second_linearized_is_symmetric() {
        let lp = lp_random(8, 4, 4);
        let g = lp.cfg.grid;
        let z1 = solve_oseen(&lp, &random_forces(&lp, 30, 1.0), &StaggeredField::zeros(&g)).unwrap();
        let z2 = solve_oseen(&lp, &random_forces(&lp, 31, 1.0), &StaggeredField::zeros(&g)).unwrap();
        let a = solve_second_linearized(&lp, &z1, &z2).unwrap();
        let b = solve_second_linearized(&lp, &z2, &z1).unwrap();
        let rel = a.sub(&b).norm_l2_q() / a.norm_l2_q();
        assert!(rel <= 1e-10, "asymmetry {rel:.3e}");
        let zero = solve_second_linearized(&lp, &Trajectory::zeros(&g), &z2).unwrap();
        assert!(zero.norm_l2_q() == 0.0);
    }

    #[test]
    fn stokes_adjoint_is_time_reversed_forward() {
        let grid = Grid::new(10, 10, 0.4, 6).unwrap();
        let cfg = NsConfig::new(0.15, grid, 1e-11, 80).unwrap();
        let lp = LinearizationPoint::new(cfg, Trajectory::zeros(&grid)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut data = Trajectory::zeros(&grid);
        for k in 0..=grid.nt {
            data.snaps[k] = StaggeredField::random(&grid, &mut rng, 1.0);
        }
        let w = solve_adjoint(&lp, &data).unwrap();
        // forward Stokes with force f_j = weight * data reversed in time
        let forces: Vec<StaggeredField> = (1..=grid.nt)
            .map(|j| {
                let k = grid.nt + 1 - j;
                let mut f = data.snaps[k].clone();
                f.scale(grid.time_weight(k));
                f
            })
            .collect();
        let z = solve_oseen(&lp, &forces, &StaggeredField::zeros(&grid)).unwrap();
        let mut err = 0.0f64;
        for k in 1..=grid.nt {
            let e = z.snaps[grid.nt + 1 - k].sub(&w.snaps[k]).norm_l2();
            err = err.max(e / w.snaps[k].norm_l2().max(1e-30));
        }
        assert!(err <= 1e-9, "time reversal mismatch {err:.3e}");
    }

    #[test]
    fn dense_transposition_on_tiny_grid() {
        // materialize the force-to-trajectory map and its adjoint as matrices
        let lp = lp_random(6, 2, 6);
        let g = lp.cfg.grid;
        let zero = StaggeredField::zeros(&g);
        let n_face_u = (g.nx + 1) * g.ny;
        let n_face_v = g.nx * (g.ny + 1);
        let per_level = n_face_u + n_face_v;

        let set = |idx: usize| -> Vec<StaggeredField> {
            let mut f = vec![StaggeredField::zeros(&g); g.nt];
            let (lvl, rest) = (idx / per_level, idx % per_level);
            if rest < n_face_u {
                f[lvl].u[rest] = 1.0;
            } else {
                f[lvl].v[rest - n_face_u] = 1.0;
            }
            for x in f.iter_mut() {
                x.enforce_boundary();
            }
            f
        };

        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut data = Trajectory::zeros(&g);
        for k in 0..=g.nt {
            data.snaps[k] = StaggeredField::random(&g, &mut rng, 1.0);
        }
        let w = solve_adjoint(&lp, &data).unwrap();

        // probe 40 random force basis vectors
        let total = per_level * g.nt;
        for probe in 0..40 {
            let idx = (probe * 7919) % total;
            let f = set(idx);
            if f.iter().all(|x| x.max_abs() == 0.0) {
                continue; // boundary face, not a DOF
            }
            let z = solve_oseen(&lp, &f, &zero).unwrap();
            let lhs = z.dot_q(&data);
            let rhs = force_pairing(&f, &w);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "basis {idx}: {lhs:.14e} vs {rhs:.14e}"
            );
        }
    }
}
