//! Nonlinear state solver: backward Euler with implicit diffusion,
//! convection in skew form lagged through a Picard iteration at each step,
//! and incompressibility enforced by Leray projection every sweep
//! (Chorin-type splitting).
//!
//! The converged step map is
//!
//! ```text
//! y_k = P (I + nu dt (-lap))^{-1} (y_{k-1} + dt f_k - dt C_{y_k} y_k)
//! ```
//!
//! with `P` the Leray projection and `C` the skew convection. The linearized
//! and adjoint solvers in [`crate::oseen`] differentiate and transpose this
//! exact map, so gradient tests downstream hold to solver tolerance.

use crate::control::Control;
use crate::error::{Error, Result};
use crate::field::{ScalarField, StaggeredField, Trajectory};
use crate::grid::Grid;
use crate::norms::{trajectory_norm, NormKind};
use crate::ops::{cells_to_faces, conv_skew, divergence};
use crate::poisson::ProjectionSolver;
use crate::spectral::HelmholtzDirect;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy)]
pub struct NsConfig {
    pub nu: f64,
    pub grid: Grid,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl NsConfig {
    pub fn new(nu: f64, grid: Grid, picard_tol: f64, picard_max: usize) -> Result<NsConfig> {
        if !(nu > 0.0) {
            return Err(Error::InvalidConfig(format!("viscosity must be positive (got {nu})")));
        }
        if !(picard_tol > 0.0 && picard_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "picard_tol must be in (0, 1) (got {picard_tol})"
            )));
        }
        if picard_max < 1 {
            return Err(Error::InvalidConfig("picard_max must be >= 1".into()));
        }
        Ok(NsConfig {
            nu,
            grid,
            picard_tol,
            picard_max,
        })
    }

    /// Desk-scale defaults: 64x64 cells, 128 steps on (0, 1), nu = 0.1.
    pub fn desk_default() -> NsConfig {
        let grid = Grid::new(64, 64, 1.0, 128).unwrap();
        NsConfig::new(0.1, grid, 1e-9, 50).unwrap()
    }

    pub fn with_tol(mut self, tol: f64) -> NsConfig {
        self.picard_tol = tol;
        self
    }
}

/// Per-step record mirrored into the `run.json-lines` diagnostics stream.
#[derive(Debug, Clone)]
pub struct StepDiag {
    pub step: usize,
    pub time: f64,
    pub picard_iters: usize,
    pub div_max: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct NsSolution {
    pub y: Trajectory,
    /// Chorin pressure estimate per step (level k stores p at time k dt).
    pub pressure: Vec<ScalarField>,
    pub steps: Vec<StepDiag>,
    pub cfl_max: f64,
    pub cfl_warning: bool,
    /// `|| P y0 - y0 ||_L2`, the projection correction of the initial datum.
    pub y0_correction: f64,
    /// `(||y||_{Linf(L2)} + ||y||_{L2(H1)}) / (||f||_{L2(Q)} + ||y0||_{L2})`
    pub energy_ratio: f64,
}

/// Optional checkpointing: snapshots as `y_%06d.fld` plus a `run.json-lines`
/// stream with one record per step.
pub struct CheckpointSink {
    dir: PathBuf,
    log: std::fs::File,
}

impl CheckpointSink {
    pub fn create(dir: impl Into<PathBuf>) -> Result<CheckpointSink> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let log = std::fs::File::create(dir.join("run.json-lines"))?;
        Ok(CheckpointSink { dir, log })
    }

    fn record(&mut self, diag: &StepDiag, snap: &StaggeredField) -> Result<()> {
        crate::io::write_field(self.dir.join(format!("y_{:06}.fld", diag.step)), snap)?;
        writeln!(
            self.log,
            "{{\"step\":{},\"time\":{:.12e},\"picard_iters\":{},\"div_max\":{:.6e},\"energy\":{:.12e}}}",
            diag.step, diag.time, diag.picard_iters, diag.div_max, diag.energy
        )?;
        Ok(())
    }
}

/// Shared per-solve machinery: direct Helmholtz solve + Leray projection.
pub(crate) struct StepWorkspace {
    pub helm: HelmholtzDirect,
    pub proj: ProjectionSolver,
    pub nu_dt: f64,
}

impl StepWorkspace {
    pub fn new(cfg: &NsConfig) -> StepWorkspace {
        StepWorkspace {
            helm: HelmholtzDirect::new(&cfg.grid),
            proj: ProjectionSolver::new(&cfg.grid),
            nu_dt: cfg.nu * cfg.grid.dt(),
        }
    }

    /// `K f = P (I + nu dt (-lap))^{-1} P f`, returning the potential of the
    /// outer projection. The inner projection drops the gradient part of the
    /// momentum right-hand side (the pressure absorbs it); with projections on
    /// both sides `K` is exactly self-adjoint in the face inner product, which
    /// the adjoint solver relies on.
    pub fn momentum_project(&mut self, f: &StaggeredField) -> Result<(StaggeredField, ScalarField)> {
        let (pf, _) = self.proj.project(f)?;
        let h = self.helm.solve(&pf, self.nu_dt);
        self.proj.project(&h)
    }
}

/// Lift a control to a face-force series (level k forces step k).
pub fn lift_control(u: &Control) -> Vec<StaggeredField> {
    u.levels.iter().map(cells_to_faces).collect()
}

/// Solve the state equation driven by face forces `forces[k]` acting on step
/// `k` (k = 0..nt-1). The initial datum is projected first.
pub fn solve_ns_faces(
    cfg: &NsConfig,
    forces: &[StaggeredField],
    y0: &StaggeredField,
    mut sink: Option<&mut CheckpointSink>,
) -> Result<NsSolution> {
    let grid = cfg.grid;
    if forces.len() != grid.nt {
        return Err(Error::InvalidConfig(format!(
            "need {} force levels, got {}",
            grid.nt,
            forces.len()
        )));
    }
    grid.check_spatial(&y0.grid, "initial datum")?;
    let dt = grid.dt();
    let mut ws = StepWorkspace::new(cfg);

    let (y_start, _) = ws.proj.project(y0)?;
    let y0_correction = y_start.sub(y0).norm_l2();

    let mut snaps = Vec::with_capacity(grid.nt + 1);
    let mut pressure = Vec::with_capacity(grid.nt);
    let mut steps = Vec::with_capacity(grid.nt);
    let mut cfl_max = 0.0f64;
    snaps.push(y_start);

    for k in 0..grid.nt {
        let prev = snaps.last().unwrap();
        // rhs fixed over the Picard sweep: previous state plus dt * force
        let mut rhs0 = prev.clone();
        rhs0.axpy(dt, &forces[k]);

        let mut y = prev.clone();
        let mut phi = ScalarField::zeros(&grid);
        let mut iters = 0;
        let mut converged = false;
        while iters < cfg.picard_max {
            iters += 1;
            let mut rhs = rhs0.clone();
            rhs.axpy(-dt, &conv_skew(&y, &y));
            let (y_new, phi_new) = ws.momentum_project(&rhs)?;
            let incr = y_new.sub(&y).norm_l2();
            let scale = y_new.norm_l2();
            y = y_new;
            phi = phi_new;
            if incr <= cfg.picard_tol * scale || incr == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonlinearDivergence(format!(
                "step {k}: picard increment above tol {:.1e} after {} iterations",
                cfg.picard_tol, cfg.picard_max
            )));
        }

        let cfl = y.max_abs() * dt / grid.hx.min(grid.hy);
        cfl_max = cfl_max.max(cfl);
        let mut p = phi;
        for v in &mut p.vals {
            *v /= dt;
        }
        let diag = StepDiag {
            step: k + 1,
            time: (k + 1) as f64 * dt,
            picard_iters: iters,
            div_max: divergence(&y).max_abs(),
            energy: y.norm_l2().powi(2),
        };
        if let Some(s) = sink.as_deref_mut() {
            s.record(&diag, &y)?;
        }
        steps.push(diag);
        pressure.push(p);
        snaps.push(y);
    }

    let y = Trajectory::from_snaps(&grid, snaps)?;
    let sup_l2 = y.snaps.iter().map(|s| s.norm_l2()).fold(0.0f64, f64::max);
    let l2h1 = trajectory_norm(&y, NormKind::H1)?;
    let force_traj_norm = {
        let dtsum: f64 = forces.iter().map(|f| dt * f.dot(f)).sum();
        dtsum.sqrt()
    };
    let denom = force_traj_norm + y.snaps[0].norm_l2();
    let energy_ratio = if denom > 0.0 {
        (sup_l2 + l2h1) / denom
    } else {
        0.0
    };

    Ok(NsSolution {
        y,
        pressure,
        steps,
        cfl_max,
        cfl_warning: cfl_max > 1.0,
        y0_correction,
        energy_ratio,
    })
}

/// Force-to-velocity map `S(u, y0)` for a cell-centered control.
pub fn solve_ns(cfg: &NsConfig, u: &Control, y0: &StaggeredField) -> Result<NsSolution> {
    solve_ns_faces(cfg, &lift_control(u), y0, None)
}

/// Same solver with the initial datum perturbed to `y0 + xi`.
pub fn solve_ns_perturbed(
    cfg: &NsConfig,
    u: &Control,
    y0: &StaggeredField,
    xi: &StaggeredField,
) -> Result<NsSolution> {
    let mut shifted = y0.clone();
    shifted.axpy(1.0, xi);
    solve_ns(cfg, u, &shifted)
}
