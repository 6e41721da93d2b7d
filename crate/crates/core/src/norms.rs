//! Norms for fields and trajectories.
//!
//! Quadratic norms (L2, H1) are taken directly on the faces. The pointwise
//! family (L1, Linf, Ls) first averages face values to cell centers so the
//! two-component magnitude is unambiguous, then applies cell-weighted sums.
//! Trajectory norms integrate in time with the trapezoid rule.

use crate::error::{Error, Result};
use crate::field::{StaggeredField, Trajectory};
use crate::ops::{faces_to_cells, neg_laplace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    H1,
    Ls(f64),
}

fn check_exponent(kind: NormKind) -> Result<()> {
    if let NormKind::Ls(s) = kind {
        if !(s >= 1.0 && s.is_finite()) {
            return Err(Error::InvalidExponent(s));
        }
    }
    Ok(())
}

pub fn field_norm(f: &StaggeredField, kind: NormKind) -> Result<f64> {
    check_exponent(kind)?;
    let w = f.grid.cell_area();
    Ok(match kind {
        NormKind::L2 => f.norm_l2(),
        NormKind::H1 => {
            let dir = neg_laplace(f).dot(f); // Dirichlet energy |grad f|^2
            (f.dot(f) + dir).sqrt()
        }
        NormKind::L1 => {
            let c = faces_to_cells(f);
            c.x.iter()
                .zip(&c.y)
                .map(|(a, b)| (a * a + b * b).sqrt())
                .sum::<f64>()
                * w
        }
        NormKind::Linf => {
            let c = faces_to_cells(f);
            c.x.iter()
                .zip(&c.y)
                .map(|(a, b)| (a * a + b * b).sqrt())
                .fold(0.0f64, f64::max)
        }
        NormKind::Ls(s) => {
            let c = faces_to_cells(f);
            (c.x.iter()
                .zip(&c.y)
                .map(|(a, b)| (a * a + b * b).sqrt().powf(s))
                .sum::<f64>()
                * w)
                .powf(1.0 / s)
        }
    })
}

/// Bochner norm over the space-time cylinder: trapezoid in time, `field_norm`
/// in space. `Linf` is the sup over time of the spatial sup.
pub fn trajectory_norm(t: &Trajectory, kind: NormKind) -> Result<f64> {
    check_exponent(kind)?;
    let dt = t.grid.dt();
    Ok(match kind {
        NormKind::Linf => {
            let mut m = 0.0f64;
            for s in &t.snaps {
                m = m.max(field_norm(s, NormKind::Linf)?);
            }
            m
        }
        NormKind::L1 => {
            let mut acc = 0.0;
            for (k, s) in t.snaps.iter().enumerate() {
                acc += t.grid.time_weight(k) * dt * field_norm(s, NormKind::L1)?;
            }
            acc
        }
        NormKind::L2 => {
            let mut acc = 0.0;
            for (k, s) in t.snaps.iter().enumerate() {
                let n = s.norm_l2();
                acc += t.grid.time_weight(k) * dt * n * n;
            }
            acc.sqrt()
        }
        NormKind::H1 => {
            let mut acc = 0.0;
            for (k, s) in t.snaps.iter().enumerate() {
                let n = field_norm(s, NormKind::H1)?;
                acc += t.grid.time_weight(k) * dt * n * n;
            }
            acc.sqrt()
        }
        NormKind::Ls(s) => {
            let mut acc = 0.0;
            for (k, snap) in t.snaps.iter().enumerate() {
                acc += t.grid.time_weight(k) * dt * field_norm(snap, NormKind::Ls(s))?.powf(s);
            }
            acc.powf(1.0 / s)
        }
    })
}

/// Discrete H1 surrogate used to size initial-datum perturbations.
pub fn h1_surrogate(f: &StaggeredField) -> f64 {
    field_norm(f, NormKind::H1).expect("H1 needs no exponent")
}
