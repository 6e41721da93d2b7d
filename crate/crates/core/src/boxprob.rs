//! Finite-dimensional box-constrained problems where the abstract
//! subregularity/growth theory can be verified by brute force.
//!
//! Perturbed variational inequalities `rho in J'(u) + N_U(u)` are solved
//! exhaustively by enumerating all 3^n active-set patterns
//! (lower/interior/upper per coordinate): the interior equations are solved
//! in closed form for the supported families, bound coordinates are checked
//! against the normal-cone signs. Only families whose per-pattern
//! stationarity is exactly solvable are supported, so exhaustiveness is a
//! construction property, not a numerical hope. Degenerate patterns whose
//! interior equations admit a solution continuum are counted, not enumerated.

use crate::error::{Error, Result};
use crate::stability::{fit_line, GrowthSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_DIM: usize = 12;

/// Norm pairing: the primal norm measures `u - ubar`, the dual norm
/// measures `rho`. `LinfL1` mirrors the L-infinity / L1 pairing of the
/// tracking problem; `L2L2` is the classical Hilbert pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DualNorm {
    LinfL1,
    L2L2,
}

impl DualNorm {
    pub fn primal(&self, v: &[f64]) -> f64 {
        match self {
            DualNorm::LinfL1 => v.iter().map(|x| x.abs()).sum(),
            DualNorm::L2L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn dual(&self, v: &[f64]) -> f64 {
        match self {
            DualNorm::LinfL1 => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            DualNorm::L2L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum ObjectiveFamily {
    /// `1/2 u^T Q u + c^T u` with symmetric `Q` (row-major).
    Quadratic { q: Vec<f64>, c: Vec<f64> },
    /// Separable `sum_i a_i u_i^4 / 4 + q_i u_i^2 / 2 + c_i u_i`.
    QuarticSeparable { a: Vec<f64>, q: Vec<f64>, c: Vec<f64> },
    /// `c^T u`.
    Linear { c: Vec<f64> },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BoxProblem {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub family: ObjectiveFamily,
}

impl BoxProblem {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, family: ObjectiveFamily) -> Result<BoxProblem> {
        let n = lower.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "box problems support 1..={MAX_DIM} dimensions, got {n}"
            )));
        }
        if upper.len() != n || lower.iter().zip(&upper).any(|(a, b)| a > b) {
            return Err(Error::InvalidConfig("need lower <= upper componentwise".into()));
        }
        let dims_ok = match &family {
            ObjectiveFamily::Quadratic { q, c } => q.len() == n * n && c.len() == n,
            ObjectiveFamily::QuarticSeparable { a, q, c } => {
                a.len() == n && q.len() == n && c.len() == n
            }
            ObjectiveFamily::Linear { c } => c.len() == n,
        };
        if !dims_ok {
            return Err(Error::InvalidConfig("family coefficient sizes mismatch".into()));
        }
        let p = BoxProblem {
            n,
            lower,
            upper,
            family,
        };
        p.validate_derivatives()?;
        Ok(p)
    }

    pub fn quadratic(lower: Vec<f64>, upper: Vec<f64>, q: Vec<f64>, c: Vec<f64>) -> Result<BoxProblem> {
        BoxProblem::new(lower, upper, ObjectiveFamily::Quadratic { q, c })
    }

    /// Random positive semidefinite quadratic with eigenvalues in
    /// `[eig_min, eig_max]` on the box `[-1, 1]^n`.
    pub fn random_psd(n: usize, eig_min: f64, eig_max: f64, seed: u64) -> Result<BoxProblem> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // random orthogonal via Gram-Schmidt on a gaussian-ish matrix
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect())
            .collect();
        for i in 0..n {
            for j in 0..i {
                let d: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
                let vj = v[j].clone();
                for (a, b) in v[i].iter_mut().zip(&vj) {
                    *a -= d * b;
                }
            }
            let nrm: f64 = v[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm < 1e-8 {
                v[i] = (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
            } else {
                v[i].iter_mut().for_each(|x| *x /= nrm);
            }
        }
        let eigs: Vec<f64> = (0..n)
            .map(|_| eig_min + (eig_max - eig_min) * rng.gen::<f64>())
            .collect();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                q[i * n + j] = (0..n).map(|k| eigs[k] * v[k][i] * v[k][j]).sum();
            }
        }
        let c: Vec<f64> = (0..n).map(|_| 0.6 * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        BoxProblem::quadratic(vec![-1.0; n], vec![1.0; n], q, c)
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        match &self.family {
            ObjectiveFamily::Quadratic { q, c } => {
                let mut acc = 0.0;
                for i in 0..self.n {
                    let mut qi = 0.0;
                    for j in 0..self.n {
                        qi += q[i * self.n + j] * u[j];
                    }
                    acc += 0.5 * u[i] * qi + c[i] * u[i];
                }
                acc
            }
            ObjectiveFamily::QuarticSeparable { a, q, c } => u
                .iter()
                .enumerate()
                .map(|(i, &x)| 0.25 * a[i] * x.powi(4) + 0.5 * q[i] * x * x + c[i] * x)
                .sum(),
            ObjectiveFamily::Linear { c } => u.iter().zip(c).map(|(x, ci)| ci * x).sum(),
        }
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        match &self.family {
            ObjectiveFamily::Quadratic { q, c } => (0..self.n)
                .map(|i| {
                    c[i] + (0..self.n).map(|j| q[i * self.n + j] * u[j]).sum::<f64>()
                })
                .collect(),
            ObjectiveFamily::QuarticSeparable { a, q, c } => (0..self.n)
                .map(|i| a[i] * u[i].powi(3) + q[i] * u[i] + c[i])
                .collect(),
            ObjectiveFamily::Linear { c } => c.clone(),
        }
    }

    pub fn hess_apply(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.family {
            ObjectiveFamily::Quadratic { q, .. } => (0..self.n)
                .map(|i| (0..self.n).map(|j| q[i * self.n + j] * v[j]).sum())
                .collect(),
            ObjectiveFamily::QuarticSeparable { a, q, .. } => (0..self.n)
                .map(|i| (3.0 * a[i] * u[i] * u[i] + q[i]) * v[i])
                .collect(),
            ObjectiveFamily::Linear { .. } => vec![0.0; self.n],
        }
    }

    pub fn hess_quad(&self, u: &[f64], v: &[f64]) -> f64 {
        self.hess_apply(u, v)
            .iter()
            .zip(v)
            .map(|(h, x)| h * x)
            .sum()
    }

    pub fn feasible(&self, u: &[f64]) -> bool {
        u.len() == self.n
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| x >= a && x <= b)
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for (x, (a, b)) in u.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.max(*a).min(*b);
        }
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Cheap stable content hash for report provenance.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in self.lower.iter().chain(&self.upper) {
            eat(*v);
        }
        match &self.family {
            ObjectiveFamily::Quadratic { q, c } => {
                eat(1.0);
                q.iter().chain(c).for_each(|&x| eat(x));
            }
            ObjectiveFamily::QuarticSeparable { a, q, c } => {
                eat(2.0);
                a.iter().chain(q).chain(c).for_each(|&x| eat(x));
            }
            ObjectiveFamily::Linear { c } => {
                eat(3.0);
                c.iter().for_each(|&x| eat(x));
            }
        }
        h
    }

    /// Gradient and Hessian callbacks against central differences of the
    /// objective, as a construction-time consistency gate.
    fn validate_derivatives(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.content_hash());
        for _ in 0..3 {
            let u: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(a, b)| a + (b - a) * rng.gen::<f64>())
                .collect();
            let g = self.grad(&u);
            let t = 1e-5;
            for i in 0..self.n {
                let mut up = u.clone();
                let mut um = u.clone();
                up[i] += t;
                um[i] -= t;
                let fd = (self.objective(&up) - self.objective(&um)) / (2.0 * t);
                let scale = g[i].abs().max(1.0);
                if (fd - g[i]).abs() > 1e-6 * scale {
                    return Err(Error::InvalidConfig(format!(
                        "gradient callback inconsistent with objective at coordinate {i}: fd {fd:.8e} vs {:.8e}",
                        g[i]
                    )));
                }
                let gp = self.grad(&up);
                let gm = self.grad(&um);
                let hfd = (gp[i] - gm[i]) / (2.0 * t);
                let hv: Vec<f64> = (0..self.n).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
                let h = self.hess_apply(&u, &hv)[i];
                if (hfd - h).abs() > 1e-6 * h.abs().max(1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "hessian callback inconsistent with gradient at coordinate {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// normal cone residual

#[derive(Debug, Clone, serde::Serialize)]
pub struct OptimalityResidual {
    pub u: Vec<f64>,
    /// Minimal-dual-norm element of `J'(u) + N_U(u)`, componentwise.
    pub rho: Vec<f64>,
    pub rho_norm: f64,
}

/// Componentwise minimal residual: interior keeps the gradient, a bound with
/// outward-pushing gradient sign contributes zero.
pub fn normal_cone_residual(p: &BoxProblem, u: &[f64], dual: DualNorm) -> Result<OptimalityResidual> {
    if !p.feasible(u) {
        return Err(Error::Infeasible("point outside the box".into()));
    }
    let g = p.grad(u);
    let rho: Vec<f64> = (0..p.n)
        .map(|i| {
            let at_lo = u[i] <= p.lower[i];
            let at_hi = u[i] >= p.upper[i];
            match (at_lo, at_hi) {
                (true, true) => 0.0,
                (true, false) => g[i].min(0.0),
                (false, true) => g[i].max(0.0),
                (false, false) => g[i],
            }
        })
        .collect();
    let rho_norm = dual.dual(&rho);
    Ok(OptimalityResidual {
        u: u.to_vec(),
        rho,
        rho_norm,
    })
}

// ---------------------------------------------------------------------------
// exhaustive perturbed-VI solver

#[derive(Debug, Clone)]
pub struct ViSolutions {
    pub solutions: Vec<Vec<f64>>,
    /// Patterns whose interior equations admit a continuum (not enumerated).
    pub degenerate_patterns: usize,
}

/// All `u` with `rho in J'(u) + N_U(u)`, by enumerating the 3^n active-set
/// patterns and solving the interior stationarity exactly per pattern.
pub fn solve_perturbed_vi(p: &BoxProblem, rho: &[f64]) -> Result<ViSolutions> {
    if rho.len() != p.n {
        return Err(Error::InvalidConfig("rho dimension mismatch".into()));
    }
    if p.n > MAX_DIM {
        return Err(Error::UnsupportedObjective(format!(
            "active-set enumeration capped at n = {MAX_DIM}"
        )));
    }
    let mut sols: Vec<Vec<f64>> = Vec::new();
    let mut degenerate = 0usize;
    let patterns = 3usize.pow(p.n as u32);
    let mut pat = vec![0u8; p.n]; // 0 = lower, 1 = interior, 2 = upper
    for code in 0..patterns {
        let mut c = code;
        for i in 0..p.n {
            pat[i] = (c % 3) as u8;
            c /= 3;
        }
        solve_pattern(p, rho, &pat, &mut sols, &mut degenerate)?;
    }
    // dedup across patterns (interior solutions landing exactly on a bound)
    sols.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sols.dedup_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
    });
    Ok(ViSolutions {
        solutions: sols,
        degenerate_patterns: degenerate,
    })
}

fn solve_pattern(
    p: &BoxProblem,
    rho: &[f64],
    pat: &[u8],
    sols: &mut Vec<Vec<f64>>,
    degenerate: &mut usize,
) -> Result<()> {
    let interior: Vec<usize> = (0..p.n).filter(|&i| pat[i] == 1).collect();
    let mut u = vec![0.0; p.n];
    for i in 0..p.n {
        u[i] = match pat[i] {
            0 => p.lower[i],
            2 => p.upper[i],
            _ => f64::NAN,
        };
    }

    // candidate interior values per pattern
    let candidates: Vec<Vec<f64>> = match &p.family {
        ObjectiveFamily::Quadratic { q, c } => {
            if interior.is_empty() {
                vec![Vec::new()]
            } else {
                let m = interior.len();
                let mut a = vec![0.0; m * m];
                let mut b = vec![0.0; m];
                for (r, &i) in interior.iter().enumerate() {
                    b[r] = rho[i] - c[i];
                    for j in 0..p.n {
                        if pat[j] == 1 {
                            let col = interior.iter().position(|&k| k == j).unwrap();
                            a[r * m + col] = q[i * p.n + j];
                        } else {
                            b[r] -= q[i * p.n + j] * u[j];
                        }
                    }
                }
                match solve_dense(&mut a, &mut b, m) {
                    Some(()) => vec![b],
                    None => {
                        *degenerate += 1;
                        return Ok(());
                    }
                }
            }
        }
        ObjectiveFamily::QuarticSeparable { a, q, c } => {
            // per-coordinate cubic a u^3 + q u = rho - c; cartesian product
            let mut per_coord: Vec<Vec<f64>> = Vec::with_capacity(interior.len());
            for &i in &interior {
                let roots = cubic_roots(a[i], q[i], c[i] - rho[i]);
                match roots {
                    CubicRoots::Roots(r) => per_coord.push(r),
                    CubicRoots::Continuum => {
                        *degenerate += 1;
                        return Ok(());
                    }
                    CubicRoots::None => return Ok(()),
                }
            }
            cartesian(&per_coord)
        }
        ObjectiveFamily::Linear { c } => {
            for &i in &interior {
                if c[i] != rho[i] {
                    return Ok(()); // no interior solution on this coordinate
                }
                *degenerate += 1; // continuum along coordinate i
                return Ok(());
            }
            vec![Vec::new()]
        }
    };

    'cand: for cand in candidates {
        let mut point = u.clone();
        for (slot, &i) in interior.iter().enumerate() {
            let v = cand[slot];
            if !(v > p.lower[i] && v < p.upper[i]) {
                continue 'cand; // belongs to a bound pattern
            }
            point[i] = v;
        }
        let g = p.grad(&point);
        for i in 0..p.n {
            match pat[i] {
                0 => {
                    // rho - g must lie in N at the lower bound: rho <= g
                    if rho[i] > g[i] + 1e-11 * (1.0 + g[i].abs()) {
                        continue 'cand;
                    }
                }
                2 => {
                    if rho[i] < g[i] - 1e-11 * (1.0 + g[i].abs()) {
                        continue 'cand;
                    }
                }
                _ => {}
            }
        }
        sols.push(point);
    }
    Ok(())
}

fn cartesian(per_coord: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for roots in per_coord {
        let mut next = Vec::with_capacity(out.len() * roots.len());
        for base in &out {
            for &r in roots {
                let mut b = base.clone();
                b.push(r);
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// Gaussian elimination with partial pivoting; `None` on (near-)singularity.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-12 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Some(())
}

enum CubicRoots {
    Roots(Vec<f64>),
    Continuum,
    None,
}

/// Real roots of `a t^3 + q t + r = 0` (no quadratic term), Newton-polished.
fn cubic_roots(a: f64, q: f64, r: f64) -> CubicRoots {
    if a == 0.0 {
        if q == 0.0 {
            return if r == 0.0 {
                CubicRoots::Continuum
            } else {
                CubicRoots::None
            };
        }
        return CubicRoots::Roots(vec![-r / q]);
    }
    let p = q / a;
    let rr = r / a;
    // t^3 + p t + rr = 0
    let disc = -4.0 * p * p * p - 27.0 * rr * rr;
    let mut roots = if disc > 0.0 {
        // three real roots, trigonometric form (p < 0 here)
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * rr / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect::<Vec<f64>>()
    } else {
        // one real root, Cardano
        let half_r = rr / 2.0;
        let d = (half_r * half_r + p * p * p / 27.0).sqrt();
        let c1 = cbrt(-half_r + d);
        let c2 = cbrt(-half_r - d);
        vec![c1 + c2]
    };
    for t in roots.iter_mut() {
        for _ in 0..3 {
            let f = t.powi(3) + p * *t + rr;
            let df = 3.0 * *t * *t + p;
            if df.abs() > 1e-300 {
                *t -= f / df;
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-10 * (1.0 + x.abs()));
    CubicRoots::Roots(roots)
}

fn cbrt(x: f64) -> f64 {
    x.signum() * x.abs().powf(1.0 / 3.0)
}

// ---------------------------------------------------------------------------
// subregularity and growth checks

#[derive(Debug, Clone, serde::Serialize)]
pub struct SubregSample {
    pub rho_norm: f64,
    pub dist: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SubregReport {
    pub kappa_hat: f64,
    pub samples: Vec<SubregSample>,
    /// Evidence of ratios growing as `||rho|| -> 0` for the claimed exponent.
    pub violations: Vec<SubregSample>,
}

/// Sweep `rho` over six decades (1e-1 down to 1e-6, five random directions
/// per decade), solve each perturbed VI exhaustively, and measure
/// `||u - ubar|| / ||rho||^{1/mu}` over solutions within `alpha` of `ubar`.
pub fn check_subregularity(
    p: &BoxProblem,
    u_bar: &[f64],
    mu: f64,
    alpha: f64,
    dual: DualNorm,
    seed: u64,
) -> Result<SubregReport> {
    if !(mu > 0.0) {
        return Err(Error::InvalidConfig("mu must be positive".into()));
    }
    let base = normal_cone_residual(p, u_bar, dual)?;
    if base.rho_norm > 1e-9 {
        return Err(Error::Infeasible(format!(
            "u_bar is not stationary: ||rho|| = {:.3e}",
            base.rho_norm
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for decade in 0..6 {
        for j in 0..5 {
            let mag = 1e-1 * 10f64.powf(-(decade as f64) - j as f64 / 5.0);
            let mut dir: Vec<f64> = (0..p.n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let dn = dual.dual(&dir);
            if dn < 1e-12 {
                continue;
            }
            dir.iter_mut().for_each(|x| *x *= mag / dn);
            let vi = solve_perturbed_vi(p, &dir)?;
            for sol in &vi.solutions {
                let diff: Vec<f64> = sol.iter().zip(u_bar).map(|(a, b)| a - b).collect();
                let dist = dual.primal(&diff);
                if dist <= alpha {
                    samples.push(SubregSample {
                        rho_norm: mag,
                        dist,
                        ratio: dist / mag.powf(1.0 / mu),
                    });
                }
            }
        }
    }
    let kappa_hat = samples.iter().fold(0.0f64, |m, s| m.max(s.ratio));
    // growth detection: compare the largest ratios in the small-rho decades
    // against the large-rho decades
    let tail_max = samples
        .iter()
        .filter(|s| s.rho_norm <= 1e-5)
        .fold(0.0f64, |m, s| m.max(s.ratio));
    let head_max = samples
        .iter()
        .filter(|s| s.rho_norm >= 1e-2)
        .fold(0.0f64, |m, s| m.max(s.ratio));
    let violations = if head_max > 0.0 && tail_max > 10.0 * head_max {
        samples
            .iter()
            .filter(|s| s.rho_norm <= 1e-5 && s.ratio > 10.0 * head_max)
            .cloned()
            .collect()
    } else {
        Vec::new()
    };
    Ok(SubregReport {
        kappa_hat,
        samples,
        violations,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GrowthCheck {
    /// `min J'(u)(u - ubar) / ||u - ubar||^{mu+1}` over samples.
    pub c_hat_derivative: f64,
    /// `min (J(u) - J(ubar)) / ||u - ubar||^{mu+1}` over samples.
    pub c_hat_function: f64,
    pub worst_derivative: Vec<f64>,
    pub worst_function: Vec<f64>,
}

/// Estimate both growth constants by sampling the box within `radius`.
pub fn check_growth(
    p: &BoxProblem,
    u_bar: &[f64],
    mu: f64,
    radius: f64,
    n_samples: usize,
    dual: DualNorm,
    seed: u64,
) -> Result<GrowthCheck> {
    if !p.feasible(u_bar) {
        return Err(Error::Infeasible("u_bar outside the box".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j_bar = p.objective(u_bar);
    let mut c_d = f64::INFINITY;
    let mut c_f = f64::INFINITY;
    let mut worst_d = u_bar.to_vec();
    let mut worst_f = u_bar.to_vec();
    for _ in 0..n_samples {
        let v: Vec<f64> = p
            .lower
            .iter()
            .zip(&p.upper)
            .map(|(a, b)| a + (b - a) * rng.gen::<f64>())
            .collect();
        let dirn: Vec<f64> = v.iter().zip(u_bar).map(|(a, b)| a - b).collect();
        let full = dual.primal(&dirn);
        if full < 1e-14 {
            continue;
        }
        let r = radius * rng.gen::<f64>();
        let t = (r / full).min(1.0);
        let u: Vec<f64> = u_bar.iter().zip(&dirn).map(|(a, d)| a + t * d).collect();
        let diff: Vec<f64> = u.iter().zip(u_bar).map(|(a, b)| a - b).collect();
        let dist = dual.primal(&diff);
        if dist < 1e-12 {
            continue;
        }
        let denom = dist.powf(mu + 1.0);
        let g = p.grad(&u);
        let der: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>() / denom;
        let fun = (p.objective(&u) - j_bar) / denom;
        if der < c_d {
            c_d = der;
            worst_d = u.clone();
        }
        if fun < c_f {
            c_f = fun;
            worst_f = u;
        }
    }
    Ok(GrowthCheck {
        c_hat_derivative: c_d,
        c_hat_function: c_f,
        worst_derivative: worst_d,
        worst_function: worst_f,
    })
}

// ---------------------------------------------------------------------------
// constructive Ekeland point

#[derive(Debug, Clone, serde::Serialize)]
pub struct EkelandPoint {
    pub u_hat: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub rho_norm: f64,
    pub moved: f64,
}

/// Given `J(u) <= inf J + epsilon` on the certified `radius`, produce a point
/// satisfying the three Ekeland conditions: `||u - u_hat|| <= lambda`,
/// `||rho_hat|| <= epsilon / lambda`, `rho_hat in J'(u_hat) + N(u_hat)`.
/// Realized by iterated proximal descent on `J + (epsilon/lambda)||. - v||`;
/// the conditions are re-verified numerically before returning.
pub fn ekeland_point(
    p: &BoxProblem,
    u: &[f64],
    epsilon: f64,
    lambda: f64,
    radius: f64,
    dual: DualNorm,
) -> Result<EkelandPoint> {
    if !p.feasible(u) {
        return Err(Error::Infeasible("start point outside the box".into()));
    }
    if !(epsilon > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidConfig("epsilon and lambda must be positive".into()));
    }
    if lambda >= radius {
        return Err(Error::InvalidConfig(format!(
            "lambda = {lambda} exceeds the certified radius slack {radius}"
        )));
    }
    let gamma = epsilon / lambda;
    let mut v = u.to_vec();
    for _outer in 0..200 {
        let center = v.clone();
        let mut s = center.clone();
        // proximal gradient on J(s) + gamma ||s - center||
        let mut alpha = 1.0;
        for _inner in 0..400 {
            let g = p.grad(&s);
            let comp = |s: &Vec<f64>| {
                let d: Vec<f64> = s.iter().zip(&center).map(|(a, b)| a - b).collect();
                p.objective(s) + gamma * dual.primal(&d)
            };
            let f0 = comp(&s);
            let mut moved = 0.0;
            let mut accepted = s.clone();
            for _bt in 0..40 {
                let mut cand: Vec<f64> = s.iter().zip(&g).map(|(x, gi)| x - alpha * gi).collect();
                prox_norm(&mut cand, &center, gamma * alpha, dual);
                p.clamp(&mut cand);
                if comp(&cand) <= f0 - 1e-14 {
                    moved = cand
                        .iter()
                        .zip(&s)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    accepted = cand;
                    alpha *= 1.5;
                    break;
                }
                alpha *= 0.5;
            }
            s = accepted;
            if moved <= 1e-13 {
                break;
            }
        }
        let shift = s
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        v = s;
        if shift <= 1e-12 {
            break;
        }
    }
    let res = normal_cone_residual(p, &v, dual)?;
    let dmove: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
    let moved = dual.primal(&dmove);
    let ok = moved <= lambda * (1.0 + 1e-8)
        && res.rho_norm <= gamma * (1.0 + 1e-8)
        && verify_inclusion(p, &v, &res.rho, 1e-8);
    if !ok {
        return Err(Error::EkelandSearchFailure(format!(
            "conditions not met: moved {moved:.3e} (<= {lambda:.3e}?), ||rho|| {:.3e} (<= {gamma:.3e}?)",
            res.rho_norm
        )));
    }
    Ok(EkelandPoint {
        u_hat: v,
        rho_hat: res.rho.clone(),
        rho_norm: res.rho_norm,
        moved,
    })
}

/// Check `rho in J'(u) + N(u)` componentwise within `tol`.
pub fn verify_inclusion(p: &BoxProblem, u: &[f64], rho: &[f64], tol: f64) -> bool {
    let g = p.grad(u);
    (0..p.n).all(|i| {
        let at_lo = u[i] <= p.lower[i] + 1e-12;
        let at_hi = u[i] >= p.upper[i] - 1e-12;
        let nu = rho[i] - g[i];
        if at_lo && at_hi {
            true
        } else if at_lo {
            nu <= tol
        } else if at_hi {
            nu >= -tol
        } else {
            nu.abs() <= tol
        }
    })
}

fn prox_norm(s: &mut [f64], center: &[f64], thresh: f64, dual: DualNorm) {
    match dual {
        DualNorm::LinfL1 => {
            // componentwise soft threshold toward the center
            for (x, c) in s.iter_mut().zip(center) {
                let d = *x - c;
                *x = c + d.signum() * (d.abs() - thresh).max(0.0);
            }
        }
        DualNorm::L2L2 => {
            let d: Vec<f64> = s.iter().zip(center).map(|(a, b)| a - b).collect();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if n > thresh { 1.0 - thresh / n } else { 0.0 };
            for ((x, c), di) in s.iter_mut().zip(center).zip(&d) {
                *x = c + scale * di;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// theorem roundtrip

#[derive(Debug, Clone, serde::Serialize)]
pub struct RoundtripReport {
    pub problem_hash: u64,
    pub mu: f64,
    pub kappa_hat: f64,
    pub c_hat_derivative: f64,
    pub c_hat_function: f64,
    pub growth_derivative_holds: bool,
    pub growth_function_holds: bool,
    pub subregular_holds: bool,
    pub is_stationary: bool,
    /// Growth (derivative form) must imply subregularity.
    pub forward_implication_ok: bool,
    /// Subregularity at a stationary point must come with function growth.
    pub reverse_implication_ok: bool,
    pub violations: Vec<SubregSample>,
    pub runtime_seconds: f64,
}

/// Run both checks and evaluate the two implications on this instance.
pub fn theorem_roundtrip(
    p: &BoxProblem,
    u_bar: &[f64],
    mu: f64,
    dual: DualNorm,
    seed: u64,
) -> Result<RoundtripReport> {
    let start = std::time::Instant::now();
    let radius = 0.5;
    let growth = check_growth(p, u_bar, mu, radius, 600, dual, seed)?;
    let stat = normal_cone_residual(p, u_bar, dual)?;
    let is_stationary = stat.rho_norm <= 1e-9;
    let subreg = if is_stationary {
        check_subregularity(p, u_bar, mu, radius, dual, seed ^ 0x5bd1e995)?
    } else {
        SubregReport {
            kappa_hat: f64::NAN,
            samples: Vec::new(),
            violations: Vec::new(),
        }
    };
    let growth_derivative_holds = growth.c_hat_derivative > 1e-9;
    let growth_function_holds = growth.c_hat_function > 1e-9;
    let subregular_holds = is_stationary && subreg.violations.is_empty();
    Ok(RoundtripReport {
        problem_hash: p.content_hash(),
        mu,
        kappa_hat: subreg.kappa_hat,
        c_hat_derivative: growth.c_hat_derivative,
        c_hat_function: growth.c_hat_function,
        growth_derivative_holds,
        growth_function_holds,
        subregular_holds,
        is_stationary,
        forward_implication_ok: !(growth_derivative_holds && is_stationary && !subregular_holds),
        reverse_implication_ok: !(subregular_holds && !growth_function_holds),
        violations: subreg.violations,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// bridge to the growth-exponent probe

/// Samples the linear-plus-quadratic model growth of a box problem at exact
/// L1 distances, mirroring the PDE-side sampler.
pub struct BoxGrowthSampler<'a> {
    pub p: &'a BoxProblem,
    pub u_bar: Vec<f64>,
    grad_bar: Vec<f64>,
}

impl<'a> BoxGrowthSampler<'a> {
    pub fn new(p: &'a BoxProblem, u_bar: Vec<f64>) -> BoxGrowthSampler<'a> {
        let grad_bar = p.grad(&u_bar);
        BoxGrowthSampler { p, u_bar, grad_bar }
    }
}

impl GrowthSampler for BoxGrowthSampler<'_> {
    fn sample(&mut self, distance: f64, seed: u64) -> Result<Option<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = self.p;
        // random subset flip toward the far bound
        let mut dir = vec![0.0; p.n];
        let mut mass = 0.0;
        for i in 0..p.n {
            if rng.gen::<f64>() < 0.6 {
                let far_hi = p.upper[i] - self.u_bar[i];
                let far_lo = p.lower[i] - self.u_bar[i];
                dir[i] = if far_hi.abs() >= far_lo.abs() { far_hi } else { far_lo };
                mass += dir[i].abs();
            }
        }
        if mass <= 0.0 || distance > mass {
            return Ok(None);
        }
        let t = distance / mass;
        let u: Vec<f64> = self.u_bar.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
        let diff: Vec<f64> = u.iter().zip(&self.u_bar).map(|(a, b)| a - b).collect();
        let first: f64 = self.grad_bar.iter().zip(&diff).map(|(a, b)| a * b).sum();
        let second = p.hess_quad(&self.u_bar, &diff);
        Ok(Some(first + second))
    }
}
