//! Mehrotra predictor-corrector interior-point method on the regularized
//! augmented system
//!
//! ```text
//! [ H + ρI   Aᵀ    Gᵀ        ] [dx]   [ −r_d             ]
//! [ A        −δI   0         ] [dy] = [ −r_p             ]
//! [ G        0     −S/Z − δI ] [dz]   [ −r_g + r_c / z   ]
//! ```
//!
//! Low-rank Hessian terms `c·vvᵀ` enter through one extra unknown each, with
//! off-diagonal `c·v` and diagonal `−c`, so the factor never sees a dense
//! block.

use std::time::{Duration, Instant};

use super::kkt::{kkt_residuals, KktResiduals};
use super::problem::QuadraticProgram;
use super::scaling::{equilibrate, Scaling};
use crate::error::{invalid, Result};
use crate::linalg::{LdltFactor, SymmetricCsc};
use crate::sparse::{self, dot, norm_inf};

const STEP_FRACTION: f64 = 0.99;
const DYNAMIC_EPS: f64 = 1e-13;
const DYNAMIC_DELTA: f64 = 2e-7;
const REFINE_STEPS: usize = 10;
const INFEASIBILITY_RATIO: f64 = 1e-6;
const STALL_STEP: f64 = 1e-8;
const STALL_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative tolerance on every KKT residual.
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Static regularization of the augmented system.
    pub regularization: f64,
    /// Ruiz equilibration before solving.
    pub equilibrate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            max_iterations: 100,
            regularization: 1e-8,
            equilibrate: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0 && self.kkt_tolerance.is_finite()) {
            return Err(invalid("kkt_tolerance", "must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(invalid("regularization", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean complementarity `sᵀz / m` in the scaled problem.
    pub mu: f64,
    pub residuals: KktResiduals,
    /// Step length that produced this iterate.
    pub step: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    pub wall_time: Duration,
}

struct KktSystem {
    n: usize,
    nl: usize,
    me: usize,
    mi: usize,
    mat: SymmetricCsc,
    base: Vec<f64>,
    factor: LdltFactor,
    reg: f64,
}

impl KktSystem {
    fn new(qp: &QuadraticProgram, reg: f64) -> Result<Self> {
        let n = qp.num_vars();
        let nl = qp.hessian.low_rank.len();
        let me = qp.num_eq();
        let mi = qp.num_ineq();
        let y0 = n + nl;
        let z0 = y0 + me;
        let mut entries: Vec<(usize, usize, f64)> = sparse::triplets(&qp.hessian.sparse)
            .into_iter()
            .filter(|&(i, j, _)| i <= j)
            .collect();
        let mut signs = vec![1i8; z0 + mi];
        for (t, term) in qp.hessian.low_rank.iter().enumerate() {
            for (&i, &v) in term.indices.iter().zip(&term.values) {
                entries.push((i, n + t, term.coef * v));
            }
            entries.push((n + t, n + t, -term.coef));
            signs[n + t] = if term.coef < 0.0 { 1 } else { -1 };
        }
        for (r, c, v) in sparse::triplets(&qp.a) {
            entries.push((c, y0 + r, v));
        }
        for (r, c, v) in sparse::triplets(&qp.g) {
            entries.push((c, z0 + r, v));
        }
        signs[y0..].iter_mut().for_each(|s| *s = -1);
        let (mat, _) = SymmetricCsc::from_triplets(z0 + mi, &entries);
        let factor = LdltFactor::analyze(&mat, signs)?;
        Ok(Self {
            n,
            nl,
            me,
            mi,
            base: mat.values.clone(),
            mat,
            factor,
            reg,
        })
    }

    fn dim(&self) -> usize {
        self.n + self.nl + self.me + self.mi
    }

    fn z0(&self) -> usize {
        self.n + self.nl + self.me
    }

    /// Factors with `−w_inv` on the inequality block.
    fn refactor(&mut self, w_inv: &[f64]) -> Result<()> {
        self.mat.values.copy_from_slice(&self.base);
        for i in 0..self.n {
            let s = self.mat.diag_slot(i);
            self.mat.values[s] += self.reg;
        }
        for i in self.n + self.nl..self.dim() {
            let s = self.mat.diag_slot(i);
            self.mat.values[s] -= self.reg;
        }
        let z0 = self.z0();
        for (r, w) in w_inv.iter().enumerate() {
            let s = self.mat.diag_slot(z0 + r);
            self.mat.values[s] -= w;
        }
        self.factor
            .factorize(&self.mat, DYNAMIC_DELTA, DYNAMIC_EPS)
    }

    /// Solves the unregularized system by iterative refinement on the
    /// regularized factor.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        self.factor.solve_in_place(&mut sol);
        let target = 1e-14 * (1.0 + norm_inf(rhs));
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let mut res = self.mat.matvec(&sol);
            for (i, r) in res.iter_mut().enumerate() {
                if i < self.n {
                    *r -= self.reg * sol[i];
                } else if i >= self.n + self.nl {
                    *r += self.reg * sol[i];
                }
            }
            for (r, b) in res.iter_mut().zip(rhs) {
                *r = b - *r;
            }
            let norm = norm_inf(&res);
            if norm <= target || norm >= 0.5 * last {
                break;
            }
            last = norm;
            self.factor.solve_in_place(&mut res);
            sol.iter_mut().zip(&res).for_each(|(s, d)| *s += d);
        }
        sol
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

fn residuals(qp: &QuadraticProgram, it: &Iterate) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rd = qp.hessian.apply(&it.x);
    rd.iter_mut().zip(&qp.c).for_each(|(r, c)| *r += c);
    sparse::transpose_matvec_acc(&qp.a, &it.y, &mut rd);
    sparse::transpose_matvec_acc(&qp.g, &it.z, &mut rd);
    let mut rp = sparse::matvec(&qp.a, &it.x);
    rp.iter_mut().zip(&qp.b).for_each(|(r, b)| *r -= b);
    let mut rg = sparse::matvec(&qp.g, &it.x);
    for i in 0..rg.len() {
        rg[i] += it.s[i] - qp.h[i];
    }
    (rd, rp, rg)
}

fn direction(
    kkt: &KktSystem,
    it: &Iterate,
    res: &(Vec<f64>, Vec<f64>, Vec<f64>),
    rc: &[f64],
) -> Direction {
    let (rd, rp, rg) = res;
    let (n, nl, me) = (kkt.n, kkt.nl, kkt.me);
    let mut rhs = vec![0.0; kkt.dim()];
    for i in 0..n {
        rhs[i] = -rd[i];
    }
    for i in 0..me {
        rhs[n + nl + i] = -rp[i];
    }
    let z0 = kkt.z0();
    for i in 0..kkt.mi {
        rhs[z0 + i] = -rg[i] + rc[i] / it.z[i];
    }
    let sol = kkt.solve(&rhs);
    let dz = sol[z0..].to_vec();
    let ds = (0..kkt.mi)
        .map(|i| -(rc[i] + it.s[i] * dz[i]) / it.z[i])
        .collect();
    Direction {
        dx: sol[..n].to_vec(),
        dy: sol[n + nl..z0].to_vec(),
        dz,
        ds,
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn mu_at(it: &Iterate, d: &Direction, alpha: f64) -> f64 {
    let m = it.s.len() as f64;
    it.s.iter()
        .zip(&d.ds)
        .zip(it.z.iter().zip(&d.dz))
        .map(|((s, ds), (z, dz))| (s + alpha * ds) * (z + alpha * dz))
        .sum::<f64>()
        / m
}

/// Largest step `≤ 1` keeping `s, z` strictly positive along which the mean
/// complementarity `μ(α) = μ + α·lin + α²·quad` decreases. `None` when the
/// direction does not decrease `μ` to first order.
fn monotone_step(it: &Iterate, d: &Direction, mu: f64) -> Option<f64> {
    let m = it.s.len() as f64;
    let lin = (dot(&it.s, &d.dz) + dot(&it.z, &d.ds)) / m;
    if !(lin < -1e-14 * mu) {
        return None;
    }
    let quad = dot(&d.ds, &d.dz) / m;
    let boundary = max_step(&it.s, &d.ds).min(max_step(&it.z, &d.dz));
    let mut alpha = (STEP_FRACTION * boundary).min(1.0);
    if quad > 0.0 {
        alpha = alpha.min(STEP_FRACTION * -lin / quad);
    }
    Some(alpha)
}

/// Primal infeasibility certificate: `z ≥ 0`, `bᵀy + hᵀz < 0` and
/// `Aᵀy + Gᵀz ≈ 0`, measured against the size of the current primal iterate.
fn certificate_ratio(qp: &QuadraticProgram, it: &Iterate) -> Option<f64> {
    let t = -(dot(&qp.b, &it.y) + dot(&qp.h, &it.z));
    if !(t > 0.0) {
        return None;
    }
    let mut r = vec![0.0; qp.num_vars()];
    sparse::transpose_matvec_acc(&qp.a, &it.y, &mut r);
    sparse::transpose_matvec_acc(&qp.g, &it.z, &mut r);
    let x1: f64 = it.x.iter().map(|v| v.abs()).sum();
    Some(norm_inf(&r) * (1.0 + x1) / t)
}

fn initial_point(kkt: &mut KktSystem, qp: &QuadraticProgram) -> Result<Iterate> {
    let mi = qp.num_ineq();
    kkt.refactor(&vec![1.0; mi])?;
    let (n, nl) = (kkt.n, kkt.nl);
    let z0 = kkt.z0();
    let mut rhs = vec![0.0; kkt.dim()];
    for i in 0..n {
        rhs[i] = -qp.c[i];
    }
    rhs[n + nl..z0].copy_from_slice(&qp.b);
    rhs[z0..].copy_from_slice(&qp.h);
    let sol = kkt.solve(&rhs);
    let x = sol[..n].to_vec();
    let y = sol[n + nl..z0].to_vec();
    let mut gx = sparse::matvec(&qp.g, &x);
    gx.iter_mut().zip(&qp.h).for_each(|(g, h)| *g -= h);
    let shift = |v: Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let add = if lo < 0.0 { 1.0 - lo } else { 0.0 };
        let add = if lo.is_finite() && lo < 1e-8 { add.max(1.0) } else { add };
        v.into_iter().map(|x| x + add).collect::<Vec<_>>()
    };
    let s = shift(gx.iter().map(|v| -v).collect());
    let z = shift(gx);
    Ok(Iterate { x, y, z, s })
}

/// Solves `qp` to the requested relative KKT tolerance.
///
/// When the iteration stalls or reaches the cap without primal feasibility,
/// a phase-one problem minimizing the total constraint violation is solved
/// with the same method; a positive minimum certifies infeasibility.
pub fn solve_qp(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution> {
    settings.validate()?;
    qp.validate()?;
    let mut sol = solve_inner(qp, settings)?;
    if sol.status == SolveStatus::MaxIter && sol.residuals.primal > settings.kkt_tolerance {
        let start = Instant::now();
        let (p1, scale) = phase_one(qp)?;
        let s1 = solve_inner(&p1, settings)?;
        if s1.status == SolveStatus::Optimal && s1.objective > settings.kkt_tolerance * scale {
            sol.status = SolveStatus::Infeasible;
        }
        sol.wall_time += start.elapsed();
    }
    Ok(sol)
}

/// `min Σp + Σq + Σv  s.t.  Ax + p − q = b,  Gx − v ≤ h,  p, q, v ≥ 0`.
/// Returns the problem and the scale `1 + max(‖b‖∞, ‖h‖∞)` of its data.
fn phase_one(qp: &QuadraticProgram) -> Result<(QuadraticProgram, f64)> {
    let (n, me, mi) = (qp.num_vars(), qp.num_eq(), qp.num_ineq());
    let nv = n + 2 * me + mi;
    let mut a = sparse::triplets(&qp.a);
    for r in 0..me {
        a.push((r, n + r, 1.0));
        a.push((r, n + me + r, -1.0));
    }
    let mut g = sparse::triplets(&qp.g);
    for r in 0..mi {
        g.push((r, n + 2 * me + r, -1.0));
    }
    for k in 0..2 * me + mi {
        g.push((mi + k, n + k, -1.0));
    }
    let mut h = qp.h.clone();
    h.resize(mi + 2 * me + mi, 0.0);
    let mut c = vec![0.0; n];
    c.resize(nv, 1.0);
    let scale = 1.0 + norm_inf(&qp.b).max(norm_inf(&qp.h));
    let p1 = QuadraticProgram::new(
        super::problem::Hessian::zeros(nv),
        c,
        sparse::from_triplets(me, nv, &a),
        qp.b.clone(),
        sparse::from_triplets(mi + 2 * me + mi, nv, &g),
        h,
    )?;
    Ok((p1, scale))
}

fn solve_inner(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution> {
    let start = Instant::now();
    let (sqp, sc) = if settings.equilibrate {
        equilibrate(qp)
    } else {
        (qp.clone(), Scaling::identity(qp))
    };
    let mi = sqp.num_ineq();
    let mut kkt = KktSystem::new(&sqp, settings.regularization)?;
    let mut it = initial_point(&mut kkt, &sqp)?;

    let mut log = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, KktResiduals)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut step = 0.0;
    let mut sigma = 0.0;
    let mut stalled = 0usize;
    let mut iterations = 0;
    let mut final_point = None;

    for iter in 0..=settings.max_iterations {
        iterations = iter;
        let x = sc.unscale_x(&it.x);
        let y = sc.unscale_y(&it.y);
        let z = sc.unscale_z(&it.z);
        let res = kkt_residuals(qp, &x, &y, &z);
        let mu = if mi > 0 { dot(&it.s, &it.z) / mi as f64 } else { 0.0 };
        log.push(IterationRecord {
            iteration: iter,
            mu,
            residuals: res,
            step,
            sigma,
        });
        if res.within(settings.kkt_tolerance) {
            status = SolveStatus::Optimal;
            final_point = Some((x, y, z, res));
            break;
        }
        if best.as_ref().is_none_or(|b| res.max() < b.0) {
            best = Some((res.max(), x, y, z, res));
        }
        if res.primal > settings.kkt_tolerance {
            if let Some(ratio) = certificate_ratio(&sqp, &it) {
                let weak = stalled >= STALL_LIMIT && ratio <= 1e-3;
                if ratio <= INFEASIBILITY_RATIO || weak {
                    status = SolveStatus::Infeasible;
                    break;
                }
            }
        }
        if stalled >= STALL_LIMIT || iter == settings.max_iterations {
            break;
        }

        let w_inv: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s / z).collect();
        kkt.refactor(&w_inv)?;
        let r = residuals(&sqp, &it);

        let d = if mi == 0 {
            step = 1.0;
            direction(&kkt, &it, &r, &[])
        } else {
            let rc_aff: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s * z).collect();
            let aff = direction(&kkt, &it, &r, &rc_aff);
            let a_aff = max_step(&it.s, &aff.ds)
                .min(max_step(&it.z, &aff.dz))
                .min(1.0);
            let mu_aff = mu_at(&it, &aff, a_aff);
            sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let rc: Vec<f64> = (0..mi)
                .map(|i| rc_aff[i] + aff.ds[i] * aff.dz[i] - sigma * mu)
                .collect();
            let d = direction(&kkt, &it, &r, &rc);
            match monotone_step(&it, &d, mu) {
                Some(a) => {
                    step = a;
                    d
                }
                None => {
                    sigma = sigma.max(0.1);
                    let rc: Vec<f64> = rc_aff.iter().map(|v| v - sigma * mu).collect();
                    let d = direction(&kkt, &it, &r, &rc);
                    step = monotone_step(&it, &d, mu).unwrap_or(0.0);
                    d
                }
            }
        };
        stalled = if step < STALL_STEP { stalled + 1 } else { 0 };
        let axpy = |v: &mut Vec<f64>, dv: &[f64]| {
            v.iter_mut().zip(dv).for_each(|(a, b)| *a += step * b);
        };
        axpy(&mut it.x, &d.dx);
        axpy(&mut it.y, &d.dy);
        axpy(&mut it.z, &d.dz);
        axpy(&mut it.s, &d.ds);
    }

    let (x, y, z, residuals) = match (status, final_point) {
        (SolveStatus::Optimal, Some(p)) => p,
        (SolveStatus::Infeasible, _) => {
            let res = kkt_residuals(
                qp,
                &sc.unscale_x(&it.x),
                &sc.unscale_y(&it.y),
                &sc.unscale_z(&it.z),
            );
            (sc.unscale_x(&it.x), sc.unscale_y(&it.y), sc.unscale_z(&it.z), res)
        }
        _ => {
            let (_, x, y, z, r) = best.expect("at least one iterate is recorded");
            (x, y, z, r)
        }
    };
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        y,
        z,
        status,
        residuals,
        iterations,
        log,
        wall_time: start.elapsed(),
    })
}
