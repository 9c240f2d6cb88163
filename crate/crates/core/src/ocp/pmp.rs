//! Pontryagin system `x' = B a*(pB)`, `p' = -∂_x(p B(x) a) + Df`, `p(T) = -Dg(x(T))`,
//! integrated by classical RK4 and solved by Newton shooting on `p(t0)`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::path::ControlledPath;
use super::problem::{cost, OcpProblem};
use crate::couplings::Derivs;
use crate::error::{Error, Result};
use crate::geometry::{Jet, MAX_DIM};

/// Evaluation scratch for the Pontryagin vector field.
pub(crate) struct PmpWork<'a> {
    problem: &'a OcpProblem,
    n: usize,
    c: usize,
    jet: Jet,
    f: Derivs,
    q: [f64; MAX_DIM],
    a: [f64; MAX_DIM],
    grad: [f64; MAX_DIM],
    pub(crate) singular: bool,
    mats: Vec<f64>,
}

impl<'a> PmpWork<'a> {
    pub(crate) fn new(problem: &'a OcpProblem) -> Self {
        let n = problem.n();
        let c = problem.control_dim();
        Self {
            problem,
            n,
            c,
            jet: problem.spec().structure().new_jet(),
            f: Derivs::new(n),
            q: [0.0; MAX_DIM],
            a: [0.0; MAX_DIM],
            grad: [0.0; MAX_DIM],
            singular: false,
            mats: vec![0.0; 12 * MAX_DIM * MAX_DIM],
        }
    }

    /// Control `a*(p B(x))` written into `out`.
    pub(crate) fn control(&mut self, x: &[f64], p: &[f64], out: &mut [f64]) -> bool {
        let spec = self.problem.spec();
        spec.structure().eval_jet(x, 0, &mut self.jet);
        self.jet.row_times_b(p, &mut self.q);
        spec.optimal_control(&self.q[..self.c], out)
    }

    /// `y = [x, p, Φ]` with `Φ` the `2n × n` sensitivity block when `jac` is set.
    pub(crate) fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64], jac: bool) {
        let (n, c) = (self.n, self.c);
        let spec = self.problem.spec();
        let (x, p) = (&y[..n], &y[n..2 * n]);
        let order = if jac { 2 } else { 1 };
        spec.structure().eval_jet(x, order, &mut self.jet);
        self.jet.row_times_b(p, &mut self.q);
        if spec.optimal_control(&self.q[..c], &mut self.a) {
            self.singular = true;
        }
        self.jet.b_times(&self.a[..c], &mut dy[..n]);
        self.problem.running().eval(x, t, order, &mut self.f);
        self.jet.grad_pba(p, &self.a[..c], &mut self.grad);
        for k in 0..n {
            dy[n + k] = self.f.grad[k] - self.grad[k];
        }
        if jac {
            self.sensitivity(y, dy);
        }
    }

    fn sensitivity(&mut self, y: &[f64], dy: &mut [f64]) {
        let (n, c) = (self.n, self.c);
        let nn = 2 * n;
        let p = &y[n..2 * n];
        let spec = self.problem.spec();
        let b = self.jet.b();
        let block = MAX_DIM * MAX_DIM;
        let (am, rest) = self.mats.split_at_mut(block);
        let (qm, rest) = rest.split_at_mut(block);
        let (pm, rest) = rest.split_at_mut(block);
        let (sm, rest) = rest.split_at_mut(block);
        let (ba, rest) = rest.split_at_mut(block);
        let (aq, rest) = rest.split_at_mut(block);
        let jm = &mut rest[..4 * block];
        spec.optimal_control_jacobian(&self.q[..c], am);
        self.jet.q_matrix(p, qm);
        self.jet.p_matrix(&self.a[..c], pm);
        self.jet.s_matrix(p, &self.a[..c], sm);
        // BA (n × c), AQ (c × n)
        for i in 0..n {
            for j in 0..c {
                ba[i * c + j] = (0..c).map(|l| b[i * c + l] * am[l * c + j]).sum();
            }
        }
        for i in 0..c {
            for k in 0..n {
                aq[i * n + k] = (0..c).map(|l| am[i * c + l] * qm[l * n + k]).sum();
            }
        }
        for i in 0..n {
            for k in 0..n {
                let mut jxx = pm[i * n + k];
                let mut jxp = 0.0;
                let mut jpx = self.f.h(i, k) - sm[i * n + k];
                let mut jpp = -pm[k * n + i];
                for j in 0..c {
                    jxx += ba[i * c + j] * qm[j * n + k];
                    jxp += ba[i * c + j] * b[k * c + j];
                    jpx -= qm[j * n + i] * aq[j * n + k];
                    // (Qᵀ A Bᵀ)_ik = Σ_j Q_ji (A Bᵀ)_jk = Σ_j Q_ji (B A)_kj by symmetry of A
                    jpp -= qm[j * n + i] * ba[k * c + j];
                }
                jm[i * nn + k] = jxx;
                jm[i * nn + n + k] = jxp;
                jm[(n + i) * nn + k] = jpx;
                jm[(n + i) * nn + n + k] = jpp;
            }
        }
        let phi = &y[nn..nn + nn * n];
        let dphi = &mut dy[nn..nn + nn * n];
        for r in 0..nn {
            for col in 0..n {
                dphi[r * n + col] = (0..nn).map(|s| jm[r * nn + s] * phi[s * n + col]).sum();
            }
        }
    }
}

/// States, costates and costate rates at the grid nodes of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trajectory {
    pub t0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub dps: Vec<f64>,
    /// `∂(x(T), p(T)) / ∂p0`, row-major `2n × n`.
    pub phi: Option<Vec<f64>>,
    pub singular: bool,
}

pub(crate) fn integrate(problem: &OcpProblem, x0: &[f64], p0: &[f64], t0: f64, steps: usize, jac: bool) -> Trajectory {
    let n = problem.n();
    let horizon = problem.horizon();
    let h = (horizon - t0) / steps as f64;
    let len = if jac { 2 * n + 2 * n * n } else { 2 * n };
    let mut work = PmpWork::new(problem);
    let mut y = vec![0.0; len];
    y[..n].copy_from_slice(x0);
    y[n..2 * n].copy_from_slice(p0);
    if jac {
        for i in 0..n {
            y[2 * n + (n + i) * n + i] = 1.0;
        }
    }
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut xs = Vec::with_capacity((steps + 1) * n);
    let mut ps = Vec::with_capacity((steps + 1) * n);
    let mut dps = Vec::with_capacity((steps + 1) * n);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        xs.extend_from_slice(&y[..n]);
        ps.extend_from_slice(&y[n..2 * n]);
        work.eval(t, &y, &mut k1, jac);
        dps.extend_from_slice(&k1[n..2 * n]);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        work.eval(t + 0.5 * h, &tmp, &mut k2, jac);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        work.eval(t + 0.5 * h, &tmp, &mut k3, jac);
        let t1 = if k + 1 == steps { horizon } else { t + h };
        for i in 0..len {
            tmp[i] = y[i] + h * k3[i];
        }
        work.eval(t1, &tmp, &mut k4, jac);
        for i in 0..len {
            y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }
    xs.extend_from_slice(&y[..n]);
    ps.extend_from_slice(&y[n..2 * n]);
    work.eval(horizon, &y, &mut k1, false);
    dps.extend_from_slice(&k1[n..2 * n]);
    Trajectory {
        t0,
        horizon,
        steps,
        xs,
        ps,
        dps,
        phi: jac.then(|| y[2 * n..].to_vec()),
        singular: work.singular,
    }
}

/// The Pontryagin vector field `(x', p')` at one point.
pub fn pmp_rhs(problem: &OcpProblem, x: &[f64], p: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.n();
    Error::check_dim(n, x.len())?;
    Error::check_dim(n, p.len())?;
    let mut work = PmpWork::new(problem);
    let mut y = x.to_vec();
    y.extend_from_slice(p);
    let mut dy = vec![0.0; 2 * n];
    work.eval(t, &y, &mut dy, false);
    let dp = dy.split_off(n);
    Ok((dy, dp))
}

/// A converged solution of the Pontryagin boundary-value problem.
#[derive(Debug, Clone, Serialize)]
pub struct CostateSolution {
    pub path: ControlledPath,
    /// `p(s_k)`, flattened node-major.
    pub costates: Vec<f64>,
    /// `p'(s_k)`, flattened node-major.
    pub costate_rates: Vec<f64>,
    pub cost: f64,
    pub shooting_residual: f64,
    pub iterations: usize,
    pub initial_costate: Vec<f64>,
    /// Some node hit the singular set of a γ < 2 control law.
    pub singular: bool,
}

impl CostateSolution {
    pub fn costate(&self, k: usize) -> &[f64] {
        let n = self.path.dim();
        &self.costates[k * n..(k + 1) * n]
    }

    pub fn costate_rate(&self, k: usize) -> &[f64] {
        let n = self.path.dim();
        &self.costate_rates[k * n..(k + 1) * n]
    }

    /// Cubic Hermite interpolation of `p` at time `t` (clamped to the grid).
    pub fn costate_at(&self, t: f64, out: &mut [f64]) {
        let path = &self.path;
        let h = path.dt();
        let m = path.steps();
        let s = ((t - path.t0()) / h).clamp(0.0, m as f64);
        let k = (s.floor() as usize).min(m - 1);
        let u = s - k as f64;
        let (p0, p1) = (self.costate(k), self.costate(k + 1));
        if u == 0.0 {
            out[..p0.len()].copy_from_slice(p0);
            return;
        }
        let (d0, d1) = (self.costate_rate(k), self.costate_rate(k + 1));
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        for i in 0..p0.len() {
            out[i] = h00 * p0[i] + h10 * h * d0[i] + h01 * p1[i] + h11 * h * d1[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JacobianMode {
    /// Sensitivities integrated along with the trajectory.
    Variational,
    /// Central differences in each costate component.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub jacobian: JacobianMode,
    pub fd_step: f64,
    pub max_halvings: usize,
    /// Extra full Newton steps taken after convergence while the residual keeps dropping.
    pub polish_steps: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 50,
            jacobian: JacobianMode::Variational,
            fd_step: 1e-6,
            max_halvings: 30,
            polish_steps: 3,
        }
    }
}

/// Outcome of Newton shooting from one initial costate.
#[derive(Debug, Clone)]
pub enum Shot {
    Converged(CostateSolution),
    Failed { start: Vec<f64>, best_residual: f64 },
}

/// Multi-start shooting result: the selected solution and every converged candidate.
#[derive(Debug, Clone)]
pub struct ShootingReport {
    pub best: CostateSolution,
    pub candidates: Vec<CostateSolution>,
    pub failures: usize,
    /// Converged candidates with the best cost whose paths differ from the selected one.
    pub multiplicity: usize,
}

const COST_TIE: f64 = 1e-9;
const PATH_TIE: f64 = 1e-6;

/// `{0, -Dg(x0), ±e_i}`.
pub fn default_starts(problem: &OcpProblem, x0: &[f64]) -> Vec<Vec<f64>> {
    let n = problem.n();
    let (_, dg) = problem.terminal_gradient(x0);
    let mut starts = vec![vec![0.0; n], dg.iter().map(|v| -v).collect()];
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            starts.push(e);
        }
    }
    starts
}

fn residual_of(problem: &OcpProblem, traj: &Trajectory, hessian: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = problem.n();
    let m = traj.steps;
    let xt = &traj.xs[m * n..];
    let pt = &traj.ps[m * n..];
    let mut d = Derivs::new(n);
    problem.terminal().eval(xt, problem.horizon(), if hessian { 2 } else { 1 }, &mut d);
    let r: Vec<f64> = (0..n).map(|i| pt[i] + d.grad[i]).collect();
    let jac = match (&traj.phi, hessian) {
        (Some(phi), true) => {
            let mut j = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    let mut v = phi[(n + i) * n + k];
                    for l in 0..n {
                        v += d.h(i, l) * phi[l * n + k];
                    }
                    j[i * n + k] = v;
                }
            }
            Some(j)
        }
        _ => None,
    };
    (r, jac)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

struct Evaluation {
    traj: Trajectory,
    residual: Vec<f64>,
    norm: f64,
    jacobian: Option<Vec<f64>>,
}

fn evaluate(problem: &OcpProblem, x0: &[f64], p0: &[f64], t0: f64, steps: usize, opts: &ShootingOptions, want_jac: bool) -> Evaluation {
    let variational = want_jac && opts.jacobian == JacobianMode::Variational;
    let traj = integrate(problem, x0, p0, t0, steps, variational);
    let (residual, mut jacobian) = residual_of(problem, &traj, variational);
    if want_jac && opts.jacobian == JacobianMode::FiniteDifference {
        let n = problem.n();
        let mut j = vec![0.0; n * n];
        for k in 0..n {
            let mut pp = p0.to_vec();
            let mut pm = p0.to_vec();
            pp[k] += opts.fd_step;
            pm[k] -= opts.fd_step;
            let (rp, _) = residual_of(problem, &integrate(problem, x0, &pp, t0, steps, false), false);
            let (rm, _) = residual_of(problem, &integrate(problem, x0, &pm, t0, steps, false), false);
            for i in 0..n {
                j[i * n + k] = (rp[i] - rm[i]) / (2.0 * opts.fd_step);
            }
        }
        jacobian = Some(j);
    }
    let norm = norm(&residual);
    Evaluation {
        traj,
        residual,
        norm,
        jacobian,
    }
}

fn newton_direction(j: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = r.len();
    let a = DMatrix::from_row_slice(n, n, j);
    let b = DVector::from_iterator(n, r.iter().map(|v| -v));
    let sol = a.clone().lu().solve(&b).or_else(|| a.svd(true, true).solve(&b, 1e-12).ok())?;
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

/// Damped Newton iteration on the shooting residual from a single start.
pub fn shoot(problem: &OcpProblem, x0: &[f64], t0: f64, start: &[f64], opts: &ShootingOptions) -> Result<Shot> {
    let n = problem.n();
    Error::check_dim(n, x0.len())?;
    Error::check_dim(n, start.len())?;
    let steps = problem.steps_from(t0)?;
    let mut p0 = start.to_vec();
    let mut cur = evaluate(problem, x0, &p0, t0, steps, opts, true);
    let mut iterations = 0;
    while cur.norm >= opts.tol && iterations < opts.max_iterations && cur.norm.is_finite() {
        let dir = match cur.jacobian.as_deref().and_then(|j| newton_direction(j, &cur.residual)) {
            Some(d) => d,
            None => break,
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = p0.iter().zip(&dir).map(|(p, d)| p + lambda * d).collect();
            let next = evaluate(problem, x0, &trial, t0, steps, opts, true);
            if next.norm.is_finite() && next.norm < cur.norm * (1.0 - 1e-4 * lambda) {
                accepted = Some((trial, next));
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((p, e)) => {
                p0 = p;
                cur = e;
            }
            None => break,
        }
    }
    if cur.norm < opts.tol {
        for _ in 0..opts.polish_steps {
            let Some(dir) = cur.jacobian.as_deref().and_then(|j| newton_direction(j, &cur.residual)) else {
                break;
            };
            let trial: Vec<f64> = p0.iter().zip(&dir).map(|(p, d)| p + d).collect();
            let next = evaluate(problem, x0, &trial, t0, steps, opts, true);
            if !(next.norm < cur.norm) {
                break;
            }
            p0 = trial;
            cur = next;
        }
    }
    if !(cur.norm < opts.tol) {
        return Ok(Shot::Failed {
            start: start.to_vec(),
            best_residual: if cur.norm.is_finite() { cur.norm } else { f64::INFINITY },
        });
    }
    Ok(Shot::Converged(finish(problem, cur.traj, p0, cur.norm, iterations)?))
}

fn finish(problem: &OcpProblem, traj: Trajectory, p0: Vec<f64>, residual: f64, iterations: usize) -> Result<CostateSolution> {
    let n = problem.n();
    let c = problem.control_dim();
    let mut work = PmpWork::new(problem);
    let mut controls = vec![0.0; (traj.steps + 1) * c];
    let mut singular = traj.singular;
    for k in 0..=traj.steps {
        singular |= work.control(&traj.xs[k * n..(k + 1) * n], &traj.ps[k * n..(k + 1) * n], &mut controls[k * c..(k + 1) * c]);
    }
    let path = ControlledPath::new(traj.t0, traj.horizon, n, c, traj.xs, controls)?;
    let cost = cost(&path, problem.spec(), problem.running(), problem.terminal());
    Ok(CostateSolution {
        path,
        costates: traj.ps,
        costate_rates: traj.dps,
        cost,
        shooting_residual: residual,
        iterations,
        initial_costate: p0,
        singular,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn cost_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TIE * (1.0 + a.abs().max(b.abs()))
}

/// Multi-start shooting; `starts` defaults to [`default_starts`] when empty.
///
/// Among converged candidates the smallest cost wins; cost ties go to the
/// lexicographically smallest initial costate.
pub fn solve_pmp_shooting(
    problem: &OcpProblem,
    x0: &[f64],
    t0: f64,
    starts: &[Vec<f64>],
    opts: &ShootingOptions,
) -> Result<ShootingReport> {
    let defaults;
    let starts = if starts.is_empty() {
        defaults = default_starts(problem, x0);
        &defaults
    } else {
        starts
    };
    let mut candidates = Vec::new();
    let mut failures = 0;
    let mut best_residual = f64::INFINITY;
    for s in starts {
        match shoot(problem, x0, t0, s, opts)? {
            Shot::Converged(sol) => candidates.push(sol),
            Shot::Failed { best_residual: r, .. } => {
                failures += 1;
                best_residual = best_residual.min(r);
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::ShootingFailed { best_residual });
    }
    let min_cost = candidates.iter().map(|c| c.cost).fold(f64::INFINITY, f64::min);
    let best = candidates
        .iter()
        .filter(|c| cost_tied(c.cost, min_cost))
        .min_by(|a, b| lexicographic(&a.initial_costate, &b.initial_costate))
        .expect("nonempty")
        .clone();
    let multiplicity = candidates
        .iter()
        .filter(|c| cost_tied(c.cost, best.cost) && c.path.sup_distance_after(&best.path, best.path.t0()) > PATH_TIE)
        .count();
    Ok(ShootingReport {
        best,
        candidates,
        failures,
        multiplicity,
    })
}
