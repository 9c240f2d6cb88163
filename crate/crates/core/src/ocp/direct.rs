//! Direct transcription: piecewise-constant controls, RK4 states, projected
//! gradient with an exact discrete adjoint and random restarts.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::path::ControlledPath;
use super::problem::OcpProblem;
use crate::couplings::Derivs;
use crate::error::{Error, Result};
use crate::geometry::{Jet, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when the projected-gradient step changes the objective by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iterations: 4000,
            tol: 1e-13,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectSolution {
    /// Node `k < M` carries the control applied on `[s_k, s_{k+1})`; node `M` repeats it.
    pub path: ControlledPath,
    /// Discrete objective `Σ Δt ½|α_k|^{γ'}` plus trapezoidal `∫ f` plus `g(x_M)`.
    pub cost: f64,
    pub iterations: usize,
    pub restart: usize,
}

struct Transcription<'a> {
    problem: &'a OcpProblem,
    x0: &'a [f64],
    t0: f64,
    steps: usize,
    h: f64,
    n: usize,
    c: usize,
    jet: Jet,
    d: Derivs,
    /// stage inputs per step: 4 × n
    stages: Vec<f64>,
    xs: Vec<f64>,
}

impl<'a> Transcription<'a> {
    fn new(problem: &'a OcpProblem, x0: &'a [f64], t0: f64, steps: usize) -> Self {
        let n = problem.n();
        Self {
            problem,
            x0,
            t0,
            steps,
            h: (problem.horizon() - t0) / steps as f64,
            n,
            c: problem.control_dim(),
            jet: problem.spec().structure().new_jet(),
            d: Derivs::new(n),
            stages: vec![0.0; steps * 4 * n],
            xs: vec![0.0; (steps + 1) * n],
        }
    }

    fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.problem.horizon()
        } else {
            self.t0 + k as f64 * self.h
        }
    }

    fn velocity(&mut self, x: &[f64], a: &[f64], out: &mut [f64]) {
        self.problem.spec().structure().eval_jet(x, 0, &mut self.jet);
        self.jet.b_times(a, out);
    }

    fn forward(&mut self, u: &[f64]) -> f64 {
        let (n, c, h) = (self.n, self.c, self.h);
        self.xs[..n].copy_from_slice(self.x0);
        let mut k = [[0.0; MAX_DIM]; 4];
        let mut z = [0.0; MAX_DIM];
        let mut j = 0.0;
        for s in 0..self.steps {
            let a = &u[s * c..(s + 1) * c];
            let x: Vec<f64> = self.xs[s * n..(s + 1) * n].to_vec();
            let coef = [0.0, 0.5, 0.5, 1.0];
            for st in 0..4 {
                for i in 0..n {
                    z[i] = if st == 0 { x[i] } else { x[i] + coef[st] * h * k[st - 1][i] };
                }
                self.stages[(s * 4 + st) * n..(s * 4 + st + 1) * n].copy_from_slice(&z[..n]);
                let mut v = [0.0; MAX_DIM];
                self.velocity(&z[..n], a, &mut v);
                k[st] = v;
            }
            for i in 0..n {
                self.xs[(s + 1) * n + i] = x[i] + h / 6.0 * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
            }
            j += h * self.problem.spec().control_cost(a);
        }
        for s in 0..=self.steps {
            let w = if s == 0 || s == self.steps { 0.5 } else { 1.0 };
            let t = self.time(s);
            j += w * h * self.problem.running().value(&self.xs[s * n..(s + 1) * n], t);
        }
        j + self.problem.terminal().value(&self.xs[self.steps * n..], self.problem.horizon())
    }

    /// Objective and its gradient with respect to every control value.
    fn gradient(&mut self, u: &[f64], grad: &mut [f64]) -> f64 {
        let j = self.forward(u);
        let (n, c, h, m) = (self.n, self.c, self.h, self.steps);
        let spec = self.problem.spec();
        let mut lam = [0.0; MAX_DIM];
        self.problem.terminal().eval(&self.xs[m * n..], self.problem.horizon(), 1, &mut self.d);
        lam[..n].copy_from_slice(&self.d.grad[..n]);
        self.problem.running().eval(&self.xs[m * n..], self.time(m), 1, &mut self.d);
        for i in 0..n {
            lam[i] += 0.5 * h * self.d.grad[i];
        }
        let mut pm = vec![0.0; n * n];
        for s in (0..m).rev() {
            let a: Vec<f64> = u[s * c..(s + 1) * c].to_vec();
            let g = &mut grad[s * c..(s + 1) * c];
            g.fill(0.0);
            let mut bar_k = [[0.0; MAX_DIM]; 4];
            let wts = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
            for st in 0..4 {
                for i in 0..n {
                    bar_k[st][i] = wts[st] * lam[i];
                }
            }
            let mut bar_y = lam;
            let back = [0.0, 0.5, 0.5, 1.0];
            for st in (0..4).rev() {
                let z: Vec<f64> = self.stages[(s * 4 + st) * n..(s * 4 + st + 1) * n].to_vec();
                spec.structure().eval_jet(&z, 1, &mut self.jet);
                // bar_z = (∂F/∂z)ᵀ bar_k with ∂F_l/∂z_k = Σ_j a_j ∂_k h_lj
                self.jet.p_matrix(&a, &mut pm);
                let b = self.jet.b();
                let mut bar_z = [0.0; MAX_DIM];
                for k in 0..n {
                    bar_z[k] = (0..n).map(|l| pm[l * n + k] * bar_k[st][l]).sum();
                }
                for jj in 0..c {
                    g[jj] += (0..n).map(|l| b[l * c + jj] * bar_k[st][l]).sum::<f64>();
                }
                for i in 0..n {
                    bar_y[i] += bar_z[i];
                }
                if st > 0 {
                    for i in 0..n {
                        bar_k[st - 1][i] += back[st] * h * bar_z[i];
                    }
                }
            }
            lam = bar_y;
            let w = if s == 0 { 0.5 } else { 1.0 };
            self.problem.running().eval(&self.xs[s * n..(s + 1) * n], self.time(s), 1, &mut self.d);
            for i in 0..n {
                lam[i] += w * h * self.d.grad[i];
            }
            let r2: f64 = a.iter().map(|v| v * v).sum();
            let gp = spec.gamma_conjugate();
            if gp.is_finite() && r2 > 0.0 {
                let k = 0.5 * gp * r2.sqrt().powf(gp - 2.0);
                for jj in 0..c {
                    g[jj] += h * k * a[jj];
                }
            }
        }
        j
    }
}

fn project(u: &mut [f64], c: usize, radius: f64) {
    for a in u.chunks_mut(c) {
        let r = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r > radius {
            a.iter_mut().for_each(|v| *v *= radius / r);
        }
    }
}

/// Projected gradient descent with Barzilai-Borwein steps and backtracking.
fn descend(tr: &mut Transcription<'_>, u: &mut Vec<f64>, radius: f64, opts: &DirectOptions) -> (f64, usize) {
    let c = tr.c;
    let len = u.len();
    let mut g = vec![0.0; len];
    let mut j = tr.gradient(u, &mut g);
    let mut step = 1.0;
    let mut trial = vec![0.0; len];
    let mut g_new = vec![0.0; len];
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let mut accepted = false;
        let mut j_new = j;
        for _ in 0..40 {
            for i in 0..len {
                trial[i] = u[i] - step * g[i];
            }
            project(&mut trial, c, radius);
            let dec: f64 = (0..len).map(|i| g[i] * (u[i] - trial[i])).sum();
            j_new = tr.forward(&trial);
            if j_new <= j - 1e-4 * dec {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        tr.gradient(&trial, &mut g_new);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..len {
            let s = trial[i] - u[i];
            ss += s * s;
            sy += s * (g_new[i] - g[i]);
        }
        std::mem::swap(u, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        let change = j - j_new;
        j = j_new;
        if change.abs() < opts.tol * (1.0 + j.abs()) || ss == 0.0 {
            break;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-6, 1e6) } else { (step * 2.0).min(1e6) };
    }
    (j, it)
}

/// Minimizes the discretized cost over piecewise-constant controls in the ball of
/// radius `control_bound` (intersected with the unit ball when γ = 1).
pub fn solve_direct(problem: &OcpProblem, x0: &[f64], t0: f64, control_bound: f64, opts: &DirectOptions) -> Result<DirectSolution> {
    Error::check_dim(problem.n(), x0.len())?;
    if !(control_bound > 0.0) {
        return Err(Error::invalid("control_bound", "must be positive"));
    }
    let steps = problem.steps_from(t0)?;
    let radius = if problem.spec().gamma_conjugate().is_infinite() {
        control_bound.min(1.0)
    } else {
        control_bound
    };
    let c = problem.control_dim();
    let mut tr = Transcription::new(problem, x0, t0, steps);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, Vec<f64>, usize, usize)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut u = vec![0.0; steps * c];
        if restart > 0 {
            // a constant random control per run keeps the start inside the ball
            let mut a = vec![0.0; c];
            loop {
                for v in a.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                if a.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    break;
                }
            }
            for s in 0..steps {
                for j in 0..c {
                    u[s * c + j] = radius * a[j] + 0.1 * radius * rng.random_range(-1.0..1.0);
                }
            }
            project(&mut u, c, radius);
        }
        let (j, it) = descend(&mut tr, &mut u, radius, opts);
        if best.as_ref().is_none_or(|b| j < b.0) {
            best = Some((j, u, it, restart));
        }
    }
    let (j, u, iterations, restart) = best.expect("at least one restart");
    tr.forward(&u);
    let mut controls = u;
    controls.extend_from_within((steps - 1) * c..steps * c);
    let path = ControlledPath::new(t0, problem.horizon(), problem.n(), c, tr.xs.clone(), controls)?;
    Ok(DirectSolution {
        path,
        cost: j,
        iterations,
        restart,
    })
}
